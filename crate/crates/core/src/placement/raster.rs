use crate::geom::{CameraModel, GeomError, ImageDims, Mask, Pixel};

use super::{ModelEntry, PlacedObject};

const NEAR: f64 = 1e-6;

/// Pixel rectangle `[x0, x0 + w) x [y0, y0 + h)` with its own coverage buffer.
struct Window {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    data: Vec<bool>,
}

fn project_vertices(model: &ModelEntry, pose: &PlacedObject, cam: &CameraModel) -> Result<Vec<Pixel>, GeomError> {
    let l = pose.linear();
    model
        .mesh
        .vertices
        .iter()
        .map(|v| {
            let pc = cam.to_camera(&(l * v + pose.position));
            if !(pc.z > NEAR) {
                return Err(GeomError::BehindCamera { depth: pc.z });
            }
            Ok(Pixel::new(cam.focal * pc.x / pc.z + cam.principal.x, cam.focal * pc.y / pc.z + cam.principal.y))
        })
        .collect()
}

fn render(model: &ModelEntry, projected: &[Pixel], win: &mut Window) {
    for tri in &model.mesh.triangles {
        fill_triangle(win, projected[tri[0] as usize], projected[tri[1] as usize], projected[tri[2] as usize]);
    }
}

/// Binary silhouette of a posed model: a pixel is set when its center lies
/// inside (or on an edge of) any projected triangle.
pub fn rasterize_silhouette(
    model: &ModelEntry,
    pose: &PlacedObject,
    cam: &CameraModel,
    dims: ImageDims,
) -> Result<Mask, GeomError> {
    let projected = project_vertices(model, pose, cam)?;
    let mut win = Window { x0: 0, y0: 0, w: dims.width, h: dims.height, data: vec![false; dims.pixel_count()] };
    render(model, &projected, &mut win);
    Ok(Mask::from_fn(dims.width, dims.height, |x, y| win.data[y * dims.width + x]))
}

/// A target mask prepared for repeated IoU evaluation.
#[derive(Debug, Clone)]
pub struct IouTarget<'a> {
    pub target: &'a Mask,
    /// Pixels of other instances; rendered pixels there are not penalized.
    pub others: &'a Mask,
    count: usize,
    bbox: Option<(usize, usize, usize, usize)>,
}

impl<'a> IouTarget<'a> {
    pub fn new(target: &'a Mask, others: &'a Mask) -> Self {
        Self { target, others, count: target.count(), bbox: target.bbox() }
    }

    /// Same value as rasterizing the full image and calling
    /// [`occlusion_aware_iou`], restricted to the pixels that can matter.
    pub fn iou(&self, model: &ModelEntry, pose: &PlacedObject, cam: &CameraModel) -> Result<f64, GeomError> {
        let projected = project_vertices(model, pose, cam)?;
        let (w, h) = (self.target.width(), self.target.height());
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &projected {
            (x0, y0, x1, y1) = (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y));
        }
        let clip = |v: f64, hi: usize| v.clamp(0.0, hi as f64 - 1.0) as usize;
        let mut r = (clip(x0.ceil(), w), clip(y0.ceil(), h), clip(x1.floor(), w), clip(y1.floor(), h));
        (r.2, r.3) = (r.2.max(r.0), r.3.max(r.1));
        if let Some(b) = self.bbox {
            r = (r.0.min(b.0), r.1.min(b.1), r.2.max(b.2), r.3.max(b.3));
        }
        let mut win = Window {
            x0: r.0,
            y0: r.1,
            w: r.2 - r.0 + 1,
            h: r.3 - r.1 + 1,
            data: vec![false; (r.2 - r.0 + 1) * (r.3 - r.1 + 1)],
        };
        render(model, &projected, &mut win);
        let (mut inter, mut extra) = (0usize, 0usize);
        for wy in 0..win.h {
            for wx in 0..win.w {
                if win.data[wy * win.w + wx] {
                    let (x, y) = (wx + win.x0, wy + win.y0);
                    if self.target.get(x, y) {
                        inter += 1;
                    } else if !self.others.get(x, y) {
                        extra += 1;
                    }
                }
            }
        }
        let union = self.count + extra;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }
}

fn fill_triangle(win: &mut Window, a: Pixel, b: Pixel, c: Pixel) {
    let area = (b - a).perp(&(c - a));
    if area.abs() < 1e-12 {
        return;
    }
    // Orient counter-clockwise so all edge functions are non-negative inside.
    let (b, c) = if area > 0.0 { (b, c) } else { (c, b) };
    let x0 = a.x.min(b.x).min(c.x).ceil().max(win.x0 as f64);
    let x1 = a.x.max(b.x).max(c.x).floor().min((win.x0 + win.w) as f64 - 1.0);
    let y0 = a.y.min(b.y).min(c.y).ceil().max(win.y0 as f64);
    let y1 = a.y.max(b.y).max(c.y).floor().min((win.y0 + win.h) as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let edge = |p: Pixel, q: Pixel| {
        let d = q - p;
        // f(x, y) = d.x (y - p.y) - d.y (x - p.x)
        (d.x, -d.y, -d.x * p.y + d.y * p.x)
    };
    let edges = [edge(a, b), edge(b, c), edge(c, a)];
    for y in y0 as usize..=y1 as usize {
        let yf = y as f64;
        // Span of x where all three edge functions are >= 0.
        let mut lo = x0;
        let mut hi = x1;
        for &(ky, kx, k0) in &edges {
            let base = ky * yf + k0;
            if kx.abs() < 1e-15 {
                if base < -1e-9 {
                    lo = f64::INFINITY;
                }
                continue;
            }
            let root = -base / kx;
            if kx > 0.0 {
                lo = lo.max((root - 1e-9).ceil());
            } else {
                hi = hi.min((root + 1e-9).floor());
            }
        }
        if lo > hi {
            continue;
        }
        let row = (y - win.y0) * win.w;
        for x in lo as usize..=hi as usize {
            win.data[row + x - win.x0] = true;
        }
    }
}

/// IoU between a rendered silhouette and the target mask, ignoring pixels
/// claimed by other instances (those may hide the object).
pub fn occlusion_aware_iou(rendered: &Mask, target: &Mask, others: &Mask) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for y in 0..target.height() {
        for x in 0..target.width() {
            let (r, t) = (rendered.get(x, y), target.get(x, y));
            if t || (r && !others.get(x, y)) {
                union += 1;
                if r && t {
                    inter += 1;
                }
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{mask_iou, Point3, TriMesh};
    use nalgebra::Vector3;

    fn pose(s: f64, p: Point3) -> PlacedObject {
        PlacedObject { instance: 0, model_id: 0, theta: 0.0, scale: Vector3::repeat(s), base_scale: 1.0, position: p }
    }

    fn camera() -> CameraModel {
        CameraModel::from_angles(400.0, Pixel::new(319.5, 239.5), 0.0, 0.0, 0.0, 1.5)
    }

    #[test]
    fn face_on_cube_is_analytic_rectangle() {
        let cam = camera();
        let model = ModelEntry::new(0, TriMesh::cuboid(1.0, 1.0, 1.0));
        let p = pose(1.0, Point3::new(0.0, 4.5, 1.0));
        let m = rasterize_silhouette(&model, &p, &cam, ImageDims::new(640, 480)).unwrap();
        // Front face at depth 4, x in [-0.5, 0.5], z in [1, 2]: a 100 px square.
        let expected =
            Mask::from_fn(640, 480, |x, y| (x as f64 - 319.5).abs() <= 50.0 && (y as f64 - 239.5).abs() <= 50.0);
        let got = m.count() as f64;
        let area = 100.0 * 100.0;
        let border = 2.0 * (100.0 + 100.0);
        assert!((got - area).abs() <= border, "{got}");
        assert!(mask_iou(&m, &expected).unwrap() > 0.95);
    }

    #[test]
    fn outside_frustum_is_empty() {
        let cam = camera();
        let model = ModelEntry::new(0, TriMesh::cuboid(1.0, 1.0, 1.0));
        let m = rasterize_silhouette(&model, &pose(1.0, Point3::new(40.0, 4.0, 1.0)), &cam, ImageDims::new(640, 480))
            .unwrap();
        assert!(m.is_empty());
        assert!(rasterize_silhouette(&model, &pose(1.0, Point3::new(0.0, -4.0, 1.0)), &cam, ImageDims::new(640, 480))
            .is_err());
    }

    #[test]
    fn doubling_scale_quadruples_area() {
        let cam = camera();
        let model = ModelEntry::new(0, TriMesh::cuboid(0.4, 0.01, 0.4));
        let a = rasterize_silhouette(&model, &pose(1.0, Point3::new(0.0, 4.0, 1.2)), &cam, ImageDims::new(640, 480))
            .unwrap();
        let b = rasterize_silhouette(&model, &pose(2.0, Point3::new(0.0, 4.0, 1.1)), &cam, ImageDims::new(640, 480))
            .unwrap();
        let ratio = b.count() as f64 / a.count() as f64;
        assert!((ratio - 4.0).abs() / 4.0 < 0.02, "{ratio}");
    }

    #[test]
    fn other_instances_do_not_count_against() {
        let target = Mask::from_fn(10, 10, |x, _| x < 5);
        let rendered = Mask::from_fn(10, 10, |x, _| x < 8);
        let others = Mask::from_fn(10, 10, |x, _| x >= 5);
        assert_eq!(occlusion_aware_iou(&rendered, &target, &others), 1.0);
        assert!((occlusion_aware_iou(&rendered, &target, &Mask::new(10, 10)) - 5.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn windowed_iou_matches_full_render() {
        let cam = CameraModel::from_angles(400.0, Pixel::new(319.5, 239.5), 0.2, 0.25, 0.01, 1.5);
        let model = ModelEntry::new(0, TriMesh::cuboid(0.7, 0.5, 0.9));
        let target = Mask::from_fn(640, 480, |x, y| (300..360).contains(&x) && (250..330).contains(&y));
        let others = Mask::from_fn(640, 480, |x, y| (340..420).contains(&x) && (200..300).contains(&y));
        let t = IouTarget::new(&target, &others);
        for (i, dx) in [-0.4, 0.0, 0.3, 2.5].iter().enumerate() {
            let mut p = pose(1.0, Point3::new(0.5 + dx, 3.0, 0.0));
            p.theta = 0.3 * i as f64;
            let full = rasterize_silhouette(&model, &p, &cam, ImageDims::new(640, 480)).unwrap();
            assert_eq!(t.iou(&model, &p, &cam).unwrap(), occlusion_aware_iou(&full, &target, &others));
        }
    }
}
