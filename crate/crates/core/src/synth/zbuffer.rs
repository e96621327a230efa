//! Depth-buffered triangle fill used to render ground-truth masks. Written
//! separately from the placement rasterizer so the two can check each other.

use crate::geom::{CameraModel, ImageDims, Mask, Point3, TriMesh};

/// Closest surface per pixel and the owner that drew it.
#[derive(Debug, Clone)]
pub struct DepthBuffer {
    pub dims: ImageDims,
    pub depth: Vec<f64>,
    pub owner: Vec<Option<u8>>,
}

impl DepthBuffer {
    pub fn new(dims: ImageDims) -> Self {
        Self { dims, depth: vec![f64::INFINITY; dims.pixel_count()], owner: vec![None; dims.pixel_count()] }
    }

    /// Draws a room-frame mesh. Triangles with any vertex closer than
    /// `NEAR` to the camera plane are skipped; callers keep meshes in front.
    pub fn draw(&mut self, mesh: &TriMesh, cam: &CameraModel, owner: u8) {
        const NEAR: f64 = 1e-3;
        let cv: Vec<Point3> = mesh.vertices.iter().map(|v| cam.to_camera(v)).collect();
        let (w, h) = (self.dims.width as i64, self.dims.height as i64);
        for t in &mesh.triangles {
            let p = [cv[t[0] as usize], cv[t[1] as usize], cv[t[2] as usize]];
            if p.iter().any(|q| q.z < NEAR) {
                continue;
            }
            let s: Vec<(f64, f64)> = p
                .iter()
                .map(|q| (cam.focal * q.x / q.z + cam.principal.x, cam.focal * q.y / q.z + cam.principal.y))
                .collect();
            let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[2].0 - s[0].0) * (s[1].1 - s[0].1);
            if area.abs() < 1e-12 {
                continue;
            }
            let xmin = s.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).ceil().max(0.0) as i64;
            let xmax = (s.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).floor() as i64).min(w - 1);
            let ymin = s.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).ceil().max(0.0) as i64;
            let ymax = (s.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).floor() as i64).min(h - 1);
            for y in ymin..=ymax {
                for x in xmin..=xmax {
                    let (px, py) = (x as f64, y as f64);
                    // barycentric weights of the pixel center
                    let l1 = ((px - s[0].0) * (s[2].1 - s[0].1) - (s[2].0 - s[0].0) * (py - s[0].1)) / area;
                    let l2 = ((s[1].0 - s[0].0) * (py - s[0].1) - (px - s[0].0) * (s[1].1 - s[0].1)) / area;
                    let l0 = 1.0 - l1 - l2;
                    if l0 < -1e-12 || l1 < -1e-12 || l2 < -1e-12 {
                        continue;
                    }
                    let z = 1.0 / (l0 / p[0].z + l1 / p[1].z + l2 / p[2].z);
                    let i = (y * w + x) as usize;
                    if z < self.depth[i] {
                        self.depth[i] = z;
                        self.owner[i] = Some(owner);
                    }
                }
            }
        }
    }

    pub fn mask_of(&self, owner: u8) -> Mask {
        let w = self.dims.width;
        Mask::from_fn(w, self.dims.height, |x, y| self.owner[y * w + x] == Some(owner))
    }

    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.dims.width + x]
    }
}

/// Full silhouette of one mesh, ignoring everything else.
pub fn silhouette(mesh: &TriMesh, cam: &CameraModel, dims: ImageDims) -> Mask {
    let mut b = DepthBuffer::new(dims);
    b.draw(mesh, cam, 0);
    b.mask_of(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pixel;

    #[test]
    fn nearer_box_wins() {
        let cam = CameraModel::from_angles(400.0, Pixel::new(319.5, 239.5), 0.0, 0.0, 0.0, 1.0);
        let far = TriMesh::cuboid_at(Point3::new(-1.0, 6.0, 0.0), Point3::new(1.0, 7.0, 2.0));
        let near = TriMesh::cuboid_at(Point3::new(-0.2, 3.0, 0.8), Point3::new(0.2, 3.4, 1.2));
        let mut b = DepthBuffer::new(ImageDims::new(640, 480));
        b.draw(&far, &cam, 1);
        b.draw(&near, &cam, 2);
        let c = (320, 240);
        assert_eq!(b.owner[c.1 * 640 + c.0], Some(2));
        assert!((b.depth_at(c.0, c.1) - 3.0).abs() < 1e-9);
        // the near box face is 0.4 m at 3 m: 400 * 0.4 / 3 px wide
        let side = 400.0 * 0.4 / 3.0;
        let n = b.mask_of(2).count() as f64;
        assert!((n - side * side).abs() / (side * side) < 0.03, "{n}");
    }
}
