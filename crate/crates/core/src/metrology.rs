//! Single-view metrology: height lines from masks and metric heights from
//! the cross ratio along a reference vertical of known height.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraModel, HPoint2, Mask, Pixel, Point3};
use crate::layout::RoomLayout;
use crate::priors::{PriorTables, SupportType};
use crate::support::{SupportError, SupportGraph, SupportParent, WallSide};

/// Minimum column distance between an object's height line and the
/// reference vertical, pixels.
pub const REFERENCE_OFFSET_PX: f64 = 30.0;

const KDE_GRID: usize = 256;
const MAX_PEAKS: usize = 16;
const CHORD_STEP: f64 = 0.25;
const CHORD_GAP: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetrologyError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("singular configuration: {0}")]
    SingularConfiguration(&'static str),
    #[error(transparent)]
    Graph(#[from] SupportError),
    #[error("no height line for instance {0}")]
    MissingLine(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightLine {
    pub owner: u8,
    pub top: Pixel,
    pub bottom: Pixel,
    /// The bottom end is hidden by another instance rather than resting on
    /// the parent.
    pub bottom_occluded: bool,
}

/// Angular (or, at infinity, lateral) coordinate of rays from a vanishing
/// point.
struct RayFrame {
    vp: HPoint2,
    origin: Pixel,
    reference: Vector2<f64>,
}

impl RayFrame {
    fn new(vp: &HPoint2, centroid: Pixel) -> Self {
        let vp = vp.normalized();
        let reference = if vp.w.abs() > 1e-12 {
            let d = centroid - Pixel::new(vp.x / vp.w, vp.y / vp.w);
            if d.norm() > 0.0 {
                d.normalize()
            } else {
                Vector2::new(0.0, 1.0)
            }
        } else {
            Vector2::new(vp.x, vp.y).normalize()
        };
        Self { vp, origin: centroid, reference }
    }

    fn finite(&self) -> bool {
        self.vp.w.abs() > 1e-12
    }

    fn coordinate(&self, p: &Pixel) -> f64 {
        if self.finite() {
            let d = p - Pixel::new(self.vp.x / self.vp.w, self.vp.y / self.vp.w);
            let cross = self.reference.perp(&d);
            cross.atan2(self.reference.dot(&d))
        } else {
            self.reference.perp(&(p - self.origin))
        }
    }

    /// Change of coordinate that moves a ray about one pixel at the
    /// centroid.
    fn pixel_step(&self) -> f64 {
        if self.finite() {
            let d = (self.origin - Pixel::new(self.vp.x / self.vp.w, self.vp.y / self.vp.w)).norm();
            1.0 / d.max(1.0)
        } else {
            1.0
        }
    }

    /// Point and unit direction of the ray with coordinate `c`.
    fn ray(&self, c: f64) -> (Pixel, Vector2<f64>) {
        if self.finite() {
            let (s, co) = c.sin_cos();
            let r = &self.reference;
            let dir = Vector2::new(r.x * co - r.y * s, r.x * s + r.y * co);
            (Pixel::new(self.vp.x / self.vp.w, self.vp.y / self.vp.w), dir)
        } else {
            let n = Vector2::new(-self.reference.y, self.reference.x);
            (self.origin + n * c, self.reference)
        }
    }
}

/// Longest run of mask pixels along a ray, as sample endpoints. Gaps up to
/// `CHORD_GAP` long are bridged, since a ray grazing the boundary drops in
/// and out of the mask as it crosses pixel rows.
fn longest_chord(mask: &Mask, origin: Pixel, dir: Vector2<f64>) -> Option<(Pixel, Pixel)> {
    let (x0, y0, x1, y1) = mask.bbox()?;
    let corners = [
        Pixel::new(x0 as f64 - 1.0, y0 as f64 - 1.0),
        Pixel::new(x1 as f64 + 1.0, y0 as f64 - 1.0),
        Pixel::new(x0 as f64 - 1.0, y1 as f64 + 1.0),
        Pixel::new(x1 as f64 + 1.0, y1 as f64 + 1.0),
    ];
    let along: Vec<f64> = corners.iter().map(|c| (c - origin).dot(&dir)).collect();
    let lo = along.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = along.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = ((hi - lo) / CHORD_STEP).ceil() as usize + 1;
    let max_gap = (CHORD_GAP / CHORD_STEP).round() as usize;
    let mut best: Option<(usize, usize)> = None;
    // start and last inside sample of the open run
    let mut run: Option<(usize, usize)> = None;
    for i in 0..=n {
        let inside = i < n && {
            let p = origin + dir * (lo + i as f64 * CHORD_STEP);
            mask.get_signed(p.x.round() as i64, p.y.round() as i64)
        };
        if inside {
            run = Some(run.map_or((i, i), |(s, _)| (s, i)));
        }
        if let Some((s, last)) = run {
            if i - last > max_gap || i == n {
                if best.map_or(true, |(a, b)| last - s > b - a) {
                    best = Some((s, last));
                }
                run = None;
            }
        }
    }
    best.map(|(a, b)| (origin + dir * (lo + a as f64 * CHORD_STEP), origin + dir * (lo + b as f64 * CHORD_STEP)))
}

fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// Height line of a mask: the longest mask chord along a ray from `vp_v`
/// whose direction is a local maximum of the kernel density of boundary
/// ray directions. `vp_v` must carry its sign: the top end is the one
/// further along the upward image direction.
pub fn extract_height_line(mask: &Mask, vp_v: &HPoint2) -> Result<(Pixel, Pixel), MetrologyError> {
    let n = mask.count();
    if n == 0 {
        return Err(MetrologyError::EmptyMask);
    }
    let (sx, sy) = mask.iter_set().fold((0.0, 0.0), |(a, b), (x, y)| (a + x as f64, b + y as f64));
    let centroid = Pixel::new(sx / n as f64, sy / n as f64);
    if n == 1 {
        return Ok((centroid, centroid));
    }
    let frame = RayFrame::new(vp_v, centroid);
    let coords: Vec<f64> =
        mask.boundary_pixels().iter().map(|&(x, y)| frame.coordinate(&Pixel::new(x as f64, y as f64))).collect();
    let h = silverman_bandwidth(&coords);
    let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut peaks: Vec<(f64, f64)> = if h > 0.0 && hi > lo {
        let grid: Vec<f64> = (0..KDE_GRID).map(|i| lo + (hi - lo) * i as f64 / (KDE_GRID - 1) as f64).collect();
        let density: Vec<f64> =
            grid.iter().map(|g| coords.iter().map(|c| (-0.5 * ((g - c) / h).powi(2)).exp()).sum::<f64>()).collect();
        (0..KDE_GRID)
            .filter(|&i| {
                (i == 0 || density[i] >= density[i - 1]) && (i + 1 == KDE_GRID || density[i] >= density[i + 1])
            })
            .map(|i| (density[i], grid[i]))
            .collect()
    } else {
        vec![(1.0, lo)]
    };
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    peaks.truncate(MAX_PEAKS);

    let mut best: Option<(f64, Pixel, Pixel)> = None;
    // Peaks sit on the mask boundary, where a chord is fragile; rays a pixel
    // either side are tried too. Going further in lets the chord run on
    // across a visible top face.
    let px = frame.pixel_step();
    for (_, c) in peaks {
        for k in [0.0, -1.0, 1.0] {
            let (origin, dir) = frame.ray(c + k * px);
            if let Some((a, b)) = longest_chord(mask, origin, dir) {
                let len = (b - a).norm();
                if best.as_ref().map_or(true, |(l, _, _)| len > *l + 1e-9) {
                    best = Some((len, a, b));
                }
            }
        }
    }
    let (_, a, b) = best.ok_or(MetrologyError::EmptyMask)?;
    let mid = (a + b) * 0.5;
    let up = vp_v.direction_from(&mid);
    Ok(if (a - b).dot(&up) >= 0.0 { (a, b) } else { (b, a) })
}

/// Instance ids per pixel, `None` for background.
pub type InstanceMap = Vec<Option<u8>>;

/// Instance found just past the bottom of a height line, if any.
pub fn instance_below(line: &HeightLine, vp_v: &HPoint2, instances: &InstanceMap, width: usize) -> Option<u8> {
    let up = vp_v.direction_from(&line.bottom);
    let n = up.norm();
    if !(n > 0.0) {
        return None;
    }
    let height = instances.len() / width.max(1);
    for step in [1.0, 2.0, 3.0] {
        let p = line.bottom - up / n * step;
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x as usize >= width || y as usize >= height {
            return None;
        }
        match instances[y as usize * width + x as usize] {
            Some(id) if id != line.owner => return Some(id),
            _ => {}
        }
    }
    None
}

/// Coordinates along the reference line: unit direction from `b_r`.
fn along(b_r: &Pixel, t_r: &Pixel) -> Result<Vector2<f64>, MetrologyError> {
    let d = t_r - b_r;
    let n = d.norm();
    if !(n > 0.0) {
        return Err(MetrologyError::SingularConfiguration("reference line has zero length"));
    }
    Ok(d / n)
}

/// Altitude of `t_i` (a point on the reference vertical through `b_r`,
/// `t_r`) given the reference height `h_r`. `vp_v` may be at infinity.
pub fn cross_ratio_altitude(
    t_i: &Pixel,
    b_r: &Pixel,
    t_r: &Pixel,
    vp_v: &HPoint2,
    h_r: f64,
) -> Result<f64, MetrologyError> {
    let u = along(b_r, t_r)?;
    let s_tr = (t_r - b_r).dot(&u);
    let s_t = (t_i - b_r).dot(&u);
    let v_s = vp_v.direction_from(b_r).dot(&u);
    let w = vp_v.w;
    let den = v_s - w * s_t;
    let scale = v_s.abs().max(w.abs() * s_t.abs()).max(1e-300);
    if den.abs() <= 1e-12 * scale {
        return Err(MetrologyError::SingularConfiguration("point coincides with the vertical vanishing point"));
    }
    Ok(h_r * (s_t / s_tr) * (v_s - w * s_tr) / den)
}

/// Inverse of [`cross_ratio_altitude`]: the image point of altitude `a` on
/// the reference vertical.
pub fn point_at_altitude(a: f64, b_r: &Pixel, t_r: &Pixel, vp_v: &HPoint2, h_r: f64) -> Result<Pixel, MetrologyError> {
    let u = along(b_r, t_r)?;
    let s_tr = (t_r - b_r).dot(&u);
    let v_s = vp_v.direction_from(b_r).dot(&u);
    let w = vp_v.w;
    // s(A) = A V / (d + A w) with d fixed by s(h_r) = s_tr.
    let d = h_r * v_s / s_tr - h_r * w;
    let den = d + a * w;
    if den.abs() < 1e-300 {
        return Err(MetrologyError::SingularConfiguration("altitude maps to infinity"));
    }
    Ok(b_r + u * (a * v_s / den))
}

/// Reference vertical of known height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub bottom: Pixel,
    pub top: Pixel,
    pub height: f64,
}

impl ReferenceLine {
    pub fn altitude(&self, p: &Pixel, vp_v: &HPoint2) -> Result<f64, MetrologyError> {
        cross_ratio_altitude(p, &self.bottom, &self.top, vp_v, self.height)
    }

    pub fn point_at(&self, a: f64, vp_v: &HPoint2) -> Result<Pixel, MetrologyError> {
        point_at_altitude(a, &self.bottom, &self.top, vp_v, self.height)
    }
}

fn hom(p: &Pixel) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// Altitude of `t`, which shares a vertical with `anchor` of known altitude,
/// transferred onto the reference vertical through the horizon.
pub fn transfer_altitude(
    t: &Pixel,
    anchor: &Pixel,
    anchor_altitude: f64,
    reference: &ReferenceLine,
    vp_v: &HPoint2,
    horizon: &Vector3<f64>,
) -> Result<f64, MetrologyError> {
    let m = reference.point_at(anchor_altitude, vp_v)?;
    let base = hom(anchor).cross(&hom(&m));
    if base.x.hypot(base.y) < 1e-9 {
        return Err(MetrologyError::SingularConfiguration("object lies on the reference vertical"));
    }
    let u = base.cross(horizon);
    let lr = hom(&reference.bottom).cross(&hom(&reference.top));
    let through = u.cross(&hom(t));
    let t_ref = HPoint2::from_vector(through.cross(&lr))
        .to_pixel()
        .ok_or(MetrologyError::SingularConfiguration("transfer line is parallel to the reference"))?;
    reference.altitude(&t_ref, vp_v)
}

/// Homogeneous image of a room point, without the depth test.
fn project_h(cam: &CameraModel, x: &Point3) -> Vector3<f64> {
    cam.intrinsics() * cam.to_camera(x)
}

/// Image line of the floor edge of one wall.
pub fn wall_floor_line(cam: &CameraModel, layout: &RoomLayout, side: WallSide) -> Vector3<f64> {
    let (lo, hi) = (layout.lo(), layout.hi());
    let (p, dir) = match side {
        WallSide::Front => (Point3::new(lo.x, hi.y, 0.0), Vector3::x()),
        WallSide::Back => (Point3::new(lo.x, lo.y, 0.0), Vector3::x()),
        WallSide::Left => (Point3::new(lo.x, hi.y, 0.0), Vector3::y()),
        WallSide::Right => (Point3::new(hi.x, hi.y, 0.0), Vector3::y()),
    };
    project_h(cam, &p).cross(&(cam.intrinsics() * (cam.rotation * dir)))
}

/// Picks a wall-floor/wall-ceiling vertical of the fitted room near the
/// given image column, at least [`REFERENCE_OFFSET_PX`] away from it, with
/// both ends inside the image when possible.
pub fn select_reference(
    cam: &CameraModel,
    layout: &RoomLayout,
    width: usize,
    height: usize,
    column: f64,
) -> Option<ReferenceLine> {
    let (lo, hi) = (layout.lo(), layout.hi());
    let h = layout.sizes.z;
    let mut feet: Vec<Point3> = Vec::new();
    let n = 64;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        feet.push(Point3::new(lo.x + t * (hi.x - lo.x), hi.y, 0.0));
        feet.push(Point3::new(lo.x, lo.y + t * (hi.y - lo.y), 0.0));
        feet.push(Point3::new(hi.x, lo.y + t * (hi.y - lo.y), 0.0));
    }
    let inside = |p: &Pixel| p.x >= 0.0 && p.y >= 0.0 && p.x <= width as f64 - 1.0 && p.y <= height as f64 - 1.0;
    let mut best: Option<(bool, f64, ReferenceLine)> = None;
    for f in feet {
        let (Ok(b), Ok(t)) = (cam.project(&f), cam.project(&(f + Vector3::z() * h))) else {
            continue;
        };
        let offset = (b.x - column).abs().min((t.x - column).abs());
        if offset < REFERENCE_OFFSET_PX || (t - b).norm() < 1.0 {
            continue;
        }
        let visible = inside(&b) && inside(&t);
        let key = (!visible, offset);
        if best.as_ref().map_or(true, |(v, o, _)| key < (*v, *o)) {
            best = Some((key.0, key.1, ReferenceLine { bottom: b, top: t, height: h }));
        }
    }
    best.map(|(_, _, r)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectHeight {
    pub height: f64,
    pub top_altitude: f64,
    pub bottom_altitude: f64,
    pub support_type: SupportType,
    pub clamped: bool,
    /// Estimated without a shared vertical to anchor on.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeightSolution {
    pub objects: BTreeMap<u8, ObjectHeight>,
    /// Below-edges switched to behind because their height came out negative.
    pub type_corrections: Vec<u8>,
}

/// Solves heights and altitudes in support order.
///
/// Floor objects anchor their bottom at altitude 0; objects resting on
/// another anchor at the parent's top (or on the parent's top point when
/// their own bottom is occluded); wall objects anchor where their vertical
/// meets the wall's floor edge; objects hanging from the ceiling anchor
/// their top at the room height. Anything else is a rough estimate anchored
/// on the parent's bottom and flagged. Heights outside the category's
/// `μ ± 3σ` (as a fraction of room height) are replaced by `μ` and flagged.
pub fn solve_heights(
    graph: &SupportGraph,
    lines: &BTreeMap<u8, HeightLine>,
    categories: &BTreeMap<u8, u8>,
    cam: &CameraModel,
    layout: &RoomLayout,
    priors: &PriorTables,
    image_width: usize,
    image_height: usize,
) -> Result<HeightSolution, MetrologyError> {
    let order = graph.topological_order()?;
    let vp = cam.vertical_vp();
    let horizon = cam.horizon();
    let h_room = layout.sizes.z;
    let mut sol = HeightSolution::default();
    for id in order {
        let line = lines.get(&id).ok_or(MetrologyError::MissingLine(id))?;
        let edge = graph.parent(id).expect("ordered ids have edges");
        let column = 0.5 * (line.top.x + line.bottom.x);
        let reference = select_reference(cam, layout, image_width, image_height, column)
            .ok_or(MetrologyError::SingularConfiguration("no reference vertical in view"))?;
        let transfer = |p: &Pixel, anchor: &Pixel, a: f64| transfer_altitude(p, anchor, a, &reference, &vp, &horizon);
        let mut support_type = edge.support_type;
        let mut low_confidence = false;
        let (mut bottom, mut top) = match (edge.parent, edge.support_type) {
            (SupportParent::Floor, _) => {
                low_confidence = line.bottom_occluded;
                (0.0, transfer(&line.top, &line.bottom, 0.0)?)
            }
            (SupportParent::Object(p), SupportType::Below) => {
                let parent_top = sol.objects.get(&p).map_or(0.0, |o| o.top_altitude);
                let anchor =
                    if line.bottom_occluded { lines.get(&p).map_or(line.bottom, |l| l.top) } else { line.bottom };
                (parent_top, transfer(&line.top, &anchor, parent_top)?)
            }
            (SupportParent::Wall(side), _) => {
                let vertical = hom(&line.top).cross(&hom(&line.bottom));
                let foot = HPoint2::from_vector(vertical.cross(&wall_floor_line(cam, layout, side)))
                    .to_pixel()
                    .ok_or(MetrologyError::SingularConfiguration("object vertical is parallel to the wall base"))?;
                (transfer(&line.bottom, &foot, 0.0)?, transfer(&line.top, &foot, 0.0)?)
            }
            (SupportParent::Ceiling, _) => (transfer(&line.bottom, &line.top, h_room)?, h_room),
            (SupportParent::Object(p), SupportType::Behind) => {
                low_confidence = true;
                let (anchor, a) = match (lines.get(&p), sol.objects.get(&p)) {
                    (Some(l), Some(o)) => (l.bottom, o.bottom_altitude),
                    _ => (line.bottom, 0.0),
                };
                (transfer(&line.bottom, &anchor, a)?, transfer(&line.top, &anchor, a)?)
            }
        };
        if top < bottom && support_type == SupportType::Below {
            support_type = SupportType::Behind;
            sol.type_corrections.push(id);
            low_confidence = true;
            std::mem::swap(&mut top, &mut bottom);
        }
        let mut height = top - bottom;
        let category = categories.get(&id).copied().unwrap_or(0);
        let (lo, hi) = priors.height_interval(category);
        let ratio = height / h_room;
        let clamped = !(ratio >= lo && ratio <= hi);
        if clamped {
            height = priors.height_mu[category as usize] * h_room;
            top = bottom + height;
        }
        sol.objects.insert(
            id,
            ObjectHeight { height, top_altitude: top, bottom_altitude: bottom, support_type, clamped, low_confidence },
        );
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::SupportType;
    use crate::support::SupportEdge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> CameraModel {
        CameraModel::from_angles(500.0, Pixel::new(319.5, 239.5), 0.1, 0.22, 0.02, 1.5)
    }

    fn room() -> RoomLayout {
        RoomLayout::from_bounds(Point3::new(-2.0, 0.0, 0.0), Point3::new(2.5, 5.5, 3.0), 0.0)
    }

    fn reference(cam: &CameraModel) -> ReferenceLine {
        let f = Point3::new(1.0, 5.5, 0.0);
        ReferenceLine {
            bottom: cam.project(&f).unwrap(),
            top: cam.project(&(f + Vector3::z() * 3.0)).unwrap(),
            height: 3.0,
        }
    }

    #[test]
    fn cross_ratio_end_points() {
        let cam = camera();
        let r = reference(&cam);
        let vp = cam.vertical_vp();
        assert!((r.altitude(&r.top, &vp).unwrap() - 3.0).abs() < 1e-12);
        assert!(r.altitude(&r.bottom, &vp).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cross_ratio_recovers_projected_altitude() {
        let cam = camera();
        let r = reference(&cam);
        let p = cam.project(&Point3::new(1.0, 5.5, 0.8)).unwrap();
        let a = r.altitude(&p, &cam.vertical_vp()).unwrap();
        assert!((a - 0.8).abs() < 1e-9, "{a}");
    }

    #[test]
    fn cross_ratio_with_vertical_vp_at_infinity() {
        let cam = CameraModel::from_angles(500.0, Pixel::new(319.5, 239.5), 0.3, 0.0, 0.0, 1.5);
        assert!(cam.vertical_vp().w.abs() < 1e-12);
        let r = reference(&cam);
        let p = cam.project(&Point3::new(1.0, 5.5, 2.2)).unwrap();
        assert!((r.altitude(&p, &cam.vertical_vp()).unwrap() - 2.2).abs() < 1e-9);
    }

    #[test]
    fn singular_at_vanishing_point() {
        let cam = camera();
        let r = reference(&cam);
        let vp = cam.vertical_vp();
        let at = vp.to_pixel().unwrap();
        // Move the reference onto the line through the vp so the point is on it.
        let r2 = ReferenceLine { bottom: r.bottom, top: r.bottom + (at - r.bottom) * 0.1, height: 3.0 };
        assert!(matches!(r2.altitude(&at, &vp), Err(MetrologyError::SingularConfiguration(_))));
    }

    #[test]
    fn transfer_matches_projection_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let cam = CameraModel::from_angles(
                rng.gen_range(350.0..650.0),
                Pixel::new(319.5, 239.5),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(0.05..0.35),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(1.2..1.8),
            );
            let r = reference(&cam);
            let foot = Point3::new(rng.gen_range(-1.5..0.3), rng.gen_range(2.0..5.0), 0.0);
            let base = rng.gen_range(0.0..1.0);
            let top = base + rng.gen_range(0.1..1.2);
            let b = cam.project(&(foot + Vector3::z() * base)).unwrap();
            let t = cam.project(&(foot + Vector3::z() * top)).unwrap();
            let a = transfer_altitude(&t, &b, base, &r, &cam.vertical_vp(), &cam.horizon()).unwrap();
            assert!((a - top).abs() <= 1e-6 * top, "{a} vs {top}");
        }
    }

    #[test]
    fn rectangle_height_line_spans_rows() {
        let mask = Mask::from_fn(60, 60, |x, y| (10..30).contains(&x) && (15..45).contains(&y));
        let vp = HPoint2::new(0.0, -1.0, 0.0);
        let (t, b) = extract_height_line(&mask, &vp).unwrap();
        assert!(t.y < b.y);
        assert!(((b.y - t.y) - 29.0).abs() <= 1.0, "{t:?} {b:?}");
        assert!((t.x - b.x).abs() < 1e-9 && (10.0..30.0).contains(&t.x));
    }

    #[test]
    fn l_shape_picks_tall_limb() {
        // Tall limb x in 5..12, rows 5..50; foot x in 5..40, rows 40..50.
        let mask = Mask::from_fn(60, 60, |x, y| {
            ((5..12).contains(&x) && (5..50).contains(&y)) || ((5..40).contains(&x) && (40..50).contains(&y))
        });
        let vp = HPoint2::new(0.0, -1.0, 0.0);
        let (t, b) = extract_height_line(&mask, &vp).unwrap();
        // Oracle: longest vertical run over all columns.
        let oracle = (0..60)
            .map(|x| {
                let mut best = 0;
                let mut run = 0;
                for y in 0..60 {
                    run = if mask.get(x, y) { run + 1 } else { 0 };
                    best = best.max(run);
                }
                best
            })
            .max()
            .unwrap() as f64;
        assert!((5.0..12.0).contains(&t.x.round()));
        assert!(((b - t).norm() + 1.0 - oracle).abs() <= 1.0);
    }

    #[test]
    fn single_pixel_is_degenerate() {
        let mask = Mask::from_fn(9, 9, |x, y| x == 4 && y == 4);
        let (t, b) = extract_height_line(&mask, &HPoint2::new(0.0, -1.0, 0.0)).unwrap();
        assert_eq!(t, b);
        assert_eq!(extract_height_line(&Mask::new(4, 4), &HPoint2::new(0.0, 1.0, 0.0)), Err(MetrologyError::EmptyMask));
    }

    fn line_for(cam: &CameraModel, owner: u8, foot: Point3, bottom: f64, top: f64) -> HeightLine {
        HeightLine {
            owner,
            top: cam.project(&(foot + Vector3::z() * top)).unwrap(),
            bottom: cam.project(&(foot + Vector3::z() * bottom)).unwrap(),
            bottom_occluded: false,
        }
    }

    fn stack_scene() -> (CameraModel, SupportGraph, BTreeMap<u8, HeightLine>, BTreeMap<u8, u8>, PriorTables) {
        let cam = camera();
        let mut g = SupportGraph::default();
        g.edges.insert(
            0,
            SupportEdge { parent: SupportParent::Floor, support_type: SupportType::Below, prior: 1.0, fallback: false },
        );
        g.edges.insert(
            1,
            SupportEdge {
                parent: SupportParent::Object(0),
                support_type: SupportType::Below,
                prior: 1.0,
                fallback: false,
            },
        );
        let corner = Point3::new(-0.8, 3.2, 0.0);
        let mut lines = BTreeMap::new();
        lines.insert(0, line_for(&cam, 0, corner, 0.0, 0.55));
        lines.insert(1, line_for(&cam, 1, corner, 0.55, 1.1));
        let cats = BTreeMap::from([(0, crate::categories::NIGHT_STAND), (1, crate::categories::LAMP)]);
        let mut priors = PriorTables::empty();
        priors.height_mu[crate::categories::NIGHT_STAND as usize] = 0.2;
        priors.height_mu[crate::categories::LAMP as usize] = 0.2;
        (cam, g, lines, cats, priors)
    }

    #[test]
    fn night_stand_and_lamp() {
        let (cam, g, lines, cats, priors) = stack_scene();
        let sol = solve_heights(&g, &lines, &cats, &cam, &room(), &priors, 640, 480).unwrap();
        assert!((sol.objects[&0].height - 0.55).abs() < 1e-6 * 0.55);
        assert!((sol.objects[&1].height - 0.55).abs() < 1e-6 * 0.55);
        assert!((sol.objects[&1].top_altitude - 1.1).abs() < 1e-6);
        assert!(!sol.objects[&1].clamped && !sol.objects[&0].clamped);
    }

    #[test]
    fn occluded_bottom_substitution_matches() {
        let (cam, g, mut lines, cats, priors) = stack_scene();
        let clean = solve_heights(&g, &lines, &cats, &cam, &room(), &priors, 640, 480).unwrap();
        let l = lines.get_mut(&1).unwrap();
        l.bottom = l.bottom + (l.top - l.bottom) * 0.4;
        l.bottom_occluded = true;
        let occluded = solve_heights(&g, &lines, &cats, &cam, &room(), &priors, 640, 480).unwrap();
        assert!((clean.objects[&1].height - occluded.objects[&1].height).abs() < 1e-9);
    }

    #[test]
    fn outlier_is_clamped_to_mean() {
        let (cam, g, lines, cats, mut priors) = stack_scene();
        let lamp = crate::categories::LAMP as usize;
        // 0.55 / 3 sits at μ + 5σ.
        priors.height_sigma[lamp] = (0.55 / 3.0 - 0.1) / 5.0;
        priors.height_mu[lamp] = 0.1;
        let sol = solve_heights(&g, &lines, &cats, &cam, &room(), &priors, 640, 480).unwrap();
        assert!(sol.objects[&1].clamped);
        assert!((sol.objects[&1].height - 0.3).abs() < 1e-12);
        let (lo, hi) = priors.height_interval(lamp as u8);
        assert!(sol.objects[&1].height / 3.0 >= lo && sol.objects[&1].height / 3.0 <= hi);
    }

    #[test]
    fn wall_picture_height() {
        let cam = camera();
        let mut g = SupportGraph::default();
        g.edges.insert(
            2,
            SupportEdge {
                parent: SupportParent::Wall(WallSide::Front),
                support_type: SupportType::Behind,
                prior: 1.0,
                fallback: false,
            },
        );
        let foot = Point3::new(-0.4, 5.5, 0.0);
        let lines = BTreeMap::from([(2, line_for(&cam, 2, foot, 1.4, 2.1))]);
        let cats = BTreeMap::from([(2, crate::categories::PICTURE)]);
        let sol = solve_heights(&g, &lines, &cats, &cam, &room(), &PriorTables::empty(), 640, 480).unwrap();
        let o = sol.objects[&2];
        assert!((o.bottom_altitude - 1.4).abs() < 1e-6 && (o.height - 0.7).abs() < 1e-6, "{o:?}");
    }

    #[test]
    fn negative_height_switches_type() {
        let (cam, g, mut lines, cats, priors) = stack_scene();
        let l = lines.get_mut(&1).unwrap();
        std::mem::swap(&mut l.top, &mut l.bottom);
        let sol = solve_heights(&g, &lines, &cats, &cam, &room(), &priors, 640, 480).unwrap();
        assert_eq!(sol.type_corrections, vec![1]);
        assert_eq!(sol.objects[&1].support_type, SupportType::Behind);
    }
}
