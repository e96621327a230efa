//! Room layout: proposals from vanishing-point-consistent lines, edge-map
//! scoring and metric cuboid fitting.
//!
//! Proposals are parameterized in a camera-centered frame aligned with the
//! Manhattan axes, scaled so the camera sits one unit above the floor:
//! the floor is `z = -1`, the ceiling `z = c`, the front wall `y = y1` and the
//! side walls `x = x0 < 0 < x1`. The back wall is taken to pass through the
//! camera, so recovered depth is a lower bound.

use std::collections::HashSet;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraModel, HPoint2, ImageDims, LineSeg2, Pixel, Point3};
use crate::vanishing::VpCluster;

pub const DEFAULT_ROOM_HEIGHT: f64 = 3.0;
pub const DEFAULT_MAX_PROPOSALS: usize = 200;
pub const HIGH_INTENSITY: f64 = 0.3;
pub const HIGH_INTENSITY_FRACTION: f64 = 0.6;
pub const BAND_HALF_WIDTH: f64 = 2.0;

const CANDIDATES_PER_ROLE: usize = 3;
const GROUP_TOLERANCE: f64 = 0.01;
/// Stand-in coordinate for a side wall that is out of view.
const OPEN_WALL: f64 = 1e3;
const NEAR_DEPTH: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("fewer than two usable layout lines")]
    NoProposal,
    #[error("edge map is {got:?}, expected {expected:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("no floor-wall junction is visible")]
    UnderConstrained,
    #[error("edge map value {0} is outside [0, 1]")]
    InvalidIntensity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    intensity: Vec<f64>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, intensity: Vec<f64>) -> Result<Self, LayoutError> {
        if intensity.len() != width * height {
            return Err(LayoutError::DimensionMismatch { expected: (width, height), got: (intensity.len(), 1) });
        }
        if let Some(&v) = intensity.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LayoutError::InvalidIntensity(v));
        }
        Ok(Self { width, height, intensity })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut intensity = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                intensity.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, intensity }
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.intensity[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.intensity
    }

    /// Nearest-pixel lookup; zero outside the image.
    pub fn sample(&self, p: &Pixel) -> f64 {
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return 0.0;
        }
        self.get(x as usize, y as usize)
    }

    /// Scales every value by `k`, clamping to `[0, 1]`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            intensity: self.intensity.iter().map(|v| (v * k).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn has_high_intensity(&self) -> bool {
        self.intensity.iter().any(|&v| v >= HIGH_INTENSITY)
    }
}

/// True when the edge map is at least [`HIGH_INTENSITY`] along at least
/// [`HIGH_INTENSITY_FRACTION`] of the segment.
pub fn on_edge_map(line: &LineSeg2, edges: &EdgeMap) -> bool {
    let n = (line.length.ceil() as usize).max(1) + 1;
    let hits = (0..n)
        .filter(|&i| {
            let t = i as f64 / (n - 1).max(1) as f64;
            edges.sample(&(line.p0 + (line.q0 - line.p0) * t)) >= HIGH_INTENSITY
        })
        .count();
    hits as f64 >= HIGH_INTENSITY_FRACTION * n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Floor = 0,
    Ceiling = 1,
    FrontWall = 2,
    LeftWall = 3,
    RightWall = 4,
    BackWall = 5,
}

impl Region {
    pub const ALL: [Region; 6] =
        [Region::Floor, Region::Ceiling, Region::FrontWall, Region::LeftWall, Region::RightWall, Region::BackWall];

    pub fn from_index(i: u8) -> Option<Region> {
        Self::ALL.get(i as usize).copied()
    }
}

/// Which box edge a line is evidence for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeRole {
    FloorFront,
    CeilingFront,
    CornerLeft,
    CornerRight,
    FloorLeft,
    FloorRight,
    CeilingLeft,
    CeilingRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleLine {
    pub role: EdgeRole,
    pub line: LineSeg2,
    /// Built from a junction and a vanishing point rather than observed.
    pub inferred: bool,
}

/// Box in the unit-camera-height frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitBox {
    pub y1: f64,
    pub c: f64,
    pub x0: f64,
    pub x1: f64,
    pub left_open: bool,
    pub right_open: bool,
}

impl UnitBox {
    fn lo_hi(&self) -> (Point3, Point3) {
        (Point3::new(self.x0, 0.0, -1.0), Point3::new(self.x1, self.y1, self.c))
    }

    /// Plane normal (room frame, through the camera) of the plane spanned by
    /// the camera center and the box edge playing `role`.
    fn edge_plane(&self, role: EdgeRole) -> Vector3<f64> {
        let UnitBox { y1, c, x0, x1, .. } = *self;
        match role {
            EdgeRole::FloorFront => Vector3::new(0.0, 1.0, y1),
            EdgeRole::CeilingFront => Vector3::new(0.0, c, -y1),
            EdgeRole::CornerLeft => Vector3::new(y1, -x0, 0.0),
            EdgeRole::CornerRight => Vector3::new(y1, -x1, 0.0),
            EdgeRole::FloorLeft => Vector3::new(1.0, 0.0, x0),
            EdgeRole::FloorRight => Vector3::new(1.0, 0.0, x1),
            EdgeRole::CeilingLeft => Vector3::new(c, 0.0, -x0),
            EdgeRole::CeilingRight => Vector3::new(c, 0.0, -x1),
        }
    }

    /// Region hit first by a room-frame ray from the camera.
    pub fn region_of_ray(&self, d: &Vector3<f64>) -> Region {
        let mut best = (f64::INFINITY, Region::BackWall);
        let mut consider = |t: f64, r: Region| {
            if t > 0.0 && t < best.0 {
                best = (t, r);
            }
        };
        if d.z < 0.0 {
            consider(-1.0 / d.z, Region::Floor);
        } else if d.z > 0.0 {
            consider(self.c / d.z, Region::Ceiling);
        }
        if d.y > 0.0 {
            consider(self.y1 / d.y, Region::FrontWall);
        }
        if d.x < 0.0 {
            consider(self.x0 / d.x, Region::LeftWall);
        } else if d.x > 0.0 {
            consider(self.x1 / d.x, Region::RightWall);
        }
        best.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPolygon {
    pub region: Region,
    pub vertices: Vec<Pixel>,
}

impl RegionPolygon {
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutProposal {
    pub unit_box: UnitBox,
    pub polygons: Vec<RegionPolygon>,
    /// Projected visible box edges, clipped to the image.
    pub boundaries: Vec<(Pixel, Pixel)>,
    pub generating_lines: Vec<RoleLine>,
    pub score: f64,
    pub raw_score: f64,
}

/// Per-frame view used to cast rays and project the unit box.
#[derive(Debug, Clone, Copy)]
struct UnitView {
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
    r: Matrix3<f64>,
    dims: ImageDims,
}

impl UnitView {
    fn new(cam: &CameraModel, dims: ImageDims) -> Self {
        Self { k: cam.intrinsics(), k_inv: cam.intrinsics_inv(), r: cam.rotation, dims }
    }

    fn ray(&self, p: &Pixel) -> Vector3<f64> {
        self.r.transpose() * self.k_inv * Vector3::new(p.x, p.y, 1.0)
    }

    fn to_camera(&self, x: &Point3) -> Vector3<f64> {
        self.r * x
    }

    fn project_camera(&self, pc: &Vector3<f64>) -> Pixel {
        let h = self.k * pc;
        Pixel::new(h.x / h.z, h.y / h.z)
    }

    fn image_line(&self, plane: &Vector3<f64>) -> Vector3<f64> {
        self.k_inv.transpose() * self.r * plane
    }
}

fn line_ray_ratios(view: &UnitView, line: &LineSeg2, num: usize, den: usize) -> Option<f64> {
    let a = view.ray(&line.p0);
    let b = view.ray(&line.q0);
    if a[den].abs() < 1e-9 || b[den].abs() < 1e-9 || a[den].signum() != b[den].signum() {
        return None;
    }
    Some(0.5 * (a[num] / a[den] + b[num] / b[den]))
}

/// Evidence for one box parameter, expressed in the ray form each role
/// yields: `q = z/y` on front-wall horizontals, `r = x/y` on verticals and
/// `s = x/z` on side-wall horizontals.
#[derive(Debug, Clone)]
struct Evidence {
    role: EdgeRole,
    ratio: f64,
    line: RoleLine,
    weight: f64,
}

fn classify(view: &UnitView, line: &LineSeg2, axis: usize, inferred: bool, weight: f64) -> Option<Evidence> {
    let ev = |role, ratio| Some(Evidence { role, ratio, line: RoleLine { role, line: *line, inferred }, weight });
    match axis {
        0 => {
            let q = line_ray_ratios(view, line, 2, 1)?;
            let a = view.ray(&line.p0);
            if a.y <= 0.0 {
                return None;
            }
            if q < 0.0 {
                ev(EdgeRole::FloorFront, q)
            } else {
                ev(EdgeRole::CeilingFront, q)
            }
        }
        1 => {
            let s = line_ray_ratios(view, line, 0, 2)?;
            let below = view.ray(&line.p0).z < 0.0;
            // x = s z: on the floor (z = -1) the wall is on the side opposite to s.
            match (below, s > 0.0) {
                (true, true) => ev(EdgeRole::FloorLeft, s),
                (true, false) => ev(EdgeRole::FloorRight, s),
                (false, true) => ev(EdgeRole::CeilingRight, s),
                (false, false) => ev(EdgeRole::CeilingLeft, s),
            }
        }
        _ => {
            let r = line_ray_ratios(view, line, 0, 1)?;
            if view.ray(&line.p0).y <= 0.0 {
                return None;
            }
            if r < 0.0 {
                ev(EdgeRole::CornerLeft, r)
            } else {
                ev(EdgeRole::CornerRight, r)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Group {
    value: f64,
    weight: f64,
    lines: Vec<RoleLine>,
}

/// Merges values within a relative tolerance, keeping the heaviest groups.
fn group_values(items: &[(f64, f64, RoleLine)], keep: usize) -> Vec<Group> {
    let mut sorted: Vec<&(f64, f64, RoleLine)> = items.iter().filter(|i| i.0.is_finite()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<Group> = Vec::new();
    for (v, w, l) in sorted {
        match groups.last_mut() {
            Some(g) if (v - g.value).abs() <= GROUP_TOLERANCE * g.value.abs().max(v.abs()) => {
                g.value = (g.value * g.weight + v * w) / (g.weight + w);
                g.weight += w;
                g.lines.push(*l);
            }
            _ => groups.push(Group { value: *v, weight: *w, lines: vec![*l] }),
        }
    }
    groups.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.value.total_cmp(&b.value)));
    groups.truncate(keep);
    groups
}

/// Lines through junctions of segments from two clusters towards the third
/// vanishing point.
fn inferred_lines(clusters: &[Vec<LineSeg2>; 3], vps: &[HPoint2; 3], dims: ImageDims) -> Vec<(usize, LineSeg2, f64)> {
    let mut out = Vec::new();
    let reach = 8.0;
    for (a, b, third) in [(0usize, 1usize, 2usize), (0, 2, 1), (1, 2, 0)] {
        for la in &clusters[a] {
            for lb in &clusters[b] {
                let Some(p) = crate::geom::intersect(&la.line, &lb.line) else {
                    continue;
                };
                if !dims.contains(&p, 0.0) || seg_distance(la, &p) > reach || seg_distance(lb, &p) > reach {
                    continue;
                }
                let dir = vps[third].direction_from(&p);
                let n = dir.norm();
                if !(n > 0.0) {
                    continue;
                }
                let q = p + dir / n * 50.0;
                if let Ok(seg) = crate::geom::line_through(p, q) {
                    out.push((third, seg, 0.25 * la.length.min(lb.length)));
                }
            }
        }
    }
    out
}

fn seg_distance(l: &LineSeg2, p: &Pixel) -> f64 {
    let d = l.q0 - l.p0;
    let t = ((p - l.p0).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (l.p0 + d * t - p).norm()
}

/// Enumerates layout proposals from the three calibrated clusters.
///
/// Returns them sorted best first (score, then label signature).
pub fn generate_proposals(
    clusters: &[VpCluster; 3],
    cam: &CameraModel,
    edges: &EdgeMap,
    max_proposals: usize,
) -> Result<Vec<LayoutProposal>, LayoutError> {
    let dims = edges.dims();
    let view = UnitView::new(cam, dims);
    let kept: [Vec<LineSeg2>; 3] =
        std::array::from_fn(|i| clusters[i].members.iter().filter(|l| on_edge_map(l, edges)).copied().collect());
    if kept.iter().map(Vec::len).sum::<usize>() < 2 {
        return Err(LayoutError::NoProposal);
    }
    let vps = [clusters[0].vp, clusters[1].vp, clusters[2].vp];
    let mut evidence: Vec<Evidence> = Vec::new();
    for (axis, lines) in kept.iter().enumerate() {
        evidence.extend(lines.iter().filter_map(|l| classify(&view, l, axis, false, l.length)));
    }
    for (axis, l, w) in inferred_lines(&kept, &vps, dims) {
        evidence.extend(classify(&view, &l, axis, true, w));
    }

    let pick = |role: EdgeRole| -> Vec<(f64, f64, RoleLine)> {
        evidence.iter().filter(|e| e.role == role).map(|e| (e.ratio, e.weight, e.line)).collect()
    };
    let mut floors: Vec<Group> = group_values(
        &pick(EdgeRole::FloorFront).into_iter().map(|(q, w, l)| (-1.0 / q, w, l)).collect::<Vec<_>>(),
        CANDIDATES_PER_ROLE,
    );
    // With the floor-front edge hidden, a side floor line (x0 = -s) and the
    // same side's corner (r = x0 / y1) still fix the depth.
    for (floor, corner) in [(EdgeRole::FloorLeft, EdgeRole::CornerLeft), (EdgeRole::FloorRight, EdgeRole::CornerRight)]
    {
        let xs = group_values(&pick(floor).into_iter().map(|(s, w, l)| (-s, w, l)).collect::<Vec<_>>(), 2);
        let rs = group_values(&pick(corner), 2);
        for x in &xs {
            for r in &rs {
                let y1 = x.value / r.value;
                if y1 > 0.0 && y1.is_finite() {
                    let mut lines = x.lines.clone();
                    lines.extend(r.lines.iter().copied());
                    floors.push(Group { value: y1, weight: 0.5 * x.weight.min(r.weight), lines });
                }
            }
        }
    }
    if floors.is_empty() {
        return Err(LayoutError::NoProposal);
    }
    let ceil_q = group_values(&pick(EdgeRole::CeilingFront), CANDIDATES_PER_ROLE);

    let mut boxes: Vec<(UnitBox, Vec<RoleLine>)> = Vec::new();
    for fl in &floors {
        let y1 = fl.value;
        let ceilings: Vec<(f64, Vec<RoleLine>)> = if ceil_q.is_empty() {
            // No ceiling evidence: put the ceiling where a 3 m room with a
            // 1.5 m camera would have it.
            vec![(1.0, Vec::new())]
        } else {
            ceil_q.iter().map(|g| (g.value * y1, g.lines.clone())).collect()
        };
        for (c, c_lines) in &ceilings {
            let side = |corner: EdgeRole, floor: EdgeRole, ceiling: EdgeRole| -> Vec<Group> {
                let mut items: Vec<(f64, f64, RoleLine)> =
                    pick(corner).into_iter().map(|(r, w, l)| (r * y1, w, l)).collect();
                items.extend(pick(floor).into_iter().map(|(s, w, l)| (-s, w, l)));
                items.extend(pick(ceiling).into_iter().map(|(s, w, l)| (s * c, w, l)));
                group_values(&items, CANDIDATES_PER_ROLE)
            };
            let lefts = side(EdgeRole::CornerLeft, EdgeRole::FloorLeft, EdgeRole::CeilingLeft);
            let rights = side(EdgeRole::CornerRight, EdgeRole::FloorRight, EdgeRole::CeilingRight);
            let lefts: Vec<Option<&Group>> = lefts.iter().filter(|g| g.value < 0.0).map(Some).chain([None]).collect();
            let rights: Vec<Option<&Group>> = rights.iter().filter(|g| g.value > 0.0).map(Some).chain([None]).collect();
            for l in &lefts {
                for r in &rights {
                    let b = UnitBox {
                        y1,
                        c: *c,
                        x0: l.map_or(-OPEN_WALL * y1, |g| g.value),
                        x1: r.map_or(OPEN_WALL * y1, |g| g.value),
                        left_open: l.is_none(),
                        right_open: r.is_none(),
                    };
                    if !(b.c > 0.0 && b.y1 > 0.0) {
                        continue;
                    }
                    let mut lines = fl.lines.clone();
                    lines.extend(c_lines.iter().copied());
                    lines.extend(l.iter().flat_map(|g| g.lines.iter().copied()));
                    lines.extend(r.iter().flat_map(|g| g.lines.iter().copied()));
                    boxes.push((b, lines));
                }
            }
        }
    }

    let mut proposals: Vec<(Vec<u8>, LayoutProposal)> = boxes
        .into_par_iter()
        .map(|(b, lines)| {
            let mut p = build_proposal(&view, b, lines);
            let (score, raw) = band_score(&p.boundaries, edges);
            p.score = score;
            p.raw_score = raw;
            (label_signature(&view, &b), p)
        })
        .collect();
    proposals.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (sig, p) in proposals {
        if seen.insert(sig) {
            out.push(p);
            if out.len() == max_proposals {
                break;
            }
        }
    }
    Ok(out)
}

fn label_signature(view: &UnitView, b: &UnitBox) -> Vec<u8> {
    let step = 4;
    let mut sig = Vec::new();
    for y in (0..view.dims.height).step_by(step) {
        for x in (0..view.dims.width).step_by(step) {
            sig.push(b.region_of_ray(&view.ray(&Pixel::new(x as f64, y as f64))) as u8);
        }
    }
    sig
}

/// Per-pixel region labels of a unit box seen by `cam`.
pub fn label_map(cam: &CameraModel, dims: ImageDims, b: &UnitBox) -> Vec<Region> {
    let view = UnitView::new(cam, dims);
    let mut out = Vec::with_capacity(dims.pixel_count());
    for y in 0..dims.height {
        for x in 0..dims.width {
            out.push(b.region_of_ray(&view.ray(&Pixel::new(x as f64, y as f64))));
        }
    }
    out
}

fn box_faces(b: &UnitBox) -> [(Region, [Point3; 4]); 6] {
    let (lo, hi) = b.lo_hi();
    let p = |x: f64, y: f64, z: f64| Point3::new(x, y, z);
    [
        (Region::Floor, [p(lo.x, lo.y, lo.z), p(hi.x, lo.y, lo.z), p(hi.x, hi.y, lo.z), p(lo.x, hi.y, lo.z)]),
        (Region::Ceiling, [p(lo.x, lo.y, hi.z), p(lo.x, hi.y, hi.z), p(hi.x, hi.y, hi.z), p(hi.x, lo.y, hi.z)]),
        (Region::FrontWall, [p(lo.x, hi.y, lo.z), p(hi.x, hi.y, lo.z), p(hi.x, hi.y, hi.z), p(lo.x, hi.y, hi.z)]),
        (Region::LeftWall, [p(lo.x, lo.y, lo.z), p(lo.x, hi.y, lo.z), p(lo.x, hi.y, hi.z), p(lo.x, lo.y, hi.z)]),
        (Region::RightWall, [p(hi.x, lo.y, lo.z), p(hi.x, lo.y, hi.z), p(hi.x, hi.y, hi.z), p(hi.x, hi.y, lo.z)]),
        (Region::BackWall, [p(lo.x, lo.y, lo.z), p(lo.x, lo.y, hi.z), p(hi.x, lo.y, hi.z), p(hi.x, lo.y, lo.z)]),
    ]
}

fn box_edges(b: &UnitBox) -> Vec<(Point3, Point3)> {
    let (lo, hi) = b.lo_hi();
    let p = |x: f64, y: f64, z: f64| Point3::new(x, y, z);
    let mut e = vec![
        (p(lo.x, hi.y, lo.z), p(hi.x, hi.y, lo.z)),
        (p(lo.x, hi.y, hi.z), p(hi.x, hi.y, hi.z)),
        (p(lo.x, lo.y, lo.z), p(lo.x, hi.y, lo.z)),
        (p(lo.x, lo.y, hi.z), p(lo.x, hi.y, hi.z)),
        (p(hi.x, lo.y, lo.z), p(hi.x, hi.y, lo.z)),
        (p(hi.x, lo.y, hi.z), p(hi.x, hi.y, hi.z)),
        (p(lo.x, hi.y, lo.z), p(lo.x, hi.y, hi.z)),
        (p(hi.x, hi.y, lo.z), p(hi.x, hi.y, hi.z)),
    ];
    e.retain(|(a, c)| (a - c).norm() > 0.0);
    e
}

fn build_proposal(view: &UnitView, b: UnitBox, generating_lines: Vec<RoleLine>) -> LayoutProposal {
    let rect = image_rect(view.dims);
    let polygons = box_faces(&b)
        .iter()
        .filter_map(|(region, quad)| {
            let cam_pts: Vec<Vector3<f64>> = quad.iter().map(|q| view.to_camera(q)).collect();
            let near = clip_near(&cam_pts);
            if near.len() < 3 {
                return None;
            }
            let img: Vec<Pixel> = near.iter().map(|pc| view.project_camera(pc)).collect();
            let clipped = clip_polygon(&img, &rect);
            (clipped.len() >= 3 && polygon_area(&clipped) > 1e-9)
                .then(|| RegionPolygon { region: *region, vertices: clipped })
        })
        .collect();
    let boundaries = box_edges(&b)
        .iter()
        .filter_map(|(a, c)| {
            let (pa, pc) = clip_segment_near(view.to_camera(a), view.to_camera(c))?;
            clip_segment_rect(view.project_camera(&pa), view.project_camera(&pc), &rect)
        })
        .collect();
    LayoutProposal { unit_box: b, polygons, boundaries, generating_lines, score: 0.0, raw_score: 0.0 }
}

fn image_rect(d: ImageDims) -> [Pixel; 4] {
    let (w, h) = (d.width as f64 - 0.5, d.height as f64 - 0.5);
    [Pixel::new(-0.5, -0.5), Pixel::new(w, -0.5), Pixel::new(w, h), Pixel::new(-0.5, h)]
}

fn clip_near(poly: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (da, db) = (a.z - NEAR_DEPTH, b.z - NEAR_DEPTH);
        if da >= 0.0 {
            out.push(a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            out.push(a + (b - a) * (da / (da - db)));
        }
    }
    out
}

fn clip_segment_near(a: Vector3<f64>, b: Vector3<f64>) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let (da, db) = (a.z - NEAR_DEPTH, b.z - NEAR_DEPTH);
    match (da >= 0.0, db >= 0.0) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (true, false) => Some((a, a + (b - a) * (da / (da - db)))),
        (false, true) => Some((a + (b - a) * (da / (da - db)), b)),
    }
}

/// Sutherland-Hodgman clip against a convex counter-clockwise (y-down:
/// clockwise on screen) rectangle.
pub fn clip_polygon(poly: &[Pixel], rect: &[Pixel; 4]) -> Vec<Pixel> {
    let mut out: Vec<Pixel> = poly.to_vec();
    for i in 0..4 {
        let (a, b) = (rect[i], rect[(i + 1) % 4]);
        let inside = |p: &Pixel| (b - a).perp(&(p - a)) >= 0.0;
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let (pi, qi) = (inside(&p), inside(&q));
            if pi {
                out.push(p);
            }
            if pi != qi {
                let dp = (b - a).perp(&(p - a));
                let dq = (b - a).perp(&(q - a));
                out.push(p + (q - p) * (dp / (dp - dq)));
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

fn clip_segment_rect(mut a: Pixel, mut b: Pixel, rect: &[Pixel; 4]) -> Option<(Pixel, Pixel)> {
    for i in 0..4 {
        let (r0, r1) = (rect[i], rect[(i + 1) % 4]);
        let da = (r1 - r0).perp(&(a - r0));
        let db = (r1 - r0).perp(&(b - r0));
        match (da >= 0.0, db >= 0.0) {
            (true, true) => {}
            (false, false) => return None,
            (true, false) => b = a + (b - a) * (da / (da - db)),
            (false, true) => a = a + (b - a) * (da / (da - db)),
        }
    }
    ((b - a).norm() > 1e-9).then_some((a, b))
}

pub fn polygon_area(poly: &[Pixel]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].perp(&poly[(i + 1) % n])).sum::<f64>().abs() * 0.5
}

/// Pixels within [`BAND_HALF_WIDTH`] of any boundary segment, each once.
pub fn band_pixels(boundaries: &[(Pixel, Pixel)], dims: ImageDims) -> Vec<(usize, usize)> {
    let mut seen = vec![false; dims.pixel_count()];
    let mut out = Vec::new();
    for (a, b) in boundaries {
        let lo_x = (a.x.min(b.x) - BAND_HALF_WIDTH).floor().max(0.0) as usize;
        let hi_x = ((a.x.max(b.x) + BAND_HALF_WIDTH).ceil().max(0.0) as usize).min(dims.width.saturating_sub(1));
        let lo_y = (a.y.min(b.y) - BAND_HALF_WIDTH).floor().max(0.0) as usize;
        let hi_y = ((a.y.max(b.y) + BAND_HALF_WIDTH).ceil().max(0.0) as usize).min(dims.height.saturating_sub(1));
        let d = b - a;
        let len2 = d.norm_squared();
        let horizontal = d.x.abs() >= d.y.abs();
        // Walk the major axis and only test a narrow window on the minor one.
        if horizontal {
            for x in lo_x..=hi_x {
                let yc = if d.x.abs() > 1e-12 { a.y + (x as f64 - a.x) * d.y / d.x } else { a.y };
                let span = BAND_HALF_WIDTH * (1.0 + (d.y / d.x.max(1e-12)).abs()) + 1.0;
                let y0 = ((yc - span).floor().max(lo_y as f64)) as usize;
                let y1 = ((yc + span).ceil().min(hi_y as f64).max(0.0)) as usize;
                for y in y0..=y1.max(y0) {
                    visit(x, y, a, &d, len2, dims, &mut seen, &mut out);
                }
            }
        } else {
            for y in lo_y..=hi_y {
                let xc = if d.y.abs() > 1e-12 { a.x + (y as f64 - a.y) * d.x / d.y } else { a.x };
                let span = BAND_HALF_WIDTH * (1.0 + (d.x / d.y.abs().max(1e-12)).abs()) + 1.0;
                let x0 = ((xc - span).floor().max(lo_x as f64)) as usize;
                let x1 = ((xc + span).ceil().min(hi_x as f64).max(0.0)) as usize;
                for x in x0..=x1.max(x0) {
                    visit(x, y, a, &d, len2, dims, &mut seen, &mut out);
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn visit(
    x: usize,
    y: usize,
    a: &Pixel,
    d: &Pixel,
    len2: f64,
    dims: ImageDims,
    seen: &mut [bool],
    out: &mut Vec<(usize, usize)>,
) {
    if x >= dims.width || y >= dims.height {
        return;
    }
    let idx = y * dims.width + x;
    if seen[idx] {
        return;
    }
    let p = Pixel::new(x as f64, y as f64);
    let t = if len2 > 0.0 { ((p - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    if (a + d * t - p).norm() <= BAND_HALF_WIDTH {
        seen[idx] = true;
        out.push((x, y));
    }
}

/// `(normalized, raw)` edge support of a set of boundary segments.
fn band_score(boundaries: &[(Pixel, Pixel)], edges: &EdgeMap) -> (f64, f64) {
    let band = band_pixels(boundaries, edges.dims());
    let raw: f64 = band.iter().map(|&(x, y)| edges.get(x, y)).sum();
    let norm = if band.is_empty() { 0.0 } else { raw / band.len() as f64 };
    (norm, raw)
}

/// Mean edge intensity over the boundary band; the unnormalized sum is
/// stored back in `raw_score`.
pub fn score_proposal(p: &mut LayoutProposal, edges: &EdgeMap, dims: ImageDims) -> Result<f64, LayoutError> {
    if edges.dims() != dims {
        return Err(LayoutError::DimensionMismatch {
            expected: (dims.width, dims.height),
            got: (edges.width, edges.height),
        });
    }
    let (s, raw) = band_score(&p.boundaries, edges);
    p.score = s;
    p.raw_score = raw;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomLayout {
    /// Front-left floor corner, room frame (meters).
    pub corner: Point3,
    /// `(W, D, H)`: extents along room x, y and z.
    pub sizes: Vector3<f64>,
    /// Camera heading relative to the room's forward axis, radians.
    pub yaw: f64,
    /// Depth is measured from the camera to the front wall only.
    pub depth_lower_bound: bool,
    pub left_open: bool,
    pub right_open: bool,
}

impl RoomLayout {
    pub fn from_bounds(lo: Point3, hi: Point3, yaw: f64) -> Self {
        Self {
            corner: Point3::new(lo.x, hi.y, lo.z),
            sizes: hi - lo,
            yaw,
            depth_lower_bound: false,
            left_open: false,
            right_open: false,
        }
    }

    pub fn lo(&self) -> Point3 {
        Point3::new(self.corner.x, self.corner.y - self.sizes.y, self.corner.z)
    }

    pub fn hi(&self) -> Point3 {
        Point3::new(self.corner.x + self.sizes.x, self.corner.y, self.corner.z + self.sizes.z)
    }

    pub fn volume(&self) -> f64 {
        self.sizes.x * self.sizes.y * self.sizes.z
    }

    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let (lo, hi) = (self.lo(), self.hi());
        (0..3).all(|i| p[i] >= lo[i] - tol && p[i] <= hi[i] + tol)
    }

    pub fn clamp(&self, p: &Point3) -> Point3 {
        let (lo, hi) = (self.lo(), self.hi());
        Point3::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y), p.z.clamp(lo.z, hi.z))
    }

    /// The 8 corners, bottom face first.
    pub fn corners(&self) -> [Point3; 8] {
        let (lo, hi) = (self.lo(), self.hi());
        std::array::from_fn(|i| {
            Point3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidFit {
    pub layout: RoomLayout,
    pub camera_height: f64,
    /// Mean distance of generating-line endpoints to the fitted edges, pixels.
    pub residual_px: f64,
    pub unit_box: UnitBox,
}

fn edge_residuals(view: &UnitView, b: &UnitBox, lines: &[RoleLine], out: &mut Vec<f64>) {
    out.clear();
    for rl in lines {
        let l = view.image_line(&b.edge_plane(rl.role));
        let n = (l.x * l.x + l.y * l.y).sqrt();
        for p in [rl.line.p0, rl.line.q0] {
            out.push((l.x * p.x + l.y * p.y + l.z) / n);
        }
    }
}

/// A floor-wall junction that pins the front wall: the floor-front edge, or
/// a side floor edge together with that side's corner.
fn fixes_depth(lines: &[RoleLine]) -> bool {
    let has = |r: EdgeRole| lines.iter().any(|l| l.role == r);
    has(EdgeRole::FloorFront)
        || (has(EdgeRole::FloorLeft) && has(EdgeRole::CornerLeft))
        || (has(EdgeRole::FloorRight) && has(EdgeRole::CornerRight))
}

/// Fits the metric room cuboid to a proposal.
///
/// The proposal fixes the box up to scale; `room_height` sets the scale and
/// with it the camera height. The four unit-box parameters are then refined
/// by Gauss-Newton on the distances of the generating lines' endpoints to
/// their box edges.
pub fn fit_cuboid(
    best: &LayoutProposal,
    cam: &CameraModel,
    dims: ImageDims,
    room_height: f64,
) -> Result<CuboidFit, LayoutError> {
    let observed: Vec<RoleLine> = {
        let real: Vec<RoleLine> = best.generating_lines.iter().filter(|l| !l.inferred).copied().collect();
        if fixes_depth(&real) {
            real
        } else {
            best.generating_lines.clone()
        }
    };
    if !fixes_depth(&observed) {
        return Err(LayoutError::UnderConstrained);
    }
    let view = UnitView::new(cam, dims);
    let mut b = best.unit_box;
    let lines: Vec<RoleLine> = observed
        .into_iter()
        .filter(|l| {
            !(b.left_open && matches!(l.role, EdgeRole::CornerLeft | EdgeRole::FloorLeft | EdgeRole::CeilingLeft))
                && !(b.right_open
                    && matches!(l.role, EdgeRole::CornerRight | EdgeRole::FloorRight | EdgeRole::CeilingRight))
        })
        .collect();
    let mut r = Vec::new();
    let mut r_step = Vec::new();
    edge_residuals(&view, &b, &lines, &mut r);
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut current = cost(&r);
    let get = |b: &UnitBox, i: usize| [b.y1, b.c, b.x0, b.x1][i];
    let set = |b: &mut UnitBox, i: usize, v: f64| match i {
        0 => b.y1 = v,
        1 => b.c = v,
        2 => b.x0 = v,
        _ => b.x1 = v,
    };
    let free: Vec<usize> = (0..4).filter(|&i| !(i == 2 && b.left_open) && !(i == 3 && b.right_open)).collect();
    for _ in 0..20 {
        if r.is_empty() {
            break;
        }
        let mut jt_j = Matrix4::<f64>::zeros();
        let mut jt_r = Vector4::<f64>::zeros();
        let mut cols = vec![vec![0.0; r.len()]; 4];
        for &i in &free {
            let h = 1e-7 * get(&b, i).abs().max(1.0);
            let mut bp = b;
            set(&mut bp, i, get(&b, i) + h);
            edge_residuals(&view, &bp, &lines, &mut r_step);
            cols[i] = r_step.iter().zip(&r).map(|(a, c)| (a - c) / h).collect();
        }
        for &i in &free {
            jt_r[i] = cols[i].iter().zip(&r).map(|(a, c)| a * c).sum();
            for &j in &free {
                jt_j[(i, j)] = cols[i].iter().zip(&cols[j]).map(|(a, c)| a * c).sum();
            }
        }
        for i in 0..4 {
            if !free.contains(&i) {
                jt_j[(i, i)] = 1.0;
            }
            jt_j[(i, i)] *= 1.0 + 1e-9;
        }
        let Some(step) = jt_j.lu().solve(&(-jt_r)) else { break };
        let mut cand = b;
        for &i in &free {
            set(&mut cand, i, get(&b, i) + step[i]);
        }
        if !(cand.y1 > 0.0 && cand.c > 0.0 && cand.x0 < 0.0 && cand.x1 > 0.0) {
            break;
        }
        edge_residuals(&view, &cand, &lines, &mut r_step);
        let c = cost(&r_step);
        if !(c < current) {
            break;
        }
        let gain = current - c;
        b = cand;
        std::mem::swap(&mut r, &mut r_step);
        current = c;
        if gain < 1e-18 {
            break;
        }
    }
    if b.left_open {
        b.x0 = visible_extent(&view, &b, -1.0);
    }
    if b.right_open {
        b.x1 = visible_extent(&view, &b, 1.0);
    }
    let scale = room_height / (1.0 + b.c);
    let lo = Point3::new(b.x0 * scale, 0.0, 0.0);
    let hi = Point3::new(b.x1 * scale, b.y1 * scale, room_height);
    let mut layout = RoomLayout::from_bounds(lo, hi, cam.heading());
    layout.depth_lower_bound = true;
    layout.left_open = b.left_open;
    layout.right_open = b.right_open;
    let residual_px = if r.is_empty() { 0.0 } else { r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64 };
    Ok(CuboidFit { layout, camera_height: scale, residual_px, unit_box: b })
}

/// Farthest side coordinate seen on the front wall or the floor, used to
/// bound a side wall that is out of view.
fn visible_extent(view: &UnitView, b: &UnitBox, side: f64) -> f64 {
    let (w, h) = (view.dims.width as f64 - 1.0, view.dims.height as f64 - 1.0);
    let mut best = 0.0f64;
    let n = 64;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        for p in [Pixel::new(0.0, t * h), Pixel::new(w, t * h), Pixel::new(t * w, 0.0), Pixel::new(t * w, h)] {
            let d = view.ray(&p);
            let mut hit = f64::INFINITY;
            if d.y > 0.0 {
                hit = hit.min(b.y1 / d.y);
            }
            if d.z < 0.0 {
                hit = hit.min(-1.0 / d.z);
            } else if d.z > 0.0 {
                hit = hit.min(b.c / d.z);
            }
            if hit.is_finite() {
                let x = d.x * hit;
                if x * side > best * side {
                    best = x;
                }
            }
        }
    }
    best
}

/// Volume IoU of two axis-aligned boxes.
pub fn box_iou(a_lo: &Point3, a_hi: &Point3, b_lo: &Point3, b_hi: &Point3) -> f64 {
    let inter: f64 = (0..3).map(|i| (a_hi[i].min(b_hi[i]) - a_lo[i].max(b_lo[i])).max(0.0)).product();
    let va: f64 = (0..3).map(|i| (a_hi[i] - a_lo[i]).max(0.0)).product();
    let vb: f64 = (0..3).map(|i| (b_hi[i] - b_lo[i]).max(0.0)).product();
    let union = va + vb - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

pub fn layout_iou(a: &RoomLayout, b: &RoomLayout) -> f64 {
    box_iou(&a.lo(), &a.hi(), &b.lo(), &b.hi())
}

/// Unit box of a metric room seen from a camera at `camera_height`.
pub fn unit_box_of(layout: &RoomLayout, camera_height: f64) -> UnitBox {
    let (lo, hi) = (layout.lo(), layout.hi());
    UnitBox {
        y1: hi.y / camera_height,
        c: (hi.z - camera_height) / camera_height,
        x0: lo.x / camera_height,
        x1: hi.x / camera_height,
        left_open: false,
        right_open: false,
    }
}

/// Fraction of pixels on which two label maps agree.
pub fn label_agreement(a: &[Region], b: &[Region]) -> f64 {
    if a.is_empty() || a.len() != b.len() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}
