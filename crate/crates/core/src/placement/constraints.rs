use serde::{Deserialize, Serialize};

use crate::geom::Point3;
use crate::layout::RoomLayout;

use super::{ModelEntry, PlacedObject, SupportSurfaceFrame};

pub const BELOW_TOLERANCE: f64 = 1e-9;
pub const BEHIND_TOLERANCE: f64 = 1e-6;

/// Supported-from-below test against the parent's bounding box: the child's
/// center lies over the parent footprint and its bottom is not below the
/// parent's top.
pub fn check_below(child: &PlacedObject, model: &ModelEntry, parent_lo: &Point3, parent_hi: &Point3) -> bool {
    let (lo, _) = child.aabb(model);
    let c = child.center(model);
    let t = BELOW_TOLERANCE;
    (0..2).all(|i| parent_lo[i] - t <= c[i] && c[i] <= parent_hi[i] + t) && lo.z >= parent_hi.z - t
}

/// The floor as a zero-thickness parent.
pub fn check_on_floor(child: &PlacedObject, model: &ModelEntry, layout: &RoomLayout) -> bool {
    let (lo, hi) = (layout.lo(), layout.hi());
    check_below(child, model, &Point3::new(lo.x, lo.y, 0.0), &Point3::new(hi.x, hi.y, 0.0))
}

/// Supported-from-behind test: the center projects inside the face and the
/// object touches the face, `2 (c - o)·n = range[(R S O)ᵀ n]`.
pub fn check_behind(child: &PlacedObject, model: &ModelEntry, frame: &SupportSurfaceFrame) -> bool {
    let d = child.center(model) - frame.origin;
    let t = BEHIND_TOLERANCE;
    let inside = [frame.e1, frame.e2].iter().all(|e| {
        let a = d.dot(e);
        a >= -t * e.norm() && a <= e.norm_squared() + t * e.norm()
    });
    let range = child.range_along(model, &frame.normal);
    inside && (2.0 * d.dot(&frame.normal) - range).abs() <= t
}

/// How an object is held in place, resolved to concrete geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SupportConstraint {
    /// Resting on top of a box (the floor is a box of zero height).
    Below { lo: Point3, hi: Point3 },
    /// Attached to a vertical face.
    Behind(SupportSurfaceFrame),
    /// Hanging with its top at the ceiling, center inside the room footprint.
    Ceiling { lo: Point3, hi: Point3 },
}

impl SupportConstraint {
    pub fn floor(layout: &RoomLayout) -> Self {
        let (lo, hi) = (layout.lo(), layout.hi());
        SupportConstraint::Below { lo: Point3::new(lo.x, lo.y, 0.0), hi: Point3::new(hi.x, hi.y, 0.0) }
    }

    pub fn satisfied(&self, pose: &PlacedObject, model: &ModelEntry) -> bool {
        match self {
            SupportConstraint::Below { lo, hi } => check_below(pose, model, lo, hi),
            SupportConstraint::Behind(f) => check_behind(pose, model, f),
            SupportConstraint::Ceiling { lo, hi } => {
                let (_, top) = pose.aabb(model);
                let c = pose.center(model);
                (0..2).all(|i| lo[i] - BELOW_TOLERANCE <= c[i] && c[i] <= hi[i] + BELOW_TOLERANCE)
                    && (top.z - hi.z).abs() <= BELOW_TOLERANCE
            }
        }
    }

    /// Nearest feasible pose obtained by translation only.
    pub fn project(&self, pose: &PlacedObject, model: &ModelEntry) -> PlacedObject {
        let mut out = *pose;
        let c = pose.center(model);
        match self {
            SupportConstraint::Below { lo, hi } => {
                let (blo, _) = pose.aabb(model);
                out.position.x += c.x.clamp(lo.x, hi.x) - c.x;
                out.position.y += c.y.clamp(lo.y, hi.y) - c.y;
                out.position.z += hi.z - blo.z;
            }
            SupportConstraint::Ceiling { lo, hi } => {
                let (_, top) = pose.aabb(model);
                out.position.x += c.x.clamp(lo.x, hi.x) - c.x;
                out.position.y += c.y.clamp(lo.y, hi.y) - c.y;
                out.position.z += hi.z - top.z;
            }
            SupportConstraint::Behind(f) => {
                let d = c - f.origin;
                let a1 = (d.dot(&f.e1) / f.e1.norm_squared()).clamp(0.0, 1.0);
                let a2 = (d.dot(&f.e2) / f.e2.norm_squared()).clamp(0.0, 1.0);
                let off = 0.5 * pose.range_along(model, &f.normal);
                let target = f.origin + f.e1 * a1 + f.e2 * a2 + f.normal * off;
                out.position += target - c;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::TriMesh;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose(theta: f64, s: Vector3<f64>, p: Point3) -> PlacedObject {
        PlacedObject { instance: 0, model_id: 0, theta, scale: s, base_scale: 1.0, position: p }
    }

    /// Surface samples: all vertices plus random barycentric points.
    fn samples(mesh: &TriMesh, rng: &mut ChaCha8Rng) -> Vec<Point3> {
        let mut out = mesh.vertices.clone();
        for t in &mesh.triangles {
            for _ in 0..20 {
                let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
                if u + v > 1.0 {
                    (u, v) = (1.0 - u, 1.0 - v);
                }
                let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
                out.push(a + (b - a) * u + (c - a) * v);
            }
        }
        out
    }

    fn below_oracle(child: &[Point3], center: &Point3, parent: &[Point3]) -> bool {
        let t = BELOW_TOLERANCE;
        let fold = |pts: &[Point3], i: usize| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[i]), b.max(p[i])))
        };
        let (px, py, pz) = (fold(parent, 0), fold(parent, 1), fold(parent, 2));
        px.0 - t <= center.x
            && center.x <= px.1 + t
            && py.0 - t <= center.y
            && center.y <= py.1 + t
            && fold(child, 2).0 >= pz.1 - t
    }

    fn behind_oracle(child: &[Point3], center: &Point3, f: &SupportSurfaceFrame) -> bool {
        let d = center - f.origin;
        let t = BEHIND_TOLERANCE;
        let proj: Vec<f64> = child.iter().map(|p| p.dot(&f.normal)).collect();
        let range =
            proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - proj.iter().cloned().fold(f64::INFINITY, f64::min);
        // Translation does not change the range, so sample the placed points.
        [f.e1, f.e2].iter().all(|e| d.dot(e) >= -t * e.norm() && d.dot(e) <= e.norm_squared() + t * e.norm())
            && (2.0 * d.dot(&f.normal) - range).abs() <= t
    }

    #[test]
    fn cube_atop_larger_cube() {
        let m = ModelEntry::new(0, TriMesh::cuboid(0.4, 0.4, 0.4));
        let (plo, phi) = (Point3::new(-1.0, 2.0, 0.0), Point3::new(1.0, 3.0, 0.8));
        let child = pose(0.3, Vector3::repeat(1.0), Point3::new(0.0, 2.5, 0.8));
        assert!(check_below(&child, &m, &plo, &phi));
        let off = pose(0.0, Vector3::repeat(1.0), Point3::new(1.001, 2.5, 0.8));
        assert!(!check_below(&off, &m, &plo, &phi));
        let sunk = pose(0.0, Vector3::repeat(1.0), Point3::new(0.0, 2.5, 0.79));
        assert!(!check_below(&sunk, &m, &plo, &phi));
    }

    #[test]
    fn picture_flush_on_wall() {
        let layout = RoomLayout::from_bounds(Point3::new(-2.0, 0.0, 0.0), Point3::new(2.0, 5.0, 3.0), 0.0);
        let f = SupportSurfaceFrame::wall(&layout, crate::support::WallSide::Front);
        let m = ModelEntry::new(0, TriMesh::cuboid(0.8, 0.03, 0.5));
        let flush = pose(f.facing_yaw(), Vector3::repeat(1.0), Point3::new(0.3, 5.0 - 0.015, 1.4));
        assert!(check_behind(&flush, &m, &f));
        let mut off = flush;
        off.position.y -= 0.01;
        assert!(!check_behind(&off, &m, &f));
        assert!(check_behind(&SupportConstraint::Behind(f).project(&off, &m), &m, &f));
    }

    #[test]
    fn projection_makes_ceiling_feasible() {
        let layout = RoomLayout::from_bounds(Point3::new(-2.0, 0.0, 0.0), Point3::new(2.0, 5.0, 3.0), 0.0);
        let c = SupportConstraint::Ceiling { lo: layout.lo(), hi: layout.hi() };
        let m = ModelEntry::new(0, TriMesh::cuboid(0.3, 0.3, 0.6));
        let p = c.project(&pose(0.0, Vector3::repeat(1.0), Point3::new(3.0, 1.0, 1.0)), &m);
        assert!(c.satisfied(&p, &m));
        assert!((p.position.z - 2.4).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn below_matches_sampling_oracle(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let parent_model = ModelEntry::new(1, TriMesh::cuboid(rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0), rng.gen_range(0.2..1.0)));
            let parent = pose(rng.gen_range(-3.0..3.0), Vector3::repeat(1.0), Point3::new(0.0, 3.0, 0.0));
            let child_model = ModelEntry::new(0, TriMesh::cuboid(rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6)));
            let (plo, phi) = parent.aabb(&parent_model);
            let z = phi.z + [0.0, 1e-3, -1e-3, 0.2][rng.gen_range(0..4)];
            let child = pose(
                rng.gen_range(-3.0..3.0),
                Vector3::new(rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2), rng.gen_range(0.9..1.1)),
                Point3::new(rng.gen_range(plo.x - 0.3..phi.x + 0.3), rng.gen_range(plo.y - 0.3..phi.y + 0.3), z),
            );
            let cs = samples(&child.transformed_mesh(&child_model), &mut rng);
            let ps = samples(&parent.transformed_mesh(&parent_model), &mut rng);
            prop_assert_eq!(check_below(&child, &child_model, &plo, &phi), below_oracle(&cs, &child.center(&child_model), &ps));
            let projected = SupportConstraint::Below { lo: plo, hi: phi }.project(&child, &child_model);
            prop_assert!(check_below(&projected, &child_model, &plo, &phi));
        }

        #[test]
        fn behind_matches_sampling_oracle(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lo = Point3::new(rng.gen_range(-1.0..0.0), rng.gen_range(1.0..2.0), 0.0);
            let hi = lo + Vector3::new(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
            let frame = SupportSurfaceFrame::box_sides(&lo, &hi)[rng.gen_range(0..4)];
            let model = ModelEntry::new(0, TriMesh::cuboid(rng.gen_range(0.1..0.6), rng.gen_range(0.02..0.4), rng.gen_range(0.1..0.6)));
            let theta = if rng.gen_bool(0.5) { frame.facing_yaw() } else { rng.gen_range(-3.0..3.0) };
            let mut child = pose(theta, Vector3::new(rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2), 1.0), Point3::new(lo.x, lo.y, 0.1));
            child = SupportConstraint::Behind(frame).project(&child, &model);
            let jitter = [0.0, 0.0, 1e-2, -1e-7][rng.gen_range(0..4)];
            child.position += frame.normal * jitter;
            let placed = samples(&child.transformed_mesh(&model), &mut rng);
            let c = child.center(&model);
            prop_assert_eq!(check_behind(&child, &model, &frame), behind_oracle(&placed, &c, &frame));
            prop_assert_eq!(check_behind(&child, &model, &frame), jitter.abs() < BEHIND_TOLERANCE / 2.0);
        }
    }
}
