use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{CameraModel, Mask, Point3};
use crate::layout::RoomLayout;
use crate::priors::SupportType;
use crate::support::{SupportGraph, SupportParent};

use super::constraints::SupportConstraint;
use super::optimize::{CoordinateSearch, LocalOptimizer, TrustRegionQuadratic};
use super::raster::IouTarget;
use super::{
    mask_bottom_center, mask_top_center, scale_bounds, ModelEntry, PlacedObject, PlacementError, SupportSurfaceFrame,
    DEFAULT_ITERATIONS, DEFAULT_ORIENTATIONS, POSITION_SLACK,
};

/// Everything the refinement needs to know about one detected object.
#[derive(Debug, Clone)]
pub struct PlacementInput {
    pub instance: u8,
    pub category: u8,
    pub mask: Mask,
    /// Metric height from metrology.
    pub height: f64,
    /// Altitude of the object's top.
    pub top_altitude: f64,
    /// Retrieved models, best first.
    pub candidates: Vec<u32>,
    /// Candidate yaws; `None` means a uniform grid.
    pub orientations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    TrustRegion,
    CoordinateSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub iterations: usize,
    /// Size of the uniform yaw grid.
    pub orientations: usize,
    pub optimizer: OptimizerKind,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            orientations: DEFAULT_ORIENTATIONS,
            optimizer: OptimizerKind::TrustRegion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRefinement {
    pub pose: PlacedObject,
    pub category: u8,
    /// Index into the yaw grid, or the parent side for behind supports.
    pub orientation_index: usize,
    pub constraint: SupportConstraint,
    pub initial_iou: f64,
    pub iou: f64,
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub evaluations: usize,
    /// The back-projected start fell outside the room.
    pub init_clamped: bool,
    /// No grid cell could be rendered; the pose is the unrefined start.
    pub infeasible_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRefinement {
    /// In input order.
    pub objects: Vec<ObjectRefinement>,
    /// Unweighted mean of the per-object traces.
    pub mean_trace: Vec<f64>,
}

/// One discrete choice of the grid.
#[derive(Debug, Clone, Copy)]
struct Cell {
    model_id: u32,
    orientation_index: usize,
    theta: f64,
    constraint: SupportConstraint,
}

/// Maps the unit box to `(s1, s2, s3, p1, p2, p3)`.
#[derive(Debug, Clone, Copy)]
struct Coding {
    s_lo: [f64; 3],
    s_hi: [f64; 3],
    p0: Point3,
}

impl Coding {
    fn decode(&self, base: &PlacedObject, x: &[f64]) -> PlacedObject {
        let mut p = *base;
        for i in 0..3 {
            p.scale[i] = self.s_lo[i] + x[i] * (self.s_hi[i] - self.s_lo[i]);
            p.position[i] = self.p0[i] + (2.0 * x[3 + i] - 1.0) * POSITION_SLACK[i];
        }
        p
    }

    fn encode(&self, pose: &PlacedObject) -> Vec<f64> {
        let mut x = vec![0.0; 6];
        for i in 0..3 {
            x[i] = (pose.scale[i] - self.s_lo[i]) / (self.s_hi[i] - self.s_lo[i]);
            x[3 + i] = ((pose.position[i] - self.p0[i]) / POSITION_SLACK[i] + 1.0) * 0.5;
        }
        x
    }
}

fn yaw_grid(input: &PlacementInput, n: usize) -> Vec<f64> {
    match &input.orientations {
        Some(v) if !v.is_empty() => v.clone(),
        _ => (0..n.max(1)).map(|k| k as f64 * TAU / n.max(1) as f64).collect(),
    }
}

/// Start pose for a cell: back-project the mask's bottom-center pixel onto
/// the support, then move the center away from the camera by half the
/// object's depth along the viewing direction.
///
/// With `from_top` the mask's top-center pixel is used instead, on the
/// plane of the object's top. Below the camera that row is the far top
/// edge, so the center moves back towards the camera.
fn initial_pose(
    input: &PlacementInput,
    model: &ModelEntry,
    cell: &Cell,
    cam: &CameraModel,
    layout: &RoomLayout,
    from_top: bool,
) -> (PlacedObject, bool) {
    let mut pose = PlacedObject {
        instance: input.instance,
        model_id: model.model_id,
        theta: cell.theta,
        scale: Vector3::repeat(1.0),
        base_scale: input.height / model.height().max(1e-12),
        position: Point3::zeros(),
    };
    let c0 = pose.center(model);
    let bottom = pose.aabb(model).0.z;
    let height = pose.aabb(model).1.z - bottom;
    let cam_c = cam.position();
    let anchor = if from_top { mask_top_center(&input.mask) } else { mask_bottom_center(&input.mask) };
    let Some(px) = anchor else {
        return (cell.constraint.project(&pose, model), true);
    };
    let ray = cam.pixel_ray(&px);
    let horiz = Vector3::new(ray.x, ray.y, 0.0).try_normalize(1e-12).unwrap_or(Vector3::y());
    let hit_plane = |z: f64| -> Option<Point3> {
        let t = (z - cam_c.z) / ray.z;
        (ray.z.abs() > 1e-12 && t > 0.0).then(|| cam_c + ray * t)
    };
    let bottom_z = match cell.constraint {
        SupportConstraint::Below { hi, .. } => hi.z,
        SupportConstraint::Ceiling { hi, .. } => hi.z - height,
        SupportConstraint::Behind(_) => input.top_altitude - input.height,
    };
    let target = match cell.constraint {
        SupportConstraint::Behind(f) => {
            let half = 0.5 * pose.range_along(model, &f.normal);
            let denom = ray.dot(&f.normal);
            let t = (f.origin + f.normal * half - cam_c).dot(&f.normal) / denom;
            let hit = if denom.abs() > 1e-12 && t > 0.0 { Some(cam_c + ray * t) } else { hit_plane(bottom_z) };
            hit.map(|h| Point3::new(h.x, h.y, bottom_z + (c0.z - bottom)))
        }
        _ if from_top => hit_plane(bottom_z + height).map(|h| {
            let half = 0.5 * pose.range_along(model, &horiz);
            let c = if bottom_z + height < cam_c.z { h - horiz * half } else { h + horiz * half };
            Point3::new(c.x, c.y, bottom_z + (c0.z - bottom))
        }),
        _ => hit_plane(bottom_z).map(|h| {
            let half = 0.5 * pose.range_along(model, &horiz);
            let c = h + horiz * half;
            Point3::new(c.x, c.y, bottom_z + (c0.z - bottom))
        }),
    };
    let mut clamped = false;
    let target = match target {
        Some(t) if layout.contains(&t, 1e-9) => t,
        Some(t) => {
            clamped = true;
            layout.clamp(&t)
        }
        None => {
            clamped = true;
            layout.clamp(&(cam_c + horiz * layout.sizes.y))
        }
    };
    pose.position = target - c0;
    (cell.constraint.project(&pose, model), clamped)
}

/// Outcome of refining one start pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRefinement {
    pub pose: PlacedObject,
    pub initial_iou: f64,
    pub iou: f64,
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub evaluations: usize,
    /// The start pose projects in front of the camera.
    pub renderable: bool,
}

/// Local maximization of the silhouette IoU over scale and position from
/// `start`, keeping yaw and model fixed.
pub fn refine_pose(
    model: &ModelEntry,
    start: &PlacedObject,
    category: u8,
    constraint: &SupportConstraint,
    target: &IouTarget,
    cam: &CameraModel,
    config: &RefineConfig,
) -> PoseRefinement {
    let (s_lo, s_hi) = scale_bounds(category);
    let coding = Coding { s_lo, s_hi, p0: start.position };
    let feasible = |x: &[f64]| constraint.project(&coding.decode(start, x), model);
    let project = |x: &[f64]| coding.encode(&feasible(x));
    let objective = |x: &[f64]| target.iou(model, &coding.decode(start, x), cam).unwrap_or(0.0);
    let renderable = target.iou(model, start, cam).is_ok();
    let opt: &dyn LocalOptimizer = match config.optimizer {
        OptimizerKind::TrustRegion => &TrustRegionQuadratic::default(),
        OptimizerKind::CoordinateSearch => &CoordinateSearch::default(),
    };
    let x0: Vec<f64> = coding.encode(start).iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let out = opt.maximize(&objective, &project, &x0, config.iterations);
    PoseRefinement {
        pose: coding.decode(start, &out.x),
        initial_iou: out.trace[0],
        iou: out.value,
        trace: out.trace,
        accepted: out.accepted,
        evaluations: out.evaluations,
        renderable,
    }
}

struct CellResult {
    cell: Cell,
    run: PoseRefinement,
    clamped: bool,
}

fn run_cell(
    input: &PlacementInput,
    model: &ModelEntry,
    cell: Cell,
    target: &IouTarget,
    cam: &CameraModel,
    layout: &RoomLayout,
    config: &RefineConfig,
) -> CellResult {
    let (start, clamped) = initial_pose(input, model, &cell, cam, layout, false);
    let run = refine_pose(model, &start, input.category, &cell.constraint, target, cam, config);
    // the bottom of a floor object's mask is often hidden behind nearer
    // furniture, so also start from the top and keep the better end point
    let on_floor = matches!(cell.constraint, SupportConstraint::Below { lo, hi } if lo.z == hi.z);
    if !on_floor {
        return CellResult { cell, run, clamped };
    }
    let (alt_start, alt_clamped) = initial_pose(input, model, &cell, cam, layout, true);
    let alt = refine_pose(model, &alt_start, input.category, &cell.constraint, target, cam, config);
    if alt.renderable && (!run.renderable || alt.iou > run.iou) {
        CellResult { cell, run: alt, clamped: alt_clamped }
    } else {
        CellResult { cell, run, clamped }
    }
}

fn constraints_for(
    parent: Option<(SupportParent, SupportType)>,
    placed: &BTreeMap<u8, (Point3, Point3)>,
    layout: &RoomLayout,
) -> Vec<(usize, SupportConstraint)> {
    match parent {
        Some((SupportParent::Ceiling, _)) => vec![(0, SupportConstraint::Ceiling { lo: layout.lo(), hi: layout.hi() })],
        Some((SupportParent::Wall(side), _)) => {
            vec![(0, SupportConstraint::Behind(SupportSurfaceFrame::wall(layout, side)))]
        }
        Some((SupportParent::Object(j), t)) => match placed.get(&j) {
            Some((lo, hi)) if t == SupportType::Behind => SupportSurfaceFrame::box_sides(lo, hi)
                .into_iter()
                .enumerate()
                .map(|(k, f)| (k, SupportConstraint::Behind(f)))
                .collect(),
            Some((lo, hi)) => vec![(0, SupportConstraint::Below { lo: *lo, hi: *hi })],
            None => vec![(0, SupportConstraint::floor(layout))],
        },
        _ => vec![(0, SupportConstraint::floor(layout))],
    }
}

/// Grid search over (model, orientation) with local refinement of scale and
/// position in each cell. Objects are visited parents first; a child's
/// constraint uses its parent's refined box.
pub fn refine_scene(
    inputs: &[PlacementInput],
    models: &BTreeMap<u32, ModelEntry>,
    graph: &SupportGraph,
    cam: &CameraModel,
    layout: &RoomLayout,
    config: &RefineConfig,
) -> Result<SceneRefinement, PlacementError> {
    for input in inputs {
        if let Some(&id) = input.candidates.iter().find(|id| !models.contains_key(id)) {
            return Err(PlacementError::UnknownModel(id));
        }
    }
    let by_id: BTreeMap<u8, usize> = inputs.iter().enumerate().map(|(k, i)| (i.instance, k)).collect();
    let mut order: Vec<u8> =
        graph.topological_order().unwrap_or_default().into_iter().filter(|id| by_id.contains_key(id)).collect();
    for id in by_id.keys() {
        if !order.contains(id) {
            order.push(*id);
        }
    }

    let mut placed: BTreeMap<u8, (Point3, Point3)> = BTreeMap::new();
    let mut results: Vec<Option<ObjectRefinement>> = vec![None; inputs.len()];
    for id in order {
        let input = &inputs[by_id[&id]];
        let mut others = Mask::new(input.mask.width(), input.mask.height());
        for other in inputs.iter().filter(|o| o.instance != id) {
            others.union_with(&other.mask)?;
        }
        let target = IouTarget::new(&input.mask, &others);
        let parent = graph.parent(id).map(|e| (e.parent, e.support_type));
        let choices = constraints_for(parent, &placed, layout);
        let behind = matches!(choices[0].1, SupportConstraint::Behind(_));
        let mut cells = Vec::new();
        for &model_id in &input.candidates {
            if behind {
                for &(k, c) in &choices {
                    let SupportConstraint::Behind(f) = c else { unreachable!() };
                    cells.push(Cell { model_id, orientation_index: k, theta: f.facing_yaw(), constraint: c });
                }
            } else {
                for (k, theta) in yaw_grid(input, config.orientations).into_iter().enumerate() {
                    cells.push(Cell { model_id, orientation_index: k, theta, constraint: choices[0].1 });
                }
            }
        }
        if cells.is_empty() {
            continue;
        }
        let runs: Vec<CellResult> =
            cells.par_iter().map(|c| run_cell(input, &models[&c.model_id], *c, &target, cam, layout, config)).collect();
        let best = runs
            .into_iter()
            .reduce(|a, b| {
                let (ra, rb) = (&a.run, &b.run);
                let better = rb.renderable && !ra.renderable
                    || (rb.renderable == ra.renderable
                        && (rb.iou > ra.iou
                            || (rb.iou == ra.iou
                                && (b.cell.model_id, b.cell.orientation_index)
                                    < (a.cell.model_id, a.cell.orientation_index))));
                if better {
                    b
                } else {
                    a
                }
            })
            .expect("non-empty grid");
        let model = &models[&best.cell.model_id];
        placed.insert(id, best.run.pose.aabb(model));
        results[by_id[&id]] = Some(ObjectRefinement {
            pose: best.run.pose,
            category: input.category,
            orientation_index: best.cell.orientation_index,
            constraint: best.cell.constraint,
            initial_iou: best.run.initial_iou,
            iou: best.run.iou,
            trace: best.run.trace,
            accepted: best.run.accepted,
            evaluations: best.run.evaluations,
            init_clamped: best.clamped,
            infeasible_start: !best.run.renderable,
        });
    }
    let objects: Vec<ObjectRefinement> = results.into_iter().flatten().collect();
    let len = config.iterations + 1;
    let mean_trace = (0..len)
        .map(|k| {
            if objects.is_empty() {
                0.0
            } else {
                objects.iter().map(|o| o.trace[k]).sum::<f64>() / objects.len() as f64
            }
        })
        .collect();
    Ok(SceneRefinement { objects, mean_trace })
}
