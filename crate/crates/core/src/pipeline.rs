//! End-to-end run over a scene bundle: calibrate, layout, support, heights,
//! retrieval, initialization and refinement.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories;
use crate::geom::{CameraModel, Mask};
use crate::io::{ModelAsset, ResultObject, SceneBundle, SceneResult, StageTimings, SCHEMA_VERSION};
use crate::layout::{fit_cuboid, generate_proposals, label_map, Region, DEFAULT_MAX_PROPOSALS, DEFAULT_ROOM_HEIGHT};
use crate::metrology::{extract_height_line, instance_below, solve_heights, HeightLine, InstanceMap};
use crate::placement::{
    refine_scene, ModelEntry, OptimizerKind, PlacementInput, RefineConfig, DEFAULT_ITERATIONS, DEFAULT_ORIENTATIONS,
};
use crate::retrieval::{top_k, DEFAULT_TOP_MODELS};
use crate::support::{
    neighbors, resolve_support, Neighbor, ObjectAnswers, SupportGraph, SupportParent, WallSide, DEFAULT_DILATION,
};
use crate::vanishing::{joint_calibrate, CalibrationParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub iterations: usize,
    pub top_models: usize,
    pub orientations: usize,
    pub seed: u64,
    pub room_height: f64,
    pub max_proposals: usize,
    pub optimizer: OptimizerKind,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            top_models: DEFAULT_TOP_MODELS,
            orientations: DEFAULT_ORIENTATIONS,
            seed: 0,
            room_height: DEFAULT_ROOM_HEIGHT,
            max_proposals: DEFAULT_MAX_PROPOSALS,
            optimizer: OptimizerKind::TrustRegion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Calibrate,
    Layout,
    Support,
    Heights,
    Retrieval,
    Init,
    Refine,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Calibrate => "calibrate",
            Stage::Layout => "layout",
            Stage::Support => "support",
            Stage::Heights => "heights",
            Stage::Retrieval => "retrieval",
            Stage::Init => "init",
            Stage::Refine => "refine",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn fail<E: std::fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError { stage, message: e.to_string() }
}

/// Calibrated camera (metric height from the cuboid fit) and room.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub camera: CameraModel,
    pub layout: crate::layout::RoomLayout,
    pub calibration_residual: f64,
    pub calibration_iterations: usize,
    pub layout_score: f64,
    pub cuboid_residual_px: f64,
    pub regions: Vec<Region>,
}

pub fn calibrate_and_layout(
    bundle: &SceneBundle,
    config: &PipelineConfig,
    timings: &mut StageTimings,
) -> Result<SceneGeometry, PipelineError> {
    let t = Instant::now();
    let calib = joint_calibrate(&bundle.lines, bundle.dims, None, &CalibrationParams::default())
        .map_err(fail(Stage::Calibrate))?;
    timings.calibrate = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let proposals =
        generate_proposals(&calib.clustering.clusters, &calib.camera, &bundle.edge_map, config.max_proposals)
            .map_err(fail(Stage::Layout))?;
    let best = &proposals[0];
    let fit = fit_cuboid(best, &calib.camera, bundle.dims, config.room_height).map_err(fail(Stage::Layout))?;
    let mut camera = calib.camera;
    camera.height = fit.camera_height;
    let regions = label_map(&camera, bundle.dims, &fit.unit_box);
    timings.layout = t.elapsed().as_secs_f64();
    Ok(SceneGeometry {
        camera,
        layout: fit.layout,
        calibration_residual: calib.residual,
        calibration_iterations: calib.iterations,
        layout_score: best.score,
        cuboid_residual_px: fit.residual_px,
        regions,
    })
}

/// Layout surfaces an object may rest on: floor and ceiling always, plus
/// the wall whose image region covers most of the mask.
pub fn layout_neighbors(mask: &Mask, regions: &[Region]) -> Vec<Neighbor> {
    let mut out = vec![
        Neighbor { parent: SupportParent::Floor, category: categories::FLOOR },
        Neighbor { parent: SupportParent::Ceiling, category: categories::CEILING },
    ];
    let mut counts = [0usize; 4];
    for (x, y) in mask.iter_set() {
        match regions[y * mask.width() + x] {
            Region::FrontWall => counts[0] += 1,
            Region::LeftWall => counts[1] += 1,
            Region::RightWall => counts[2] += 1,
            Region::BackWall => counts[3] += 1,
            _ => {}
        }
    }
    let (k, &n) = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).expect("four walls");
    if n > 0 {
        out.push(Neighbor { parent: SupportParent::Wall(WallSide::ALL[k]), category: categories::WALL });
    }
    out
}

/// Resolves one support edge per non-empty instance.
pub fn infer_support(bundle: &SceneBundle, regions: &[Region]) -> SupportGraph {
    let live: Vec<_> = bundle.instances.iter().filter(|i| !i.mask.is_empty()).collect();
    let masks: Vec<&Mask> = live.iter().map(|i| &i.mask).collect();
    let adj = neighbors(&masks, DEFAULT_DILATION);
    let answers = bundle.decoded_answers();
    let mut graph = SupportGraph::default();
    for (k, inst) in live.iter().enumerate() {
        let mut cands: Vec<Neighbor> = adj[k]
            .iter()
            .map(|&j| Neighbor { parent: SupportParent::Object(live[j].id), category: live[j].category })
            .collect();
        cands.extend(layout_neighbors(&inst.mask, regions));
        let a = answers.get(&inst.id).cloned().unwrap_or_else(ObjectAnswers::default);
        graph.edges.insert(inst.id, resolve_support(inst.category, &a, &bundle.priors, &cands));
    }
    graph.repair_cycles();
    graph
}

/// Height lines; a bottom is occluded when the pixels below it belong to
/// an instance other than the support parent.
pub fn height_lines(
    bundle: &SceneBundle,
    camera: &CameraModel,
    graph: &SupportGraph,
) -> Result<BTreeMap<u8, HeightLine>, PipelineError> {
    let vp = camera.vertical_vp();
    let mut map: InstanceMap = vec![None; bundle.dims.pixel_count()];
    for inst in &bundle.instances {
        for (x, y) in inst.mask.iter_set() {
            map[y * bundle.dims.width + x] = Some(inst.id);
        }
    }
    let mut lines = BTreeMap::new();
    for inst in bundle.instances.iter().filter(|i| graph.edges.contains_key(&i.id)) {
        let (top, bottom) = extract_height_line(&inst.mask, &vp)
            .map_err(|e| PipelineError { stage: Stage::Heights, message: format!("instance {}: {e}", inst.id) })?;
        let mut line = HeightLine { owner: inst.id, top, bottom, bottom_occluded: false };
        let parent = graph.parent(inst.id).map(|e| e.parent);
        line.bottom_occluded = instance_below(&line, &vp, &map, bundle.dims.width)
            .is_some_and(|j| Some(SupportParent::Object(j)) != parent);
        lines.insert(inst.id, line);
    }
    Ok(lines)
}

/// Ranked candidate models for the given instances: models labelled with
/// the instance's category (every model when none is), by descriptor
/// similarity, or by id when the instance has no descriptor.
pub fn retrieve_models(
    bundle: &SceneBundle,
    ids: &[u8],
    top_models: usize,
) -> Result<BTreeMap<u8, Vec<(u32, f64)>>, PipelineError> {
    let mut retrieval = BTreeMap::new();
    for inst in bundle.instances.iter().filter(|i| ids.contains(&i.id)) {
        let same: Vec<&ModelAsset> = bundle.models.iter().filter(|m| m.category == Some(inst.category)).collect();
        let pool: Vec<&ModelAsset> = if same.is_empty() { bundle.models.iter().collect() } else { same };
        let ranked = match &inst.descriptor {
            Some(f) if !pool.is_empty() => {
                let library: Vec<_> = pool.iter().map(|m| m.descriptors.clone()).collect();
                top_k(f, &library, top_models).map_err(|e| PipelineError {
                    stage: Stage::Retrieval,
                    message: format!("instance {}: {e}", inst.id),
                })?
            }
            _ => {
                let mut ids: Vec<u32> = pool.iter().map(|m| m.model_id).collect();
                ids.sort_unstable();
                ids.into_iter().take(top_models).map(|id| (id, 0.0)).collect()
            }
        };
        retrieval.insert(inst.id, ranked);
    }
    Ok(retrieval)
}

/// Runs every stage. The result depends only on the bundle and config.
pub fn run_pipeline(
    bundle: &SceneBundle,
    config: &PipelineConfig,
) -> Result<(SceneResult, StageTimings), PipelineError> {
    bundle.validate().map_err(fail(Stage::Calibrate))?;
    let mut timings = StageTimings::default();
    let geo = calibrate_and_layout(bundle, config, &mut timings)?;

    let t = Instant::now();
    let graph = infer_support(bundle, &geo.regions);
    timings.support = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let lines = height_lines(bundle, &geo.camera, &graph)?;
    let cats: BTreeMap<u8, u8> = bundle.instances.iter().map(|i| (i.id, i.category)).collect();
    let heights = solve_heights(
        &graph,
        &lines,
        &cats,
        &geo.camera,
        &geo.layout,
        &bundle.priors,
        bundle.dims.width,
        bundle.dims.height,
    )
    .map_err(fail(Stage::Heights))?;
    timings.heights = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let ids: Vec<u8> = bundle.instances.iter().map(|i| i.id).filter(|id| graph.edges.contains_key(id)).collect();
    let retrieval = retrieve_models(bundle, &ids, config.top_models)?;
    timings.retrieval = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let models: BTreeMap<u32, ModelEntry> =
        bundle.models.iter().map(|m| (m.model_id, ModelEntry::new(m.model_id, m.mesh.clone()))).collect();
    let inputs: Vec<PlacementInput> = bundle
        .instances
        .iter()
        .filter_map(|inst| {
            let h = heights.objects.get(&inst.id)?;
            let candidates: Vec<u32> = retrieval.get(&inst.id)?.iter().map(|(id, _)| *id).collect();
            (!candidates.is_empty()).then(|| PlacementInput {
                instance: inst.id,
                category: inst.category,
                mask: inst.mask.clone(),
                height: h.height,
                top_altitude: h.top_altitude,
                candidates,
                orientations: inst.orientations.clone(),
            })
        })
        .collect();
    timings.init = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let refine_config =
        RefineConfig { iterations: config.iterations, orientations: config.orientations, optimizer: config.optimizer };
    let refined = refine_scene(&inputs, &models, &graph, &geo.camera, &geo.layout, &refine_config)
        .map_err(fail(Stage::Refine))?;
    timings.refine = t.elapsed().as_secs_f64();

    let objects = refined
        .objects
        .into_iter()
        .map(|o| ResultObject {
            instance: o.pose.instance,
            category: o.category,
            mesh: o.pose.transformed_mesh(&models[&o.pose.model_id]),
            pose: o.pose,
            constraint: o.constraint,
            iou: o.iou,
            initial_iou: o.initial_iou,
            trace: o.trace,
            accepted: o.accepted,
            init_clamped: o.init_clamped,
            infeasible_start: o.infeasible_start,
        })
        .collect();
    let result = SceneResult {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        camera: geo.camera,
        calibration_residual: geo.calibration_residual,
        calibration_iterations: geo.calibration_iterations,
        layout: geo.layout,
        layout_score: geo.layout_score,
        cuboid_residual_px: geo.cuboid_residual_px,
        graph,
        heights,
        retrieval,
        objects,
        mean_trace: refined.mean_trace,
    };
    Ok((result, timings))
}
