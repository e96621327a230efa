use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{CameraModel, TriMesh};
use crate::layout::RoomLayout;
use crate::metrology::HeightSolution;
use crate::placement::{PlacedObject, SupportConstraint};
use crate::support::SupportGraph;

use super::obj::write_obj_mesh;
use super::{read_file, to_json, write_atomic, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultObject {
    pub instance: u8,
    pub category: u8,
    pub pose: PlacedObject,
    pub constraint: SupportConstraint,
    /// Model mesh under the pose, room frame.
    pub mesh: TriMesh,
    pub iou: f64,
    pub initial_iou: f64,
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub init_clamped: bool,
    pub infeasible_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub schema_version: u32,
    pub seed: u64,
    pub camera: CameraModel,
    pub calibration_residual: f64,
    pub calibration_iterations: usize,
    pub layout: RoomLayout,
    pub layout_score: f64,
    pub cuboid_residual_px: f64,
    pub graph: SupportGraph,
    pub heights: HeightSolution,
    /// Ranked `(model id, similarity)` per instance.
    pub retrieval: BTreeMap<u8, Vec<(u32, f64)>>,
    pub objects: Vec<ResultObject>,
    /// Mean IoU over objects, per refinement iteration.
    pub mean_trace: Vec<f64>,
}

/// Wall-clock seconds per stage. Kept out of [`SceneResult`] so reruns
/// compare equal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub calibrate: f64,
    pub layout: f64,
    pub support: f64,
    pub heights: f64,
    pub retrieval: f64,
    pub init: f64,
    pub refine: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.calibrate + self.layout + self.support + self.heights + self.retrieval + self.init + self.refine
    }
}

pub fn save_result(result: &SceneResult, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &to_json(result))
}

pub fn load_result(path: &Path) -> Result<SceneResult, IoError> {
    serde_json::from_slice(&read_file(path)?).map_err(|e| IoError::schema(path, e))
}

/// One OBJ holding the room shell (group `room`: 8 corners, floor, ceiling
/// and the three walls in view) and each placed object as `obj_<id>`.
pub fn export_obj(result: &SceneResult, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("# room and placed objects, room frame, z up\n");
    out.push_str("g room\n");
    for c in result.layout.corners() {
        writeln!(out, "v {} {} {}", c.x, c.y, c.z).unwrap();
    }
    // Corner k has x = hi iff bit 0, y = hi iff bit 1, z = hi iff bit 2.
    for f in [[1, 2, 4, 3], [5, 7, 8, 6], [3, 4, 8, 7], [1, 3, 7, 5], [2, 6, 8, 4]] {
        writeln!(out, "f {} {} {} {}", f[0], f[1], f[2], f[3]).unwrap();
    }
    let mut base = 8;
    for o in &result.objects {
        writeln!(out, "g obj_{}", o.instance).unwrap();
        write_obj_mesh(&mut out, &o.mesh, base);
        base += o.mesh.vertices.len();
    }
    write_atomic(path, out.as_bytes())
}
