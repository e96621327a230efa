//! Scores a result against the scene it was rendered from.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geom::{yaw_rotation, Pixel, Point3};
use crate::io::SceneResult;
use crate::layout::{clip_polygon, layout_iou, polygon_area};
use crate::vanishing::axis_angle_error_deg;

use super::{GroundTruthScene, SynthError};

pub const MAP_IOU_THRESHOLD: f64 = 0.15;

/// Box rotated by `theta` about the vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point3,
    pub half: Vector3<f64>,
    pub theta: f64,
}

impl OrientedBox {
    pub fn volume(&self) -> f64 {
        8.0 * self.half.x * self.half.y * self.half.z
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> Vec<Pixel> {
        let r = yaw_rotation(self.theta);
        [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .iter()
            .map(|&(sx, sy)| {
                let v = r * Vector3::new(sx * self.half.x, sy * self.half.y, 0.0);
                Pixel::new(self.center.x + v.x, self.center.y + v.y)
            })
            .collect()
    }
}

/// Tightest box at yaw `theta` around the points.
pub fn oriented_box(points: &[Point3], theta: f64) -> OrientedBox {
    let back = yaw_rotation(-theta);
    let local: Vec<Point3> = points.iter().map(|p| back * p).collect();
    let (lo, hi) = crate::geom::aabb_of(local.iter());
    OrientedBox { center: yaw_rotation(theta) * ((lo + hi) * 0.5), half: (hi - lo) * 0.5, theta }
}

pub fn oriented_box_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let dz = (a.center.z + a.half.z).min(b.center.z + b.half.z) - (a.center.z - a.half.z).max(b.center.z - b.half.z);
    if dz <= 0.0 {
        return 0.0;
    }
    let fb = b.footprint();
    let clip: [Pixel; 4] = [fb[0], fb[1], fb[2], fb[3]];
    let inter = polygon_area(&clip_polygon(&a.footprint(), &clip)) * dz;
    let union = a.volume() + b.volume() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub layout_iou: f64,
    /// 3D box IoU per truth instance; 0 when the result has no object.
    pub object_iou: BTreeMap<u8, f64>,
    pub mean_object_iou: f64,
    /// Mean over truth categories of average precision at 3D IoU 0.15.
    pub map: f64,
    pub support_accuracy: f64,
    pub support_correct: BTreeMap<u8, bool>,
    pub vp_error_deg: f64,
    pub focal_error: f64,
    pub camera_height_error: f64,
    /// `|h - h*| / h*` per instance with a height.
    pub height_error: BTreeMap<u8, f64>,
    pub mean_height_error: f64,
    /// Final silhouette IoU reported by refinement, averaged.
    pub mean_silhouette_iou: f64,
}

fn mean<'a>(v: impl Iterator<Item = &'a f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// An edge counts only when parent instance, parent category, type and
/// layout-or-object all match, which here means parent and type match.
pub fn support_accuracy(result: &SceneResult, truth: &GroundTruthScene) -> (f64, BTreeMap<u8, bool>) {
    let correct: BTreeMap<u8, bool> = truth
        .objects
        .iter()
        .map(|o| {
            let ok = result
                .graph
                .parent(o.instance)
                .is_some_and(|e| e.parent == o.parent && e.support_type == o.support_type);
            (o.instance, ok)
        })
        .collect();
    let acc =
        if correct.is_empty() { 1.0 } else { correct.values().filter(|&&c| c).count() as f64 / correct.len() as f64 };
    (acc, correct)
}

/// Average precision with all-point interpolation.
fn average_precision(mut dets: Vec<(f64, bool)>, positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    dets.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(dets.len());
    for (k, (_, hit)) in dets.iter().enumerate() {
        tp += *hit as usize;
        points.push((tp as f64 / positives as f64, tp as f64 / (k + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let best = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
        ap += (points[i].0 - prev_recall) * best;
        prev_recall = points[i].0;
    }
    ap
}

/// Per truth category: scored detections and the number of positives.
type Detections = BTreeMap<u8, (Vec<(f64, bool)>, usize)>;

fn collect_detections(
    result: &SceneResult,
    truth: &GroundTruthScene,
    object_iou: &mut BTreeMap<u8, f64>,
    out: &mut Detections,
) {
    for t in &truth.objects {
        let tb = oriented_box(&truth.mesh(t).vertices, t.pose.theta);
        let found = result.objects.iter().find(|o| o.instance == t.instance);
        let iou = found.map_or(0.0, |o| oriented_box_iou(&oriented_box(&o.mesh.vertices, o.pose.theta), &tb));
        object_iou.insert(t.instance, iou);
        let entry = out.entry(t.category).or_default();
        entry.1 += 1;
        if let Some(o) = found {
            entry.0.push((o.iou, o.category == t.category && iou >= MAP_IOU_THRESHOLD));
        }
    }
}

// detections labelled with a category that has no truth object are false
// positives there; they carry no positives so they do not enter the mean
fn map_of(d: Detections) -> f64 {
    mean(d.into_values().map(|(d, n)| average_precision(d, n)).collect::<Vec<_>>().iter())
}

/// mAP with detections pooled over several scenes before ranking.
pub fn mean_average_precision(pairs: &[(&SceneResult, &GroundTruthScene)]) -> f64 {
    let mut d = Detections::new();
    let mut scratch = BTreeMap::new();
    for (r, t) in pairs {
        collect_detections(r, t, &mut scratch, &mut d);
    }
    if d.is_empty() {
        1.0
    } else {
        map_of(d)
    }
}

pub fn evaluate(result: &SceneResult, truth: &GroundTruthScene) -> Result<Metrics, SynthError> {
    for o in &result.objects {
        if truth.object(o.instance).is_none() {
            return Err(SynthError::IdMismatch(o.instance));
        }
    }
    for id in result.graph.edges.keys().chain(result.heights.objects.keys()) {
        if truth.object(*id).is_none() {
            return Err(SynthError::IdMismatch(*id));
        }
    }

    let mut object_iou = BTreeMap::new();
    let mut by_category = Detections::new();
    collect_detections(result, truth, &mut object_iou, &mut by_category);
    let map = map_of(by_category);

    let (support_accuracy, support_correct) = support_accuracy(result, truth);
    let height_error: BTreeMap<u8, f64> = truth
        .objects
        .iter()
        .filter_map(|t| {
            result.heights.objects.get(&t.instance).map(|h| (t.instance, (h.height - t.height).abs() / t.height))
        })
        .collect();

    Ok(Metrics {
        layout_iou: layout_iou(&result.layout, &truth.layout),
        mean_object_iou: mean(object_iou.values()),
        object_iou,
        map: if truth.objects.is_empty() { 1.0 } else { map },
        support_accuracy,
        support_correct,
        vp_error_deg: axis_angle_error_deg(&result.camera, &truth.camera),
        focal_error: (result.camera.focal - truth.camera.focal).abs() / truth.camera.focal,
        camera_height_error: (result.camera.height - truth.camera.height).abs() / truth.camera.height,
        mean_height_error: mean(height_error.values()),
        height_error,
        mean_silhouette_iou: mean(result.objects.iter().map(|o| &o.iou)),
    })
}
