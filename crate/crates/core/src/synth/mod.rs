//! Ground-truth rooms rendered into scene bundles, and scoring of results
//! against them.

mod eval;
mod models;
mod zbuffer;

pub use eval::{
    evaluate, mean_average_precision, oriented_box, oriented_box_iou, support_accuracy, Metrics, OrientedBox,
};
pub use models::{library, mount, priors as library_priors, LibraryModel, Mount};
pub use zbuffer::{silhouette, DepthBuffer};

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories;
use crate::geom::{line_through, CameraModel, ImageDims, LineSeg2, Mask, Pixel, Point3, TriMesh};
use crate::io::{Instance, ModelAsset, ResultObject, SceneBundle, SceneResult, SCHEMA_VERSION};
use crate::layout::{label_map, unit_box_of, EdgeMap, RoomLayout};
use crate::metrology::{HeightSolution, ObjectHeight};
use crate::placement::{ModelEntry, PlacedObject, SupportConstraint, SupportSurfaceFrame};
use crate::priors::{PriorTables, SupportType};
use crate::retrieval::{ViewDescriptorSet, DESCRIPTOR_DIM, VIEWS_PER_MODEL};
use crate::support::{ObjectAnswers, SupportEdge, SupportGraph, SupportParent, WallSide, MAX_INSTANCES};

pub const IMAGE_WIDTH: usize = 640;
pub const IMAGE_HEIGHT: usize = 480;
pub const ROOM_HEIGHT: f64 = 3.0;
pub const MAX_ATTEMPTS: usize = 1000;
pub const EDGE_SIGMA_PX: f64 = 1.5;
/// Shortest line segment emitted, pixels.
pub const MIN_SEGMENT_PX: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{0} objects requested, at most {MAX_INSTANCES}")]
    TooManyObjects(usize),
    #[error("gave up after {attempts} attempts with {placed} of {requested} objects placed")]
    PlacementRejection { attempts: usize, placed: usize, requested: usize },
    #[error("result instance {0} is not in the ground truth")]
    IdMismatch(u8),
}

/// Each switch is independent. The default is noiseless, with answers
/// injected and the truth model retrievable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Gaussian noise on line endpoints, pixels.
    pub line_sigma_px: f64,
    /// Spurious segments, as a fraction of the real ones.
    pub clutter_fraction: f64,
    /// Positive erodes each mask by that many pixels, negative dilates.
    pub mask_erosion: i32,
    pub inject_answers: bool,
    /// Query descriptors are drawn near a view of the truth model; off, they
    /// are unrelated to every model.
    pub truth_in_candidates: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            line_sigma_px: 0.0,
            clutter_fraction: 0.0,
            mask_erosion: 0,
            inject_answers: true,
            truth_in_candidates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub instance: u8,
    pub category: u8,
    pub model_id: u32,
    pub pose: PlacedObject,
    pub parent: SupportParent,
    pub support_type: SupportType,
    pub height: f64,
    pub top_altitude: f64,
    pub bottom_altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub seed: u64,
    pub dims: ImageDims,
    pub camera: CameraModel,
    pub layout: RoomLayout,
    pub objects: Vec<TruthObject>,
    pub library: Vec<LibraryModel>,
}

impl GroundTruthScene {
    pub fn model(&self, model_id: u32) -> Option<ModelEntry> {
        self.library.iter().find(|m| m.model_id == model_id).map(|m| ModelEntry::new(m.model_id, m.mesh()))
    }

    pub fn object(&self, instance: u8) -> Option<&TruthObject> {
        self.objects.iter().find(|o| o.instance == instance)
    }

    /// Room-frame mesh of an object.
    pub fn mesh(&self, o: &TruthObject) -> TriMesh {
        o.pose.transformed_mesh(&self.model(o.model_id).expect("truth models are in the library"))
    }

    pub fn graph(&self) -> SupportGraph {
        let edges = self
            .objects
            .iter()
            .map(|o| {
                (
                    o.instance,
                    SupportEdge { parent: o.parent, support_type: o.support_type, prior: 1.0, fallback: false },
                )
            })
            .collect();
        SupportGraph { edges }
    }

    /// The constraint each object satisfies in the truth.
    pub fn constraint(&self, o: &TruthObject) -> SupportConstraint {
        match o.parent {
            SupportParent::Object(p) => {
                let po = self.object(p).expect("parents exist");
                let (lo, hi) = po.pose.aabb(&self.model(po.model_id).expect("library"));
                SupportConstraint::Below { lo, hi }
            }
            SupportParent::Wall(side) => SupportConstraint::Behind(SupportSurfaceFrame::wall(&self.layout, side)),
            SupportParent::Ceiling => {
                let (lo, hi) = (self.layout.lo(), self.layout.hi());
                SupportConstraint::Ceiling { lo, hi }
            }
            SupportParent::Floor => SupportConstraint::floor(&self.layout),
        }
    }

    /// The truth written as a pipeline result; scores perfectly against
    /// itself.
    pub fn as_result(&self) -> SceneResult {
        let heights = HeightSolution {
            objects: self
                .objects
                .iter()
                .map(|o| {
                    let h = ObjectHeight {
                        height: o.height,
                        top_altitude: o.top_altitude,
                        bottom_altitude: o.bottom_altitude,
                        support_type: o.support_type,
                        clamped: false,
                        low_confidence: false,
                    };
                    (o.instance, h)
                })
                .collect(),
            type_corrections: Vec::new(),
        };
        let objects = self
            .objects
            .iter()
            .map(|o| ResultObject {
                instance: o.instance,
                category: o.category,
                pose: o.pose,
                constraint: self.constraint(o),
                mesh: self.mesh(o),
                iou: 1.0,
                initial_iou: 1.0,
                trace: vec![1.0],
                accepted: 0,
                init_clamped: false,
                infeasible_start: false,
            })
            .collect();
        SceneResult {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            camera: self.camera.clone(),
            calibration_residual: 0.0,
            calibration_iterations: 0,
            layout: self.layout,
            layout_score: 1.0,
            cuboid_residual_px: 0.0,
            graph: self.graph(),
            heights,
            retrieval: self.objects.iter().map(|o| (o.instance, vec![(o.model_id, 1.0)])).collect(),
            objects,
            mean_trace: vec![1.0],
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..=hi)
}

fn draw_view(rng: &mut ChaCha8Rng) -> (CameraModel, RoomLayout) {
    let dims = ImageDims::new(IMAGE_WIDTH, IMAGE_HEIGHT);
    loop {
        let focal = uniform(rng, 320.0, 420.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let heading = sign * uniform(rng, 4.0, 10.0).to_radians();
        let pitch = uniform(rng, 8.0, 16.0).to_radians();
        let roll = uniform(rng, -2.0, 2.0).to_radians();
        let h = uniform(rng, 1.2, 1.7);
        let cam = CameraModel::from_angles(focal, dims.center(), heading, pitch, roll, h);
        let w = uniform(rng, 3.6, 5.0);
        let x0 = -w * uniform(rng, 0.35, 0.65);
        let d = uniform(rng, 4.5, 6.5);
        let back = uniform(rng, 0.0, 0.1);
        let room =
            RoomLayout::from_bounds(Point3::new(x0, -back, 0.0), Point3::new(x0 + w, d - back, ROOM_HEIGHT), heading);
        let (lo, hi) = (room.lo(), room.hi());
        let front = [(lo.x, 0.0), (hi.x, 0.0), (lo.x, hi.z), (hi.x, hi.z)];
        let visible =
            front.iter().all(|&(x, z)| cam.project(&Point3::new(x, hi.y, z)).is_ok_and(|p| dims.contains(&p, 20.0)));
        if visible {
            return (cam, room);
        }
    }
}

struct Draft {
    category: u8,
    model: usize,
    pose: PlacedObject,
    parent: SupportParent,
    support_type: SupportType,
    lo: Point3,
    hi: Point3,
    mesh: TriMesh,
    full_area: usize,
}

fn boxes_overlap(a: (&Point3, &Point3), b: (&Point3, &Point3), gap: f64) -> bool {
    (0..3).all(|i| a.0[i] < b.1[i] + gap && b.0[i] < a.1[i] + gap)
}

/// The tallest part spans the whole footprint, so the bounding-box top is a
/// real surface.
fn flat_top(m: &LibraryModel) -> bool {
    let (lo, hi) = m.bounds();
    m.parts.iter().any(|(a, b)| b.z == hi.z && a.x <= lo.x && a.y <= lo.y && b.x >= hi.x && b.y >= hi.y)
}

fn yaw_on_grid(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.8) {
        rng.gen_range(0..4) as f64 * FRAC_PI_2
    } else {
        (2 * rng.gen_range(0..4) + 1) as f64 * FRAC_PI_4
    }
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    cam: CameraModel,
    room: RoomLayout,
    dims: ImageDims,
    lib: &'a [LibraryModel],
    entries: Vec<ModelEntry>,
    placed: Vec<Draft>,
}

impl Generator<'_> {
    fn pick_model(&mut self, category: u8) -> usize {
        let ids: Vec<usize> = (0..self.lib.len()).filter(|&i| self.lib[i].category == category).collect();
        *ids.choose(&mut self.rng).expect("every drawn category has models")
    }

    fn pose(&mut self, model: usize, theta: f64, position: Point3, wall: bool) -> PlacedObject {
        let s1 = uniform(&mut self.rng, 0.9, 1.1);
        let s2 = if wall { 1.0 } else { uniform(&mut self.rng, 0.9, 1.1) };
        PlacedObject {
            instance: 0,
            model_id: self.lib[model].model_id,
            theta,
            scale: Vector3::new(s1, s2, 1.0),
            base_scale: 1.0,
            position,
        }
    }

    fn floor_draft(&mut self) -> Option<Draft> {
        const FLOOR: [u8; 9] = [
            categories::CABINET,
            categories::BED,
            categories::CHAIR,
            categories::SOFA,
            categories::TABLE,
            categories::BOOKSHELF,
            categories::DESK,
            categories::DRESSER,
            categories::NIGHT_STAND,
        ];
        let category = *FLOOR.choose(&mut self.rng).unwrap();
        let model = self.pick_model(category);
        let theta = yaw_on_grid(&mut self.rng);
        let (lo, hi) = (self.room.lo(), self.room.hi());
        let x = uniform(&mut self.rng, lo.x, hi.x);
        let y = uniform(&mut self.rng, 1.0, hi.y);
        let pose = self.pose(model, theta, Point3::new(x, y, 0.0), false);
        Some(self.finish(category, model, pose, SupportParent::Floor, SupportType::Below))
    }

    fn on_top_draft(&mut self) -> Option<Draft> {
        let carriers: Vec<usize> = (0..self.placed.len())
            .filter(|&i| models::can_carry(self.placed[i].category) && flat_top(&self.lib[self.placed[i].model]))
            .filter(|&i| self.placed[i].parent == SupportParent::Floor)
            .collect();
        let &pi = carriers.choose(&mut self.rng)?;
        let pcat = self.placed[pi].category;
        let kids: Vec<u8> =
            [categories::LAMP, categories::BOX, categories::BOOKS, categories::TELEVISION, categories::PILLOW]
                .into_iter()
                .filter(|&c| models::parents_of(c).iter().any(|p| p.0 == pcat))
                .collect();
        let &category = kids.choose(&mut self.rng)?;
        let model = self.pick_model(category);
        let theta = self.placed[pi].pose.theta + self.rng.gen_range(0..4) as f64 * FRAC_PI_2;
        let (plo, phi) = (self.placed[pi].lo, self.placed[pi].hi);
        let x = uniform(&mut self.rng, plo.x, phi.x);
        let y = uniform(&mut self.rng, plo.y, phi.y);
        let pose = self.pose(model, theta, Point3::new(x, y, phi.z), false);
        let d = self.finish(category, model, pose, SupportParent::Object(pi as u8), SupportType::Below);
        let inside =
            d.lo.x >= plo.x + 0.01 && d.hi.x <= phi.x - 0.01 && d.lo.y >= plo.y + 0.01 && d.hi.y <= phi.y - 0.01;
        inside.then_some(d)
    }

    fn wall_draft(&mut self) -> Option<Draft> {
        let category =
            *[categories::PICTURE, categories::WHITEBOARD, categories::MIRROR].choose(&mut self.rng).unwrap();
        let side = *[WallSide::Front, WallSide::Left, WallSide::Right].choose(&mut self.rng).unwrap();
        let model = self.pick_model(category);
        let frame = SupportSurfaceFrame::wall(&self.room, side);
        let size = self.lib[model].size();
        let u = uniform(&mut self.rng, 0.0, 1.0);
        let z = uniform(&mut self.rng, 0.9, ROOM_HEIGHT - size.z - 0.15);
        let mut p = frame.origin + frame.e1 * u + frame.normal * (size.y / 2.0);
        p.z = z;
        let pose = self.pose(model, frame.facing_yaw(), p, true);
        Some(self.finish(category, model, pose, SupportParent::Wall(side), SupportType::Behind))
    }

    fn finish(
        &mut self,
        category: u8,
        model: usize,
        pose: PlacedObject,
        parent: SupportParent,
        support_type: SupportType,
    ) -> Draft {
        let entry = &self.entries[model];
        let mesh = pose.transformed_mesh(entry);
        let (lo, hi) = pose.aabb(entry);
        Draft { category, model, pose, parent, support_type, lo, hi, mesh, full_area: 0 }
    }

    /// Inside the room, fully in view, clear of other objects, and neither
    /// hidden nor hiding anything too much.
    fn accept(&self, d: &mut Draft) -> Option<DepthBuffer> {
        // wall objects touch their wall; everything else keeps clear of it
        let margin = if matches!(d.parent, SupportParent::Wall(_)) { -1e-9 } else { 0.02 };
        let (rlo, rhi) = (self.room.lo(), self.room.hi());
        let inside = (0..2).all(|i| d.lo[i] >= rlo[i] + margin && d.hi[i] <= rhi[i] - margin);
        if !inside || d.lo.z < -1e-9 || d.hi.z > rhi.z {
            return None;
        }
        for v in &d.mesh.vertices {
            let pc = self.cam.to_camera(v);
            if pc.z < 0.5 {
                return None;
            }
            let px = self.cam.project_camera(&pc).ok()?;
            if !self.dims.contains(&px, 2.0) {
                return None;
            }
        }
        for (i, o) in self.placed.iter().enumerate() {
            let touching = d.parent == SupportParent::Object(i as u8);
            if !touching && boxes_overlap((&d.lo, &d.hi), (&o.lo, &o.hi), 0.05) {
                return None;
            }
            if touching && boxes_overlap((&d.lo, &d.hi), (&o.lo, &o.hi), -1e-9) {
                return None;
            }
        }
        d.full_area = silhouette(&d.mesh, &self.cam, self.dims).count();
        let mut buf = DepthBuffer::new(self.dims);
        for (i, o) in self.placed.iter().enumerate() {
            buf.draw(&o.mesh, &self.cam, i as u8);
        }
        let new_id = self.placed.len() as u8;
        buf.draw(&d.mesh, &self.cam, new_id);
        let mut counts = vec![0usize; self.placed.len() + 1];
        for o in buf.owner.iter().flatten() {
            counts[*o as usize] += 1;
        }
        let ok = |visible: usize, full: usize| visible >= 150 && visible as f64 >= 0.5 * full as f64;
        if !ok(counts[new_id as usize], d.full_area) {
            return None;
        }
        if self.placed.iter().enumerate().any(|(i, o)| !ok(counts[i], o.full_area)) {
            return None;
        }
        Some(buf)
    }
}

/// Visible runs of a room-frame segment, as exact projections of their end
/// points. `visible` decides per sample.
fn visible_runs(
    a: &Point3,
    b: &Point3,
    cam: &CameraModel,
    dims: ImageDims,
    visible: impl Fn(usize, usize, f64) -> bool,
) -> Vec<LineSeg2> {
    let (ca, cb) = (cam.to_camera(a), cam.to_camera(b));
    const NEAR: f64 = 0.05;
    if ca.z < NEAR && cb.z < NEAR {
        return Vec::new();
    }
    // clip to the near plane
    let (t0, t1) = if ca.z < NEAR {
        ((NEAR - ca.z) / (cb.z - ca.z), 1.0)
    } else if cb.z < NEAR {
        (0.0, (NEAR - ca.z) / (cb.z - ca.z))
    } else {
        (0.0, 1.0)
    };
    let at = |t: f64| a + (b - a) * t;
    let (pa, pb) = match (cam.project(&at(t0)), cam.project(&at(t1))) {
        (Ok(p), Ok(q)) => (p, q),
        _ => return Vec::new(),
    };
    let n = ((pb - pa).norm().ceil() as usize).clamp(2, 4000);
    let mut out = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for k in 0..=n {
        let t = t0 + (t1 - t0) * k as f64 / n as f64;
        let x3 = at(t);
        let seen = match cam.project(&x3) {
            Ok(p) if dims.contains(&p, 0.0) => {
                let (x, y) = (p.x.round() as usize, p.y.round() as usize);
                x < dims.width && y < dims.height && visible(x, y, cam.to_camera(&x3).z)
            }
            _ => false,
        };
        run = match (run, seen) {
            (None, true) => Some((t, t)),
            (Some((s, _)), true) => Some((s, t)),
            (Some((s, e)), false) => {
                out.extend(segment(cam, &at(s), &at(e)));
                None
            }
            (None, false) => None,
        };
    }
    if let Some((s, e)) = run {
        out.extend(segment(cam, &at(s), &at(e)));
    }
    out
}

fn segment(cam: &CameraModel, a: &Point3, b: &Point3) -> Option<LineSeg2> {
    let (p, q) = (cam.project(a).ok()?, cam.project(b).ok()?);
    if (q - p).norm() < MIN_SEGMENT_PX {
        return None;
    }
    line_through(p, q).ok()
}

/// The room edges, front wall and the four side lines.
fn room_edges(room: &RoomLayout) -> Vec<(Point3, Point3)> {
    let (lo, hi) = (room.lo(), room.hi());
    let p = |x: f64, y: f64, z: f64| Point3::new(x, y, z);
    vec![
        (p(lo.x, hi.y, 0.0), p(hi.x, hi.y, 0.0)),
        (p(lo.x, hi.y, hi.z), p(hi.x, hi.y, hi.z)),
        (p(lo.x, hi.y, 0.0), p(lo.x, hi.y, hi.z)),
        (p(hi.x, hi.y, 0.0), p(hi.x, hi.y, hi.z)),
        (p(lo.x, lo.y, 0.0), p(lo.x, hi.y, 0.0)),
        (p(hi.x, lo.y, 0.0), p(hi.x, hi.y, 0.0)),
        (p(lo.x, lo.y, hi.z), p(lo.x, hi.y, hi.z)),
        (p(hi.x, lo.y, hi.z), p(hi.x, hi.y, hi.z)),
    ]
}

fn point_segment_distance(p: &Pixel, a: &Pixel, b: &Pixel) -> f64 {
    let d = b - a;
    let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

/// Gaussian ridge over the projected room edges, quantized to 8 bits.
fn edge_map(room: &RoomLayout, cam: &CameraModel, dims: ImageDims) -> EdgeMap {
    let segs: Vec<LineSeg2> =
        room_edges(room).iter().flat_map(|(a, b)| visible_runs(a, b, cam, dims, |_, _, _| true)).collect();
    let reach = 4.0 * EDGE_SIGMA_PX;
    EdgeMap::from_fn(dims.width, dims.height, |x, y| {
        let p = Pixel::new(x as f64, y as f64);
        let d = segs.iter().map(|s| point_segment_distance(&p, &s.p0, &s.q0)).fold(f64::INFINITY, f64::min);
        if d > reach {
            return 0.0;
        }
        let v = (-d * d / (2.0 * EDGE_SIGMA_PX * EDGE_SIGMA_PX)).exp();
        (v * 255.0).round() / 255.0
    })
}

/// Erodes (k > 0) or dilates (k < 0) each instance in a partition by `|k|`
/// pixels, Chebyshev distance. Dilation only claims background, lower ids
/// first.
fn reshape_masks(owner: &[Option<u8>], dims: ImageDims, k: i32) -> Vec<Option<u8>> {
    if k == 0 {
        return owner.to_vec();
    }
    let (w, h) = (dims.width as i64, dims.height as i64);
    let r = k.unsigned_abs() as i64;
    let mut out = owner.to_vec();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let mut near: Option<u8> = None;
            let mut foreign = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (u, v) = (x + dx, y + dy);
                    let o = if u < 0 || v < 0 || u >= w || v >= h { None } else { owner[(v * w + u) as usize] };
                    if o != owner[i] {
                        foreign = true;
                    }
                    if let Some(o) = o {
                        near = Some(near.map_or(o, |n: u8| n.min(o)));
                    }
                }
            }
            if k > 0 && owner[i].is_some() && foreign {
                out[i] = None;
            }
            if k < 0 && owner[i].is_none() {
                out[i] = near;
            }
        }
    }
    out
}

fn random_descriptor(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    (0..DESCRIPTOR_DIM).map(|_| n.sample(rng) as f32 as f64).collect()
}

/// Builds a room with `n_objects` objects and renders it.
pub fn make_scene(
    seed: u64,
    n_objects: usize,
    noise: &NoiseConfig,
) -> Result<(GroundTruthScene, SceneBundle), SynthError> {
    if n_objects > MAX_INSTANCES {
        return Err(SynthError::TooManyObjects(n_objects));
    }
    let dims = ImageDims::new(IMAGE_WIDTH, IMAGE_HEIGHT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cam, room) = draw_view(&mut rng);
    let lib = library();
    let entries: Vec<ModelEntry> = lib.iter().map(|m| ModelEntry::new(m.model_id, m.mesh())).collect();
    let mut gen = Generator { rng, cam: cam.clone(), room, dims, lib: &lib, entries, placed: Vec::new() };

    let mut attempts = 0;
    let mut buffer = DepthBuffer::new(dims);
    while gen.placed.len() < n_objects {
        if attempts >= MAX_ATTEMPTS {
            return Err(SynthError::PlacementRejection { attempts, placed: gen.placed.len(), requested: n_objects });
        }
        attempts += 1;
        let roll: f64 = gen.rng.gen();
        let draft = if roll < 0.45 || gen.placed.is_empty() {
            gen.floor_draft()
        } else if roll < 0.75 {
            gen.on_top_draft()
        } else {
            gen.wall_draft()
        };
        let Some(mut d) = draft else { continue };
        if let Some(buf) = gen.accept(&mut d) {
            buffer = buf;
            gen.placed.push(d);
        }
    }
    let Generator { mut rng, placed, .. } = gen;

    let objects: Vec<TruthObject> = placed
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let height = d.hi.z - d.lo.z;
            TruthObject {
                instance: i as u8,
                category: d.category,
                model_id: lib[d.model].model_id,
                pose: PlacedObject { instance: i as u8, ..d.pose },
                parent: d.parent,
                support_type: d.support_type,
                height,
                top_altitude: d.hi.z,
                bottom_altitude: d.lo.z,
            }
        })
        .collect();

    // lines: room edges where no object is in front, object edges where
    // nothing nearer covers them
    let mut lines = Vec::new();
    for (a, b) in room_edges(&room) {
        lines.extend(visible_runs(&a, &b, &cam, dims, |x, y, _| buffer.owner[y * dims.width + x].is_none()));
    }
    for d in &placed {
        let l = d.pose.linear();
        for (a, b) in lib[d.model].edges() {
            let (a, b) = (l * a + d.pose.position, l * b + d.pose.position);
            lines.extend(visible_runs(&a, &b, &cam, dims, |x, y, z| buffer.depth_at(x, y) >= z * (1.0 - 0.01)));
        }
    }
    if noise.line_sigma_px > 0.0 {
        let n = Normal::new(0.0, noise.line_sigma_px).unwrap();
        lines = lines
            .into_iter()
            .filter_map(|s| {
                let p = s.p0 + Pixel::new(n.sample(&mut rng), n.sample(&mut rng));
                let q = s.q0 + Pixel::new(n.sample(&mut rng), n.sample(&mut rng));
                line_through(p, q).ok()
            })
            .collect();
    }
    let clutter = (noise.clutter_fraction * lines.len() as f64).round() as usize;
    for _ in 0..clutter {
        let p = Pixel::new(rng.gen_range(0.0..dims.width as f64 - 1.0), rng.gen_range(0.0..dims.height as f64 - 1.0));
        let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let len = rng.gen_range(MIN_SEGMENT_PX..120.0);
        let q = p + Pixel::new(a.cos(), a.sin()) * len;
        if let Ok(s) = line_through(p, q) {
            lines.push(s);
        }
    }

    let owner = reshape_masks(&buffer.owner, dims, noise.mask_erosion);
    let labels: Vec<u8> = label_map(&cam, dims, &unit_box_of(&room, cam.height)).into_iter().map(|r| r as u8).collect();
    let priors = models::priors(&lib, ROOM_HEIGHT);

    let mut model_views = Vec::with_capacity(lib.len());
    let mut assets = Vec::with_capacity(lib.len());
    for m in &lib {
        let views: Vec<Vec<f64>> = (0..VIEWS_PER_MODEL).map(|_| random_descriptor(&mut rng)).collect();
        model_views.push(views.clone());
        let descriptors = ViewDescriptorSet::new(m.model_id, views).expect("random views are valid");
        assets.push(ModelAsset { model_id: m.model_id, category: Some(m.category), mesh: m.mesh(), descriptors });
    }

    let noise_dist = Normal::new(0.0, 0.5).unwrap();
    let mut instances = Vec::with_capacity(objects.len());
    let mut answers = BTreeMap::new();
    for (i, o) in objects.iter().enumerate() {
        let mask = Mask::from_fn(dims.width, dims.height, |x, y| owner[y * dims.width + x] == Some(i as u8));
        let descriptor = if noise.truth_in_candidates {
            let v = &model_views[placed[i].model][rng.gen_range(0..VIEWS_PER_MODEL)];
            v.iter().map(|x| (x + noise_dist.sample(&mut rng)) as f32 as f64).collect()
        } else {
            random_descriptor(&mut rng)
        };
        instances.push(Instance {
            id: o.instance,
            category: o.category,
            mask,
            descriptor: Some(descriptor),
            orientations: None,
        });
        if noise.inject_answers {
            let truth_cat = match o.parent {
                SupportParent::Object(p) => objects[p as usize].category,
                other => other.layout_category().expect("layout parent"),
            };
            let mut cats = vec![truth_cat];
            while cats.len() < 5 {
                let c = rng.gen_range(0..categories::CATEGORY_COUNT as u8);
                if !cats.contains(&c) {
                    cats.push(c);
                }
            }
            cats.shuffle(&mut rng);
            let a = ObjectAnswers {
                parent_instance: match o.parent {
                    SupportParent::Object(p) => Some(p),
                    _ => None,
                },
                parent_categories: cats,
                support_type: Some(o.support_type),
                on_layout: Some(o.parent.is_layout()),
            };
            answers.insert(o.instance, a.to_codes());
        }
    }

    let bundle = SceneBundle {
        dims,
        instances,
        edge_map: edge_map(&room, &cam, dims),
        label_map: Some(labels),
        lines,
        answers: noise.inject_answers.then_some(answers),
        models: assets,
        priors,
    };
    let truth = GroundTruthScene { seed, dims, camera: cam, layout: room, objects, library: lib };
    Ok((truth, bundle))
}

/// Priors the generator writes, for callers building bundles by hand.
pub fn default_priors() -> PriorTables {
    models::priors(&library(), ROOM_HEIGHT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::rasterize_silhouette;

    fn noiseless() -> NoiseConfig {
        NoiseConfig::default()
    }

    #[test]
    fn same_seed_same_bundle() {
        let (ta, a) = make_scene(7, 6, &noiseless()).unwrap();
        let (tb, b) = make_scene(7, 6, &noiseless()).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);
        let (_, c) = make_scene(8, 6, &noiseless()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_room() {
        let (t, b) = make_scene(3, 0, &noiseless()).unwrap();
        assert!(t.objects.is_empty() && b.instances.is_empty());
        assert!(b.lines.len() >= 4);
        b.validate().unwrap();
    }

    #[test]
    fn too_many_objects() {
        assert_eq!(make_scene(0, 61, &noiseless()).unwrap_err(), SynthError::TooManyObjects(61));
    }

    #[test]
    fn truth_supports_are_physical() {
        for seed in 0..5 {
            let (t, b) = make_scene(seed, 12, &noiseless()).unwrap();
            b.validate().unwrap();
            for o in &t.objects {
                let m = t.model(o.model_id).unwrap();
                assert!(t.constraint(o).satisfied(&o.pose, &m), "seed {seed} object {}", o.instance);
                assert!(t.layout.contains(&o.pose.position, 1e-9));
            }
            assert!(t.graph().topological_order().is_ok());
        }
    }

    #[test]
    fn rasterizers_agree_on_area() {
        let (t, _) = make_scene(11, 10, &noiseless()).unwrap();
        for o in &t.objects {
            let m = t.model(o.model_id).unwrap();
            let a = silhouette(&t.mesh(o), &t.camera, t.dims).count() as f64;
            let b = rasterize_silhouette(&m, &o.pose, &t.camera, t.dims).unwrap().count() as f64;
            assert!((a - b).abs() <= 0.01 * a, "instance {}: {a} vs {b}", o.instance);
        }
    }

    #[test]
    fn erosion_and_dilation_keep_a_partition() {
        let dims = ImageDims::new(8, 8);
        let mut owner = vec![None; 64];
        for y in 2..6 {
            for x in 2..6 {
                owner[y * 8 + x] = Some(0);
            }
        }
        let eroded = reshape_masks(&owner, dims, 1);
        assert_eq!(eroded.iter().flatten().count(), 4);
        let dilated = reshape_masks(&owner, dims, -1);
        assert_eq!(dilated.iter().flatten().count(), 36);
    }

    #[test]
    fn full_rooms_are_rejected() {
        let err = make_scene(1, 60, &noiseless()).unwrap_err();
        assert!(matches!(err, SynthError::PlacementRejection { attempts: MAX_ATTEMPTS, .. }));
    }
}
