//! Object placement: initial poses from masks and heights, silhouette
//! rasterization, support constraints and the contextual refinement that
//! fits model, yaw, scale and position to the instance masks.

mod constraints;
mod optimize;
mod raster;
mod refine;

pub use constraints::{
    check_behind, check_below, check_on_floor, SupportConstraint, BEHIND_TOLERANCE, BELOW_TOLERANCE,
};
pub use optimize::{CoordinateSearch, LocalOptimizer, OptimizeOutcome, TrustRegionQuadratic};
pub use raster::{occlusion_aware_iou, rasterize_silhouette, IouTarget};
pub use refine::{
    refine_pose, refine_scene, ObjectRefinement, OptimizerKind, PlacementInput, PoseRefinement, RefineConfig,
    SceneRefinement,
};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories;
use crate::geom::{aabb_of, yaw_rotation, CameraModel, GeomError, Mask, Pixel, Point3, TriMesh};
use crate::layout::RoomLayout;
use crate::support::WallSide;

pub const DEFAULT_ITERATIONS: usize = 30;
pub const DEFAULT_ORIENTATIONS: usize = 8;
/// Half-widths of the position search box, meters.
pub const POSITION_SLACK: [f64; 3] = [0.6, 0.6, 0.3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("viewing ray is parallel to the support plane")]
    RayParallelToPlane,
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("model {0} is not in the library")]
    UnknownModel(u32),
}

/// A model mesh normalized to rest on `z = 0`, centered on the vertical axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub model_id: u32,
    pub mesh: TriMesh,
    /// Model-frame bounding box.
    pub lo: Point3,
    pub hi: Point3,
}

impl ModelEntry {
    pub fn new(model_id: u32, mesh: TriMesh) -> Self {
        let mesh = mesh.floor_aligned();
        let (lo, hi) = mesh.aabb();
        Self { model_id, mesh, lo, hi }
    }

    pub fn height(&self) -> f64 {
        self.hi.z - self.lo.z
    }

    pub fn center(&self) -> Point3 {
        (self.lo + self.hi) * 0.5
    }
}

/// Pose of one object: `X = R(θ)·diag(s)·κ·O + p`, where `κ` maps the model
/// to the measured height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub instance: u8,
    pub model_id: u32,
    pub theta: f64,
    pub scale: Vector3<f64>,
    pub base_scale: f64,
    pub position: Point3,
}

impl PlacedObject {
    pub fn linear(&self) -> Matrix3<f64> {
        yaw_rotation(self.theta) * Matrix3::from_diagonal(&(self.scale * self.base_scale))
    }

    pub fn apply(&self, x: &Point3) -> Point3 {
        self.linear() * x + self.position
    }

    pub fn vertices(&self, model: &ModelEntry) -> Vec<Point3> {
        let l = self.linear();
        model.mesh.vertices.iter().map(|v| l * v + self.position).collect()
    }

    pub fn transformed_mesh(&self, model: &ModelEntry) -> TriMesh {
        TriMesh { vertices: self.vertices(model), triangles: model.mesh.triangles.clone() }
    }

    /// Image of the model's bounding-box center.
    pub fn center(&self, model: &ModelEntry) -> Point3 {
        self.apply(&model.center())
    }

    pub fn aabb(&self, model: &ModelEntry) -> (Point3, Point3) {
        aabb_of(self.vertices(model).iter())
    }

    /// Extent of the transformed, untranslated model along `n`.
    pub fn range_along(&self, model: &ModelEntry, n: &Vector3<f64>) -> f64 {
        let l = self.linear();
        let (lo, hi) = model
            .mesh
            .vertices
            .iter()
            .map(|v| (l * v).dot(n))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
        hi - lo
    }
}

/// Bounds of `(s1, s2, s3)` for a category.
pub fn scale_bounds(category: u8) -> ([f64; 3], [f64; 3]) {
    if categories::is_generic(category) {
        ([0.1, 0.1, 0.9], [10.0, 10.0, 1.1])
    } else {
        ([0.8, 0.8, 0.9], [1.2, 1.2, 1.1])
    }
}

/// Local frame of one planar support surface; `normal` points away from
/// the supporting body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportSurfaceFrame {
    pub origin: Point3,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub side: u8,
}

impl SupportSurfaceFrame {
    pub fn new(origin: Point3, e1: Vector3<f64>, e2: Vector3<f64>, side: u8) -> Self {
        Self { origin, e1, e2, normal: e1.cross(&e2).normalize(), side }
    }

    /// The four vertical faces of a box, sides 1..4 = `-y`, `+y`, `-x`, `+x`.
    pub fn box_sides(lo: &Point3, hi: &Point3) -> [SupportSurfaceFrame; 4] {
        let d = hi - lo;
        let up = Vector3::new(0.0, 0.0, d.z);
        [
            Self::new(Point3::new(lo.x, lo.y, lo.z), Vector3::new(d.x, 0.0, 0.0), up, 1),
            Self::new(Point3::new(hi.x, hi.y, lo.z), Vector3::new(-d.x, 0.0, 0.0), up, 2),
            Self::new(Point3::new(lo.x, hi.y, lo.z), Vector3::new(0.0, -d.y, 0.0), up, 3),
            Self::new(Point3::new(hi.x, lo.y, lo.z), Vector3::new(0.0, d.y, 0.0), up, 4),
        ]
    }

    /// Inner face of a room wall; the normal points into the room.
    pub fn wall(layout: &RoomLayout, side: WallSide) -> SupportSurfaceFrame {
        let (lo, hi) = (layout.lo(), layout.hi());
        let d = hi - lo;
        let up = Vector3::new(0.0, 0.0, d.z);
        match side {
            WallSide::Front => Self::new(Point3::new(lo.x, hi.y, 0.0), Vector3::new(d.x, 0.0, 0.0), up, 1),
            WallSide::Left => Self::new(Point3::new(lo.x, lo.y, 0.0), Vector3::new(0.0, d.y, 0.0), up, 2),
            WallSide::Right => Self::new(Point3::new(hi.x, hi.y, 0.0), Vector3::new(0.0, -d.y, 0.0), up, 3),
            WallSide::Back => Self::new(Point3::new(hi.x, lo.y, 0.0), Vector3::new(-d.x, 0.0, 0.0), up, 4),
        }
    }

    /// Yaw that turns a model's front (`-y`) to face along the normal.
    pub fn facing_yaw(&self) -> f64 {
        self.normal.x.atan2(-self.normal.y)
    }
}

/// Pixel at the bottom of the mask: lowest row, mean column of that row.
pub fn mask_bottom_center(mask: &Mask) -> Option<Pixel> {
    let (_, _, _, y1) = mask.bbox()?;
    let xs: Vec<usize> = (0..mask.width()).filter(|&x| mask.get(x, y1)).collect();
    Some(Pixel::new(xs.iter().sum::<usize>() as f64 / xs.len() as f64, y1 as f64))
}

/// Pixel at the top of the mask: highest row, mean column of that row.
pub fn mask_top_center(mask: &Mask) -> Option<Pixel> {
    let (_, y0, _, _) = mask.bbox()?;
    let xs: Vec<usize> = (0..mask.width()).filter(|&x| mask.get(x, y0)).collect();
    Some(Pixel::new(xs.iter().sum::<usize>() as f64 / xs.len() as f64, y0 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialPosition {
    pub position: Point3,
    /// The back-projected point fell outside the room and was moved inside.
    pub clamped: bool,
}

/// Back-projects the mask's bottom-center pixel onto the horizontal plane at
/// the object's bottom altitude `a - h`.
pub fn init_position(
    mask: &Mask,
    h: f64,
    a: f64,
    cam: &CameraModel,
    layout: &RoomLayout,
) -> Result<InitialPosition, PlacementError> {
    let px = mask_bottom_center(mask).ok_or(GeomError::DegenerateInput("empty mask"))?;
    back_project_to_altitude(&px, a - h, cam, layout)
}

pub fn back_project_to_altitude(
    px: &Pixel,
    z: f64,
    cam: &CameraModel,
    layout: &RoomLayout,
) -> Result<InitialPosition, PlacementError> {
    let ray = cam.pixel_ray(px);
    let c = cam.position();
    if ray.z.abs() < 1e-12 {
        return Err(PlacementError::RayParallelToPlane);
    }
    let t = (z - c.z) / ray.z;
    let p = if t > 0.0 {
        c + ray * t
    } else {
        // The plane is behind the ray: push the point as far as the room allows.
        let dir = Vector3::new(ray.x, ray.y, 0.0);
        c + dir * 1e3 + Vector3::new(0.0, 0.0, z - c.z)
    };
    let inside = layout.contains(&p, 1e-9);
    Ok(InitialPosition { position: if inside { p } else { layout.clamp(&p) }, clamped: !inside })
}
