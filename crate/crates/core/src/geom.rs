//! Homogeneous plane geometry, the pinhole camera, triangle meshes and
//! binary masks shared by every stage.
//!
//! Conventions used throughout the crate:
//!
//! * Pixels: integer coordinates address pixel centers, origin top-left,
//!   `y` pointing down.
//! * Room frame: `z` up, floor at `z = 0`, origin on the floor directly below
//!   the camera. `x`/`y` follow the Manhattan axes of the room, labelled so
//!   that the camera looks roughly along `+y`.
//! * Camera frame: `x` right, `y` down, `z` forward. `rotation` maps room
//!   directions into the camera frame.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Pixel = Vector2<f64>;
pub type Point3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("point lies behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
}

/// A point of the projective plane. `w = 0` is a point at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint2 {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl HPoint2 {
    pub fn new(x: f64, y: f64, w: f64) -> Self {
        Self { x, y, w }
    }

    pub fn from_pixel(p: Pixel) -> Self {
        Self::new(p.x, p.y, 1.0)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.w)
    }

    /// Unit-norm representative with a non-negative `w` (or, at infinity, a
    /// non-negative leading coordinate).
    pub fn normalized(&self) -> Self {
        let mut v = self.vector();
        let n = v.norm();
        if n > 0.0 {
            v /= n;
        }
        let flip = if v.z != 0.0 {
            v.z < 0.0
        } else if v.x != 0.0 {
            v.x < 0.0
        } else {
            v.y < 0.0
        };
        if flip {
            v = -v;
        }
        Self::from_vector(v)
    }

    /// True when the point lies within `max_dist` pixels of the origin.
    pub fn is_finite_within(&self, max_dist: f64) -> bool {
        let xy = (self.x * self.x + self.y * self.y).sqrt();
        self.w.abs() * max_dist > xy
    }

    pub fn to_pixel(&self) -> Option<Pixel> {
        if self.w == 0.0 {
            return None;
        }
        let p = Pixel::new(self.x / self.w, self.y / self.w);
        (p.x.is_finite() && p.y.is_finite()).then_some(p)
    }

    /// Image direction from `p` towards this point, valid at infinity too.
    /// The sign follows the homogeneous representative.
    pub fn direction_from(&self, p: &Pixel) -> Vector2<f64> {
        Vector2::new(self.x - self.w * p.x, self.y - self.w * p.y)
    }
}

/// Homogeneous line through two points (or intersection of two lines).
pub fn join(a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    a.cross(b)
}

/// Scales a line so that `a² + b² = 1`; `None` for the line at infinity.
pub fn normalize_line(l: &Vector3<f64>) -> Option<Vector3<f64>> {
    let n = (l.x * l.x + l.y * l.y).sqrt();
    (n > 0.0 && n.is_finite()).then(|| l / n)
}

/// Signed distance from a pixel to a normalized line.
pub fn line_distance(l: &Vector3<f64>, p: &Pixel) -> f64 {
    l.x * p.x + l.y * p.y + l.z
}

/// Intersection of two lines as a pixel, if finite.
pub fn intersect(l1: &Vector3<f64>, l2: &Vector3<f64>) -> Option<Pixel> {
    HPoint2::from_vector(l1.cross(l2)).to_pixel()
}

/// A detected line segment with its supporting homogeneous line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSeg2 {
    pub p0: Pixel,
    pub q0: Pixel,
    /// `(a, b, c)` with `a² + b² = 1`, sign fixed so `b > 0` (or `b = 0, a > 0`).
    pub line: Vector3<f64>,
    pub length: f64,
}

impl LineSeg2 {
    pub fn midpoint(&self) -> Pixel {
        (self.p0 + self.q0) * 0.5
    }

    pub fn direction(&self) -> Vector2<f64> {
        self.q0 - self.p0
    }
}

pub fn line_through(p: Pixel, q: Pixel) -> Result<LineSeg2, GeomError> {
    let length = (q - p).norm();
    if !(length > 0.0) {
        return Err(GeomError::DegenerateInput("segment endpoints coincide"));
    }
    let raw = join(&HPoint2::from_pixel(p).vector(), &HPoint2::from_pixel(q).vector());
    let mut line = normalize_line(&raw).ok_or(GeomError::DegenerateInput("segment endpoints coincide"))?;
    if line.y < 0.0 || (line.y == 0.0 && line.x < 0.0) {
        line = -line;
    }
    Ok(LineSeg2 { p0: p, q0: q, line, length })
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: usize,
    pub height: usize,
}

impl ImageDims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    /// Principal point at the image center under the pixel-center convention.
    pub fn center(&self) -> Pixel {
        Pixel::new((self.width as f64 - 1.0) * 0.5, (self.height as f64 - 1.0) * 0.5)
    }

    pub fn contains(&self, p: &Pixel, margin: f64) -> bool {
        p.x >= -0.5 - margin
            && p.y >= -0.5 - margin
            && p.x <= self.width as f64 - 0.5 + margin
            && p.y <= self.height as f64 - 0.5 + margin
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Pinhole camera: square pixels, no skew, room-to-camera rotation and the
/// camera height above the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal: f64,
    pub principal: Pixel,
    pub rotation: Matrix3<f64>,
    pub height: f64,
}

impl CameraModel {
    pub fn new(focal: f64, principal: Pixel, rotation: Matrix3<f64>, height: f64) -> Self {
        Self { focal, principal, rotation, height }
    }

    /// Camera from heading (about the vertical, from `+y` towards `+x`),
    /// downward pitch and roll about the optical axis, all in radians.
    pub fn from_angles(focal: f64, principal: Pixel, heading: f64, pitch: f64, roll: f64, height: f64) -> Self {
        let level = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
        let (sp, cp) = pitch.sin_cos();
        let tilt = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, sp, 0.0, -sp, cp);
        let (sr, cr) = roll.sin_cos();
        let spin = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
        let room_from_cam = yaw_rotation(-heading) * level * tilt * spin;
        Self::new(focal, principal, room_from_cam.transpose(), height)
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal,
            0.0,
            self.principal.x, //
            0.0,
            self.focal,
            self.principal.y, //
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn intrinsics_inv(&self) -> Matrix3<f64> {
        let f = self.focal;
        Matrix3::new(
            1.0 / f,
            0.0,
            -self.principal.x / f, //
            0.0,
            1.0 / f,
            -self.principal.y / f, //
            0.0,
            0.0,
            1.0,
        )
    }

    /// Camera center in the room frame.
    pub fn position(&self) -> Point3 {
        Point3::new(0.0, 0.0, self.height)
    }

    pub fn to_camera(&self, x: &Point3) -> Point3 {
        self.rotation * (x - self.position())
    }

    /// Perspective projection of a room point to a pixel.
    pub fn project(&self, x: &Point3) -> Result<Pixel, GeomError> {
        let pc = self.to_camera(x);
        self.project_camera(&pc)
    }

    pub fn project_camera(&self, pc: &Point3) -> Result<Pixel, GeomError> {
        if !(pc.z > 0.0) {
            return Err(GeomError::BehindCamera { depth: pc.z });
        }
        Ok(Pixel::new(self.focal * pc.x / pc.z + self.principal.x, self.focal * pc.y / pc.z + self.principal.y))
    }

    /// Viewing ray through a pixel, expressed in the room frame (unit length).
    pub fn pixel_ray(&self, p: &Pixel) -> Vector3<f64> {
        let d = Vector3::new((p.x - self.principal.x) / self.focal, (p.y - self.principal.y) / self.focal, 1.0);
        (self.rotation.transpose() * d).normalize()
    }

    /// Vanishing point of a room direction, signed: the point is approached
    /// when moving along `+dir` iff its `w` is positive.
    pub fn vanishing_point(&self, dir: &Vector3<f64>) -> HPoint2 {
        HPoint2::from_vector(self.intrinsics() * (self.rotation * dir))
    }

    /// The Manhattan vanishing points of the room `x`, `y` and `z` axes.
    pub fn manhattan_vps(&self) -> [HPoint2; 3] {
        [self.vanishing_point(&Vector3::x()), self.vanishing_point(&Vector3::y()), self.vanishing_point(&Vector3::z())]
    }

    /// Vertical vanishing point, signed by the upward direction.
    pub fn vertical_vp(&self) -> HPoint2 {
        self.vanishing_point(&Vector3::z())
    }

    /// Vanishing line of horizontal planes, normalized.
    pub fn horizon(&self) -> Vector3<f64> {
        let l = self.intrinsics_inv().transpose() * (self.rotation * Vector3::z());
        normalize_line(&l).unwrap_or(l)
    }

    /// Heading of the optical axis about the vertical, measured from `+y`
    /// towards `+x`.
    pub fn heading(&self) -> f64 {
        let fwd = self.rotation.transpose() * Vector3::z();
        fwd.x.atan2(fwd.y)
    }
}

/// Dense binary occupancy bitmap.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, words: vec![0; (width * height).div_ceil(64)] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    /// Out-of-bounds coordinates read as unset.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        let i = y * self.width + x;
        if v {
            self.words[i >> 6] |= 1 << (i & 63);
        } else {
            self.words[i >> 6] &= !(1 << (i & 63));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
            .map(move |i| (i % w, i / w))
        })
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.iter_set() {
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    /// Set pixels with at least one 4-neighbour outside the mask.
    pub fn boundary_pixels(&self) -> Vec<(usize, usize)> {
        self.iter_set()
            .filter(|&(x, y)| {
                let (x, y) = (x as i64, y as i64);
                !(self.get_signed(x - 1, y)
                    && self.get_signed(x + 1, y)
                    && self.get_signed(x, y - 1)
                    && self.get_signed(x, y + 1))
            })
            .collect()
    }

    fn check_dims(&self, other: &Mask) -> Result<(), GeomError> {
        if self.width != other.width || self.height != other.height {
            return Err(GeomError::DimensionMismatch { a: (self.width, self.height), b: (other.width, other.height) });
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize, GeomError> {
        self.check_dims(other)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum())
    }

    pub fn union_count(&self, other: &Mask) -> Result<usize, GeomError> {
        self.check_dims(other)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a | b).count_ones() as usize).sum())
    }

    pub fn union_with(&mut self, other: &Mask) -> Result<(), GeomError> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }
}

/// Intersection over union of two equally sized masks; 0 when both are empty.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64, GeomError> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Indexed triangle mesh in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn validate(&self) -> Result<(), GeomError> {
        let n = self.vertices.len() as u32;
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(GeomError::DegenerateInput("triangle index out of range"));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeomError::DegenerateInput("non-finite vertex"));
        }
        Ok(())
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> (Point3, Point3) {
        aabb_of(self.vertices.iter())
    }

    /// Axis-aligned box centered on the vertical axis, resting on `z = 0`.
    pub fn cuboid(sx: f64, sy: f64, sz: f64) -> Self {
        Self::cuboid_at(Point3::new(-sx / 2.0, -sy / 2.0, 0.0), Point3::new(sx / 2.0, sy / 2.0, sz))
    }

    pub fn cuboid_at(lo: Point3, hi: Point3) -> Self {
        let vertices = (0..8)
            .map(|i| {
                Point3::new(
                    if i & 1 == 0 { lo.x } else { hi.x },
                    if i & 2 == 0 { lo.y } else { hi.y },
                    if i & 4 == 0 { lo.z } else { hi.z },
                )
            })
            .collect();
        // outward-facing, counter-clockwise seen from outside
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3], // bottom
            [4, 5, 6],
            [5, 7, 6], // top
            [0, 1, 4],
            [1, 5, 4], // -y
            [2, 6, 3],
            [3, 6, 7], // +y
            [0, 4, 2],
            [2, 4, 6], // -x
            [1, 3, 5],
            [3, 7, 5], // +x
        ];
        Self { vertices, triangles }
    }

    /// Appends another mesh.
    pub fn merge(&mut self, other: &TriMesh) {
        let off = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
    }

    /// Translates the mesh so its footprint is centered on the origin and its
    /// lowest point rests on `z = 0`.
    pub fn floor_aligned(mut self) -> Self {
        let (lo, hi) = self.aabb();
        let shift = Point3::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, lo.z);
        for v in &mut self.vertices {
            *v -= shift;
        }
        self
    }
}

pub fn aabb_of<'a>(points: impl IntoIterator<Item = &'a Point3>) -> (Point3, Point3) {
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Rotation about the vertical axis.
pub fn yaw_rotation(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rebuilds the closest proper rotation to `m` (polar decomposition).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * vt;
    }
    r
}
