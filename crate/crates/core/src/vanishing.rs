//! Manhattan vanishing points and camera calibration from line segments.
//!
//! Lines are clustered to the three orthogonal vanishing points, each point
//! is re-estimated as the smallest eigenvector of the length-weighted line
//! scatter matrix, and the camera (focal length and rotation) is rebuilt from
//! the refreshed points. The two steps alternate until the mean point-line
//! residual settles.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{nearest_rotation, CameraModel, HPoint2, ImageDims, LineSeg2, Pixel};

pub const DEFAULT_ANGLE_THRESHOLD_DEG: f64 = 4.0;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const DEFAULT_CONVERGENCE_PX: f64 = 1e-4;
/// Number of longest segments whose pairwise intersections seed the search.
pub const SEED_SEGMENTS: usize = 40;
/// Camera height assumed until the room layout fixes the metric scale.
pub const PROVISIONAL_CAMERA_HEIGHT: f64 = 1.5;

const SEED_POOL: usize = 12;
const SEED_ATTEMPTS: usize = 24;
/// Pool entries closer than this (under a nominal focal length) are one
/// direction seen through noisy segments.
const SEED_SEPARATION_DEG: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("cluster is degenerate: {0}")]
    DegenerateCluster(&'static str),
    #[error("no real focal length is consistent with the vanishing points")]
    NoFocalSolution,
    #[error("calibration failed: {0}")]
    CalibrationFailed(&'static str),
}

/// Lines that (nearly) pass through one vanishing point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpCluster {
    pub vp: HPoint2,
    pub members: Vec<LineSeg2>,
}

impl VpCluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: [VpCluster; 3],
    pub outliers: Vec<LineSeg2>,
}

impl Clustering {
    pub fn inlier_count(&self) -> usize {
        self.clusters.iter().map(VpCluster::len).sum()
    }

    pub fn inlier_length(&self) -> f64 {
        self.clusters.iter().flat_map(|c| &c.members).map(|l| l.length).sum()
    }

    /// Mean distance of segment endpoints to the line joining the segment
    /// midpoint with its vanishing point, in pixels.
    pub fn mean_residual(&self) -> f64 {
        let (sum, n) = self
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |l| 0.5 * l.length * consistency_angle(l, &c.vp).sin()))
            .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        if n == 0 {
            f64::INFINITY
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Vanishing points of the room `x`, `y` and `z` axes.
    pub vps: [HPoint2; 3],
    pub camera: CameraModel,
    /// Mean point-line distance over clustered lines, pixels.
    pub residual: f64,
    pub iterations: usize,
    pub clustering: Clustering,
}

/// Angle in `[0, π/2]` between a segment and the direction from its
/// midpoint to `vp`.
pub fn consistency_angle(line: &LineSeg2, vp: &HPoint2) -> f64 {
    let d = vp.direction_from(&line.midpoint());
    let s = line.direction();
    let dn = d.norm();
    if dn < 1e-12 * (vp.w.abs().max(1e-300)) || dn == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let cross = (s.x * d.y - s.y * d.x).abs();
    let dot = s.dot(&d).abs();
    cross.atan2(dot)
}

/// Assigns each line to the vanishing point it is most consistent with, or
/// to the outliers when no point is within `angle_thresh_deg`.
pub fn cluster_lines(lines: &[LineSeg2], vps: &[HPoint2; 3], angle_thresh_deg: f64) -> Clustering {
    let thresh = angle_thresh_deg.to_radians();
    let mut clusters = vps.map(|vp| VpCluster { vp, members: Vec::new() });
    let mut outliers = Vec::new();
    for line in lines {
        let best =
            vps.iter().enumerate().map(|(i, vp)| (i, consistency_angle(line, vp))).min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, a)) if a <= thresh => clusters[i].members.push(*line),
            _ => outliers.push(*line),
        }
    }
    Clustering { clusters, outliers }
}

/// Length-weighted scatter of the member lines seen in a frame centred on
/// `origin` and scaled down by `scale`.
fn scatter_matrix(members: &[LineSeg2], origin: &Pixel, scale: f64) -> Matrix3<f64> {
    members.iter().fold(Matrix3::zeros(), |acc, l| {
        let m = Vector3::new(l.line.x, l.line.y, l.line.dot(&Vector3::new(origin.x, origin.y, 1.0)) / scale);
        acc + m * m.transpose() * l.length
    })
}

/// Midpoint centroid and mean midpoint spread of a cluster (at least 1 px).
fn cluster_frame(members: &[LineSeg2]) -> (Pixel, f64) {
    let n = members.len() as f64;
    let c = members.iter().fold(Pixel::zeros(), |a, l| a + l.midpoint()) / n;
    let s = members.iter().map(|l| (l.midpoint() - c).norm()).sum::<f64>() / n;
    (c, s.max(1.0))
}

/// Weighted residual `εᵀε` of a cluster for a candidate point, with the
/// point at unit norm in a frame centred on it and scaled by the cluster
/// spread. For a finite point this is the length-weighted squared pixel
/// distance over the squared spread.
pub fn cluster_residual(cluster: &VpCluster, vp: &HPoint2) -> f64 {
    let (_, scale) = cluster_frame(&cluster.members);
    match vp.to_pixel() {
        Some(p) => {
            cluster.members.iter().map(|l| l.length * (l.line.dot(&Vector3::new(p.x, p.y, 1.0)) / scale).powi(2)).sum()
        }
        None => {
            let d = Vector3::new(vp.x, vp.y, 0.0).normalize();
            cluster.members.iter().map(|l| l.length * l.line.dot(&d).powi(2)).sum()
        }
    }
}

/// Smallest eigenvector of the scatter in the frame at `origin`, mapped back
/// to the image.
fn smallest_eigenvector(members: &[LineSeg2], origin: &Pixel, scale: f64) -> Result<HPoint2, CalibrationError> {
    let eig = SymmetricEigen::new(scatter_matrix(members, origin, scale));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, hi) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(CalibrationError::DegenerateCluster("lines do not span two directions"));
    }
    let v = eig.eigenvectors.column(order[0]);
    Ok(HPoint2::new(scale * v[0] + origin.x * v[2], scale * v[1] + origin.y * v[2], v[2]).normalized())
}

const REFIT_ROUNDS: usize = 20;
const RECENTRE_LIMIT: f64 = 1e6;

/// Re-estimates the vanishing point of a cluster as the eigenvector of the
/// smallest eigenvalue of `LᵀL`.
///
/// The system is solved in a frame centred on the current estimate and
/// re-centred on each solution until it stops moving; in raw pixel
/// coordinates the unit-norm solution drifts towards distant points.
/// Distinct parallel members meet at infinity and yield a point with `w = 0`;
/// only a rank-deficient system (fewer than two distinct lines) is rejected.
pub fn refit_vp(cluster: &VpCluster) -> Result<HPoint2, CalibrationError> {
    if cluster.len() < 2 {
        return Err(CalibrationError::DegenerateCluster("fewer than two lines"));
    }
    let (centroid, scale) = cluster_frame(&cluster.members);
    // far-off points are left uncentred; the frame would lose precision there
    let usable = |p: &Pixel| (p - centroid).norm() < RECENTRE_LIMIT * scale;
    let mut origin = cluster.vp.to_pixel().filter(usable).unwrap_or(centroid);
    let mut best: Option<(f64, HPoint2)> = None;
    for _ in 0..REFIT_ROUNDS {
        let v = smallest_eigenvector(&cluster.members, &origin, scale)?;
        let r = cluster_residual(cluster, &v);
        if best.as_ref().map_or(true, |(b, _)| r < *b) {
            best = Some((r, v));
        }
        match v.to_pixel() {
            Some(p) if usable(&p) && (p - origin).norm() > 1e-9 * scale => origin = p,
            _ => break,
        }
    }
    Ok(best.expect("at least one round").1)
}

/// Focal length squared implied by two orthogonal vanishing points, if real.
fn focal_sq_from_pair(a: &HPoint2, b: &HPoint2, c: &Pixel, max_dist: f64) -> Option<(f64, f64)> {
    if !a.is_finite_within(max_dist) || !b.is_finite_within(max_dist) {
        return None;
    }
    let da = a.direction_from(c) / a.w;
    let db = b.direction_from(c) / b.w;
    let f2 = -da.dot(&db);
    (f2 > 0.0 && f2.is_finite()).then(|| {
        let spread = da.norm() + db.norm();
        (f2, 1.0 / (spread * spread))
    })
}

/// Rebuilds intrinsics (principal point at the image center) and the
/// room-to-camera rotation from three Manhattan vanishing points.
///
/// The returned camera labels its axes canonically: `z` is the vanishing
/// direction closest to the image vertical (pointing up), `y` the remaining
/// direction closest to the optical axis (pointing forward) and `x = y × z`.
/// Its height is provisional.
pub fn camera_from_vps(vps: &[HPoint2; 3], image: ImageDims) -> Result<CameraModel, CalibrationError> {
    let c = image.center();
    let max_dist = 1e6 * image.width.max(image.height) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if let Some((f2, w)) = focal_sq_from_pair(&vps[i], &vps[j], &c, max_dist) {
            num += f2 * w;
            den += w;
        }
    }
    if den == 0.0 {
        return Err(CalibrationError::NoFocalSolution);
    }
    let focal = (num / den).sqrt();
    camera_from_vps_with_focal(vps, image, focal)
}

fn camera_from_vps_with_focal(
    vps: &[HPoint2; 3],
    image: ImageDims,
    focal: f64,
) -> Result<CameraModel, CalibrationError> {
    let c = image.center();
    let dirs: Vec<Vector3<f64>> = vps
        .iter()
        .map(|v| {
            let d = v.direction_from(&c);
            Vector3::new(d.x / focal, d.y / focal, v.w)
        })
        .collect();
    if dirs.iter().any(|d| !(d.norm() > 0.0) || !d.iter().all(|x| x.is_finite())) {
        return Err(CalibrationError::CalibrationFailed("invalid vanishing direction"));
    }
    let dirs: Vec<Vector3<f64>> = dirs.into_iter().map(|d| d.normalize()).collect();
    let vertical = (0..3).max_by(|&a, &b| dirs[a].y.abs().total_cmp(&dirs[b].y.abs())).unwrap();
    let rest: Vec<usize> = (0..3).filter(|&i| i != vertical).collect();
    let forward = if dirs[rest[0]].z.abs() >= dirs[rest[1]].z.abs() { rest[0] } else { rest[1] };
    let lateral = if forward == rest[0] { rest[1] } else { rest[0] };
    let up = if dirs[vertical].y < 0.0 { dirs[vertical] } else { -dirs[vertical] };
    let fwd = if dirs[forward].z > 0.0 { dirs[forward] } else { -dirs[forward] };
    let side = if dirs[lateral].dot(&fwd.cross(&up)) > 0.0 { dirs[lateral] } else { -dirs[lateral] };
    let m = Matrix3::from_columns(&[side, fwd, up]);
    let rotation = nearest_rotation(&m);
    if (rotation.determinant() - 1.0).abs() > 1e-9 {
        return Err(CalibrationError::CalibrationFailed("rotation is not proper"));
    }
    Ok(CameraModel::new(focal, c, rotation, PROVISIONAL_CAMERA_HEIGHT))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub angle_thresh_deg: f64,
    pub max_iterations: usize,
    pub convergence_px: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            angle_thresh_deg: DEFAULT_ANGLE_THRESHOLD_DEG,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            convergence_px: DEFAULT_CONVERGENCE_PX,
        }
    }
}

/// Alternates clustering, per-cluster refits and camera updates.
///
/// Without `init`, seeds come from a scored search over intersections of the
/// longest segments; seeds are tried in rank order.
pub fn joint_calibrate(
    lines: &[LineSeg2],
    image: ImageDims,
    init: Option<&[HPoint2; 3]>,
    params: &CalibrationParams,
) -> Result<CalibrationResult, CalibrationError> {
    if lines.len() < 6 {
        return Err(CalibrationError::CalibrationFailed("fewer than six line segments"));
    }
    let seeds = match init {
        Some(vps) => vec![camera_from_vps(vps, image)?],
        None => seed_cameras(lines, image, params.angle_thresh_deg),
    };
    // every seed is refined; the lowest robust score wins, then the
    // better-ranked seed
    let mut best: Option<(f64, CalibrationResult)> = None;
    for cam in seeds.into_iter().take(SEED_ATTEMPTS) {
        let r = iterate(lines, image, cam, params);
        if r.clustering.clusters.iter().filter(|c| c.len() >= 2).count() < 2 {
            continue;
        }
        let score = robust_score(lines, &r.camera);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, r));
        }
    }
    best.map(|(_, r)| r).ok_or(CalibrationError::CalibrationFailed("no seed explains two line directions"))
}

/// `Σ len · ρ(r)` over all lines, `r` the endpoint distance to the nearest
/// of the camera's vanishing points and `ρ` the bounded Geman-McClure loss.
/// Lines no point explains cost about their length.
pub fn robust_score(lines: &[LineSeg2], camera: &CameraModel) -> f64 {
    let s: f64 = score_terms(lines, camera, SCORE_SCALE_PX).iter().map(|r| r * r).sum();
    if s.is_finite() {
        s
    } else {
        lines.iter().map(|l| l.length).sum()
    }
}

fn iterate(lines: &[LineSeg2], image: ImageDims, seed: CameraModel, params: &CalibrationParams) -> CalibrationResult {
    let mut camera = seed;
    let mut clustering = cluster_lines(lines, &camera.manhattan_vps(), params.angle_thresh_deg);
    let mut residual = clustering.mean_residual();
    let mut iterations = 0;
    for _ in 0..params.max_iterations {
        iterations += 1;
        let refit: [HPoint2; 3] = std::array::from_fn(|i| {
            let c = &clustering.clusters[i];
            refit_vp(c).unwrap_or(c.vp)
        });
        let candidate = match camera_from_vps(&refit, image) {
            Ok(c) => c,
            Err(_) => break,
        };
        let cand_clustering = cluster_lines(lines, &candidate.manhattan_vps(), params.angle_thresh_deg);
        let cand_residual = cand_clustering.mean_residual();
        if !(cand_residual <= residual) {
            break;
        }
        let change = residual - cand_residual;
        camera = candidate;
        clustering = cand_clustering;
        residual = cand_residual;
        if !(change >= params.convergence_px) {
            break;
        }
    }
    let (camera, clustering) = polish(lines, image, camera, clustering, params);
    let residual = clustering.mean_residual();
    CalibrationResult { vps: camera.manhattan_vps(), camera, residual, iterations, clustering }
}

/// Signed distance of a segment endpoint from the line joining the segment
/// midpoint with `vp`.
fn endpoint_residual(l: &LineSeg2, vp: &HPoint2) -> f64 {
    let d = vp.direction_from(&l.midpoint());
    let n = d.norm();
    if !(n > 0.0) {
        return 0.5 * l.length;
    }
    let (s, d) = (l.direction(), d / n);
    let cross = 0.5 * (s.x * d.y - s.y * d.x);
    if s.dot(&d) < 0.0 {
        -cross
    } else {
        cross
    }
}

fn perturbed(camera: &CameraModel, x: &[f64; 4]) -> CameraModel {
    let spin = nalgebra::Rotation3::new(Vector3::new(x[1], x[2], x[3])).into_inner();
    CameraModel::new(camera.focal * x[0].exp(), camera.principal, spin * camera.rotation, camera.height)
}

/// Per-line terms of [`robust_score`]: `√len · r / √(r² + c²)` for the
/// endpoint distance `r` to the nearest vanishing point.
fn score_terms(lines: &[LineSeg2], camera: &CameraModel, scale: f64) -> Vec<f64> {
    let vps = camera.manhattan_vps();
    lines
        .iter()
        .map(|l| {
            let r =
                vps.iter().map(|vp| endpoint_residual(l, vp)).min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
            l.length.sqrt() * r / r.hypot(scale)
        })
        .collect()
}

const POLISH_STEPS: usize = 60;
const POLISH_SCALES_PX: [f64; 3] = [8.0, 4.0, SCORE_SCALE_PX];
/// Endpoint distance at which a line is half explained.
const SCORE_SCALE_PX: f64 = 2.0;

/// Levenberg-Marquardt refinement of focal length and rotation minimizing
/// [`robust_score`] over all lines, followed by re-clustering. Keeps the
/// input when nothing improves.
fn polish(
    lines: &[LineSeg2],
    image: ImageDims,
    camera: CameraModel,
    clustering: Clustering,
    params: &CalibrationParams,
) -> (CameraModel, Clustering) {
    let mut cam = camera.clone();
    // coarse scales first widen the basin around the seed
    for scale in POLISH_SCALES_PX {
        cam = levenberg_marquardt(lines, image, cam, scale);
    }
    // large steps may rotate one axis onto another; relabel canonically
    if let Ok(c) = camera_from_vps_with_focal(&cam.manhattan_vps(), image, cam.focal) {
        cam = c;
    }
    if robust_score(lines, &cam) < robust_score(lines, &camera) {
        let clus = cluster_lines(lines, &cam.manhattan_vps(), params.angle_thresh_deg);
        (cam, clus)
    } else {
        (camera, clustering)
    }
}

fn levenberg_marquardt(lines: &[LineSeg2], image: ImageDims, mut cam: CameraModel, scale: f64) -> CameraModel {
    let cost = |cam: &CameraModel| score_terms(lines, cam, scale).iter().map(|r| r * r).sum::<f64>();
    let mut current = cost(&cam);
    let mut lambda = 1e-3;
    for _ in 0..POLISH_STEPS {
        let r0 = score_terms(lines, &cam, scale);
        let h = 1e-7;
        let jac: Vec<Vec<f64>> = (0..4)
            .map(|k| {
                let mut xp = [0.0; 4];
                let mut xm = [0.0; 4];
                xp[k] = h;
                xm[k] = -h;
                let (rp, rm) = (
                    score_terms(lines, &perturbed(&cam, &xp), scale),
                    score_terms(lines, &perturbed(&cam, &xm), scale),
                );
                rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let jtj = nalgebra::Matrix4::from_fn(|i, j| jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum::<f64>());
        let jtr = nalgebra::Vector4::from_fn(|i, _| jac[i].iter().zip(&r0).map(|(a, b)| a * b).sum::<f64>());
        let mut improved = false;
        while lambda < 1e8 {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else { break };
            let trial = perturbed(&cam, &[step[0], step[1], step[2], step[3]]);
            let c = cost(&trial);
            if c < current && plausible_focal(&trial, image) {
                improved = current - c > 1e-12 * current;
                cam = trial;
                current = c;
                lambda = (lambda * 0.3).max(1e-9);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    cam
}

/// Unit direction of a vanishing point under a nominal focal length, used to
/// compare candidate points independently of their pixel distance.
fn nominal_direction(vp: &HPoint2, image: ImageDims) -> Vector3<f64> {
    let f0 = image.width.max(image.height) as f64;
    let d = vp.direction_from(&image.center());
    Vector3::new(d.x / f0, d.y / f0, vp.w).normalize()
}

fn support_score(lines: &[LineSeg2], vp: &HPoint2, thresh: f64) -> f64 {
    lines.iter().filter(|l| consistency_angle(l, vp) <= thresh).map(|l| l.length).sum()
}

#[derive(Debug, Clone)]
struct ScoredSeed {
    score: f64,
    residual: f64,
    key: (usize, usize, usize),
    camera: CameraModel,
}

fn plausible_focal(cam: &CameraModel, image: ImageDims) -> bool {
    let max_dim = image.width.max(image.height) as f64;
    cam.focal > 0.2 * max_dim && cam.focal < 10.0 * max_dim && cam.rotation.iter().all(|x| x.is_finite())
}

/// Candidate cameras ranked by [`robust_score`], then by lower residual,
/// then by candidate indices.
pub fn seed_cameras(lines: &[LineSeg2], image: ImageDims, angle_thresh_deg: f64) -> Vec<CameraModel> {
    let thresh = angle_thresh_deg.to_radians();
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&a, &b| lines[b].length.total_cmp(&lines[a].length).then(a.cmp(&b)));
    order.truncate(SEED_SEGMENTS);

    let mut candidates: Vec<(f64, usize, usize, HPoint2)> = Vec::new();
    for (ai, &a) in order.iter().enumerate() {
        for &b in &order[ai + 1..] {
            let v = lines[a].line.cross(&lines[b].line);
            if !(v.norm() > 1e-12) {
                continue;
            }
            let vp = HPoint2::from_vector(v).normalized();
            candidates.push((0.0, a.min(b), a.max(b), vp));
        }
    }
    candidates.par_iter_mut().for_each(|c| c.0 = support_score(lines, &c.3, thresh));
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut pool: Vec<HPoint2> = Vec::new();
    let mut pool_dirs: Vec<Vector3<f64>> = Vec::new();
    for (_, _, _, vp) in &candidates {
        let d = nominal_direction(vp, image);
        if pool_dirs.iter().all(|p| p.dot(&d).abs() < SEED_SEPARATION_DEG.to_radians().cos()) {
            pool.push(*vp);
            pool_dirs.push(d);
            if pool.len() == SEED_POOL {
                break;
            }
        }
    }

    let max_dim = image.width.max(image.height) as f64;
    let plausible = |cam: &CameraModel| plausible_focal(cam, image);
    let mut proposals: Vec<((usize, usize, usize), CameraModel)> = Vec::new();
    let n = pool.len();
    for i in 0..n {
        for j in i + 1..n {
            if let Some((f2, _)) = focal_sq_from_pair(&pool[i], &pool[j], &image.center(), 1e6 * max_dim) {
                let focal = f2.sqrt();
                let k_inv = |v: &HPoint2| {
                    let d = v.direction_from(&image.center());
                    Vector3::new(d.x / focal, d.y / focal, v.w)
                };
                let third = k_inv(&pool[i]).cross(&k_inv(&pool[j]));
                let vp3 = HPoint2::new(
                    focal * third.x + image.center().x * third.z,
                    focal * third.y + image.center().y * third.z,
                    third.z,
                );
                if let Ok(cam) = camera_from_vps_with_focal(&[pool[i], pool[j], vp3], image, focal) {
                    proposals.push(((i, j, usize::MAX), cam));
                }
            }
            for k in j + 1..n {
                if let Ok(cam) = camera_from_vps(&[pool[i], pool[j], pool[k]], image) {
                    proposals.push(((i, j, k), cam));
                }
            }
        }
    }
    let mut scored: Vec<ScoredSeed> = proposals
        .into_par_iter()
        .filter(|(_, cam)| plausible(cam))
        .map(|(key, camera)| {
            let clustering = cluster_lines(lines, &camera.manhattan_vps(), angle_thresh_deg);
            ScoredSeed { score: robust_score(lines, &camera), residual: clustering.mean_residual(), key, camera }
        })
        .collect();
    scored.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.residual.total_cmp(&b.residual)).then(a.key.cmp(&b.key)));
    scored.into_iter().map(|s| s.camera).collect()
}

/// Angle between corresponding room axes of two cameras, in degrees; the
/// larger of the three axis errors.
pub fn axis_angle_error_deg(a: &CameraModel, b: &CameraModel) -> f64 {
    (0..3)
        .map(|i| {
            let u = a.rotation.column(i);
            let v = b.rotation.column(i);
            u.dot(&v).abs().min(1.0).acos().to_degrees()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{line_through, Point3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn px(x: f64, y: f64) -> Pixel {
        Pixel::new(x, y)
    }

    fn dims() -> ImageDims {
        ImageDims::new(640, 480)
    }

    fn camera() -> CameraModel {
        CameraModel::from_angles(520.0, dims().center(), 0.35, 0.2, 0.03, 1.4)
    }

    /// Projected edges of an axis-aligned box, labelled by room axis.
    fn box_edges(cam: &CameraModel) -> Vec<(usize, LineSeg2)> {
        let mut out = Vec::new();
        let lo = Point3::new(-2.0, 3.0, 0.0);
        let hi = Point3::new(1.5, 6.0, 2.5);
        for axis in 0..3 {
            for corner in 0..4 {
                let mut a = lo;
                let mut b = lo;
                let others: Vec<usize> = (0..3).filter(|&i| i != axis).collect();
                for (bit, &o) in others.iter().enumerate() {
                    let v = if corner >> bit & 1 == 1 { hi[o] } else { lo[o] };
                    a[o] = v;
                    b[o] = v;
                }
                a[axis] = lo[axis];
                b[axis] = hi[axis];
                if let (Ok(p), Ok(q)) = (cam.project(&a), cam.project(&b)) {
                    out.push((axis, line_through(p, q).unwrap()));
                }
            }
        }
        out
    }

    #[test]
    fn concurrent_lines_fall_in_one_cluster() {
        let vp = px(300.0, -800.0);
        let lines: Vec<LineSeg2> = (0..10)
            .map(|i| {
                let p = px(100.0 + 40.0 * i as f64, 400.0);
                line_through(p, p + (vp - p) * 0.2).unwrap()
            })
            .collect();
        let vps = [HPoint2::from_pixel(vp), HPoint2::new(1.0, 0.0, 0.0), HPoint2::from_pixel(px(5000.0, 300.0))];
        let c = cluster_lines(&lines, &vps, 5.0);
        assert_eq!(c.clusters[0].len(), 10);
        assert!(c.clusters[1].is_empty() && c.clusters[2].is_empty() && c.outliers.is_empty());
    }

    #[test]
    fn box_edges_cluster_by_axis() {
        let cam = camera();
        let edges = box_edges(&cam);
        let c = cluster_lines(&edges.iter().map(|e| e.1).collect::<Vec<_>>(), &cam.manhattan_vps(), 4.0);
        for (axis, e) in &edges {
            assert!(c.clusters[*axis].members.contains(e));
        }
        assert!(c.outliers.is_empty());
    }

    #[test]
    fn inconsistent_line_is_outlier() {
        let vps = [HPoint2::new(1.0, 0.0, 0.0), HPoint2::new(0.0, 1.0, 0.0), HPoint2::new(1.0, 1.0, 0.0)];
        let l = line_through(px(0.0, 0.0), px(1.0, -1.0)).unwrap();
        let c = cluster_lines(&[l, l], &vps, 4.0);
        assert_eq!(c.outliers.len(), 2);
    }

    #[test]
    fn refit_two_lines_meets_at_intersection() {
        let members = vec![
            line_through(px(0.0, 0.0), px(50.0, 100.0)).unwrap(),
            line_through(px(300.0, 0.0), px(200.0, 100.0)).unwrap(),
        ];
        let vp = refit_vp(&VpCluster { vp: HPoint2::new(0.0, 0.0, 1.0), members }).unwrap();
        let p = vp.to_pixel().unwrap();
        assert!((p - px(100.0, 200.0)).norm() < 1e-9, "{p:?}");
    }

    #[test]
    fn refit_noiseless_cluster_has_zero_residual() {
        let vp = px(900.0, 150.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let members: Vec<LineSeg2> = (0..50)
            .map(|_| {
                let p = px(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
                line_through(p, p + (vp - p) * rng.gen_range(0.05..0.3)).unwrap()
            })
            .collect();
        let cluster = VpCluster { vp: HPoint2::from_pixel(px(880.0, 160.0)), members };
        let fit = refit_vp(&cluster).unwrap();
        assert!(cluster_residual(&cluster, &fit) < 1e-9);
        assert!((fit.to_pixel().unwrap() - vp).norm() < 1e-6);
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn refit_noisy_cluster_matches_pairwise_median() {
        let vp = px(250.0, 700.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = rand_distr::Normal::new(0.0, 0.5).unwrap();
        let members: Vec<LineSeg2> = (0..50)
            .map(|_| {
                let p = px(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
                let q = p + (vp - p) * rng.gen_range(0.3..0.6);
                let j = |r: &mut ChaCha8Rng| px(r.sample(noise), r.sample(noise));
                line_through(p + j(&mut rng), q + j(&mut rng)).unwrap()
            })
            .collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                if let Some(p) = crate::geom::intersect(&members[i].line, &members[j].line) {
                    xs.push(p.x);
                    ys.push(p.y);
                }
            }
        }
        let oracle = px(median(xs), median(ys));
        let cluster = VpCluster { vp: HPoint2::from_pixel(vp), members };
        let fit = refit_vp(&cluster).unwrap();
        assert!(cluster_residual(&cluster, &fit) <= cluster_residual(&cluster, &cluster.vp));
        let got = fit.to_pixel().unwrap();
        assert!((got - oracle).norm() < 2.0, "{got:?} {oracle:?}");
        assert!((got - vp).norm() < 2.0);
    }

    #[test]
    fn refit_rejects_collinear_members() {
        let l = line_through(px(0.0, 0.0), px(10.0, 3.0)).unwrap();
        let r = refit_vp(&VpCluster { vp: HPoint2::new(0.0, 0.0, 1.0), members: vec![l, l, l] });
        assert!(matches!(r, Err(CalibrationError::DegenerateCluster(_))));
    }

    #[test]
    fn refit_parallel_members_meet_at_infinity() {
        let members = vec![
            line_through(px(0.0, 0.0), px(10.0, 0.0)).unwrap(),
            line_through(px(0.0, 5.0), px(10.0, 5.0)).unwrap(),
        ];
        let vp = refit_vp(&VpCluster { vp: HPoint2::new(0.0, 0.0, 1.0), members }).unwrap();
        assert!(vp.w.abs() < 1e-12 && vp.y.abs() < 1e-12);
    }

    #[test]
    fn camera_recovered_from_generated_vps() {
        let cam = camera();
        let est = camera_from_vps(&cam.manhattan_vps(), dims()).unwrap();
        assert!((est.focal - cam.focal).abs() / cam.focal < 1e-6);
        assert!((est.rotation - cam.rotation).norm() < 1e-6);
        let ortho = est.rotation.transpose() * est.rotation - Matrix3::identity();
        assert!(ortho.norm() < 1e-9);
    }

    #[test]
    fn camera_recovered_when_x_vp_at_infinity() {
        let cam = CameraModel::from_angles(480.0, dims().center(), 0.0, 0.25, 0.0, 1.5);
        let vps = cam.manhattan_vps();
        assert!(vps[0].w.abs() < 1e-12);
        let est = camera_from_vps(&vps, dims()).unwrap();
        assert!((est.focal - 480.0).abs() < 1e-6);
    }

    #[test]
    fn same_side_vps_have_no_focal() {
        let c = dims().center();
        let vps = [
            HPoint2::from_pixel(c + px(200.0, 10.0)),
            HPoint2::from_pixel(c + px(300.0, 50.0)),
            HPoint2::new(1.0, 0.0, 0.0),
        ];
        assert_eq!(camera_from_vps(&vps, dims()), Err(CalibrationError::NoFocalSolution));
    }

    #[test]
    fn joint_calibration_from_box_edges() {
        let cam = camera();
        let lines: Vec<LineSeg2> = box_edges(&cam).into_iter().map(|e| e.1).collect();
        let res = joint_calibrate(&lines, dims(), None, &CalibrationParams::default()).unwrap();
        assert!(axis_angle_error_deg(&res.camera, &cam) < 0.05);
        assert!((res.camera.focal - cam.focal).abs() / cam.focal < 0.005);
    }

    #[test]
    fn joint_calibration_fixed_point_converges_immediately() {
        let cam = camera();
        let lines: Vec<LineSeg2> = box_edges(&cam).into_iter().map(|e| e.1).collect();
        let vps = cam.manhattan_vps();
        let res = joint_calibrate(&lines, dims(), Some(&vps), &CalibrationParams::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!((res.camera.rotation - cam.rotation).norm() < 1e-8);
        assert!((res.camera.focal - cam.focal).abs() < 1e-6);
    }
}
