//! Bound-constrained derivative-free maximization on the unit box.
//!
//! Every trial point is passed through the caller's feasibility projection
//! before it is evaluated, and a point replaces the incumbent only when it is
//! strictly better, so the recorded trace never decreases.

use serde::{Deserialize, Serialize};

pub const INITIAL_RADIUS: f64 = 0.1;
pub const MIN_RADIUS: f64 = 1e-4;
const MAX_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Incumbent value before the first iteration and after each one.
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub evaluations: usize,
}

pub trait LocalOptimizer: Sync {
    fn maximize(
        &self,
        f: &dyn Fn(&[f64]) -> f64,
        project: &dyn Fn(&[f64]) -> Vec<f64>,
        x0: &[f64],
        iterations: usize,
    ) -> OptimizeOutcome;
}

struct Evaluator<'a> {
    f: &'a dyn Fn(&[f64]) -> f64,
    project: &'a dyn Fn(&[f64]) -> Vec<f64>,
    count: usize,
}

impl Evaluator<'_> {
    fn eval(&mut self, x: &[f64]) -> (Vec<f64>, f64) {
        let clipped: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let y = (self.project)(&clipped);
        self.count += 1;
        let v = (self.f)(&y);
        (y, v)
    }
}

/// Trust-region method on a separable quadratic model interpolating `2n+1`
/// points around the incumbent (the initial model of BOBYQA).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionQuadratic {
    pub initial_radius: f64,
    pub min_radius: f64,
}

impl Default for TrustRegionQuadratic {
    fn default() -> Self {
        Self { initial_radius: INITIAL_RADIUS, min_radius: MIN_RADIUS }
    }
}

struct Model {
    g: Vec<f64>,
    h: Vec<f64>,
    /// Best interpolation point seen while building the model.
    best: Option<(Vec<f64>, f64)>,
}

/// Quadratic through (0, f0), (a, fa), (b, fb): returns slope and curvature at 0.
fn fit_1d(f0: f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
    let da = (fa - f0) / a;
    let db = (fb - f0) / b;
    let h = 2.0 * (da - db) / (a - b);
    (da - 0.5 * h * a, h)
}

fn build_model(ev: &mut Evaluator, x: &[f64], fx: f64, delta: f64) -> Model {
    let n = x.len();
    let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for i in 0..n {
        // Offsets stay inside the unit box, as in the initial BOBYQA set.
        let (a, b) = if x[i] + delta > 1.0 {
            (-delta, -2.0 * delta)
        } else if x[i] - delta < 0.0 {
            (delta, 2.0 * delta)
        } else {
            (delta, -delta)
        };
        let mut fs = [0.0; 2];
        for (k, off) in [a, b].into_iter().enumerate() {
            let mut t = x.to_vec();
            t[i] += off;
            let (y, v) = ev.eval(&t);
            fs[k] = v;
            if v > fx && best.as_ref().map_or(true, |(_, bv)| v > *bv) {
                best = Some((y, v));
            }
        }
        (g[i], h[i]) = fit_1d(fx, a, fs[0], b, fs[1]);
    }
    Model { g, h, best }
}

fn model_value(m: &Model, d: &[f64]) -> f64 {
    d.iter().enumerate().map(|(i, di)| m.g[i] * di + 0.5 * m.h[i] * di * di).sum()
}

fn clip_step(x: &[f64], d: &mut [f64], delta: f64) {
    for (di, xi) in d.iter_mut().zip(x) {
        *di = di.clamp(-xi, 1.0 - xi);
    }
    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > delta {
        d.iter_mut().for_each(|v| *v *= delta / n);
    }
}

/// Best of the clipped Newton step and the Cauchy step.
fn trust_step(m: &Model, x: &[f64], delta: f64) -> (Vec<f64>, f64) {
    let gn = m.g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut newton: Vec<f64> =
        m.g.iter().zip(&m.h).map(|(g, h)| if *h < 0.0 { -g / h } else { delta * g.signum() }).collect();
    clip_step(x, &mut newton, delta);
    let mut best = (newton.clone(), model_value(m, &newton));
    if gn > 0.0 {
        let curv: f64 = m.g.iter().zip(&m.h).map(|(g, h)| h * g * g).sum::<f64>() / (gn * gn);
        let t = if curv < 0.0 { (-gn / curv).min(delta) } else { delta };
        let mut cauchy: Vec<f64> = m.g.iter().map(|g| g / gn * t).collect();
        clip_step(x, &mut cauchy, delta);
        let v = model_value(m, &cauchy);
        if v > best.1 {
            best = (cauchy, v);
        }
    }
    best
}

impl LocalOptimizer for TrustRegionQuadratic {
    fn maximize(
        &self,
        f: &dyn Fn(&[f64]) -> f64,
        project: &dyn Fn(&[f64]) -> Vec<f64>,
        x0: &[f64],
        iterations: usize,
    ) -> OptimizeOutcome {
        let mut ev = Evaluator { f, project, count: 0 };
        let (mut x, mut fx) = ev.eval(x0);
        let mut trace = vec![fx];
        let mut accepted = 0;
        let mut delta = self.initial_radius;
        for _ in 0..iterations {
            if delta < self.min_radius {
                trace.push(fx);
                continue;
            }
            let model = build_model(&mut ev, &x, fx, delta);
            let (d, pred) = trust_step(&model, &x, delta);
            let mut moved = false;
            if pred > 1e-12 {
                let t: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
                let (y, fy) = ev.eval(&t);
                if fy > fx && model.best.as_ref().map_or(true, |(_, bv)| fy >= *bv) {
                    let ratio = (fy - fx) / pred;
                    let step = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if ratio > 0.7 && step > 0.9 * delta {
                        delta = (2.0 * delta).min(MAX_RADIUS);
                    }
                    (x, fx) = (y, fy);
                    moved = true;
                }
            }
            if !moved {
                if let Some((y, v)) = model.best {
                    (x, fx) = (y, v);
                    moved = true;
                } else {
                    delta *= 0.5;
                }
            }
            if moved {
                accepted += 1;
            }
            trace.push(fx);
        }
        OptimizeOutcome { x, value: fx, trace, accepted, evaluations: ev.count }
    }
}

/// Compass search with step halving; the fallback local optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateSearch {
    pub initial_radius: f64,
    pub min_radius: f64,
}

impl Default for CoordinateSearch {
    fn default() -> Self {
        Self { initial_radius: INITIAL_RADIUS, min_radius: MIN_RADIUS }
    }
}

impl LocalOptimizer for CoordinateSearch {
    fn maximize(
        &self,
        f: &dyn Fn(&[f64]) -> f64,
        project: &dyn Fn(&[f64]) -> Vec<f64>,
        x0: &[f64],
        iterations: usize,
    ) -> OptimizeOutcome {
        let mut ev = Evaluator { f, project, count: 0 };
        let (mut x, mut fx) = ev.eval(x0);
        let mut trace = vec![fx];
        let mut accepted = 0;
        let mut delta = self.initial_radius;
        for _ in 0..iterations {
            if delta >= self.min_radius {
                let mut best: Option<(Vec<f64>, f64)> = None;
                for i in 0..x.len() {
                    for s in [delta, -delta] {
                        let mut t = x.clone();
                        t[i] += s;
                        let (y, v) = ev.eval(&t);
                        if v > fx && best.as_ref().map_or(true, |(_, bv)| v > *bv) {
                            best = Some((y, v));
                        }
                    }
                }
                match best {
                    Some((y, v)) => {
                        (x, fx) = (y, v);
                        accepted += 1;
                    }
                    None => delta *= 0.5,
                }
            }
            trace.push(fx);
        }
        OptimizeOutcome { x, value: fx, trace, accepted, evaluations: ev.count }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity(x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn optimizers() -> Vec<Box<dyn LocalOptimizer>> {
        vec![Box::new(TrustRegionQuadratic::default()), Box::new(CoordinateSearch::default())]
    }

    #[test]
    fn concave_quadratic_reaches_interior_maximum() {
        let target = [0.3, 0.7, 0.55];
        let f = |x: &[f64]| -x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for opt in optimizers() {
            let out = opt.maximize(&f, &identity, &[0.5; 3], 30);
            let err: f64 = out.x.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-2, "{err}");
            assert_eq!(out.trace.len(), 31);
        }
    }

    #[test]
    fn optimum_on_the_bound() {
        let f = |x: &[f64]| x[0] - (x[1] - 0.2).powi(2);
        let out = TrustRegionQuadratic::default().maximize(&f, &identity, &[0.5, 0.5], 30);
        assert!(out.x[0] > 0.999 && (out.x[1] - 0.2).abs() < 1e-2, "{:?}", out.x);
    }

    #[test]
    fn fixed_point_has_flat_trace() {
        let f = |x: &[f64]| -(x[0] - 0.5).powi(2) - (x[1] - 0.5).powi(2);
        for opt in optimizers() {
            let out = opt.maximize(&f, &identity, &[0.5, 0.5], 30);
            assert_eq!(out.accepted, 0);
            assert!(out.trace.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn projection_is_respected() {
        // Feasible set: x1 = x0.
        let project = |x: &[f64]| vec![x[0], x[0]];
        let f = |x: &[f64]| -(x[0] - 0.8).powi(2) - (x[1] - 0.6).powi(2);
        for opt in optimizers() {
            let out = opt.maximize(&f, &project, &[0.1, 0.9], 30);
            assert_eq!(out.x[0], out.x[1]);
            assert!((out.x[0] - 0.7).abs() < 2e-2, "{:?}", out.x);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn trace_never_decreases(c in proptest::collection::vec(0.0f64..1.0, 4), x0 in proptest::collection::vec(0.0f64..1.0, 4), q in 1.0f64..50.0) {
            // Staircase objective, like pixel-count IoU.
            let f = |x: &[f64]| -(x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * q).floor();
            for opt in optimizers() {
                let out = opt.maximize(&f, &identity, &x0, 30);
                prop_assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
                prop_assert_eq!(*out.trace.last().unwrap(), out.value);
                prop_assert!(out.x.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
