//! Model retrieval by maximum cosine similarity over multi-view descriptors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VIEWS_PER_MODEL: usize = 32;
pub const DESCRIPTOR_DIM: usize = 2048;
pub const DEFAULT_TOP_MODELS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("descriptor has zero norm")]
    ZeroNorm,
    #[error("model library is empty")]
    EmptyLibrary,
    #[error("model {model_id}: {reason}")]
    InvalidDescriptors { model_id: u32, reason: String },
    #[error("descriptor length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Descriptors of one model rendered from [`VIEWS_PER_MODEL`] viewpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDescriptorSet {
    pub model_id: u32,
    views: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ViewDescriptorSet {
    pub fn new(model_id: u32, views: Vec<Vec<f64>>) -> Result<Self, RetrievalError> {
        let bad = |reason: String| RetrievalError::InvalidDescriptors { model_id, reason };
        if views.len() != VIEWS_PER_MODEL {
            return Err(bad(format!("{} views, expected {VIEWS_PER_MODEL}", views.len())));
        }
        let mut norms = Vec::with_capacity(views.len());
        for (i, v) in views.iter().enumerate() {
            if v.len() != DESCRIPTOR_DIM {
                return Err(bad(format!("view {i} has length {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad(format!("view {i} has a non-finite entry")));
            }
            let n = norm(v);
            if !(n > 0.0) {
                return Err(bad(format!("view {i} has zero norm")));
            }
            norms.push(n);
        }
        Ok(Self { model_id, views, norms })
    }

    pub fn views(&self) -> &[Vec<f64>] {
        &self.views
    }
}

/// `max_i cos(f, view_i)`.
pub fn similarity(f: &[f64], m: &ViewDescriptorSet) -> Result<f64, RetrievalError> {
    if f.len() != DESCRIPTOR_DIM {
        return Err(RetrievalError::DimensionMismatch { expected: DESCRIPTOR_DIM, got: f.len() });
    }
    let nf = norm(f);
    if !(nf > 0.0) {
        return Err(RetrievalError::ZeroNorm);
    }
    Ok(m.views.iter().zip(&m.norms).map(|(v, nv)| dot(f, v) / (nf * nv)).fold(f64::NEG_INFINITY, f64::max))
}

/// The `k` most similar models, best first; equal similarities rank by
/// model id.
pub fn top_k(f: &[f64], library: &[ViewDescriptorSet], k: usize) -> Result<Vec<(u32, f64)>, RetrievalError> {
    if library.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    let mut scored: Vec<(u32, f64)> =
        library.par_iter().map(|m| similarity(f, m).map(|s| (m.model_id, s))).collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
