//! Support-relation counts and per-category height distributions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories::CATEGORY_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportType {
    Below,
    Behind,
}

impl SupportType {
    pub const ALL: [SupportType; 2] = [SupportType::Below, SupportType::Behind];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("support_count has {0} entries, expected 3200")]
    CountShape(usize),
    #[error("height table has {0} entries, expected 40")]
    HeightShape(usize),
    #[error("support count at {0} is negative or not finite")]
    BadCount(usize),
    #[error("height sigma for category {0} is negative or not finite")]
    BadSigma(usize),
}

/// Counts `[child][parent][type]`, flattened row-major, and the height of
/// each category as a fraction of room height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTables {
    pub support_count: Vec<f64>,
    pub height_mu: Vec<f64>,
    pub height_sigma: Vec<f64>,
}

fn idx(child: u8, parent: u8, t: SupportType) -> usize {
    (child as usize * CATEGORY_COUNT + parent as usize) * 2 + t.index()
}

impl PriorTables {
    pub fn new(support_count: Vec<f64>, height_mu: Vec<f64>, height_sigma: Vec<f64>) -> Result<Self, PriorError> {
        let p = Self { support_count, height_mu, height_sigma };
        p.validate()?;
        Ok(p)
    }

    /// All counts zero, every category with `μ = 0.3`, `σ = 0.1`.
    pub fn empty() -> Self {
        Self {
            support_count: vec![0.0; CATEGORY_COUNT * CATEGORY_COUNT * 2],
            height_mu: vec![0.3; CATEGORY_COUNT],
            height_sigma: vec![0.1; CATEGORY_COUNT],
        }
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        if self.support_count.len() != CATEGORY_COUNT * CATEGORY_COUNT * 2 {
            return Err(PriorError::CountShape(self.support_count.len()));
        }
        for t in [&self.height_mu, &self.height_sigma] {
            if t.len() != CATEGORY_COUNT {
                return Err(PriorError::HeightShape(t.len()));
            }
        }
        if let Some(i) = self.support_count.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(PriorError::BadCount(i));
        }
        if let Some(i) = self.height_sigma.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(PriorError::BadSigma(i));
        }
        Ok(())
    }

    pub fn count(&self, child: u8, parent: u8, t: SupportType) -> f64 {
        self.support_count[idx(child, parent, t)]
    }

    pub fn set_count(&mut self, child: u8, parent: u8, t: SupportType, v: f64) {
        self.support_count[idx(child, parent, t)] = v;
    }

    fn row_total(&self, child: u8, t: SupportType) -> f64 {
        (0..CATEGORY_COUNT as u8).map(|p| self.count(child, p, t)).sum()
    }

    /// `P(parent | child, t)`; `None` when the row has no counts.
    pub fn prob(&self, child: u8, parent: u8, t: SupportType) -> Option<f64> {
        let total = self.row_total(child, t);
        (total > 0.0).then(|| self.count(child, parent, t) / total)
    }

    /// Parent categories ranked by `Σ_t P(parent | child, t)`, best first,
    /// ties to the lower category.
    pub fn top_parents(&self, child: u8, k: usize) -> Vec<u8> {
        let mut scored: Vec<(f64, u8)> = (0..CATEGORY_COUNT as u8)
            .map(|p| (SupportType::ALL.iter().filter_map(|&t| self.prob(child, p, t)).sum(), p))
            .filter(|(s, _)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(k).map(|(_, p)| p).collect()
    }

    pub fn height_interval(&self, category: u8) -> (f64, f64) {
        let (mu, sigma) = (self.height_mu[category as usize], self.height_sigma[category as usize]);
        (mu - 3.0 * sigma, mu + 3.0 * sigma)
    }
}
