//! Adaptive batch sizing through the norm condition
//! `Σ σ̂_i² / n_k ≤ θ² ‖g‖²`.

use serde::{Deserialize, Serialize};

use crate::corcfd::GradientEstimate;
use crate::error::{Error, Result};

/// Below this gradient norm the condition cannot bound the batch size.
pub const DEGENERATE_NORM: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRule {
    pub theta: f64,
    /// Batch sizes are kept at multiples of this (the number of pilot perturbations).
    pub perturbations: usize,
    /// Upper limit on pairs per coordinate in one iteration.
    pub max_pairs: usize,
}

impl SamplingRule {
    pub fn new(theta: f64, perturbations: usize) -> Self {
        Self {
            theta,
            perturbations,
            max_pairs: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {}", self.theta)));
        }
        if self.perturbations == 0 || self.max_pairs == 0 {
            return Err(Error::Config("perturbations and max_pairs must be positive".into()));
        }
        Ok(())
    }

    fn round(&self, n: usize) -> usize {
        n.div_ceil(self.perturbations) * self.perturbations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormTest {
    pub holds: bool,
    /// The estimated gradient is (numerically) zero.
    pub degenerate: bool,
}

pub fn norm_condition_holds(estimate: &GradientEstimate, rule: &SamplingRule) -> NormTest {
    let norm_sq = estimate.norm_sq();
    if norm_sq.sqrt() < DEGENERATE_NORM {
        return NormTest {
            holds: false,
            degenerate: true,
        };
    }
    let lhs = estimate.total_variance() / estimate.n_k as f64;
    NormTest {
        holds: lhs <= rule.theta * rule.theta * norm_sq,
        degenerate: false,
    }
}

/// `⌊Σ σ̂_i² / (θ² ‖g‖²)⌋ + 1`, capped at `max_pairs`, rounded up to a
/// multiple of `K`, and never below the current `n_k`.
pub fn required_pairs(estimate: &GradientEstimate, rule: &SamplingRule) -> Result<usize> {
    let norm_sq = estimate.norm_sq();
    if norm_sq.sqrt() < DEGENERATE_NORM {
        return Err(Error::DegenerateGradient(norm_sq.sqrt()));
    }
    let ratio = estimate.total_variance() / (rule.theta * rule.theta * norm_sq);
    let wanted = if ratio.is_finite() && ratio < rule.max_pairs as f64 {
        ratio.floor() as usize + 1
    } else {
        rule.max_pairs
    };
    let wanted = rule.round(wanted.min(rule.max_pairs));
    Ok(wanted.max(estimate.n_k))
}

/// Batch size to grow to when the gradient estimate is degenerate.
pub fn fallback_pairs(estimate: &GradientEstimate, rule: &SamplingRule) -> usize {
    rule.round(rule.max_pairs).max(estimate.n_k)
}
