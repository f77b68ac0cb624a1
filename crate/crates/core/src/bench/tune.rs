use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::compute_metrics;
use crate::error::{Error, Result};
use crate::optim::{run_spsa, Gains, Method, RunConfig};
use crate::oracle::Problem;

/// Grid and protocol for choosing SPSA gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaGrid {
    pub theta_a: Vec<f64>,
    pub theta_c: Vec<f64>,
    pub replications: usize,
    /// Evaluations per run, per dimension.
    pub evals_per_dim: u64,
}

impl Default for SpsaGrid {
    fn default() -> Self {
        Self {
            theta_a: (-9..=2).map(|e| 10f64.powi(e)).collect(),
            theta_c: (-4..=2).map(|e| 10f64.powi(e)).collect(),
            replications: 20,
            evals_per_dim: 2000,
        }
    }
}

impl SpsaGrid {
    pub fn single(theta_a: f64, theta_c: f64) -> Self {
        Self {
            theta_a: vec![theta_a],
            theta_c: vec![theta_c],
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let grid: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_a.is_empty() || self.theta_c.is_empty() {
            return Err(Error::Config("SPSA grid is empty".into()));
        }
        if self
            .theta_a
            .iter()
            .chain(&self.theta_c)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config("SPSA gains must be finite and non-negative".into()));
        }
        if self.replications == 0 || self.evals_per_dim < 2 {
            return Err(Error::Config("SPSA tuning needs replications and a budget".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub theta_a: f64,
    pub theta_c: f64,
    /// Average optimality gap over the replications that stayed finite.
    pub mean_og: f64,
    pub non_finite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub theta_a: f64,
    pub theta_c: f64,
    pub mean_og: f64,
    /// Every cell had at least one non-finite outcome.
    pub flagged: bool,
    pub cells: Vec<CellSummary>,
}

impl Tuned {
    pub fn gains(&self) -> Gains {
        Gains {
            theta_a: self.theta_a,
            theta_c: self.theta_c,
        }
    }
}

fn evaluate_cell(problem: &Problem, grid: &SpsaGrid, theta_a: f64, theta_c: f64, seed: u64) -> Result<CellSummary> {
    let budget = grid.evals_per_dim * problem.dim() as u64;
    let method = Method::Spsa(Gains { theta_a, theta_c });
    let mut sum = 0.0;
    let mut finite = 0usize;
    for r in 0..grid.replications {
        let t = run_spsa(problem, &RunConfig::new(method.clone(), budget, seed, r as u64))?;
        let og = compute_metrics(problem, &t).optimality_gap;
        if og.is_finite() {
            sum += og;
            finite += 1;
        }
    }
    Ok(CellSummary {
        theta_a,
        theta_c,
        mean_og: if finite > 0 { sum / finite as f64 } else { f64::INFINITY },
        non_finite: grid.replications - finite,
    })
}

/// Runs every grid cell and returns the gains with the smallest average
/// optimality gap. Ties go to the smaller `θ_a`, then the smaller `θ_c`.
/// Cells with any non-finite outcome only compete when every cell has one;
/// then the fewest non-finite outcomes wins and the result is flagged.
pub fn tune_spsa(problem: &Problem, grid: &SpsaGrid, seed: u64) -> Result<Tuned> {
    grid.validate()?;
    let mut ta = grid.theta_a.clone();
    let mut tc = grid.theta_c.clone();
    ta.sort_by(f64::total_cmp);
    tc.sort_by(f64::total_cmp);
    let pairs: Vec<(f64, f64)> = ta.iter().flat_map(|&a| tc.iter().map(move |&c| (a, c))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(a, c)| evaluate_cell(problem, grid, a, c, seed))
        .collect::<Result<Vec<_>>>()?;

    let clean = cells.iter().filter(|c| c.non_finite == 0);
    let best_clean = clean.fold(None::<&CellSummary>, |best, c| match best {
        Some(b) if b.mean_og <= c.mean_og => Some(b),
        _ => Some(c),
    });
    let (best, flagged) = match best_clean {
        Some(b) => (*b, false),
        None => {
            let b = cells
                .iter()
                .fold(None::<&CellSummary>, |best, c| match best {
                    Some(b) if (b.non_finite, b.mean_og) <= (c.non_finite, c.mean_og) => Some(b),
                    _ => Some(c),
                })
                .expect("grid is not empty");
            (*b, true)
        }
    };
    Ok(Tuned {
        theta_a: best.theta_a,
        theta_c: best.theta_c,
        mean_og: best.mean_og,
        flagged,
        cells,
    })
}
