use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which phase of an algorithm an evaluation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    /// Finite-difference pairs (Cor-CFD, KWSA and SPSA evaluations).
    Gradient,
    /// Evaluations spent choosing the step size.
    LineSearch,
}

/// Counts function evaluations against a hard limit `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationBudget {
    total: u64,
    gradient: u64,
    line_search: u64,
}

impl EvaluationBudget {
    pub fn new(total: u64) -> Self {
        Self {
            total,
            gradient: 0,
            line_search: 0,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(u64::MAX)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn used(&self) -> u64 {
        self.gradient + self.line_search
    }

    pub fn gradient_evals(&self) -> u64 {
        self.gradient
    }

    pub fn line_search_evals(&self) -> u64 {
        self.line_search
    }

    pub fn remaining(&self) -> u64 {
        self.total.saturating_sub(self.used())
    }

    pub fn is_exhausted(&self) -> bool {
        self.used() >= self.total
    }

    /// Records one evaluation, or refuses once `total` is reached.
    pub fn charge(&mut self, charge: Charge) -> Result<()> {
        if self.is_exhausted() {
            return Err(Error::BudgetExhausted { pairs_used: 0 });
        }
        match charge {
            Charge::Gradient => self.gradient += 1,
            Charge::LineSearch => self.line_search += 1,
        }
        Ok(())
    }
}
