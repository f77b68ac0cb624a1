//! Central finite differences and the KWSA / SPSA gradient surrogates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Charge, EvaluationBudget, Problem, RngStream};
use crate::stats;

/// `n` central-difference quotients taken at the same point, direction and `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfdBatch {
    pub h: f64,
    pub direction: usize,
    pub quotients: Vec<f64>,
}

impl CfdBatch {
    pub fn n(&self) -> usize {
        self.quotients.len()
    }

    /// The CFD estimate, i.e. the mean quotient.
    pub fn estimate(&self) -> f64 {
        stats::mean(&self.quotients)
    }

    /// Unbiased variance of the individual quotients; `None` for `n < 2`.
    pub fn sample_variance(&self) -> Option<f64> {
        stats::sample_variance(&self.quotients)
    }
}

/// One quotient `(f(x + h·e_i) - f(x - h·e_i)) / 2h` from two fresh,
/// independent observations.
pub fn difference_quotient(
    problem: &Problem,
    x: &[f64],
    direction: usize,
    h: f64,
    budget: &mut EvaluationBudget,
    stream: &mut RngStream,
) -> Result<f64> {
    let mut probe = x.to_vec();
    probe[direction] = x[direction] + h;
    let plus = problem.evaluate(&probe, budget, Charge::Gradient, stream)?;
    probe[direction] = x[direction] - h;
    let minus = problem.evaluate(&probe, budget, Charge::Gradient, stream)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Draws `n` central-difference pairs along coordinate `direction`.
///
/// If the budget runs out part-way the batch comes back short; compare
/// [`CfdBatch::n`] with `n`. Running out before the first pair completes is
/// reported as [`Error::BudgetExhausted`].
pub fn cfd_batch(
    problem: &Problem,
    x: &[f64],
    direction: usize,
    h: f64,
    n: usize,
    budget: &mut EvaluationBudget,
    stream: &mut RngStream,
) -> Result<CfdBatch> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("perturbation must be positive, got {h}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("a CFD batch needs at least one pair".into()));
    }
    if direction >= problem.dim() {
        return Err(Error::InvalidInput(format!(
            "direction {direction} out of range for dimension {}",
            problem.dim()
        )));
    }
    let mut quotients = Vec::with_capacity(n);
    for _ in 0..n {
        match difference_quotient(problem, x, direction, h, budget, stream) {
            Ok(q) => quotients.push(q),
            Err(Error::BudgetExhausted { .. }) if !quotients.is_empty() => break,
            Err(Error::BudgetExhausted { .. }) => return Err(Error::BudgetExhausted { pairs_used: 0 }),
            Err(e) => return Err(e),
        }
    }
    Ok(CfdBatch {
        h,
        direction,
        quotients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainForm {
    /// `a_k = θa / k`, `h_k = θc / k^(1/4)`.
    Kwsa,
    /// `a_k = θa / (k + 50)^0.602`, `c_k = θc / k^0.101`.
    Spsa,
}

/// Diminishing step and perturbation sequences of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub theta_a: f64,
    pub theta_c: f64,
    pub form: GainForm,
}

const SPSA_STABILITY: f64 = 50.0;
const SPSA_ALPHA: f64 = 0.602;
const SPSA_GAMMA: f64 = 0.101;

impl GainSchedule {
    pub fn kwsa(theta_a: f64, theta_c: f64) -> Self {
        Self {
            theta_a,
            theta_c,
            form: GainForm::Kwsa,
        }
    }

    pub fn spsa(theta_a: f64, theta_c: f64) -> Self {
        Self {
            theta_a,
            theta_c,
            form: GainForm::Spsa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_a >= 0.0 && self.theta_a.is_finite()) {
            return Err(Error::Config(format!(
                "theta_a must be finite and >= 0, got {}",
                self.theta_a
            )));
        }
        if !(self.theta_c > 0.0 && self.theta_c.is_finite()) {
            return Err(Error::Config(format!(
                "theta_c must be finite and > 0, got {}",
                self.theta_c
            )));
        }
        Ok(())
    }

    /// `(step, perturbation)` at iteration `k ≥ 1` for whichever form this is.
    pub fn gains(&self, k: u64) -> Result<(f64, f64)> {
        if k == 0 {
            return Err(Error::InvalidInput("gain sequences start at k = 1".into()));
        }
        let kf = k as f64;
        Ok(match self.form {
            GainForm::Kwsa => (self.theta_a / kf, self.theta_c / kf.powf(0.25)),
            GainForm::Spsa => (
                self.theta_a / (kf + SPSA_STABILITY).powf(SPSA_ALPHA),
                self.theta_c / kf.powf(SPSA_GAMMA),
            ),
        })
    }
}

/// `(a_k, h_k)` of the Kiefer–Wolfowitz schedule.
pub fn kwsa_gains(schedule: &GainSchedule, k: u64) -> Result<(f64, f64)> {
    if schedule.form != GainForm::Kwsa {
        return Err(Error::InvalidInput("not a KWSA schedule".into()));
    }
    schedule.gains(k)
}

/// `(a_k, c_k)` of the SPSA schedule.
pub fn spsa_gains(schedule: &GainSchedule, k: u64) -> Result<(f64, f64)> {
    if schedule.form != GainForm::Spsa {
        return Err(Error::InvalidInput("not an SPSA schedule".into()));
    }
    schedule.gains(k)
}

/// SPSA gradient along a given sign vector `delta`:
/// `g_i = (f(x + cΔ) - f(x - cΔ)) / (2 c Δ_i)`. Two evaluations.
pub fn spsa_gradient_along(
    problem: &Problem,
    x: &[f64],
    c: f64,
    delta: &[f64],
    budget: &mut EvaluationBudget,
    noise: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut probe: Vec<f64> = x.iter().zip(delta).map(|(v, s)| v + c * s).collect();
    let plus = problem.evaluate(&probe, budget, Charge::Gradient, noise)?;
    for ((p, v), s) in probe.iter_mut().zip(x).zip(delta) {
        *p = v - c * s;
    }
    let minus = problem.evaluate(&probe, budget, Charge::Gradient, noise)?;
    let diff = plus - minus;
    Ok(delta.iter().map(|s| diff / (2.0 * c * s)).collect())
}

/// Simultaneous-perturbation gradient at iteration `k` with a fresh
/// Rademacher direction drawn from `signs`.
pub fn spsa_gradient(
    problem: &Problem,
    x: &[f64],
    schedule: &GainSchedule,
    k: u64,
    budget: &mut EvaluationBudget,
    noise: &mut RngStream,
    signs: &mut RngStream,
) -> Result<Vec<f64>> {
    let (_, c) = spsa_gains(schedule, k)?;
    let delta: Vec<f64> = (0..problem.dim()).map(|_| signs.sign()).collect();
    spsa_gradient_along(problem, x, c, &delta, budget, noise)
}
