//! Two-phase stochastic backtracking line search.
//!
//! Phase one shrinks the step while the trial point looks clearly *worse*
//! than the current one (a relaxed Armijo test padded by `+2σ_f`). Phase two
//! then keeps shrinking until the trial point is certified clearly *better*:
//! averaged over `N ≤ N₀` fresh evaluation pairs, the decrease must beat the
//! Armijo term by `2σ_f/√N`.

use serde::{Deserialize, Serialize};

use crate::corcfd::GradientEstimate;
use crate::error::{Error, Result};
use crate::oracle::{Charge, EvaluationBudget, Problem, RngStream};

/// Where the noise level `σ_f` used by both tests comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum NoiseLevel {
    Supplied(f64),
    /// Square root of the mean noise variance fitted by the Cor-CFD regressions.
    #[default]
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchConfig {
    /// Armijo fraction `l₁ ∈ (0, 1)`.
    pub l1: f64,
    /// Shrink factor `l₂ ∈ (l₁, 1)`.
    pub l2: f64,
    /// Initial step `ã`, restored at the start of every search.
    pub a_init: f64,
    /// Lower bound on the step.
    pub a_lb: f64,
    /// Maximum number of averaged evaluation pairs per candidate step.
    pub n0: usize,
    pub sigma_f: NoiseLevel,
    /// Hard limit on the number of shrinks in one search.
    pub max_shrinks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            l1: 1e-4,
            l2: 0.5,
            a_init: 1.0,
            a_lb: 0.0,
            n0: 10,
            sigma_f: NoiseLevel::Estimated,
            max_shrinks: 60,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.l1 && self.l1 < self.l2 && self.l2 < 1.0) {
            return Err(Error::Config(format!(
                "line search needs 0 < l1 < l2 < 1, got l1 = {}, l2 = {}",
                self.l1, self.l2
            )));
        }
        if !(self.a_init > 0.0 && self.a_init.is_finite()) {
            return Err(Error::Config("initial step must be positive".into()));
        }
        if !(self.a_lb >= 0.0 && self.a_lb < self.a_init) {
            return Err(Error::Config("step lower bound must lie in [0, a_init)".into()));
        }
        if self.n0 == 0 || self.max_shrinks == 0 {
            return Err(Error::Config("n0 and max_shrinks must be positive".into()));
        }
        if let NoiseLevel::Supplied(s) = self.sigma_f {
            if s.is_nan() || s < 0.0 {
                return Err(Error::Config("supplied sigma_f must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// The `σ_f` to use with a given gradient estimate.
    pub fn noise_level(&self, estimate: &GradientEstimate) -> f64 {
        match self.sigma_f {
            NoiseLevel::Supplied(s) => s,
            NoiseLevel::Estimated => estimate.noise_level(),
        }
    }
}

/// True when the step is "bad": `f_next > f_curr − l₁ a ‖g‖² + 2σ_f`.
pub fn reject_step(f_next: f64, f_curr: f64, a: f64, g_norm_sq: f64, l1: f64, sigma_f: f64) -> bool {
    f_next > f_curr - l1 * a * g_norm_sq + 2.0 * sigma_f
}

/// True when the step is certified "good" from `n` averaged pairs:
/// `mean_next ≤ mean_curr − l₁ a ‖g‖² − 2σ_f/√n`.
pub fn accept_step(mean_next: f64, mean_curr: f64, n: usize, a: f64, g_norm_sq: f64, l1: f64, sigma_f: f64) -> bool {
    mean_next <= mean_curr - l1 * a * g_norm_sq - 2.0 * sigma_f / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub step: f64,
    /// Evaluations spent by the search (`n_ls`).
    pub evaluations: u64,
    /// Phase one finished, i.e. the returned step failed the rejection test.
    pub screened: bool,
    /// Phase two certified the returned step.
    pub certified: bool,
    /// `max_shrinks` was reached.
    pub safeguard: bool,
    /// The budget ran out during the search.
    pub exhausted: bool,
}

struct Probe<'a> {
    problem: &'a Problem,
    x: &'a [f64],
    direction: &'a [f64],
    budget: &'a mut EvaluationBudget,
    stream: &'a mut RngStream,
    spent: u64,
}

impl Probe<'_> {
    /// A fresh pair `(f(Π(x − a g)), f(x))`.
    fn pair(&mut self, a: f64) -> Result<(f64, f64)> {
        let trial: Vec<f64> = self.x.iter().zip(self.direction).map(|(xi, gi)| xi - a * gi).collect();
        let trial = self.problem.project(&trial);
        let next = self
            .problem
            .evaluate(&trial, self.budget, Charge::LineSearch, self.stream)?;
        self.spent += 1;
        let curr = self
            .problem
            .evaluate(self.x, self.budget, Charge::LineSearch, self.stream)?;
        self.spent += 1;
        Ok((next, curr))
    }
}

/// Line search along `-g` with an explicit noise level.
#[allow(clippy::too_many_arguments)]
pub fn search_direction(
    problem: &Problem,
    x: &[f64],
    g: &[f64],
    sigma_f: f64,
    config: &LineSearchConfig,
    budget: &mut EvaluationBudget,
    stream: &mut RngStream,
) -> Result<SearchOutcome> {
    config.validate()?;
    let g_norm_sq: f64 = g.iter().map(|v| v * v).sum();
    let mut probe = Probe {
        problem,
        x,
        direction: g,
        budget,
        stream,
        spent: 0,
    };
    let mut outcome = SearchOutcome {
        step: config.a_init,
        evaluations: 0,
        screened: false,
        certified: false,
        safeguard: false,
        exhausted: false,
    };
    let mut a = config.a_init;
    let mut shrinks = 0usize;

    // Phase one: leave the region of clearly bad steps.
    loop {
        let (next, curr) = match probe.pair(a) {
            Ok(v) => v,
            Err(Error::BudgetExhausted { .. }) => {
                outcome.step = a;
                outcome.exhausted = true;
                outcome.evaluations = probe.spent;
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        };
        if !reject_step(next, curr, a, g_norm_sq, config.l1, sigma_f) {
            break;
        }
        if shrinks == config.max_shrinks {
            outcome.step = a.max(config.a_lb);
            outcome.safeguard = true;
            outcome.evaluations = probe.spent;
            return Ok(outcome);
        }
        a *= config.l2;
        shrinks += 1;
    }
    outcome.screened = true;

    // Phase two: certify a clear decrease with up to N₀ averaged pairs.
    while a > config.a_lb {
        let (mut sum_next, mut sum_curr) = (0.0, 0.0);
        for n in 1..=config.n0 {
            let (next, curr) = match probe.pair(a) {
                Ok(v) => v,
                Err(Error::BudgetExhausted { .. }) => {
                    outcome.step = a;
                    outcome.exhausted = true;
                    outcome.evaluations = probe.spent;
                    return Ok(outcome);
                }
                Err(e) => return Err(e),
            };
            sum_next += next;
            sum_curr += curr;
            let nf = n as f64;
            if accept_step(sum_next / nf, sum_curr / nf, n, a, g_norm_sq, config.l1, sigma_f) {
                outcome.step = a;
                outcome.certified = true;
                outcome.evaluations = probe.spent;
                return Ok(outcome);
            }
        }
        if shrinks == config.max_shrinks {
            outcome.step = a.max(config.a_lb);
            outcome.safeguard = true;
            outcome.evaluations = probe.spent;
            return Ok(outcome);
        }
        a *= config.l2;
        shrinks += 1;
    }
    outcome.step = a.max(config.a_lb);
    outcome.evaluations = probe.spent;
    Ok(outcome)
}

/// Line search along the negative of a Cor-CFD gradient estimate, with
/// `σ_f` taken from the configuration.
pub fn search(
    problem: &Problem,
    x: &[f64],
    estimate: &GradientEstimate,
    config: &LineSearchConfig,
    budget: &mut EvaluationBudget,
    stream: &mut RngStream,
) -> Result<SearchOutcome> {
    let sigma_f = config.noise_level(estimate);
    search_direction(problem, x, &estimate.g, sigma_f, config, budget, stream)
}
