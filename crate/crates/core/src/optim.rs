//! Optimization drivers: adaptive-sampling DFO with a constant step or a
//! stochastic line search, and the Kiefer–Wolfowitz and SPSA baselines.
//!
//! Every driver runs under a hard evaluation cap. An iteration starts only
//! while the budget still covers its base gradient (`2·d·n_k` evaluations for
//! the adaptive methods, 2 for the baselines), and batch growth is trimmed to
//! what remains, so the final count never exceeds the cap.

use serde::{Deserialize, Serialize};

use crate::corcfd::{augment_gradient, cor_cfd_gradient, CorCfdConfig};
use crate::error::{Error, Result};
use crate::fd::{difference_quotient, spsa_gradient, GainSchedule};
use crate::linesearch::{self, LineSearchConfig};
use crate::oracle::{EvaluationBudget, Problem, Purpose, Streams};
use crate::sampling::{fallback_pairs, norm_condition_holds, required_pairs, SamplingRule};

/// Parameters shared by both adaptive-sampling variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaDfoParams {
    /// Initial pairs per coordinate, `n₀ ≥ 2K`.
    pub n0: usize,
    /// Norm-condition constant `θ`.
    pub theta: f64,
    /// Cap on pairs per coordinate in one iteration.
    pub max_pairs: usize,
    pub corcfd: CorCfdConfig,
}

impl Default for AdaDfoParams {
    fn default() -> Self {
        Self {
            n0: 10,
            theta: 0.7,
            max_pairs: 10_000,
            corcfd: CorCfdConfig::default(),
        }
    }
}

impl AdaDfoParams {
    pub fn validate(&self) -> Result<()> {
        self.corcfd.validate()?;
        self.sampling_rule().validate()?;
        if self.n0 < 2 * self.corcfd.perturbations {
            return Err(Error::Config(format!(
                "n0 = {} is below 2K = {}",
                self.n0,
                2 * self.corcfd.perturbations
            )));
        }
        if self.max_pairs < self.n0 {
            return Err(Error::Config("max_pairs must be at least n0".into()));
        }
        Ok(())
    }

    pub fn sampling_rule(&self) -> SamplingRule {
        SamplingRule {
            theta: self.theta,
            perturbations: self.corcfd.perturbations,
            max_pairs: self.max_pairs,
        }
    }
}

/// `θ_a` and `θ_c` of a baseline's gain sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub theta_a: f64,
    pub theta_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Method {
    AdadfoConst {
        step: f64,
        #[serde(default)]
        adadfo: AdaDfoParams,
    },
    AdadfoLs {
        #[serde(default)]
        adadfo: AdaDfoParams,
        #[serde(default)]
        ls: LineSearchConfig,
    },
    Kwsa(Gains),
    Spsa(Gains),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::AdadfoConst { .. } => "adadfo_const",
            Method::AdadfoLs { .. } => "adadfo_ls",
            Method::Kwsa(_) => "kwsa",
            Method::Spsa(_) => "spsa",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::AdadfoConst { step, adadfo } => {
                if !(*step > 0.0 && step.is_finite()) {
                    return Err(Error::Config(format!("step must be positive, got {step}")));
                }
                adadfo.validate()
            }
            Method::AdadfoLs { adadfo, ls } => {
                adadfo.validate()?;
                ls.validate()
            }
            Method::Kwsa(g) => GainSchedule::kwsa(g.theta_a, g.theta_c).validate(),
            Method::Spsa(g) => GainSchedule::spsa(g.theta_a, g.theta_c).validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Total evaluation budget `𝒮` (single evaluations, not pairs).
    pub budget: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replication: u64,
    pub method: Method,
}

impl RunConfig {
    pub fn new(method: Method, budget: u64, seed: u64, replication: u64) -> Self {
        Self {
            budget,
            seed,
            replication,
            method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u64,
    /// Iterate after the update.
    pub x: Vec<f64>,
    pub step: f64,
    /// Pairs per coordinate behind this iteration's gradient (0 for baselines).
    pub n_k: usize,
    /// Line-search evaluations.
    pub n_ls: u64,
    /// Cumulative evaluations after the update.
    pub evals: u64,
    /// The gradient estimate was numerically zero.
    pub degenerate: bool,
    /// The line search stopped on its shrink limit.
    pub safeguard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every evaluation of the budget was spent.
    BudgetExhausted,
    /// What is left cannot pay for another iteration.
    BudgetShort,
    /// An iterate became non-finite.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub evals_used: u64,
}

impl Trajectory {
    pub fn final_x(&self) -> &[f64] {
        self.records.last().map_or(&self.start, |r| &r.x)
    }

    /// The start point followed by every recorded iterate.
    pub fn iterates(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.start.as_slice()).chain(self.records.iter().map(|r| r.x.as_slice()))
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// `Π(x − a·g)`.
pub fn constant_step_update(problem: &Problem, x: &[f64], g: &[f64], a: f64) -> Vec<f64> {
    let moved: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - a * gi).collect();
    problem.project(&moved)
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

enum StepRule<'a> {
    Constant(f64),
    LineSearch(&'a LineSearchConfig),
}

struct Driver {
    budget: EvaluationBudget,
    streams: Streams,
    x: Vec<f64>,
    start: Vec<f64>,
    records: Vec<IterationRecord>,
}

impl Driver {
    fn new(problem: &Problem, config: &RunConfig) -> Result<Self> {
        config.method.validate()?;
        let start = problem.x0().to_vec();
        if !problem.bounds().contains(&start) {
            return Err(Error::Config("starting point lies outside the box".into()));
        }
        Ok(Self {
            budget: EvaluationBudget::new(config.budget),
            streams: Streams::new(config.seed, config.replication),
            x: start.clone(),
            start,
            records: Vec::new(),
        })
    }

    fn stop_reason(&self, cost: u64) -> Option<Termination> {
        if self.budget.is_exhausted() {
            Some(Termination::BudgetExhausted)
        } else if self.budget.remaining() < cost {
            Some(Termination::BudgetShort)
        } else {
            None
        }
    }

    fn finish(self, termination: Termination) -> Trajectory {
        Trajectory {
            start: self.start,
            records: self.records,
            termination,
            evals_used: self.budget.used(),
        }
    }
}

fn run_adadfo(problem: &Problem, config: &RunConfig, params: &AdaDfoParams, rule: StepRule) -> Result<Trajectory> {
    let mut drv = Driver::new(problem, config)?;
    let d = problem.dim() as u64;
    let sampling = params.sampling_rule();
    let cfg = &params.corcfd;
    let mut n_k = cfg.round_pairs(params.n0);
    let mut k = 0u64;

    let termination = loop {
        if let Some(t) = drv.stop_reason(2 * d * n_k as u64) {
            break t;
        }
        k += 1;
        let mut est = cor_cfd_gradient(problem, &drv.x, n_k, cfg, &mut drv.budget, &mut drv.streams)?;

        let mut degenerate = false;
        while finite(&est.g) {
            let test = norm_condition_holds(&est, &sampling);
            if test.holds {
                break;
            }
            let target = if test.degenerate {
                degenerate = true;
                fallback_pairs(&est, &sampling)
            } else {
                required_pairs(&est, &sampling)?
            };
            if target <= est.n_k {
                break;
            }
            let grown = augment_gradient(&est, target, problem, &drv.x, cfg, &mut drv.budget, &mut drv.streams)?;
            let stalled = grown.n_k == est.n_k;
            est = grown;
            if stalled {
                break;
            }
        }
        n_k = est.n_k;

        let (step, n_ls, safeguard, skip) = match rule {
            StepRule::Constant(a) => (a, 0, false, false),
            StepRule::LineSearch(ls) => {
                let out = linesearch::search(
                    problem,
                    &drv.x,
                    &est,
                    ls,
                    &mut drv.budget,
                    drv.streams.get(Purpose::LineSearch, 0),
                )?;
                // Running dry before any step survived screening leaves nothing safe to take.
                (out.step, out.evaluations, out.safeguard, out.exhausted && !out.screened)
            }
        };
        let next = if skip {
            drv.x.clone()
        } else {
            constant_step_update(problem, &drv.x, &est.g, step)
        };
        let diverged = !finite(&next);
        drv.x = next;
        drv.records.push(IterationRecord {
            k,
            x: drv.x.clone(),
            step: if skip { 0.0 } else { step },
            n_k,
            n_ls,
            evals: drv.budget.used(),
            degenerate,
            safeguard,
        });
        if diverged {
            break Termination::Diverged;
        }
        if skip {
            break Termination::BudgetExhausted;
        }
    };
    Ok(drv.finish(termination))
}

/// Adaptive sampling with a constant step `a`.
pub fn run_adadfo_const(problem: &Problem, config: &RunConfig) -> Result<Trajectory> {
    match &config.method {
        Method::AdadfoConst { step, adadfo } => run_adadfo(problem, config, adadfo, StepRule::Constant(*step)),
        other => Err(Error::Config(format!("expected adadfo_const, got {}", other.name()))),
    }
}

/// Adaptive sampling with the two-phase stochastic line search.
pub fn run_adadfo_ls(problem: &Problem, config: &RunConfig) -> Result<Trajectory> {
    match &config.method {
        Method::AdadfoLs { adadfo, ls } => run_adadfo(problem, config, adadfo, StepRule::LineSearch(ls)),
        other => Err(Error::Config(format!("expected adadfo_ls, got {}", other.name()))),
    }
}

/// Kiefer–Wolfowitz: one central-difference pair per iteration. One-dimensional only.
pub fn run_kwsa(problem: &Problem, config: &RunConfig) -> Result<Trajectory> {
    let Method::Kwsa(gains) = &config.method else {
        return Err(Error::Config(format!("expected kwsa, got {}", config.method.name())));
    };
    if problem.dim() != 1 {
        return Err(Error::Config(format!(
            "kwsa is implemented for d = 1, problem has d = {}",
            problem.dim()
        )));
    }
    let schedule = GainSchedule::kwsa(gains.theta_a, gains.theta_c);
    let mut drv = Driver::new(problem, config)?;
    let mut k = 0u64;
    let termination = loop {
        if let Some(t) = drv.stop_reason(2) {
            break t;
        }
        k += 1;
        let (a, h) = schedule.gains(k)?;
        let q = difference_quotient(
            problem,
            &drv.x,
            0,
            h,
            &mut drv.budget,
            drv.streams.get(Purpose::Noise, 0),
        )?;
        drv.x = constant_step_update(problem, &drv.x, &[q], a);
        drv.records.push(IterationRecord {
            k,
            x: drv.x.clone(),
            step: a,
            n_k: 0,
            n_ls: 0,
            evals: drv.budget.used(),
            degenerate: false,
            safeguard: false,
        });
        if !finite(&drv.x) {
            break Termination::Diverged;
        }
    };
    Ok(drv.finish(termination))
}

/// SPSA with a fresh Rademacher direction each iteration.
pub fn run_spsa(problem: &Problem, config: &RunConfig) -> Result<Trajectory> {
    let Method::Spsa(gains) = &config.method else {
        return Err(Error::Config(format!("expected spsa, got {}", config.method.name())));
    };
    let schedule = GainSchedule::spsa(gains.theta_a, gains.theta_c);
    let mut drv = Driver::new(problem, config)?;
    let mut k = 0u64;
    let termination = loop {
        if let Some(t) = drv.stop_reason(2) {
            break t;
        }
        k += 1;
        let (a, _) = schedule.gains(k)?;
        let (noise, signs) = drv.streams.pair((Purpose::Noise, 0), (Purpose::Rademacher, 0));
        let g = spsa_gradient(problem, &drv.x, &schedule, k, &mut drv.budget, noise, signs)?;
        drv.x = constant_step_update(problem, &drv.x, &g, a);
        drv.records.push(IterationRecord {
            k,
            x: drv.x.clone(),
            step: a,
            n_k: 0,
            n_ls: 0,
            evals: drv.budget.used(),
            degenerate: false,
            safeguard: false,
        });
        if !finite(&drv.x) {
            break Termination::Diverged;
        }
    };
    Ok(drv.finish(termination))
}

/// Dispatches on `config.method`.
pub fn run(problem: &Problem, config: &RunConfig) -> Result<Trajectory> {
    match config.method {
        Method::AdadfoConst { .. } => run_adadfo_const(problem, config),
        Method::AdadfoLs { .. } => run_adadfo_ls(problem, config),
        Method::Kwsa(_) => run_kwsa(problem, config),
        Method::Spsa(_) => run_spsa(problem, config),
    }
}
