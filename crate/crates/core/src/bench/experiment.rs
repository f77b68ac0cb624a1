use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::compute_metrics;
use super::tune::{tune_spsa, SpsaGrid};
use crate::corcfd::CorCfdConfig;
use crate::error::{Error, Result};
use crate::optim::{run, Method, RunConfig};
use crate::oracle::catalog::{by_name, ProblemOverrides};
use crate::oracle::Problem;
use crate::stats::{mean, quantile_nearest_rank};

/// Tuning runs draw from a seed family disjoint from the measured runs.
const TUNING_SALT: u64 = 0x7475_6e65_7370_7361;

pub const RUNS_FILE: &str = "runs.csv";
pub const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub sigmas: Vec<f64>,
    /// Multiply every pair checkpoint by the dimension.
    #[serde(default)]
    pub scale_budget_by_dim: bool,
    #[serde(default)]
    pub overrides: ProblemOverrides,
    /// Replaces the Cor-CFD settings of every adaptive-sampling algorithm on this problem.
    #[serde(default)]
    pub corcfd: Option<CorCfdConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    /// Name used in the outputs; defaults to the algorithm name.
    #[serde(default)]
    pub label: Option<String>,
    pub method: Method,
    /// For SPSA: tune the gains on each (problem, sigma) before the runs.
    #[serde(default)]
    pub tune_spsa: Option<SpsaGrid>,
}

impl AlgorithmSpec {
    pub fn new(method: Method) -> Self {
        Self {
            label: None,
            method,
            tune_spsa: None,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.method.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    pub replications: usize,
    /// Budget checkpoints in sample pairs, ascending.
    pub budget_pairs: Vec<u64>,
    pub problems: Vec<ProblemSpec>,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Record wall-clock time per run. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.budget_pairs.is_empty() || self.budget_pairs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "budget_pairs must be non-empty and strictly ascending".into(),
            ));
        }
        if self.budget_pairs[0] == 0 {
            return Err(Error::Config("budget checkpoints must be positive".into()));
        }
        if self.problems.is_empty() || self.algorithms.is_empty() {
            return Err(Error::Config("need at least one problem and one algorithm".into()));
        }
        for p in &self.problems {
            if p.sigmas.is_empty() {
                return Err(Error::Config(format!("problem '{}' lists no sigma", p.name)));
            }
            for &s in &p.sigmas {
                build_problem(p, s)?;
            }
        }
        let mut labels = BTreeSet::new();
        for a in &self.algorithms {
            if !labels.insert(a.label()) {
                return Err(Error::Config(format!("duplicate algorithm label '{}'", a.label())));
            }
            a.method.validate()?;
            if let Some(grid) = &a.tune_spsa {
                if !matches!(a.method, Method::Spsa(_)) {
                    return Err(Error::Config(format!(
                        "'{}' is not SPSA and cannot be tuned",
                        a.label()
                    )));
                }
                grid.validate()?;
            }
        }
        Ok(())
    }
}

fn build_problem(spec: &ProblemSpec, sigma: f64) -> Result<Problem> {
    let overrides = ProblemOverrides {
        sigma: Some(sigma),
        ..spec.overrides.clone()
    };
    by_name(&spec.name, &overrides)
}

fn with_corcfd(method: &Method, corcfd: Option<CorCfdConfig>) -> Method {
    let mut m = method.clone();
    if let Some(c) = corcfd {
        match &mut m {
            Method::AdadfoConst { adadfo, .. } | Method::AdadfoLs { adadfo, .. } => adadfo.corcfd = c,
            Method::Kwsa(_) | Method::Spsa(_) => {}
        }
    }
    m
}

/// One line of the per-replication CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub problem: String,
    pub sigma: f64,
    pub algorithm: String,
    pub replication: u64,
    pub budget_pairs: u64,
    pub solution_error: f64,
    pub optimality_gap: f64,
    /// Empty when the run failed.
    pub oscillatory_period: Option<u64>,
    pub success: bool,
    pub evals_used: u64,
    pub wall_ms: u64,
}

impl RunRow {
    pub fn failed(&self) -> bool {
        self.oscillatory_period.is_none()
    }
}

/// Mean, median and nearest-rank 5% / 95% quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

impl Summary {
    /// Order-invariant: the values are sorted before anything is accumulated.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            mean: mean(&v),
            median: quantile_nearest_rank(&v, 0.5),
            q05: quantile_nearest_rank(&v, 0.05),
            q95: quantile_nearest_rank(&v, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub problem: String,
    pub sigma: f64,
    pub algorithm: String,
    pub budget_pairs: u64,
    pub replications: usize,
    pub failures: usize,
    pub success_rate: f64,
    pub solution_error: Summary,
    pub optimality_gap: Summary,
    pub oscillatory_period: Summary,
    /// Average gap over the successful replications only.
    pub mean_og_successful: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationSummary {
    pub problem: String,
    pub sigma: f64,
    pub algorithm: String,
    pub budget_pairs: u64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedGains {
    pub problem: String,
    pub sigma: f64,
    pub algorithm: String,
    pub theta_a: f64,
    pub theta_c: f64,
    pub mean_og: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cells: Vec<CellAggregate>,
    /// Oscillatory-period quantiles at the largest checkpoint.
    pub oscillation: Vec<OscillationSummary>,
    pub tuned: Vec<TunedGains>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<RunRow>,
    pub aggregate: Aggregate,
}

impl ExperimentResults {
    pub fn cell(&self, problem: &str, sigma: f64, algorithm: &str, budget_pairs: u64) -> Option<&CellAggregate> {
        self.aggregate.cells.iter().find(|c| {
            c.problem == problem && c.sigma == sigma && c.algorithm == algorithm && c.budget_pairs == budget_pairs
        })
    }

    pub fn rows_for<'a>(
        &'a self,
        problem: &'a str,
        sigma: f64,
        algorithm: &'a str,
        budget_pairs: u64,
    ) -> impl Iterator<Item = &'a RunRow> + 'a {
        self.rows.iter().filter(move |r| {
            r.problem == problem && r.sigma == sigma && r.algorithm == algorithm && r.budget_pairs == budget_pairs
        })
    }

    /// Writes `runs.csv` and `aggregate.json` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(RUNS_FILE))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        let json = serde_json::to_string_pretty(&self.aggregate)?;
        fs::write(dir.join(AGGREGATE_FILE), json + "\n")?;
        Ok(())
    }
}

struct Job<'a> {
    problem: &'a Problem,
    problem_name: &'a str,
    sigma: f64,
    label: &'a str,
    method: Method,
    budget_pairs: u64,
    evals: u64,
    replication: u64,
}

fn execute(job: &Job, seed: u64, timing: bool) -> RunRow {
    let config = RunConfig::new(job.method.clone(), job.evals, seed, job.replication);
    let started = Instant::now();
    let outcome = run(job.problem, &config);
    let wall_ms = if timing {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    let mut row = RunRow {
        problem: job.problem_name.to_string(),
        sigma: job.sigma,
        algorithm: job.label.to_string(),
        replication: job.replication,
        budget_pairs: job.budget_pairs,
        solution_error: f64::NAN,
        optimality_gap: f64::NAN,
        oscillatory_period: None,
        success: false,
        evals_used: 0,
        wall_ms,
    };
    if let Ok(t) = outcome {
        let m = compute_metrics(job.problem, &t);
        row.solution_error = m.solution_error;
        row.optimality_gap = m.optimality_gap;
        row.oscillatory_period = Some(m.oscillatory_period);
        row.success = m.success;
        row.evals_used = t.evals_used;
    }
    row
}

fn aggregate_cell(rows: &[RunRow]) -> CellAggregate {
    let first = &rows[0];
    let ok: Vec<&RunRow> = rows.iter().filter(|r| !r.failed()).collect();
    let pick = |f: fn(&RunRow) -> f64| Summary::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    let mut successful: Vec<f64> = ok.iter().filter(|r| r.success).map(|r| r.optimality_gap).collect();
    successful.sort_by(f64::total_cmp);
    CellAggregate {
        problem: first.problem.clone(),
        sigma: first.sigma,
        algorithm: first.algorithm.clone(),
        budget_pairs: first.budget_pairs,
        replications: rows.len(),
        failures: rows.len() - ok.len(),
        success_rate: if ok.is_empty() {
            0.0
        } else {
            successful.len() as f64 / ok.len() as f64
        },
        solution_error: pick(|r| r.solution_error),
        optimality_gap: pick(|r| r.optimality_gap),
        oscillatory_period: pick(|r| r.oscillatory_period.unwrap_or(0) as f64),
        mean_og_successful: (!successful.is_empty()).then(|| mean(&successful)),
    }
}

/// Runs every (problem, sigma, algorithm, checkpoint, replication)
/// combination. Replication `r` uses the same random streams at every
/// checkpoint and for every algorithm. A failing run is kept as a row with
/// empty metrics and does not stop the experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let mut instances = Vec::new();
    for p in &spec.problems {
        for &sigma in &p.sigmas {
            instances.push((p, sigma, build_problem(p, sigma)?));
        }
    }

    let mut tuned = Vec::new();
    let mut methods = Vec::new();
    for (p, sigma, problem) in &instances {
        let mut per_alg = Vec::new();
        for a in &spec.algorithms {
            let method = match &a.tune_spsa {
                Some(grid) => {
                    let t = tune_spsa(problem, grid, spec.seed ^ TUNING_SALT)?;
                    tuned.push(TunedGains {
                        problem: p.name.clone(),
                        sigma: *sigma,
                        algorithm: a.label().to_string(),
                        theta_a: t.theta_a,
                        theta_c: t.theta_c,
                        mean_og: t.mean_og,
                        flagged: t.flagged,
                    });
                    Method::Spsa(t.gains())
                }
                None => with_corcfd(&a.method, p.corcfd),
            };
            per_alg.push(method);
        }
        methods.push(per_alg);
    }

    let mut jobs = Vec::new();
    for ((p, sigma, problem), per_alg) in instances.iter().zip(&methods) {
        let scale = if p.scale_budget_by_dim { problem.dim() as u64 } else { 1 };
        for (a, method) in spec.algorithms.iter().zip(per_alg) {
            for &pairs in &spec.budget_pairs {
                for r in 0..spec.replications as u64 {
                    jobs.push(Job {
                        problem,
                        problem_name: &p.name,
                        sigma: *sigma,
                        label: a.label(),
                        method: method.clone(),
                        budget_pairs: pairs * scale,
                        evals: 2 * pairs * scale,
                        replication: r,
                    });
                }
            }
        }
    }

    let rows: Vec<RunRow> = jobs.par_iter().map(|j| execute(j, spec.seed, spec.timing)).collect();
    let cells: Vec<CellAggregate> = rows.chunks(spec.replications).map(aggregate_cell).collect();

    let checkpoints = spec.budget_pairs.len();
    let oscillation = cells
        .chunks(checkpoints)
        .map(|group| {
            let c = group.last().expect("non-empty checkpoint group");
            OscillationSummary {
                problem: c.problem.clone(),
                sigma: c.sigma,
                algorithm: c.algorithm.clone(),
                budget_pairs: c.budget_pairs,
                q05: c.oscillatory_period.q05,
                median: c.oscillatory_period.median,
                q95: c.oscillatory_period.q95,
            }
        })
        .collect();

    Ok(ExperimentResults {
        rows,
        aggregate: Aggregate {
            cells,
            oscillation,
            tuned,
        },
    })
}
