use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use crate::corcfd::CorCfdConfig;
use crate::error::{Error, Result};
use crate::linesearch::LineSearchConfig;
use crate::optim::{run, AdaDfoParams, Method, RunConfig, Trajectory};
use crate::oracle::catalog::{by_name, ProblemOverrides};
use crate::oracle::Problem;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METRICS_FILE: &str = "metrics.json";

fn default_method() -> Method {
    Method::AdadfoLs {
        adadfo: AdaDfoParams::default(),
        ls: LineSearchConfig::default(),
    }
}

/// One algorithm on one named problem.
///
/// ```toml
/// problem = "rosenbrock"
/// sigma = 1.0
/// budget_pairs = 2000
///
/// [method]
/// algorithm = "spsa"
/// theta_a = 0.01
/// theta_c = 0.1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub problem: String,
    /// Defaults to the problem's own noise level.
    #[serde(default)]
    pub sigma: Option<f64>,
    pub budget_pairs: u64,
    #[serde(default)]
    pub scale_budget_by_dim: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replication: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub overrides: ProblemOverrides,
    #[serde(default)]
    pub corcfd: Option<CorCfdConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub algorithm: String,
    pub evals_budget: u64,
    pub evals_used: u64,
    pub iterations: usize,
    pub final_x: Vec<f64>,
    pub metrics: Metrics,
}

impl RunSpec {
    /// A run of the default line-search algorithm.
    pub fn new(problem: impl Into<String>, budget_pairs: u64) -> Self {
        Self {
            problem: problem.into(),
            sigma: None,
            budget_pairs,
            scale_budget_by_dim: false,
            seed: 0,
            replication: 0,
            method: default_method(),
            overrides: ProblemOverrides::default(),
            corcfd: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn problem(&self) -> Result<Problem> {
        let overrides = ProblemOverrides {
            sigma: self.sigma.or(self.overrides.sigma),
            ..self.overrides.clone()
        };
        by_name(&self.problem, &overrides)
    }

    pub fn run_config(&self, dim: usize) -> RunConfig {
        let scale = if self.scale_budget_by_dim { dim as u64 } else { 1 };
        let mut method = self.method.clone();
        if let (Some(c), Method::AdadfoConst { adadfo, .. } | Method::AdadfoLs { adadfo, .. }) =
            (self.corcfd, &mut method)
        {
            adadfo.corcfd = c;
        }
        RunConfig::new(method, 2 * self.budget_pairs * scale, self.seed, self.replication)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget_pairs == 0 {
            return Err(Error::Config("budget_pairs must be positive".into()));
        }
        self.problem()?;
        self.method.validate()?;
        if let Some(c) = &self.corcfd {
            c.validate()?;
        }
        Ok(())
    }

    /// Runs the spec and summarizes the final iterate.
    pub fn execute(&self) -> Result<(Trajectory, RunReport)> {
        self.validate()?;
        let problem = self.problem()?;
        let config = self.run_config(problem.dim());
        let t = run(&problem, &config)?;
        let report = RunReport {
            problem: self.problem.clone(),
            algorithm: config.method.name().to_string(),
            evals_budget: config.budget,
            evals_used: t.evals_used,
            iterations: t.iterations(),
            final_x: t.final_x().to_vec(),
            metrics: compute_metrics(&problem, &t),
        };
        Ok((t, report))
    }
}

/// One CSV row per iteration: `k, evals, step, n_k, n_ls, degenerate,
/// safeguard, x_0 … x_{d-1}`. Row `k = 0` is the start point.
pub fn write_trajectory(trajectory: &Trajectory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = trajectory.start.len();
    let mut header: Vec<String> = ["k", "evals", "step", "n_k", "n_ls", "degenerate", "safeguard"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..d).map(|i| format!("x_{i}")));
    w.write_record(&header)?;

    let mut row = |fields: Vec<String>, x: &[f64]| -> Result<()> {
        let mut rec = fields;
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
        Ok(())
    };
    row(
        vec![
            "0".into(),
            "0".into(),
            String::new(),
            String::new(),
            "0".into(),
            "false".into(),
            "false".into(),
        ],
        &trajectory.start,
    )?;
    for r in &trajectory.records {
        row(
            vec![
                r.k.to_string(),
                r.evals.to_string(),
                r.step.to_string(),
                r.n_k.to_string(),
                r.n_ls.to_string(),
                r.degenerate.to_string(),
                r.safeguard.to_string(),
            ],
            &r.x,
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the trajectory CSV and the report JSON into `dir`.
pub fn write_run(trajectory: &Trajectory, report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trajectory(trajectory, &dir.join(TRAJECTORY_FILE))?;
    fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doc_example_parses() {
        let spec = RunSpec::from_toml(
            r#"
            problem = "rosenbrock"
            sigma = 1.0
            budget_pairs = 2000

            [method]
            algorithm = "spsa"
            theta_a = 0.01
            theta_c = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(spec.method.name(), "spsa");
        assert_eq!(spec.run_config(2).budget, 4000);
    }

    #[test]
    fn minimal_spec_uses_line_search() {
        let spec = RunSpec::from_toml("problem = \"power4\"\nbudget_pairs = 100\n").unwrap();
        assert_eq!(spec, RunSpec::new("power4", 100));
        let (t, report) = spec.execute().unwrap();
        assert_eq!(report.evals_used, t.evals_used);
        assert!(report.evals_used <= 200);
    }

    #[test]
    fn bad_specs_are_config_errors() {
        for text in [
            "problem = \"nope\"\nbudget_pairs = 10\n",
            "problem = \"power4\"\nbudget_pairs = 0\n",
            "problem = \"power4\"\nbudget_pairs = 10\nbogus = 1\n",
            "problem = \"rosenbrock\"\nbudget_pairs = 10\n[method]\nalgorithm = \"kwsa\"\ntheta_a = 1.0\ntheta_c = 1.0\n",
        ] {
            let err = RunSpec::from_toml(text).and_then(|s| s.execute().map(|_| ()));
            assert!(matches!(err, Err(Error::Config(_))), "{text}: {err:?}");
        }
    }

    #[test]
    fn trajectory_csv_has_one_row_per_iterate() {
        let (t, report) = RunSpec::new("rosenbrock", 300).execute().unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(&t, &report, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(TRAJECTORY_FILE)).unwrap();
        assert_eq!(text.lines().count(), t.iterations() + 2);
        assert!(text.starts_with("k,evals,step,n_k,n_ls,degenerate,safeguard,x_0,x_1\n"));
    }
}
