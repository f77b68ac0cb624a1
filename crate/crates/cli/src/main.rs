use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adadfo::bench::{run_experiment, tune_spsa, write_run, ExperimentSpec, RunSpec, SpsaGrid};
use adadfo::oracle::catalog::{by_name, ProblemOverrides};
use adadfo::Error;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

/// Benchmarks for noisy derivative-free optimization.
#[derive(Debug, Parser)]
#[command(name = "adadfo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One run of one algorithm; prints a JSON report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        budget_pairs: Option<u64>,
    },
    /// A macroreplicated experiment; writes runs.csv and aggregate.json.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Keep only these problems.
        #[arg(long, value_delimiter = ',')]
        problem: Vec<String>,
        /// Replace every problem's noise levels.
        #[arg(long, value_delimiter = ',')]
        sigma: Vec<f64>,
        /// Replace the budget checkpoints.
        #[arg(long, value_delimiter = ',')]
        budget_pairs: Vec<u64>,
    },
    /// Grid search of the SPSA gains; prints the chosen pair as JSON.
    TuneSpsa {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        problem: String,
        #[arg(long)]
        sigma: Option<f64>,
        /// Pairs per dimension for each tuning run (default 1000).
        #[arg(long)]
        budget_pairs: Option<u64>,
    },
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(config_error("--parallel must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn cmd_run(common: Common, problem: Option<String>, sigma: Option<f64>, budget_pairs: Option<u64>) -> Result<()> {
    let mut spec = match &common.config {
        Some(path) => RunSpec::from_toml(&read_config(path)?)?,
        None => {
            let name = problem
                .clone()
                .ok_or_else(|| config_error("need --config or --problem"))?;
            RunSpec::new(name, budget_pairs.unwrap_or(1000))
        }
    };
    if let Some(p) = problem {
        spec.problem = p;
    }
    if sigma.is_some() {
        spec.sigma = sigma;
    }
    if let Some(b) = budget_pairs {
        spec.budget_pairs = b;
    }
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    let (trajectory, report) = spec.execute()?;
    if let Some(dir) = &common.out {
        write_run(&trajectory, &report, dir)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_bench(common: Common, problems: Vec<String>, sigmas: Vec<f64>, budget_pairs: Vec<u64>) -> Result<()> {
    let path = common.config.ok_or_else(|| config_error("bench needs --config"))?;
    let mut spec = ExperimentSpec::from_toml(&read_config(&path)?)?;
    if !problems.is_empty() {
        spec.problems.retain(|p| problems.contains(&p.name));
        if spec.problems.is_empty() {
            return Err(config_error(format!("no problem in the config matches {problems:?}")));
        }
    }
    if !sigmas.is_empty() {
        for p in &mut spec.problems {
            p.sigmas.clone_from(&sigmas);
        }
    }
    if !budget_pairs.is_empty() {
        spec.budget_pairs = budget_pairs;
    }
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    spec.validate()?;
    let out = common
        .out
        .or_else(|| spec.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));

    let results = run_experiment(&spec)?;
    results.write(&out)?;
    for c in &results.aggregate.cells {
        println!(
            "{:<16} σ={:<6} {:<14} pairs={:<8} error(median)={:<10.4} OG(mean)={:<12.4e} success={:.2}",
            c.problem,
            c.sigma,
            c.algorithm,
            c.budget_pairs,
            c.solution_error.median,
            c.optimality_gap.mean,
            c.success_rate
        );
    }
    for t in &results.aggregate.tuned {
        println!(
            "tuned {} on {} σ={}: θa={:e} θc={:e}{}",
            t.algorithm,
            t.problem,
            t.sigma,
            t.theta_a,
            t.theta_c,
            if t.flagged {
                " (every cell had a non-finite run)"
            } else {
                ""
            }
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_tune(common: Common, problem: String, sigma: Option<f64>, budget_pairs: Option<u64>) -> Result<()> {
    let mut grid = match &common.config {
        Some(path) => SpsaGrid::from_toml(&read_config(path)?)?,
        None => SpsaGrid::default(),
    };
    if let Some(b) = budget_pairs {
        grid.evals_per_dim = 2 * b;
    }
    let overrides = ProblemOverrides {
        sigma,
        ..ProblemOverrides::default()
    };
    let p = by_name(&problem, &overrides)?;
    let tuned = tune_spsa(&p, &grid, common.seed.unwrap_or(0))?;
    let json = serde_json::to_string_pretty(&tuned)?;
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("tuned.json"), json.clone() + "\n")?;
    }
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            common,
            problem,
            sigma,
            budget_pairs,
        } => set_threads(common.parallel).and_then(|_| cmd_run(common, problem, sigma, budget_pairs)),
        Command::Bench {
            common,
            problem,
            sigma,
            budget_pairs,
        } => set_threads(common.parallel).and_then(|_| cmd_bench(common, problem, sigma, budget_pairs)),
        Command::TuneSpsa {
            common,
            problem,
            sigma,
            budget_pairs,
        } => set_threads(common.parallel).and_then(|_| cmd_tune(common, problem, sigma, budget_pairs)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
