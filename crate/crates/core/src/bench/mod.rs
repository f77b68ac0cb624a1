//! Metrics, SPSA gain tuning and macroreplicated experiments.

mod experiment;
mod metrics;
mod single;
mod tune;

pub use experiment::{
    run_experiment, Aggregate, AlgorithmSpec, CellAggregate, ExperimentResults, ExperimentSpec, OscillationSummary,
    ProblemSpec, RunRow, Summary, TunedGains, AGGREGATE_FILE, RUNS_FILE,
};
pub use metrics::{compute_metrics, oscillatory_period, oscillatory_period_of, ConvergenceProbe, Metrics};
pub use single::{write_run, write_trajectory, RunReport, RunSpec, METRICS_FILE, TRAJECTORY_FILE};
pub use tune::{tune_spsa, CellSummary, SpsaGrid, Tuned};
