//! Noisy blackbox problems, evaluation budgets and random streams.

mod budget;
pub mod catalog;
mod problem;
mod rng;

pub use budget::{Charge, EvaluationBudget};
pub use problem::{Bounds, NoiseDistribution, NoiseModel, NoiseStd, ObjectiveFn, Problem};
pub use rng::{Purpose, RngStream, StreamKey, Streams};
