//! Built-in test problems, selectable by name.

use serde::{Deserialize, Serialize};

use super::problem::{Bounds, NoiseDistribution, NoiseModel, NoiseStd, Problem};
use crate::error::{Error, Result};

/// `F(x) = x⁴` on `[-50, 50]`, started at `x0 = 30`.
pub fn power4(sigma: f64) -> Problem {
    Problem::new("power4", 1, |x: &[f64]| x[0].powi(4))
        .with_bounds(Bounds::uniform(1, -50.0, 50.0).expect("valid interval"))
        .with_noise(NoiseModel::gaussian(sigma))
        .with_start(vec![30.0])
        .with_optimum(vec![0.0])
}

/// The two-dimensional Rosenbrock valley, started at `(-1.9, 2)`.
pub fn rosenbrock(sigma: f64) -> Problem {
    Problem::new("rosenbrock", 2, |x: &[f64]| {
        100.0 * (x[1] - x[0] * x[0]).powi(2) + (x[0] - 1.0).powi(2)
    })
    .with_noise(NoiseModel::gaussian(sigma))
    .with_start(vec![-1.9, 2.0])
    .with_optimum(vec![1.0, 1.0])
}

/// `F(x) = Σ_{j<32} [10(x_{2j+1} - x_{2j})² + (1 - x_{2j})²]⁴` in 64 dimensions,
/// started at `(3, 1, …, 3, 1)`. Steep far from the optimum `(1, …, 1)` and
/// very flat close to it.
pub fn chained_quartic(sigma: f64) -> Problem {
    Problem::new("chained_quartic", 64, |x: &[f64]| {
        x.chunks_exact(2)
            .map(|p| {
                let inner = 10.0 * (p[1] - p[0]).powi(2) + (1.0 - p[0]).powi(2);
                inner.powi(4)
            })
            .sum()
    })
    .with_noise(NoiseModel::gaussian(sigma))
    .with_start([3.0, 1.0].repeat(32))
    .with_optimum(vec![1.0; 64])
}

/// `F(x) = ‖x‖²/2` (strong convexity and smoothness constants both 1),
/// started at `(1, …, 1)`.
pub fn quadratic(dim: usize, sigma: f64) -> Problem {
    Problem::new("quadratic", dim, |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>())
        .with_noise(NoiseModel::gaussian(sigma))
        .with_start(vec![1.0; dim])
        .with_optimum(vec![0.0; dim])
}

/// `F(x) = amplitude · sin(x)`, evaluated around `x0 = 0`. Mainly a gradient
/// estimation test bed; the optimum recorded is the local minimizer `-π/2`.
pub fn sine(amplitude: f64, sigma: f64) -> Problem {
    Problem::new("sine", 1, move |x: &[f64]| amplitude * x[0].sin())
        .with_noise(NoiseModel::gaussian(sigma))
        .with_start(vec![0.0])
        .with_optimum(vec![-std::f64::consts::FRAC_PI_2])
}

pub const NAMES: &[&str] = &["power4", "rosenbrock", "chained_quartic", "quadratic", "sine"];

/// Parameter overrides applied on top of a named problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOverrides {
    pub sigma: Option<f64>,
    pub noise: Option<NoiseDistribution>,
    /// Dimension, for problems that have a free one (`quadratic`).
    pub dim: Option<usize>,
    pub box_lo: Option<f64>,
    pub box_hi: Option<f64>,
    pub x0: Option<Vec<f64>>,
}

/// Looks up a problem by name and applies `overrides`. The result is validated.
pub fn by_name(name: &str, overrides: &ProblemOverrides) -> Result<Problem> {
    let sigma = overrides.sigma.unwrap_or(match name {
        "rosenbrock" => 1.0,
        _ => 0.1,
    });
    let mut p = match name {
        "power4" => power4(sigma),
        "rosenbrock" => rosenbrock(sigma),
        "chained_quartic" | "quartic64" => chained_quartic(sigma),
        "quadratic" => quadratic(overrides.dim.unwrap_or(2), sigma),
        "sine" => sine(10.0, sigma),
        other => {
            return Err(Error::Config(format!(
                "unknown problem '{other}' (known: {})",
                NAMES.join(", ")
            )))
        }
    };
    if overrides.dim.is_some() && name != "quadratic" {
        return Err(Error::Config(format!("problem '{name}' has a fixed dimension")));
    }
    if let Some(dist) = overrides.noise {
        p = p.with_noise(NoiseModel {
            distribution: dist,
            std: NoiseStd::Constant(sigma),
        });
    }
    if overrides.box_lo.is_some() || overrides.box_hi.is_some() {
        let d = p.dim();
        let lo = overrides.box_lo.unwrap_or(f64::NEG_INFINITY);
        let hi = overrides.box_hi.unwrap_or(f64::INFINITY);
        p = p.with_bounds(Bounds::uniform(d, lo, hi)?);
    }
    if let Some(x0) = &overrides.x0 {
        p = p.with_start(x0.clone());
    }
    p.validated()
}
