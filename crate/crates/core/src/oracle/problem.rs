use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::budget::{Charge, EvaluationBudget};
use super::rng::RngStream;
use crate::error::{Error, Result};

pub type ObjectiveFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type NoiseStdFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A per-coordinate closed box, possibly unbounded on either side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidInput(format!(
                "bounds need equal, non-zero lengths (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidInput(format!(
                    "coordinate {i}: invalid interval [{l}, {h}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    /// The same interval `[lo, hi]` on every coordinate.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// True when some coordinate sits exactly on a finite bound.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(v, (l, h))| (l.is_finite() && v == l) || (h.is_finite() && v == h))
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            if *v < *l {
                *v = *l;
            } else if *v > *h {
                *v = *h;
            }
        }
    }
}

/// Shape of the observation noise, before scaling by `σ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[-√3, √3]`, i.e. unit variance.
    Uniform,
}

#[derive(Clone)]
pub enum NoiseStd {
    Constant(f64),
    Varying(NoiseStdFn),
}

impl fmt::Debug for NoiseStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseStd::Constant(s) => f.debug_tuple("Constant").field(s).finish(),
            NoiseStd::Varying(_) => f.write_str("Varying(<fn>)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub distribution: NoiseDistribution,
    pub std: NoiseStd,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::gaussian(0.0)
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            distribution: NoiseDistribution::Gaussian,
            std: NoiseStd::Constant(sigma),
        }
    }

    pub fn uniform(sigma: f64) -> Self {
        Self {
            distribution: NoiseDistribution::Uniform,
            std: NoiseStd::Constant(sigma),
        }
    }

    pub fn std_at(&self, x: &[f64]) -> f64 {
        match &self.std {
            NoiseStd::Constant(s) => *s,
            NoiseStd::Varying(f) => f(x),
        }
    }

    /// A zero-mean, unit-variance draw from the configured shape.
    fn unit_draw(&self, stream: &mut RngStream) -> f64 {
        match self.distribution {
            NoiseDistribution::Gaussian => stream.standard_normal(),
            NoiseDistribution::Uniform => (2.0 * stream.uniform() - 1.0) * 3f64.sqrt(),
        }
    }
}

/// A noisy blackbox `f(x) = F(x) + σ(x)·Z`.
///
/// The true objective `F` is reachable only through [`Problem::evaluate_true`],
/// which exists for metrics; optimizers only ever call [`Problem::evaluate`].
#[derive(Clone)]
pub struct Problem {
    name: String,
    dim: usize,
    bounds: Bounds,
    objective: ObjectiveFn,
    noise: NoiseModel,
    x0: Vec<f64>,
    x_star: Vec<f64>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("bounds", &self.bounds)
            .field("noise", &self.noise)
            .field("x0", &self.x0)
            .field("x_star", &self.x_star)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// Builds a noiseless, unbounded problem starting and ending at the origin.
    /// Use the `with_*` methods to fill in the rest.
    pub fn new<F>(name: impl Into<String>, dim: usize, objective: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(dim > 0, "problem dimension must be positive");
        Self {
            name: name.into(),
            dim,
            bounds: Bounds::unbounded(dim),
            objective: Arc::new(objective),
            noise: NoiseModel::none(),
            x0: vec![0.0; dim],
            x_star: vec![0.0; dim],
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        let distribution = self.noise.distribution;
        self.with_noise(NoiseModel {
            distribution,
            std: NoiseStd::Constant(sigma),
        })
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_start(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_optimum(mut self, x_star: Vec<f64>) -> Self {
        self.x_star = x_star;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Checks the structural invariants: dimensions agree, `x0` and `x*`
    /// lie in the box, and the noise level at both is a finite `σ ≥ 0`.
    pub fn validated(self) -> Result<Self> {
        let d = self.dim;
        if self.bounds.dim() != d || self.x0.len() != d || self.x_star.len() != d {
            return Err(Error::InvalidInput(format!(
                "problem '{}': dimension mismatch",
                self.name
            )));
        }
        if !self.bounds.contains(&self.x0) {
            return Err(Error::InvalidInput(format!(
                "problem '{}': start point outside the box",
                self.name
            )));
        }
        if !self.bounds.contains(&self.x_star) {
            return Err(Error::InvalidInput(format!(
                "problem '{}': optimum outside the box",
                self.name
            )));
        }
        for x in [&self.x0, &self.x_star] {
            let s = self.noise.std_at(x);
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "problem '{}': noise std must be finite and non-negative, got {s}",
                    self.name
                )));
            }
        }
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "expected a point of dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate {i}: {}", x[i])));
        }
        Ok(())
    }

    /// One noisy observation `F(x) + σ(x)·Z`, charged to `budget`.
    pub fn evaluate(
        &self,
        x: &[f64],
        budget: &mut EvaluationBudget,
        charge: Charge,
        stream: &mut RngStream,
    ) -> Result<f64> {
        self.check_point(x)?;
        budget.charge(charge)?;
        let sigma = self.noise.std_at(x);
        let mean = (self.objective)(x);
        if sigma == 0.0 {
            return Ok(mean);
        }
        Ok(mean + sigma * self.noise.unit_draw(stream))
    }

    /// The noiseless objective `F(x)`. Not charged to any budget.
    pub fn evaluate_true(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok((self.objective)(x))
    }

    /// Per-coordinate clamp onto the feasible box.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.bounds.project_in_place(&mut out);
        out
    }

    /// `F(x0) - F(x*)`, the gap a run has to beat to count as a success.
    pub fn initial_gap(&self) -> f64 {
        (self.objective)(&self.x0) - (self.objective)(&self.x_star)
    }
}
