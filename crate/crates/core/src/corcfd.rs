//! The correlation-induced central finite-difference (Cor-CFD) estimator.
//!
//! One coordinate estimate works in four steps:
//!
//! 1. draw `K` distinct pilot perturbations `h_1 … h_K` from a truncated
//!    normal whose scale shrinks like `n^(-1/5)`;
//! 2. take `n_b = n / K` central-difference pairs at every `h_k`;
//! 3. bootstrap the mean and variance of the `n_b`-sample CFD estimator at
//!    each `h_k` and regress them on `(1, h²)` and `1 / (2 n_b h²)`, which
//!    yields the gradient intercept `ĝ`, curvature `B̂`, noise variance
//!    `σ̂²` and the plug-in optimal perturbation `ĥ = (σ̂² / (4 n B̂²))^(1/6)`;
//! 4. map every raw quotient taken at `h_k` to what it would have looked
//!    like at `ĥ`, see [`transform_sample`], and average.
//!
//! All `n` pairs are used both to estimate `ĥ` and to build the final
//! estimate; nothing is spent on a separate pilot stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::difference_quotient;
use crate::oracle::{EvaluationBudget, Problem, Purpose, RngStream, Streams};
use crate::stats;

/// Tuning of the Cor-CFD estimator.
///
/// The pilot generator is a normal with mean `gen_mean` and standard
/// deviation `gen_std_scale · n^(-1/5)`, truncated to
/// `[trunc_lo_scale · n^(-1/5), ∞)`; perturbations are the magnitudes of the draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorCfdConfig {
    /// Number of pilot perturbations `K`.
    pub perturbations: usize,
    /// Number of bootstrap resamples `I`.
    pub bootstraps: usize,
    pub gen_mean: f64,
    pub gen_std_scale: f64,
    pub trunc_lo_scale: f64,
    /// `ĥ` is capped at `h_cap` times the largest pilot perturbation.
    pub h_cap: f64,
}

impl Default for CorCfdConfig {
    fn default() -> Self {
        Self {
            perturbations: 5,
            bootstraps: 100,
            gen_mean: 0.0,
            gen_std_scale: 1.0,
            trunc_lo_scale: 0.1,
            h_cap: 10.0,
        }
    }
}

/// Standardized truncation points beyond this carry no representable mass.
const MAX_STANDARDIZED_TRUNCATION: f64 = 37.0;

impl CorCfdConfig {
    /// Generator for steep functions: a tenfold smaller spread and truncation point.
    pub fn steep() -> Self {
        Self {
            gen_std_scale: 0.1,
            trunc_lo_scale: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.perturbations < 2 {
            return Err(Error::Config(format!(
                "at least two pilot perturbations are needed, got {}",
                self.perturbations
            )));
        }
        if self.bootstraps < 2 {
            return Err(Error::Config(format!(
                "at least two bootstrap resamples are needed, got {}",
                self.bootstraps
            )));
        }
        if !(self.gen_std_scale > 0.0 && self.gen_std_scale.is_finite()) {
            return Err(Error::Config("generator scale must be positive".into()));
        }
        if !(self.trunc_lo_scale > 0.0 && self.trunc_lo_scale.is_finite()) {
            return Err(Error::Config("truncation scale must be positive".into()));
        }
        if !self.gen_mean.is_finite() {
            return Err(Error::Config("generator mean must be finite".into()));
        }
        if !(self.h_cap >= 1.0 && self.h_cap.is_finite()) {
            return Err(Error::Config("h_cap must be finite and at least 1".into()));
        }
        Ok(())
    }

    /// Rounds a requested pair count up to the next multiple of `K`.
    pub fn round_pairs(&self, n: usize) -> usize {
        n.div_ceil(self.perturbations) * self.perturbations
    }
}

/// Draws from the standard normal truncated to `[alpha, ∞)`.
fn truncated_standard_normal(alpha: f64, stream: &mut RngStream) -> f64 {
    if alpha <= 0.0 {
        loop {
            let z = stream.standard_normal();
            if z >= alpha {
                return z;
            }
        }
    }
    // Exponential proposal with the optimal rate (Robert, 1995).
    let rate = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
    loop {
        let z = alpha - (1.0 - stream.uniform()).ln() / rate;
        let accept = (-0.5 * (z - rate).powi(2)).exp();
        if stream.uniform() <= accept {
            return z;
        }
    }
}

/// Draws the `K` pilot perturbations for a batch of `n_k` pairs.
pub fn generate_perturbations(config: &CorCfdConfig, n_k: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
    config.validate()?;
    if n_k == 0 {
        return Err(Error::InvalidInput("n_k must be positive".into()));
    }
    let shrink = (n_k as f64).powf(-0.2);
    let std = config.gen_std_scale * shrink;
    let lo = config.trunc_lo_scale * shrink;
    let alpha = (lo - config.gen_mean) / std;
    if alpha.is_nan() || alpha >= MAX_STANDARDIZED_TRUNCATION {
        return Err(Error::Config(format!(
            "perturbation generator has no mass above {lo} (standardized {alpha})"
        )));
    }
    let k = config.perturbations;
    let mut hs: Vec<f64> = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while hs.len() < k {
        attempts += 1;
        if attempts > 1000 * k {
            return Err(Error::Config("cannot draw distinct perturbations".into()));
        }
        let h = (config.gen_mean + std * truncated_standard_normal(alpha, stream)).abs();
        if !(h > 0.0 && h.is_finite()) {
            continue;
        }
        let collides = hs.iter().any(|&o| (o - h).abs() <= 1e-12 * o.abs().max(h.abs()));
        if !collides {
            hs.push(h);
        }
    }
    Ok(hs)
}

/// Raw quotients grouped by pilot perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotDesign {
    pub h: Vec<f64>,
    /// `samples[k]` are the quotients taken at `h[k]`.
    pub samples: Vec<Vec<f64>>,
}

impl PilotDesign {
    /// Total number of pairs over all perturbations.
    pub fn pairs(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    pub fn bootstrap_moments(&self, k_index: usize, resamples: usize, stream: &mut RngStream) -> Result<(f64, f64)> {
        bootstrap_moments(&self.samples[k_index], resamples, stream)
    }
}

/// Nonparametric bootstrap of the sample mean.
///
/// Returns the mean and the (divisor-`I`) variance of `resamples` resample
/// means, each taken over `samples.len()` draws with replacement.
pub fn bootstrap_moments(samples: &[f64], resamples: usize, stream: &mut RngStream) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "bootstrap needs at least 2 samples per perturbation, got {n}"
        )));
    }
    if resamples == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one resample".into()));
    }
    let mut resample = vec![0.0; n];
    let means: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in resample.iter_mut() {
                *slot = samples[stream.index(n)];
            }
            stats::mean(&resample)
        })
        .collect();
    Ok((stats::mean(&means), stats::population_variance(&means)))
}

/// Output of the pilot regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotFit {
    /// Regression intercept, the pilot estimate of the derivative.
    pub g_hat: f64,
    /// Coefficient of `h²` in the mean of the CFD estimator.
    pub b_hat: f64,
    /// Estimated observation-noise variance at the point.
    pub sigma2_hat: f64,
    /// Plug-in optimal perturbation.
    pub h_opt: f64,
    /// Set when `h_opt` did not come straight from the formula.
    pub clamped: bool,
}

/// Fits `ĝ, B̂` by least squares of `mean_star` on `(1, h²)`, `σ̂²` by
/// least squares through the origin of `var_star` on `1 / (2 n_b h²)`, and
/// plugs both into `ĥ = (σ̂² / (4 n B̂²))^(1/6)`.
///
/// `B̂` is treated as zero when `|B̂| h_max²` is at rounding level relative
/// to the moments. `ĥ` is then `h_cap · h_max` (or `h_max` if `σ̂²` is zero
/// too). A zero `σ̂²` with non-zero `B̂` gives `h_min`. All three cases set
/// `clamped`, as does capping an oversized formula value.
pub fn fit_moments(
    h: &[f64],
    pairs_per_h: &[usize],
    mean_star: &[f64],
    var_star: &[f64],
    n: usize,
    h_cap: f64,
) -> Result<PilotFit> {
    let k = h.len();
    if k < 2 || pairs_per_h.len() != k || mean_star.len() != k || var_star.len() != k {
        return Err(Error::InvalidInput(
            "pilot regression needs matching inputs for at least two perturbations".into(),
        ));
    }
    let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let h_min = h.iter().cloned().fold(f64::INFINITY, f64::min);
    if h_max == h_min {
        return Err(Error::Internal("pilot perturbations are not distinct".into()));
    }

    let h2: Vec<f64> = h.iter().map(|v| v * v).collect();
    let (mut b_hat, g_hat) = stats::linear_fit(&h2, mean_star);
    let scale = mean_star.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if (b_hat * h_max * h_max).abs() <= 64.0 * f64::EPSILON * scale {
        b_hat = 0.0;
    }

    let (sxy, sxx) = h
        .iter()
        .zip(pairs_per_h)
        .zip(var_star)
        .fold((0.0, 0.0), |(sxy, sxx), ((hk, nb), v)| {
            let x = 1.0 / (2.0 * *nb as f64 * hk * hk);
            (sxy + x * v, sxx + x * x)
        });
    let sigma2_hat = (sxy / sxx).max(0.0);

    let cap = h_cap * h_max;
    let (h_opt, clamped) = if b_hat == 0.0 {
        if sigma2_hat == 0.0 {
            (h_max, true)
        } else {
            (cap, true)
        }
    } else {
        let raw = (sigma2_hat / (4.0 * n as f64 * b_hat * b_hat)).powf(1.0 / 6.0);
        if !raw.is_finite() || raw > cap {
            (cap, true)
        } else if raw <= 0.0 {
            (h_min, true)
        } else {
            (raw, false)
        }
    };

    Ok(PilotFit {
        g_hat,
        b_hat,
        sigma2_hat,
        h_opt,
        clamped,
    })
}

/// Bootstraps every perturbation group and runs [`fit_moments`] with `n`
/// total pairs.
pub fn fit_pilot(
    design: &PilotDesign,
    resamples: usize,
    n: usize,
    h_cap: f64,
    stream: &mut RngStream,
) -> Result<PilotFit> {
    let k = design.h.len();
    if k < 2 {
        return Err(Error::InsufficientData("need at least two perturbations".into()));
    }
    let mut mean_star = Vec::with_capacity(k);
    let mut var_star = Vec::with_capacity(k);
    for idx in 0..k {
        let (m, v) = design.bootstrap_moments(idx, resamples, stream)?;
        mean_star.push(m);
        var_star.push(v);
    }
    let counts: Vec<usize> = design.samples.iter().map(Vec::len).collect();
    fit_moments(&design.h, &counts, &mean_star, &var_star, n, h_cap)
}

/// Moves a quotient taken at `h_k` to the estimated optimal perturbation:
/// `(h_k/ĥ)(raw − ĝ − B̂h_k²) + ĝ + B̂ĥ²`.
///
/// Written as `r·raw + (1 − r)·ĝ + B̂(ĥ² − r·h_k²)` with `r = h_k/ĥ`, which
/// is the same map and returns `raw` unchanged when `h_k == ĥ`.
pub fn transform_sample(raw: f64, h_k: f64, fit: &PilotFit) -> f64 {
    let r = h_k / fit.h_opt;
    r * raw + (1.0 - r) * fit.g_hat + fit.b_hat * (fit.h_opt * fit.h_opt - r * h_k * h_k)
}

/// A single coordinate's Cor-CFD estimate together with everything needed
/// to augment it later.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateEstimate {
    pub estimate: f64,
    /// Unbiased variance of the transformed samples.
    pub sample_variance: f64,
    pub fit: PilotFit,
    pub design: PilotDesign,
}

impl CoordinateEstimate {
    fn from_design(design: PilotDesign, fit: PilotFit) -> Result<Self> {
        let transformed: Vec<f64> = design
            .h
            .iter()
            .zip(&design.samples)
            .flat_map(|(&h, qs)| qs.iter().map(move |&q| transform_sample(q, h, &fit)))
            .collect();
        let sample_variance = stats::sample_variance(&transformed)
            .ok_or_else(|| Error::InsufficientData("need at least two transformed samples".into()))?;
        Ok(Self {
            estimate: stats::mean(&transformed),
            sample_variance,
            fit,
            design,
        })
    }

    /// Every sample after transformation, grouped by perturbation.
    pub fn transformed(&self) -> Vec<Vec<f64>> {
        self.design
            .h
            .iter()
            .zip(&self.design.samples)
            .map(|(&h, qs)| qs.iter().map(|&q| transform_sample(q, h, &self.fit)).collect())
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn draw_quotients(
    problem: &Problem,
    x: &[f64],
    i: usize,
    h: f64,
    count: usize,
    out: &mut Vec<f64>,
    budget: &mut EvaluationBudget,
    noise: &mut RngStream,
    pairs_so_far: &mut usize,
) -> Result<()> {
    for _ in 0..count {
        match difference_quotient(problem, x, i, h, budget, noise) {
            Ok(q) => {
                out.push(q);
                *pairs_so_far += 1;
            }
            Err(Error::BudgetExhausted { .. }) => {
                return Err(Error::BudgetExhausted {
                    pairs_used: *pairs_so_far,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Cor-CFD estimate of `∂F/∂x_i` from `n_k` pairs (rounded up to a multiple of `K`).
///
/// Uses the `Noise`, `Perturbation` and `Bootstrap` streams of coordinate `i`
/// and consumes exactly `2 n_k` evaluations.
pub fn cor_cfd_coordinate(
    problem: &Problem,
    x: &[f64],
    i: usize,
    n_k: usize,
    config: &CorCfdConfig,
    budget: &mut EvaluationBudget,
    streams: &mut Streams,
) -> Result<CoordinateEstimate> {
    config.validate()?;
    if i >= problem.dim() || x.len() != problem.dim() {
        return Err(Error::InvalidInput(format!(
            "coordinate {i} or point dimension out of range"
        )));
    }
    let n_k = config.round_pairs(n_k);
    let n_b = n_k / config.perturbations;
    if n_b < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 pairs per perturbation, got n_k = {n_k} over K = {}",
            config.perturbations
        )));
    }
    let h = generate_perturbations(config, n_k, streams.get(Purpose::Perturbation, i))?;

    let mut samples = Vec::with_capacity(h.len());
    let mut pairs = 0usize;
    {
        let noise = streams.get(Purpose::Noise, i);
        for &hk in &h {
            let mut qs = Vec::with_capacity(n_b);
            draw_quotients(problem, x, i, hk, n_b, &mut qs, budget, noise, &mut pairs)?;
            samples.push(qs);
        }
    }
    let design = PilotDesign { h, samples };
    let fit = fit_pilot(
        &design,
        config.bootstraps,
        n_k,
        config.h_cap,
        streams.get(Purpose::Bootstrap, i),
    )?;
    CoordinateEstimate::from_design(design, fit)
}

/// Splits `extra` pairs evenly over the perturbations in `h`, handing any
/// remainder out in order of increasing `h`.
fn split_pairs(h: &[f64], extra: usize) -> Vec<usize> {
    let k = h.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| h[a].total_cmp(&h[b]));
    let mut counts = vec![extra / k; k];
    for &idx in order.iter().take(extra % k) {
        counts[idx] += 1;
    }
    counts
}

/// A full gradient estimate: one Cor-CFD estimate per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    /// Per-coordinate unbiased variance of the transformed samples.
    pub var: Vec<f64>,
    /// Pairs per coordinate.
    pub n_k: usize,
    pub fits: Vec<PilotFit>,
    pub designs: Vec<PilotDesign>,
}

impl GradientEstimate {
    fn from_coordinates(coords: Vec<CoordinateEstimate>, n_k: usize) -> Self {
        let mut out = GradientEstimate {
            g: Vec::with_capacity(coords.len()),
            var: Vec::with_capacity(coords.len()),
            n_k,
            fits: Vec::with_capacity(coords.len()),
            designs: Vec::with_capacity(coords.len()),
        };
        for c in coords {
            out.g.push(c.estimate);
            out.var.push(c.sample_variance);
            out.fits.push(c.fit);
            out.designs.push(c.design);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum()
    }

    pub fn total_variance(&self) -> f64 {
        self.var.iter().sum()
    }

    /// `sqrt(mean_i σ̂²_i)`, the regression's estimate of the observation noise.
    pub fn noise_level(&self) -> f64 {
        (self.fits.iter().map(|f| f.sigma2_hat).sum::<f64>() / self.fits.len() as f64).sqrt()
    }
}

/// Cor-CFD on every coordinate with its own streams; `2·d·n_k` evaluations.
pub fn cor_cfd_gradient(
    problem: &Problem,
    x: &[f64],
    n_k: usize,
    config: &CorCfdConfig,
    budget: &mut EvaluationBudget,
    streams: &mut Streams,
) -> Result<GradientEstimate> {
    let n_k = config.round_pairs(n_k);
    let mut coords = Vec::with_capacity(problem.dim());
    for i in 0..problem.dim() {
        match cor_cfd_coordinate(problem, x, i, n_k, config, budget, streams) {
            Ok(c) => coords.push(c),
            Err(Error::BudgetExhausted { pairs_used }) => {
                return Err(Error::BudgetExhausted {
                    pairs_used: i * n_k + pairs_used,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GradientEstimate::from_coordinates(coords, n_k))
}

/// Grows every coordinate of `existing` to `target_n` pairs.
///
/// New pairs are spread evenly over the existing perturbations (any
/// remainder goes to the smallest `h` first), the regression is refit on the
/// pooled samples with `n = target_n`, and every sample is re-transformed.
/// If the budget cannot pay for the whole increase, the largest affordable
/// multiple of `K` is drawn instead and the returned `n_k` says so.
#[allow(clippy::too_many_arguments)]
pub fn augment_gradient(
    existing: &GradientEstimate,
    target_n: usize,
    problem: &Problem,
    x: &[f64],
    config: &CorCfdConfig,
    budget: &mut EvaluationBudget,
    streams: &mut Streams,
) -> Result<GradientEstimate> {
    config.validate()?;
    let d = problem.dim();
    if existing.dim() != d || existing.designs.len() != d {
        return Err(Error::InvalidInput(
            "estimate does not match the problem dimension".into(),
        ));
    }
    let target_n = config.round_pairs(target_n);
    if target_n < existing.n_k {
        return Err(Error::InvalidInput(format!(
            "cannot shrink an estimate from {} to {target_n} pairs",
            existing.n_k
        )));
    }
    let k = config.perturbations;
    let affordable = (budget.remaining() / (2 * d as u64)).min(usize::MAX as u64) as usize;
    let extra = (target_n - existing.n_k).min(affordable / k * k);
    if extra == 0 {
        return Ok(existing.clone());
    }
    let new_n = existing.n_k + extra;

    let mut coords = Vec::with_capacity(d);
    for i in 0..d {
        let mut design = existing.designs[i].clone();
        let counts = split_pairs(&design.h, extra);
        let mut pairs = 0usize;
        {
            let noise = streams.get(Purpose::Noise, i);
            for (idx, count) in counts.into_iter().enumerate() {
                let hk = design.h[idx];
                draw_quotients(
                    problem,
                    x,
                    i,
                    hk,
                    count,
                    &mut design.samples[idx],
                    budget,
                    noise,
                    &mut pairs,
                )?;
            }
        }
        let fit = fit_pilot(
            &design,
            config.bootstraps,
            new_n,
            config.h_cap,
            streams.get(Purpose::Bootstrap, i),
        )?;
        coords.push(CoordinateEstimate::from_design(design, fit)?);
    }
    Ok(GradientEstimate::from_coordinates(coords, new_n))
}
