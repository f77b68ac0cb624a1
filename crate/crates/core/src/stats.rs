//! Small descriptive statistics used throughout the crate.

/// Arithmetic mean, accumulated as offsets from the first element so that a
/// constant sample returns that constant bit-for-bit.
pub fn mean(xs: &[f64]) -> f64 {
    match xs.first() {
        None => f64::NAN,
        Some(&first) => first + xs.iter().map(|v| v - first).sum::<f64>() / xs.len() as f64,
    }
}

/// Unbiased sample variance (divisor `n - 1`). `None` below two samples.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some(xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Population variance (divisor `n`).
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Nearest-rank quantile of an ascending-sorted slice: the smallest value
/// with at least a fraction `q` of the sample at or below it.
pub fn quantile_nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
