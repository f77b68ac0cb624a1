use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{constant_step_update, Trajectory};
use crate::oracle::{Bounds, Problem, Purpose, RngStream, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `‖x_final − x*‖`.
    pub solution_error: f64,
    /// `F(x_final) − F(x*)`.
    pub optimality_gap: f64,
    pub oscillatory_period: u64,
    /// The gap ended below the starting gap `F(x₀) − F(x*)`.
    pub success: bool,
}

/// Number of consecutive iterate pairs that both sit on the boundary of the
/// box and differ, i.e. the jumps from one boundary point to another.
///
/// Always 0 for a box with no finite face.
pub fn oscillatory_period_of<'a>(iterates: impl IntoIterator<Item = &'a [f64]>, bounds: &Bounds) -> u64 {
    if !bounds.is_finite() {
        return 0;
    }
    let mut count = 0;
    let mut prev: Option<&[f64]> = None;
    for x in iterates {
        if let Some(p) = prev {
            if p != x && bounds.on_boundary(p) && bounds.on_boundary(x) {
                count += 1;
            }
        }
        prev = Some(x);
    }
    count
}

pub fn oscillatory_period(trajectory: &Trajectory, bounds: &Bounds) -> u64 {
    oscillatory_period_of(trajectory.iterates(), bounds)
}

/// Final-iterate metrics from noiseless objective values. A non-finite final
/// iterate gives infinite error and gap.
pub fn compute_metrics(problem: &Problem, trajectory: &Trajectory) -> Metrics {
    let x = trajectory.final_x();
    let oscillatory_period = oscillatory_period(trajectory, problem.bounds());
    let f_star = problem.evaluate_true(problem.x_star()).unwrap_or(f64::NAN);
    let f_x = problem.evaluate_true(x).unwrap_or(f64::INFINITY);
    if !f_x.is_finite() {
        return Metrics {
            solution_error: f64::INFINITY,
            optimality_gap: f64::INFINITY,
            oscillatory_period,
            success: false,
        };
    }
    let solution_error = x
        .iter()
        .zip(problem.x_star())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let optimality_gap = f_x - f_star;
    Metrics {
        solution_error,
        optimality_gap,
        oscillatory_period,
        success: optimality_gap < problem.initial_gap(),
    }
}

/// Constants of a strongly convex quadratic test in the linear-convergence regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProbe {
    /// Strong-convexity constant.
    pub m: f64,
    /// Gradient Lipschitz constant.
    pub big_m: f64,
    pub theta: f64,
    pub a: f64,
    pub replications: usize,
}

impl ConvergenceProbe {
    /// The probe at the largest step the theory allows for this `θ`.
    pub fn at_max_step(m: f64, big_m: f64, theta: f64, replications: usize) -> Self {
        Self {
            m,
            big_m,
            theta,
            a: 1.0 / ((2.0 * theta * theta + 2.0 * theta + 1.0) * big_m),
            replications,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.m && self.m <= self.big_m) {
            return Err(Error::Config("need 0 < m <= M".into()));
        }
        if !(0.0 < self.theta && self.theta < self.m / (2.0 * self.big_m)) {
            return Err(Error::Config(format!("theta = {} outside (0, m/2M)", self.theta)));
        }
        let a_max = 1.0 / ((2.0 * self.theta * self.theta + 2.0 * self.theta + 1.0) * self.big_m);
        if !(0.0 < self.a && self.a <= a_max * (1.0 + 1e-12)) {
            return Err(Error::Config(format!("step {} exceeds {a_max}", self.a)));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        Ok(())
    }

    /// Per-iteration contraction `1 − (m − 2θM)a` of the expected squared error.
    pub fn contraction(&self) -> f64 {
        1.0 - (self.m - 2.0 * self.theta * self.big_m) * self.a
    }

    pub fn bound(&self, k: u32, initial_sq_error: f64) -> f64 {
        self.contraction().powi(k as i32) * initial_sq_error
    }

    /// Mean of `‖x_k − x*‖²` for `k = 0..=iterations` on `F = ‖x‖²/2` when
    /// the exact gradient is corrupted by unbiased Gaussian noise with
    /// `E‖ε‖² = θ²‖∇F(x)‖²`.
    pub fn simulate(&self, problem: &Problem, iterations: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let d = problem.dim();
        let mut sums = vec![0.0; iterations + 1];
        for r in 0..self.replications {
            let mut stream = RngStream::new(seed, StreamKey::new(r as u64, Purpose::Auxiliary, 0));
            let mut x = problem.x0().to_vec();
            for slot in sums.iter_mut() {
                *slot += x
                    .iter()
                    .zip(problem.x_star())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
                let grad: Vec<f64> = x.iter().zip(problem.x_star()).map(|(a, b)| a - b).collect();
                let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = self.theta * norm / (d as f64).sqrt();
                let g: Vec<f64> = grad.iter().map(|v| v + scale * stream.standard_normal()).collect();
                x = constant_step_update(problem, &x, &g, self.a);
            }
        }
        Ok(sums.into_iter().map(|s| s / self.replications as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::catalog;

    fn points(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn oscillation_examples() {
        let b = Bounds::uniform(1, -50.0, 50.0).unwrap();
        let path = points(&[30.0, -50.0, 50.0, -50.0, 3.2]);
        assert_eq!(oscillatory_period_of(path.iter().map(Vec::as_slice), &b), 2);
        let path = points(&[30.0, 10.0, -3.0]);
        assert_eq!(oscillatory_period_of(path.iter().map(Vec::as_slice), &b), 0);
        let path = points(&[30.0, 50.0, 50.0, 50.0]);
        assert_eq!(oscillatory_period_of(path.iter().map(Vec::as_slice), &b), 0);
        let path = points(&[50.0, -50.0]);
        assert_eq!(
            oscillatory_period_of(path.iter().map(Vec::as_slice), &Bounds::unbounded(1)),
            0
        );
    }

    fn ended_at(x: Vec<f64>, start: Vec<f64>) -> Trajectory {
        Trajectory {
            start,
            records: vec![crate::optim::IterationRecord {
                k: 1,
                x,
                step: 1.0,
                n_k: 0,
                n_ls: 0,
                evals: 2,
                degenerate: false,
                safeguard: false,
            }],
            termination: crate::optim::Termination::BudgetExhausted,
            evals_used: 2,
        }
    }

    #[test]
    fn metric_examples() {
        let p = catalog::power4(0.1);
        let m = compute_metrics(&p, &ended_at(vec![0.0], vec![30.0]));
        assert_eq!((m.solution_error, m.optimality_gap, m.success), (0.0, 0.0, true));
        let m = compute_metrics(&p, &ended_at(vec![0.42], vec![30.0]));
        assert!((m.solution_error - 0.42).abs() < 1e-15);
        assert!((m.optimality_gap - 0.0311).abs() < 1e-4);

        let p = catalog::rosenbrock(1.0);
        let m = compute_metrics(&p, &ended_at(vec![-1.9, 2.0], vec![-1.9, 2.0]));
        assert!((m.optimality_gap - 267.62).abs() < 1e-9);
        assert!(!m.success);
    }

    #[test]
    fn non_finite_iterate_has_infinite_metrics() {
        let p = catalog::rosenbrock(1.0);
        let m = compute_metrics(&p, &ended_at(vec![f64::NAN, 0.0], vec![-1.9, 2.0]));
        assert!(m.solution_error.is_infinite() && m.optimality_gap.is_infinite() && !m.success);
    }

    #[test]
    fn probe_validation_and_bound() {
        let probe = ConvergenceProbe::at_max_step(1.0, 1.0, 0.2, 10);
        probe.validate().unwrap();
        assert!((probe.a - 0.6757).abs() < 1e-4);
        assert!((probe.contraction() - (1.0 - 0.6 * probe.a)).abs() < 1e-15);
        assert!(ConvergenceProbe { theta: 0.5, ..probe }.validate().is_err());
        assert!(ConvergenceProbe { a: 0.7, ..probe }.validate().is_err());
    }
}
