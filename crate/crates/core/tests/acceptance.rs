//! Reproduction checks. Each test prints one `criterion N: PASS|FAIL` line
//! to stderr (bypassing output capture) before asserting.

use std::io::Write;
use std::time::{Duration, Instant};

use adadfo::bench::{
    run_experiment, AlgorithmSpec, ConvergenceProbe, ExperimentResults, ExperimentSpec, ProblemSpec, SpsaGrid,
};
use adadfo::corcfd::{cor_cfd_coordinate, fit_moments, transform_sample, CorCfdConfig, PilotFit};
use adadfo::fd::{cfd_batch, spsa_gradient_along};
use adadfo::linesearch::LineSearchConfig;
use adadfo::optim::{run, run_kwsa, AdaDfoParams, Gains, Method, RunConfig};
use adadfo::oracle::catalog::{self, ProblemOverrides};
use adadfo::oracle::{Bounds, EvaluationBudget, Problem, Purpose, RngStream, StreamKey, Streams};
use adadfo::stats::linear_fit;

const SEED: u64 = 20_240_601;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {criterion}: {verdict} {detail}");
}

fn problem_spec(name: &str, sigmas: &[f64]) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        sigmas: sigmas.to_vec(),
        scale_budget_by_dim: false,
        overrides: ProblemOverrides::default(),
        corcfd: None,
    }
}

fn adadfo_ls() -> AlgorithmSpec {
    AlgorithmSpec::new(Method::AdadfoLs {
        adadfo: AdaDfoParams::default(),
        ls: LineSearchConfig::default(),
    })
}

fn tuned_spsa() -> AlgorithmSpec {
    AlgorithmSpec {
        tune_spsa: Some(SpsaGrid::default()),
        ..AlgorithmSpec::new(Method::Spsa(Gains {
            theta_a: 1.0,
            theta_c: 1.0,
        }))
    }
}

fn experiment(
    replications: usize,
    budget_pairs: Vec<u64>,
    problems: Vec<ProblemSpec>,
    algorithms: Vec<AlgorithmSpec>,
) -> ExperimentResults {
    let spec = ExperimentSpec {
        seed: SEED,
        replications,
        budget_pairs,
        problems,
        algorithms,
        out_dir: None,
        timing: false,
    };
    run_experiment(&spec).expect("experiment runs")
}

// ---------------------------------------------------------------------------

const C1_STEP_TOL: f64 = 1e-12;
const C1_FLOOR: f64 = 0.98;
const C1_ITERATIONS: usize = 10_000;
const C1_TIME: Duration = Duration::from_secs(1);

#[test]
fn criterion_1_kiefer_wolfowitz_stalls_on_a_flat_quadratic() {
    let started = Instant::now();
    let p = Problem::new("flat", 1, |x: &[f64]| 0.001 * x[0] * x[0])
        .with_start(vec![1.0])
        .with_optimum(vec![0.0]);
    let method = Method::Kwsa(Gains {
        theta_a: 1.0,
        theta_c: 1.0,
    });
    let t = run_kwsa(&p, &RunConfig::new(method, 2 * C1_ITERATIONS as u64, SEED, 0)).unwrap();
    let elapsed = started.elapsed();

    // x_k for k = 1..=10⁴: the start followed by the first 9999 updates
    let xs: Vec<f64> = t.iterates().map(|x| x[0]).collect();
    let mut worst = 0.0f64;
    for k in 1..xs.len() {
        let expected = xs[k - 1] * (1.0 - 1.0 / (500.0 * k as f64));
        worst = worst.max((xs[k] - expected).abs());
    }
    let x_at = xs[C1_ITERATIONS - 1];
    let product: f64 = (1..C1_ITERATIONS).map(|i| 1.0 - 1.0 / (500.0 * i as f64)).product();

    let pass = t.iterations() == C1_ITERATIONS
        && worst <= C1_STEP_TOL
        && (x_at - product).abs() <= C1_STEP_TOL * C1_ITERATIONS as f64
        && x_at > C1_FLOOR
        && elapsed < C1_TIME;
    report(
        1,
        pass,
        &format!("max step deviation {worst:.2e}, x_10000 = {x_at:.6} (product {product:.6}), {elapsed:?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const C2_REPS: usize = 200;
const C2_SIGMAS: [f64; 3] = [0.1, 1.0, 10.0];
const C2_BUDGETS: [u64; 3] = [100, 1_000, 10_000];
const C2_BOUNDARY_ERROR: f64 = 50.0;
const C2_KWSA_PERIOD: (f64, f64) = (4900.0, 5000.0);
const C2_ADADFO_MEDIAN_ERROR: f64 = 1.0;
const C2_STEADY_FRACTION: f64 = 0.95;

#[test]
fn criterion_2_power4_table() {
    let kwsa = AlgorithmSpec::new(Method::Kwsa(Gains {
        theta_a: 1.0,
        theta_c: 1.0,
    }));
    let res = experiment(
        C2_REPS,
        C2_BUDGETS.to_vec(),
        vec![problem_spec("power4", &C2_SIGMAS)],
        vec![adadfo_ls(), kwsa],
    );

    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for sigma in C2_SIGMAS {
        for pairs in &C2_BUDGETS[..2] {
            if let Some(r) = res
                .rows_for("power4", sigma, "kwsa", *pairs)
                .find(|r| r.solution_error != C2_BOUNDARY_ERROR)
            {
                failures.push(format!("(a) kwsa σ={sigma} {pairs} pairs: error {}", r.solution_error));
            }
        }
        let k = res.cell("power4", sigma, "kwsa", 10_000).unwrap();
        let period = k.oscillatory_period.median;
        if !(C2_KWSA_PERIOD.0..=C2_KWSA_PERIOD.1).contains(&period) {
            failures.push(format!("(b) kwsa σ={sigma}: median period {period}"));
        }
        let a = res.cell("power4", sigma, "adadfo_ls", 10_000).unwrap();
        if sigma <= 1.0 && (a.solution_error.median.is_nan() || a.solution_error.median > C2_ADADFO_MEDIAN_ERROR) {
            failures.push(format!(
                "(c) adadfo σ={sigma}: median error {}",
                a.solution_error.median
            ));
        }
        for pairs in C2_BUDGETS {
            let rows: Vec<_> = res.rows_for("power4", sigma, "adadfo_ls", pairs).collect();
            let steady = rows.iter().filter(|r| r.oscillatory_period == Some(0)).count();
            if (steady as f64) < C2_STEADY_FRACTION * rows.len() as f64 {
                failures.push(format!(
                    "(d) adadfo σ={sigma} {pairs} pairs: {steady}/{} without oscillation",
                    rows.len()
                ));
            }
        }
        let errs: Vec<String> = C2_BUDGETS
            .iter()
            .map(|&b| {
                format!(
                    "{:.2}",
                    res.cell("power4", sigma, "adadfo_ls", b).unwrap().solution_error.median
                )
            })
            .collect();
        lines.push(format!(
            "σ={sigma}: adadfo median error {} | kwsa period median {period}",
            errs.join("/")
        ));
    }
    let pass = failures.is_empty();
    report(2, pass, &format!("{}; {}", lines.join("; "), failures.join("; ")));
    assert!(pass, "{failures:?}");
}

// ---------------------------------------------------------------------------

const C3_REPS: usize = 100;
const C3_BUDGET_PAIRS: u64 = 2_000;

#[test]
fn criterion_3_rosenbrock_ordering() {
    let res = experiment(
        C3_REPS,
        vec![C3_BUDGET_PAIRS],
        vec![problem_spec("rosenbrock", &[1.0])],
        vec![adadfo_ls(), tuned_spsa()],
    );
    let ada = res.cell("rosenbrock", 1.0, "adadfo_ls", C3_BUDGET_PAIRS).unwrap();
    let spsa = res.cell("rosenbrock", 1.0, "spsa", C3_BUDGET_PAIRS).unwrap();
    let tuned = &res.aggregate.tuned[0];
    let spsa_og = spsa.mean_og_successful.unwrap_or(f64::INFINITY);
    let pass = ada.failures == 0 && ada.success_rate == 1.0 && ada.optimality_gap.mean < spsa_og;
    report(
        3,
        pass,
        &format!(
            "adadfo success {:.2}, mean OG {:.3} | spsa (θa={:e}, θc={:e}) success {:.2}, mean OG over successes {:.3}",
            ada.success_rate, ada.optimality_gap.mean, tuned.theta_a, tuned.theta_c, spsa.success_rate, spsa_og
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const C4_REPS: usize = 30;
const C4_PAIRS_PER_DIM: u64 = 1_000;
const C4_ADADFO_MAX_OG: f64 = 1e2;
const C4_SPSA_MIN_OG: f64 = 1e4;

#[test]
fn criterion_4_chained_quartic_separation() {
    let problem = ProblemSpec {
        scale_budget_by_dim: true,
        corcfd: Some(CorCfdConfig::steep()),
        ..problem_spec("chained_quartic", &[0.1])
    };
    let res = experiment(
        C4_REPS,
        vec![C4_PAIRS_PER_DIM],
        vec![problem],
        vec![adadfo_ls(), tuned_spsa()],
    );
    let pairs = C4_PAIRS_PER_DIM * 64;
    let ada = res.cell("chained_quartic", 0.1, "adadfo_ls", pairs).unwrap();
    let spsa = res.cell("chained_quartic", 0.1, "spsa", pairs).unwrap();
    let tuned = &res.aggregate.tuned[0];
    let pass = ada.failures == 0
        && spsa.failures == 0
        && ada.optimality_gap.mean <= C4_ADADFO_MAX_OG
        && spsa.optimality_gap.mean >= C4_SPSA_MIN_OG;
    report(
        4,
        pass,
        &format!(
            "adadfo mean OG {:.3} | spsa (θa={:e}, θc={:e}) mean OG {:.3e}",
            ada.optimality_gap.mean, tuned.theta_a, tuned.theta_c, spsa.optimality_gap.mean
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const C5_THETA: f64 = 0.2;
const C5_REPS: usize = 1_000;
const C5_K: usize = 20;
const C5_SLACK: f64 = 1.1;
const C5_TIME: Duration = Duration::from_secs(10);

#[test]
fn criterion_5_linear_convergence_in_expectation() {
    let started = Instant::now();
    let probe = ConvergenceProbe::at_max_step(1.0, 1.0, C5_THETA, C5_REPS);
    let p = catalog::quadratic(2, 0.0);
    let mse = probe.simulate(&p, C5_K, SEED).unwrap();
    let r0: f64 = p.x0().iter().map(|v| v * v).sum();
    // contraction 1 − (m − 2θM)a with a = 1/((2θ² + 2θ + 1)M), m = M = 1
    let a = 1.0 / (2.0 * C5_THETA * C5_THETA + 2.0 * C5_THETA + 1.0);
    let bound = (1.0 - (1.0 - 2.0 * C5_THETA) * a).powi(C5_K as i32) * r0;
    let elapsed = started.elapsed();
    let pass = (probe.a - a).abs() < 1e-15 && mse[C5_K] <= C5_SLACK * bound && elapsed < C5_TIME;
    report(
        5,
        pass,
        &format!(
            "a = {a:.4}, E‖x_20 − x*‖² = {:.3e} vs bound {bound:.3e}, {elapsed:?}",
            mse[C5_K]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const C6_PAIRS: usize = 100;
const C6_K: usize = 10;
const C6_REPS: u64 = 1_000;
const C6_RATIO: f64 = 1.5;
const C6_H_STAR: f64 = 0.3107;
const C6_TIME: Duration = Duration::from_secs(30);

fn rmse_pair(config: &CorCfdConfig, h_star: f64) -> (f64, f64) {
    let p = catalog::sine(10.0, 1.0);
    let x = [0.0];
    let truth = 10.0;
    let (mut se_cor, mut se_cfd) = (0.0, 0.0);
    for r in 0..C6_REPS {
        let mut budget = EvaluationBudget::unlimited();
        let mut streams = Streams::new(SEED, r);
        let est = cor_cfd_coordinate(&p, &x, 0, C6_PAIRS, config, &mut budget, &mut streams).unwrap();
        se_cor += (est.estimate - truth).powi(2);
        let mut aux = RngStream::new(SEED, StreamKey::new(r, Purpose::Auxiliary, 0));
        let batch = cfd_batch(&p, &x, 0, h_star, C6_PAIRS, &mut budget, &mut aux).unwrap();
        se_cfd += (batch.estimate() - truth).powi(2);
    }
    ((se_cor / C6_REPS as f64).sqrt(), (se_cfd / C6_REPS as f64).sqrt())
}

#[test]
fn criterion_6_cor_cfd_matches_oracle_perturbation() {
    let started = Instant::now();
    // B = F'''(0)/6 = -10/6, σ² = 1
    let b = -10.0 / 6.0;
    let h_star = (1.0 / (4.0 * C6_PAIRS as f64 * b * b)).powf(1.0 / 6.0);
    // h_k = c_k n_b^(-1/10) with |c_k| drawn from N(0, 1) truncated at 1/4;
    // n_b^(-1/10) / n^(-1/5) = 10^0.3 for n_b = 10, n = 100
    let scale = 10f64.powf(0.3);
    let config = CorCfdConfig {
        perturbations: C6_K,
        gen_std_scale: scale,
        trunc_lo_scale: 0.25 * scale,
        ..CorCfdConfig::default()
    };
    let (rmse_cor, rmse_cfd) = rmse_pair(&config, h_star);
    let elapsed = started.elapsed();
    // the optimizer's default generator, for reference only
    let default_k = CorCfdConfig {
        perturbations: C6_K,
        ..CorCfdConfig::default()
    };
    let (rmse_default, _) = rmse_pair(&default_k, h_star);
    let pass = (h_star - C6_H_STAR).abs() < 1e-4 && rmse_cor <= C6_RATIO * rmse_cfd && elapsed < C6_TIME;
    report(
        6,
        pass,
        &format!(
            "h* = {h_star:.4}, RMSE cor-cfd {rmse_cor:.4} vs cfd(h*) {rmse_cfd:.4} (ratio {:.3}; default generator {:.3}), {elapsed:?}",
            rmse_cor / rmse_cfd,
            rmse_default / rmse_cfd
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const C7_REPS: usize = 200;
const C7_THETA: f64 = 0.4;
const C7_STEP: f64 = 0.45;
const C7_BUDGETS: [u64; 3] = [1_000, 10_000, 100_000];
const C7_SLOPE: (f64, f64) = (-1.0, -0.4);

#[test]
fn criterion_7_sample_complexity_slope() {
    // theorem: θ < m/2M and a ≤ 1/((2θ² + 2θ + 1)M), m = M = 1
    const { assert!(C7_THETA < 0.5 && C7_STEP <= 1.0 / (2.0 * C7_THETA * C7_THETA + 2.0 * C7_THETA + 1.0)) };
    let alg = AlgorithmSpec::new(Method::AdadfoConst {
        step: C7_STEP,
        adadfo: AdaDfoParams {
            theta: C7_THETA,
            ..AdaDfoParams::default()
        },
    });
    let pairs: Vec<u64> = C7_BUDGETS.iter().map(|b| b / 2).collect();
    let res = experiment(
        C7_REPS,
        pairs.clone(),
        vec![problem_spec("quadratic", &[1.0])],
        vec![alg],
    );
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&evals, &pp) in C7_BUDGETS.iter().zip(&pairs) {
        let errs: Vec<f64> = res
            .rows_for("quadratic", 1.0, "adadfo_const", pp)
            .map(|r| r.solution_error.powi(2))
            .collect();
        assert_eq!(errs.len(), C7_REPS);
        xs.push((evals as f64).ln());
        ys.push((errs.iter().sum::<f64>() / errs.len() as f64).ln());
    }
    let (slope, _) = linear_fit(&xs, &ys);
    let pass = (C7_SLOPE.0..=C7_SLOPE.1).contains(&slope);
    let mses: Vec<String> = ys.iter().map(|y| format!("{:.3e}", y.exp())).collect();
    report(
        7,
        pass,
        &format!("mean squared error {} → slope {slope:.3}", mses.join(" / ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------

const C8_REL_TOL: f64 = 1e-10;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn criterion_8_exact_and_reproducible_building_blocks() {
    let mut failures = Vec::new();

    // transform identity, exact
    let fit = PilotFit {
        g_hat: 1.5,
        b_hat: -2.0,
        sigma2_hat: 1.0,
        h_opt: 0.37,
        clamped: false,
    };
    for raw in [-3.25, 0.0, 7.1e5, 1e-300] {
        if transform_sample(raw, 0.37, &fit) != raw {
            failures.push("transform identity");
        }
    }

    // regression exact recovery
    let h = [0.1, 0.2, 0.35, 0.5, 0.8];
    let (g, b, s2, nb) = (3.0, -1.25, 0.7, 8usize);
    let means: Vec<f64> = h.iter().map(|v| g + b * v * v).collect();
    let vars: Vec<f64> = h.iter().map(|v| s2 / (2.0 * nb as f64 * v * v)).collect();
    let fit = fit_moments(&h, &[nb; 5], &means, &vars, 5 * nb, 10.0).unwrap();
    if rel_err(fit.g_hat, g)
        .max(rel_err(fit.b_hat, b))
        .max(rel_err(fit.sigma2_hat, s2))
        > C8_REL_TOL
    {
        failures.push("regression recovery");
    }

    // quadratic CFD exactness
    let quad = Problem::new("q", 2, |x: &[f64]| {
        2.0 * x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1] + x[0]
    });
    let point = [0.7, -1.3];
    let exact = [4.0 * 0.7 + 1.3 + 1.0, 0.7f64.mul_add(-1.0, -1.3)];
    let mut budget = EvaluationBudget::unlimited();
    let mut s = RngStream::new(SEED, StreamKey::new(0, Purpose::Noise, 0));
    for (i, e) in exact.iter().enumerate() {
        for hh in [1e-3, 0.1, 2.0] {
            let est = cfd_batch(&quad, &point, i, hh, 3, &mut budget, &mut s)
                .unwrap()
                .estimate();
            if rel_err(est, *e) > C8_REL_TOL {
                failures.push("quadratic CFD");
            }
        }
    }

    // SPSA averaged over every sign vector, d = 1..=4
    for d in 1..=4usize {
        let f = move |x: &[f64]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * v * v + v)
                .sum::<f64>()
        };
        let p = Problem::new("s", d, f);
        let x: Vec<f64> = (0..d).map(|i| 0.3 * i as f64 - 0.4).collect();
        let mut avg = vec![0.0; d];
        for mask in 0..(1u32 << d) {
            let delta: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let g = spsa_gradient_along(&p, &x, 0.25, &delta, &mut budget, &mut s).unwrap();
            for (a, v) in avg.iter_mut().zip(g) {
                *a += v / (1u32 << d) as f64;
            }
        }
        for i in 0..d {
            if rel_err(avg[i], 2.0 * (i as f64 + 1.0) * x[i] + 1.0) > C8_REL_TOL {
                failures.push("SPSA unbiasedness");
            }
        }
    }

    // projection idempotence, exact
    let bounds = Bounds::new(vec![-1.0, 0.0, -5.0], vec![1.0, 2.0, 5.0]).unwrap();
    let boxed = Problem::new("b", 3, |_: &[f64]| 0.0).with_bounds(bounds);
    for x in [[3.0, -1.0, 0.0], [-7.0, 1.0, 9.0], [0.5, 0.5, 0.5]] {
        let once = boxed.project(&x);
        if boxed.project(&once) != once {
            failures.push("projection idempotence");
        }
    }

    // budget reconciliation on every trajectory of every algorithm
    let methods = [
        Method::AdadfoLs {
            adadfo: AdaDfoParams::default(),
            ls: LineSearchConfig::default(),
        },
        Method::AdadfoConst {
            step: 0.3,
            adadfo: AdaDfoParams::default(),
        },
        Method::Spsa(Gains {
            theta_a: 0.01,
            theta_c: 0.1,
        }),
    ];
    let rosen = catalog::rosenbrock(1.0);
    for m in &methods {
        for budget in [0u64, 19, 41, 999, 4000] {
            let t = run(&rosen, &RunConfig::new(m.clone(), budget, SEED, 3)).unwrap();
            let mut prev = 0;
            for r in &t.records {
                let spent = r.evals - prev;
                let expected = match m {
                    Method::Spsa(_) | Method::Kwsa(_) => 2,
                    _ => 4 * r.n_k as u64 + r.n_ls,
                };
                if spent != expected {
                    failures.push("budget reconciliation");
                }
                prev = r.evals;
            }
            if prev != t.evals_used || t.evals_used > budget {
                failures.push("budget total");
            }
        }
    }
    let power = catalog::power4(1.0);
    let t = run_kwsa(
        &power,
        &RunConfig::new(
            Method::Kwsa(Gains {
                theta_a: 1.0,
                theta_c: 1.0,
            }),
            501,
            SEED,
            0,
        ),
    )
    .unwrap();
    if t.evals_used != 500 || t.iterations() != 250 {
        failures.push("kwsa budget");
    }

    // byte-identical experiment output under a fixed seed
    let spec = ExperimentSpec {
        seed: SEED,
        replications: 3,
        budget_pairs: vec![50, 200],
        problems: vec![problem_spec("power4", &[1.0]), problem_spec("rosenbrock", &[1.0])],
        algorithms: vec![adadfo_ls(), AlgorithmSpec::new(methods[2].clone())],
        out_dir: None,
        timing: false,
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_experiment(&spec).unwrap().write(d.path()).unwrap();
    }
    for file in [adadfo::bench::RUNS_FILE, adadfo::bench::AGGREGATE_FILE] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        if a != b {
            failures.push("byte-identical reruns");
        }
    }

    failures.dedup();
    let pass = failures.is_empty();
    report(
        8,
        pass,
        &format!("exact/10⁻¹⁰ building-block checks; failed: {failures:?}"),
    );
    assert!(pass);
}
