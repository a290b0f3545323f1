//! Acceptance gate. Each test checks one criterion at its pinned tolerance,
//! prints a single PASS/FAIL line and fails on FAIL.
//!
//! Run with `cargo test -p logit-vb --test acceptance -- --nocapture` to see
//! the report lines.

use std::time::{Duration, Instant};

use rand::Rng;

use logit_vb::cavi::{estimating_residual, fit_cavi, fit_em_jj, CaviConfig};
use logit_vb::experiment::{
    run_rate_sweep, run_shrinkage, summarize, Method, RateSweepConfig, ShrinkageConfig,
};
use logit_vb::linalg::{self, Vector};
use logit_vb::mle::{self, MleMethod, MleOptions};
use logit_vb::oracle::{self, QuadratureGrid};
use logit_vb::pg_bound::{jj_bound, kl_gap, log_lik, pg_mean};
use logit_vb::simulate::{random_instance, single_covariate, stream_rng};
use logit_vb::svi::{self, mean_displacement};
use logit_vb::{Dataset, GaussianPrior, Termination};

fn report(
    id: u32,
    title: &str,
    started: Instant,
    limit: Duration,
    failures: &[String],
    detail: String,
) {
    let elapsed = started.elapsed();
    let mut failures = failures.to_vec();
    if elapsed > limit {
        failures.push(format!("runtime {elapsed:.2?} exceeds {limit:?}"));
    }
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("[criterion {id}] {verdict} {title}: {detail} ({elapsed:.2?})");
    for f in &failures {
        println!("    - {f}");
    }
    assert!(failures.is_empty(), "criterion {id} failed: {failures:?}");
}

/// 10,000 random `(y, eta, xi)` points; every fifth one is tangent (`xi = |eta|`).
fn bound_grid() -> Vec<(f64, f64, f64, bool)> {
    let mut rng = stream_rng(2024, 0);
    (0..10_000)
        .map(|k| {
            let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
            let eta: f64 = rng.random_range(-20.0..20.0);
            let tangent = k % 5 == 0;
            let xi = if tangent {
                eta.abs()
            } else {
                rng.random_range(0.0..20.0)
            };
            (y, eta, xi, tangent)
        })
        .collect()
}

#[test]
fn criterion_1_bound_minorization_and_tangency() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_tangent = 0.0f64;
    for (y, eta, xi, tangent) in bound_grid() {
        let diff = jj_bound(y, eta, xi) - log_lik(y, eta);
        worst_excess = worst_excess.max(diff);
        if diff > 1e-12 {
            failures.push(format!(
                "bound exceeds log-lik by {diff:e} at y={y} eta={eta} xi={xi}"
            ));
        }
        if tangent {
            worst_tangent = worst_tangent.max(diff.abs());
            if diff.abs() > 1e-12 {
                failures.push(format!("tangency off by {diff:e} at eta={eta}"));
            }
        }
    }
    failures.truncate(10);
    report(
        1,
        "tangent bound minorizes and touches at xi = |eta|",
        started,
        Duration::from_secs(1),
        &failures,
        format!("max(bound - loglik) = {worst_excess:e}, max tangency error = {worst_tangent:e}"),
    );
}

#[test]
fn criterion_2_kl_gap_and_pg_moments() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut min_gap = f64::INFINITY;
    let mut max_y_dep = 0.0f64;
    for (y, eta, xi, _) in bound_grid() {
        let a = kl_gap(y, eta, xi);
        let b = kl_gap(1.0 - y, eta, xi);
        min_gap = min_gap.min(a.kl_gap);
        max_y_dep = max_y_dep.max((a.kl_gap - b.kl_gap).abs());
        if a.kl_gap < -1e-14 {
            failures.push(format!("negative gap {:e} at eta={eta} xi={xi}", a.kl_gap));
        }
        if (a.kl_gap - b.kl_gap).abs() > 1e-14 {
            failures.push(format!("gap depends on y at eta={eta} xi={xi}"));
        }
        let by_difference = a.exact_loglik - a.bound_value;
        if (by_difference - a.kl_gap).abs() > 1e-12 * (1.0 + a.kl_gap.abs()) {
            failures.push(format!(
                "gap {} != loglik - bound {by_difference}",
                a.kl_gap
            ));
        }
    }
    let mut max_series_err = 0.0f64;
    for k in 0..20 {
        // log-spaced on [1e-3, 50]
        let c = 1e-3 * (50.0f64 / 1e-3).powf(k as f64 / 19.0);
        let err = (pg_mean(c) - oracle::pg_mean_series(c, 1_000_000)).abs();
        max_series_err = max_series_err.max(err);
        if err > 1e-10 {
            failures.push(format!("pg_mean({c}) off the series by {err:e}"));
        }
    }
    failures.truncate(10);
    report(
        2,
        "KL gap is nonnegative and y-free; PG mean matches its series",
        started,
        Duration::from_secs(10),
        &failures,
        format!("min gap = {min_gap:e}, max |gap(y) - gap(1-y)| = {max_y_dep:e}, max series error = {max_series_err:e}"),
    );
}

fn cavi_instance(seed: u64, max_n: usize, max_p: usize) -> (Dataset, GaussianPrior) {
    let mut rng = stream_rng(seed, 0);
    let n = rng.random_range(10..=max_n);
    let p = rng.random_range(1..=max_p);
    let variance = [1.0, 4.0, 10.0][rng.random_range(0..3)];
    let data = random_instance(&mut rng, n, p);
    (data, GaussianPrior::isotropic(p, 0.0, variance).unwrap())
}

#[test]
fn criterion_3_cavi_monotone_and_stationary() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut worst_residual = 0.0f64;
    let mut worst_drop = 0.0f64;
    for seed in 0..100 {
        let (data, prior) = cavi_instance(3000 + seed, 200, 5);
        let fit = fit_cavi(&data, &prior, &CaviConfig::default()).unwrap();
        for w in fit.trace.objective.windows(2) {
            let drop = (w[0] - w[1]) / (1.0 + w[0].abs());
            worst_drop = worst_drop.max(drop);
        }
        if !fit.trace.is_monotone(1e-10) {
            failures.push(format!("instance {seed}: ELBO decreased"));
        }
        if !fit.trace.converged {
            failures.push(format!(
                "instance {seed}: no convergence in {} sweeps",
                fit.trace.iterations
            ));
        }
        let r = estimating_residual(&data, &prior, &fit.q, &fit.xi).unwrap();
        worst_residual = worst_residual.max(r);
        if r > 1e-8 {
            failures.push(format!(
                "instance {seed}: estimating-equation residual {r:e}"
            ));
        }
    }
    report(
        3,
        "CAVI ELBO is monotone and converges to the estimating equations",
        started,
        Duration::from_secs(30),
        &failures,
        format!(
            "largest relative ELBO drop = {worst_drop:e}, largest residual = {worst_residual:e}"
        ),
    );
}

#[test]
fn criterion_4_em_equals_cavi() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut worst_em = 0.0f64;
    for seed in 0..20 {
        let (data, prior) = cavi_instance(4000 + seed, 200, 5);
        let cavi = fit_cavi(&data, &prior, &CaviConfig::default()).unwrap();
        let em = fit_em_jj(&data, &prior, &CaviConfig::default()).unwrap();
        if cavi.trace.objective.len() != em.trace.objective.len() {
            failures.push(format!("instance {seed}: trace lengths differ"));
            continue;
        }
        for (a, b) in cavi.trace.objective.iter().zip(&em.trace.objective) {
            worst = worst.max((a - b).abs());
        }
        let bound = em
            .trace
            .em_objective
            .as_ref()
            .expect("EM records its objective");
        for (a, b) in cavi.trace.objective.iter().zip(bound) {
            worst_em = worst_em.max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    if worst > 1e-12 {
        failures.push(format!("EM and CAVI ELBO traces differ by {worst:e}"));
    }
    if worst_em > 1e-12 {
        failures.push(format!(
            "expected-bound objective differs from ELBO by {worst_em:e} (relative)"
        ));
    }
    report(
        4,
        "tangent-bound EM and CAVI produce identical traces",
        started,
        Duration::from_secs(5),
        &failures,
        format!(
            "max trace difference = {worst:e}, max relative EM-objective difference = {worst_em:e}"
        ),
    );
}

#[test]
fn criterion_5_elbo_below_log_evidence() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut min_gap = f64::INFINITY;
    let mut worst_doubling = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = stream_rng(5000 + seed, 0);
        let n = rng.random_range(5..=50);
        let data = random_instance(&mut rng, n, 2);
        let prior = GaussianPrior::isotropic(2, 0.0, 4.0).unwrap();
        let fit = fit_cavi(&data, &prior, &CaviConfig::default()).unwrap();
        let grid = QuadratureGrid::from_cavi(&data, &prior, oracle::DEFAULT_NODES).unwrap();
        let log_evidence = oracle::log_marginal_quadrature(&data, &prior, &grid).unwrap();
        let doubled =
            oracle::log_marginal_quadrature(&data, &prior, &grid.with_nodes(800).unwrap()).unwrap();
        worst_doubling = worst_doubling.max((log_evidence - doubled).abs());
        let gap = log_evidence - fit.trace.last().unwrap();
        min_gap = min_gap.min(gap);
        if gap < -1e-6 {
            failures.push(format!(
                "instance {seed}: ELBO exceeds log evidence by {:e}",
                -gap
            ));
        }
    }
    let mut worst_ratio = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = stream_rng(5500 + seed, 0);
        let n = rng.random_range(5..=50);
        let data = random_instance(&mut rng, n, 1);
        let prior = GaussianPrior::isotropic(1, 0.0, 4.0).unwrap();
        let fit = fit_cavi(&data, &prior, &CaviConfig::default()).unwrap();
        let grid = QuadratureGrid::from_cavi(&data, &prior, oracle::DEFAULT_NODES).unwrap();
        let (_, cov) = oracle::posterior_moments_quadrature(&data, &prior, &grid).unwrap();
        let ratio = fit.q.cov()[(0, 0)] / cov[(0, 0)];
        worst_ratio = worst_ratio.max(ratio);
        if fit.q.cov()[(0, 0)] > cov[(0, 0)] {
            failures.push(format!(
                "p=1 instance {seed}: CAVI variance exceeds the posterior variance"
            ));
        }
    }
    report(
        5,
        "CAVI ELBO <= quadrature log evidence; CAVI variance <= exact variance",
        started,
        Duration::from_secs(120),
        &failures,
        format!(
            "min(log p(y) - ELBO) = {min_gap:e}, node-doubling change = {worst_doubling:e}, max variance ratio = {worst_ratio:.4}"
        ),
    );
}

#[test]
fn criterion_6_shrinkage_experiment() {
    let started = Instant::now();
    let mut failures = Vec::new();
    // the defaults are those of `logit-vb experiment-fig1`
    let config = ShrinkageConfig::default();
    let rows = run_shrinkage(&config).unwrap();
    if rows.len() != 4 * 50 * 2 * 2 {
        failures.push(format!("expected 800 rows, got {}", rows.len()));
    }
    let summary = summarize(&rows);
    let mut iqr_line = Vec::new();
    for method in [Method::Cavi, Method::Svi] {
        for coefficient in [1, 2] {
            let iqrs: Vec<f64> = config
                .sizes
                .iter()
                .map(|&n| {
                    summary
                        .iter()
                        .find(|s| s.n == n && s.method == method && s.coefficient == coefficient)
                        .unwrap()
                        .iqr
                })
                .collect();
            iqr_line.push(format!(
                "{} b{coefficient} iqr {}",
                method.name(),
                iqrs.iter()
                    .map(|v| format!("{v:.3}"))
                    .collect::<Vec<_>>()
                    .join(">")
            ));
            if !iqrs.windows(2).all(|w| w[1] < w[0]) {
                failures.push(format!(
                    "{} coefficient {coefficient}: IQR not strictly decreasing {iqrs:?}",
                    method.name()
                ));
            }
        }
    }
    for coefficient in [1, 2] {
        let s = summary
            .iter()
            .find(|s| s.n == 10_000 && s.method == Method::Cavi && s.coefficient == coefficient)
            .unwrap();
        if (s.median - 1.0).abs() > 0.1 {
            failures.push(format!(
                "n=10000 CAVI median for coefficient {coefficient} is {}",
                s.median
            ));
        }
    }
    let mut worst_svi = 0.0f64;
    for r in rows.iter().filter(|r| r.method == Method::Svi) {
        let c = rows
            .iter()
            .find(|c| {
                c.method == Method::Cavi
                    && c.n == r.n
                    && c.replicate == r.replicate
                    && c.coefficient == r.coefficient
            })
            .unwrap();
        let d = (r.posterior_mean - c.posterior_mean).abs();
        worst_svi = worst_svi.max(d);
        if d > 0.15 {
            failures.push(format!(
                "n={} replicate {} coefficient {}: SVI mean {:.4} vs CAVI {:.4}",
                r.n, r.replicate, r.coefficient, r.posterior_mean, c.posterior_mean
            ));
        }
    }
    failures.truncate(10);
    report(
        6,
        "CAVI/SVI posterior means shrink around (1, 1) as n grows",
        started,
        Duration::from_secs(300),
        &failures,
        format!("{}; max |SVI - CAVI| = {worst_svi:.4}", iqr_line.join("; ")),
    );
}

#[test]
fn criterion_7_mle_agreement_and_monotonicity() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let options = MleOptions {
        tolerance: 1e-12,
        ..MleOptions::default()
    };
    let mut worst_agree = 0.0f64;
    let mut worst_first = 0.0f64;
    let mut worst_drop = 0.0f64;
    let mut accepted = 0;
    let mut stream = 0u64;
    while accepted < 50 {
        let mut rng = stream_rng(7000, stream);
        stream += 1;
        let n = rng.random_range(30..=150);
        let p = rng.random_range(1..=4);
        let data = random_instance(&mut rng, n, p);
        let newton = mle::fit_mle(&data, MleMethod::NewtonRaphson, &options).unwrap();
        if newton.trace.termination != Termination::ToleranceMet {
            // separable draw; the MLE does not exist
            continue;
        }
        accepted += 1;
        for method in [MleMethod::JaakkolaMm, MleMethod::BohningMm] {
            let fit = mle::fit_mle(&data, method, &options).unwrap();
            if !fit.trace.converged {
                failures.push(format!("stream {stream}: {method:?} did not converge"));
            }
            let d = (&fit.beta - &newton.beta).amax();
            worst_agree = worst_agree.max(d);
            if d > 1e-8 {
                failures.push(format!(
                    "stream {stream}: {method:?} differs from Newton by {d:e}"
                ));
            }
            for w in fit.trace.objective.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
                if w[1] < w[0] - 1e-12 {
                    failures.push(format!(
                        "stream {stream}: {method:?} log-likelihood fell by {:e}",
                        w[0] - w[1]
                    ));
                }
            }
        }
        let zero = Vector::zeros(p);
        let a = mle::mm_jj_step(&data, &zero).unwrap();
        let b = mle::mm_bohning_step(&data, &zero).unwrap();
        let d = (a - b).amax();
        worst_first = worst_first.max(d);
        if d > 1e-12 {
            failures.push(format!("stream {stream}: first MM steps differ by {d:e}"));
        }
    }
    failures.truncate(10);
    report(
        7,
        "MM and Newton agree; MM log-likelihoods are monotone",
        started,
        Duration::from_secs(30),
        &failures,
        format!(
            "max |MM - Newton| = {worst_agree:e}, max log-lik drop = {worst_drop:e}, max first-step difference = {worst_first:e}"
        ),
    );
}

#[test]
fn criterion_8_rate_ordering() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let rows = run_rate_sweep(&RateSweepConfig {
        seed: 8,
        ..RateSweepConfig::default()
    })
    .unwrap();
    if rows.len() != 200 {
        failures.push(format!("expected 200 instances, got {}", rows.len()));
    }
    let mut worst_order = f64::NEG_INFINITY;
    let mut worst_power = 0.0f64;
    let mut jj_faster = 0;
    for r in &rows {
        worst_order = worst_order.max(r.r_j - r.r_b);
        if r.r_b < r.r_j - 1e-10 {
            failures.push(format!(
                "instance {}: r_b {} < r_j {}",
                r.instance, r.r_b, r.r_j
            ));
        }
        let dp = (r.r_b - r.r_b_power).abs().max((r.r_j - r.r_j_power).abs());
        worst_power = worst_power.max(dp);
        if dp > 1e-8 {
            failures.push(format!(
                "instance {}: power iteration off by {dp:e}",
                r.instance
            ));
        }
        if r.min_curvature_gap < 0.0 {
            failures.push(format!("instance {}: negative Gamma - Z entry", r.instance));
        }
        if r.iterations_jaakkola <= r.iterations_bohning {
            jj_faster += 1;
        }
    }
    report(
        8,
        "Bohning rate dominates Jaakkola rate",
        started,
        Duration::from_secs(60),
        &failures,
        format!(
            "max(r_j - r_b) = {worst_order:e}, max |eig - power| = {worst_power:e}, Jaakkola needed <= iterations in {jj_faster}/{}",
            rows.len()
        ),
    );
}

#[test]
fn criterion_9_svi_stationarity_and_definiteness() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let config = CaviConfig {
        tolerance: 1e-13,
        max_iterations: 100_000,
        ..CaviConfig::default()
    };
    for seed in 0..10u64 {
        let mut rng = stream_rng(9000 + seed, 0);
        let p = rng.random_range(1..=4);
        let data = random_instance(&mut rng, 10, p);
        let prior = GaussianPrior::isotropic(p, 0.0, 4.0).unwrap();
        let fit = fit_cavi(&data, &prior, &config).unwrap();
        let (d1, d2) = mean_displacement(&data, &prior, &fit.q, 1.0).unwrap();
        let sup = d1.amax().max(d2.amax());
        worst = worst.max(sup);
        if sup > 1e-8 {
            failures.push(format!("instance {seed}: mean displacement {sup:e}"));
        }
    }
    // 1e5 steps with a definiteness check after every one
    let data = single_covariate(&mut stream_rng(9100, 0), 1000, [1.0, 1.0]);
    let prior = GaussianPrior::isotropic(2, 0.0, 10.0).unwrap();
    let mut rng = stream_rng(9100, 1);
    let mut q = prior.as_variational();
    let mut indefinite = 0;
    for t in 1..=100_000 {
        let i = rng.random_range(0..data.n());
        let rho = svi::step_size(t, 1.0, 0.75);
        match svi::svi_update(&q, &prior, data.y()[i], &svi::row(&data, i), data.n(), rho) {
            Ok(next) => q = next,
            Err(_) => {
                indefinite += 1;
                break;
            }
        }
        if linalg::cholesky(&(q.lambda2() * -2.0)).is_err() {
            indefinite += 1;
        }
    }
    if indefinite > 0 {
        failures.push(format!(
            "lambda2 lost negative definiteness {indefinite} times"
        ));
    }
    report(
        9,
        "SVI drift vanishes at the CAVI optimum; lambda2 stays negative definite",
        started,
        Duration::from_secs(60),
        &failures,
        format!("max mean displacement = {worst:e}, indefinite steps = {indefinite}"),
    );
}
