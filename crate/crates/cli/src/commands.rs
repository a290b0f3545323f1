use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use logit_vb::cavi::{self, CaviConfig, XiInit};
use logit_vb::experiment::{self, RateRow, RateSweepConfig, ShrinkageConfig};
use logit_vb::mle::{self, MleMethod, MleOptions};
use logit_vb::oracle::{self, QuadratureGrid};
use logit_vb::pg_bound;
use logit_vb::svi::{self, SviConfig, SviInit};
use logit_vb::{
    linalg, Dataset, FitTrace, GaussianPrior, GlobalVariational, LocalVariational, Termination,
};

use crate::input::{build_prior, parse_prior_cov, parse_prior_mean, read_dataset};
use crate::report::{self, ConfigEcho, FitDocument};
use crate::{
    CaviArgs, DataArgs, Failure, Fig1Args, MethodArg, MleArgs, OracleArgs, PriorArgs, RatesArgs,
    SviArgs,
};

fn load(data: &DataArgs, prior: &PriorArgs) -> Result<(Dataset, GaussianPrior), Failure> {
    let dataset = read_dataset(&data.data, data.intercept)?;
    let p = dataset.p();
    if p == 0 {
        return Err(Failure::validation(
            "the model has no coefficients; add covariates or --intercept",
        ));
    }
    let mean = parse_prior_mean(&prior.prior_mean, p)?;
    let cov = parse_prior_cov(&prior.prior_var, p)?;
    Ok((dataset, build_prior(mean, cov)?))
}

fn base_echo(data: &DataArgs, prior: &GaussianPrior) -> ConfigEcho {
    ConfigEcho {
        data: data.data.display().to_string(),
        intercept: data.intercept,
        prior_mean: Some(report::vector(prior.mean())),
        prior_cov: Some(report::rows(prior.cov())),
        ..ConfigEcho::default()
    }
}

fn features(data: &Dataset) -> Vec<String> {
    data.feature_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=data.p()).map(|j| format!("x{j}")).collect())
}

fn parse_xi_init(spec: &str) -> Result<XiInit, Failure> {
    if spec == "prior" {
        return Ok(XiInit::PriorMean);
    }
    spec.parse::<f64>().map(XiInit::Constant).map_err(|_| {
        Failure::validation(format!(
            "--xi-init must be a number or `prior`, got {spec:?}"
        ))
    })
}

/// Write the document and trace, then turn the termination into an exit status.
fn finish(
    doc: &FitDocument,
    trace: &FitTrace,
    steps: &[usize],
    out: &crate::OutputArgs,
) -> Result<(), Failure> {
    report::write_json(doc, out.out.as_deref())?;
    if let Some(path) = &out.trace_csv {
        report::write_trace_csv(path, trace, steps)?;
    }
    match trace.termination {
        Termination::Diverged => Err(Failure::diverged(format!(
            "{} stopped after {} iterations without a finite limit",
            doc.command, trace.iterations
        ))),
        Termination::MaxIterations if doc.command != "fit-svi" => {
            eprintln!(
                "logit-vb: warning: {} reached {} iterations before meeting the tolerance",
                doc.command, trace.iterations
            );
            Ok(())
        }
        _ => Ok(()),
    }
}

pub fn fit_cavi(args: &CaviArgs, em: bool) -> Result<(), Failure> {
    let (data, prior) = load(&args.data, &args.prior)?;
    let defaults = CaviConfig::default();
    let config = CaviConfig {
        tolerance: args.tol.unwrap_or(defaults.tolerance),
        max_iterations: args.max_iter.unwrap_or(defaults.max_iterations),
        xi_init: parse_xi_init(&args.xi_init)?,
    };
    let fit = if em {
        cavi::fit_em_jj(&data, &prior, &config)?
    } else {
        cavi::fit_cavi(&data, &prior, &config)?
    };
    let echo = ConfigEcho {
        tol: Some(config.tolerance),
        max_iter: Some(config.max_iterations),
        xi_init: Some(args.xi_init.clone()),
        ..base_echo(&args.data, &prior)
    };
    let command = if em { "fit-em" } else { "fit-cavi" };
    let mut doc = FitDocument::new(
        command,
        "elbo",
        &fit.trace,
        features(&data),
        data.n(),
        args.output.seed,
        echo,
    );
    doc.mu = Some(report::vector(fit.q.mean()));
    doc.sigma_lower = Some(report::lower_triangle(fit.q.cov()));
    doc.xi = Some(fit.xi.values().to_vec());
    let first = usize::from(data.n() > 0);
    let steps: Vec<usize> = (first..first + fit.trace.objective.len()).collect();
    finish(&doc, &fit.trace, &steps, &args.output)
}

pub fn fit_svi(args: &SviArgs) -> Result<(), Failure> {
    let (data, prior) = load(&args.data, &args.prior)?;
    let config = SviConfig {
        tau: args.schedule.tau,
        kappa: args.schedule.kappa,
        iterations: args.schedule.iters,
        seed: args.output.seed,
        eval_every: args.eval_every,
        init: args
            .init_scale
            .map_or(SviInit::Prior, |scale| SviInit::Random { scale }),
    };
    let fit = svi::fit_svi(&data, &prior, &config)?;
    let echo = ConfigEcho {
        tau: Some(config.tau),
        kappa: Some(config.kappa),
        iters: Some(config.iterations),
        eval_every: Some(config.eval_every),
        init_scale: args.init_scale,
        ..base_echo(&args.data, &prior)
    };
    let mut doc = FitDocument::new(
        "fit-svi",
        "elbo",
        &fit.trace,
        features(&data),
        data.n(),
        config.seed,
        echo,
    );
    doc.mu = Some(report::vector(fit.q.mean()));
    doc.sigma_lower = Some(report::lower_triangle(fit.q.cov()));
    // the locally optimal xi, which is what the reported ELBO uses
    doc.xi = Some(cavi::update_local(&data, &fit.q).values().to_vec());
    let steps: Vec<usize> = (1..=fit.trace.objective.len())
        .map(|k| (k * config.eval_every).min(config.iterations))
        .collect();
    finish(&doc, &fit.trace, &steps, &args.output)
}

fn method(arg: MethodArg) -> (MleMethod, &'static str) {
    match arg {
        MethodArg::Jaakkola => (MleMethod::JaakkolaMm, "jaakkola"),
        MethodArg::Bohning => (MleMethod::BohningMm, "bohning"),
        MethodArg::Newton => (MleMethod::NewtonRaphson, "newton"),
    }
}

pub fn fit_mle(args: &MleArgs) -> Result<(), Failure> {
    let data = read_dataset(&args.data.data, args.data.intercept)?;
    if data.p() == 0 {
        return Err(Failure::validation(
            "the model has no coefficients; add covariates or --intercept",
        ));
    }
    let defaults = MleOptions::default();
    let prior_cov = args
        .prior_var
        .as_deref()
        .map(|spec| parse_prior_cov(spec, data.p()))
        .transpose()?;
    let prior_precision = match &prior_cov {
        Some(cov) => {
            let chol = linalg::cholesky(cov)
                .map_err(|_| Failure::validation("--prior-var matrix is not positive definite"))?;
            Some(linalg::symmetrize(&chol.inverse()))
        }
        None => None,
    };
    let options = MleOptions {
        tolerance: args.tol.unwrap_or(defaults.tolerance),
        max_iterations: args.max_iter.unwrap_or(defaults.max_iterations),
        prior_precision,
        ..defaults
    };
    let (m, name) = method(args.method);
    let fit = mle::fit_mle(&data, m, &options)?;
    let echo = ConfigEcho {
        data: args.data.data.display().to_string(),
        intercept: args.data.intercept,
        prior_cov: prior_cov.as_ref().map(report::rows),
        tol: Some(options.tolerance),
        max_iter: Some(options.max_iterations),
        method: Some(name.to_string()),
        ..ConfigEcho::default()
    };
    let objective = if options.prior_precision.is_some() {
        "log_posterior"
    } else {
        "log_likelihood"
    };
    let mut doc = FitDocument::new(
        "fit-mle",
        objective,
        &fit.trace,
        features(&data),
        data.n(),
        args.output.seed,
        echo,
    );
    doc.beta_hat = Some(report::vector(&fit.beta));
    let steps: Vec<usize> = (0..fit.trace.objective.len()).collect();
    if fit.trace.termination == Termination::Diverged {
        report::write_json(&doc, args.output.out.as_deref())?;
        if let Some(path) = &args.output.trace_csv {
            report::write_trace_csv(path, &fit.trace, &steps)?;
        }
        let reason = if options.prior_precision.is_none() && mle::separates(&data, &fit.beta) {
            "the data are separated and the MLE does not exist"
        } else {
            "the iterates left every bounded region"
        };
        return Err(Failure::diverged(format!(
            "fit-mle ({name}) after {} iterations: {reason}",
            fit.trace.iterations
        )));
    }
    finish(&doc, &fit.trace, &steps, &args.output)
}

pub fn experiment_fig1(args: &Fig1Args) -> Result<(), Failure> {
    let defaults = ShrinkageConfig::default();
    let config = ShrinkageConfig {
        sizes: args.sizes.clone(),
        replicates: args.replicates,
        seed: args.seed,
        prior_variance: args.prior_var,
        cavi: CaviConfig {
            tolerance: args.tol.unwrap_or(defaults.cavi.tolerance),
            max_iterations: args.max_iter.unwrap_or(defaults.cavi.max_iterations),
            ..defaults.cavi
        },
        svi: SviConfig {
            tau: args.schedule.tau,
            kappa: args.schedule.kappa,
            iterations: args.schedule.iters,
            // the trace is not reported, so evaluate it once at the end
            eval_every: args.schedule.iters.max(1),
            ..defaults.svi
        },
        ..defaults
    };
    if !(config.prior_variance > 0.0 && config.prior_variance.is_finite()) {
        return Err(Failure::validation("--prior-var must be positive"));
    }
    config.svi.validate()?;
    let rows = experiment::run_shrinkage(&config)?;

    let mut text = String::new();
    let sizes: Vec<String> = config.sizes.iter().map(usize::to_string).collect();
    let _ = writeln!(text, "# replicates: {}", config.replicates);
    let _ = writeln!(text, "# sizes: {}", sizes.join(","));
    let _ = writeln!(text, "# seed: {}", config.seed);
    let _ = writeln!(
        text,
        "# true_beta: {},{}",
        config.true_beta[0], config.true_beta[1]
    );
    let _ = writeln!(
        text,
        "# covariate: uniform(-2,2); prior: N(0, {} I)",
        config.prior_variance
    );
    let _ = writeln!(
        text,
        "# cavi_tol: {:e}; cavi_max_iter: {}",
        config.cavi.tolerance, config.cavi.max_iterations
    );
    let _ = writeln!(
        text,
        "# svi_tau: {}; svi_kappa: {}; svi_iterations: {}",
        config.svi.tau, config.svi.kappa, config.svi.iterations
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row)
            .map_err(|e| Failure::validation(e.to_string()))?;
    }
    let body = w
        .into_inner()
        .map_err(|e| Failure::validation(e.to_string()))?;
    text.push_str(&String::from_utf8(body).map_err(|e| Failure::validation(e.to_string()))?);
    report::write_text(&text, args.out.as_deref())
}

#[derive(Serialize)]
struct RatesDocument {
    command: &'static str,
    source: String,
    seed: Option<u64>,
    tol: f64,
    instances: usize,
    /// Instances with `r_b < r_j - 1e-10`.
    violations: usize,
    rows: Vec<RateRow>,
}

pub fn rates(args: &RatesArgs) -> Result<(), Failure> {
    let defaults = RateSweepConfig::default();
    let options = MleOptions {
        tolerance: args.tol.unwrap_or(defaults.options.tolerance),
        max_iterations: args.max_iter.unwrap_or(defaults.options.max_iterations),
        ..defaults.options.clone()
    };
    let (source, seed, rows) = match &args.data {
        Some(path) => {
            let data = read_dataset(path, args.intercept)?;
            if data.p() == 0 {
                return Err(Failure::validation(
                    "the model has no coefficients; add covariates or --intercept",
                ));
            }
            let row = experiment::rates_for(&data, &options, 0).map_err(|e| match e {
                logit_vb::Error::NotConverged { .. } | logit_vb::Error::NotPositiveDefinite => {
                    Failure::diverged(format!(
                        "no finite MLE for {} (separated data?): {e}",
                        path.display()
                    ))
                }
                other => other.into(),
            })?;
            (path.display().to_string(), None, vec![row])
        }
        None => {
            let config = RateSweepConfig {
                instances: args.instances,
                seed: args.seed,
                options: options.clone(),
                ..defaults
            };
            (
                "synthetic".to_string(),
                Some(args.seed),
                experiment::run_rate_sweep(&config)?,
            )
        }
    };
    let violations = rows.iter().filter(|r| r.r_b < r.r_j - 1e-10).count();
    let doc = RatesDocument {
        command: "rates",
        source,
        seed,
        tol: options.tolerance,
        instances: rows.len(),
        violations,
        rows,
    };
    report::write_json(&doc, args.out.as_deref())
}

#[derive(Serialize)]
struct EvidenceDocument {
    command: &'static str,
    n: usize,
    p: usize,
    nodes: usize,
    log_evidence: f64,
    /// Same integral with twice the nodes; the difference is a quadrature error estimate.
    log_evidence_doubled: f64,
    cavi_elbo: f64,
    posterior_mean: Vec<f64>,
    posterior_cov_lower: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct RoundTripDocument {
    command: &'static str,
    result: String,
    data: String,
    reported_elbo: f64,
    recomputed_elbo: f64,
    abs_error: f64,
}

pub fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    match &args.result {
        Some(path) => round_trip(args, path),
        None => evidence(args),
    }
}

fn evidence(args: &OracleArgs) -> Result<(), Failure> {
    let path = args
        .data
        .clone()
        .ok_or_else(|| Failure::validation("oracle needs --data or --result"))?;
    let (data, prior) = load(
        &DataArgs {
            data: path,
            intercept: args.intercept,
        },
        &args.prior,
    )?;
    let fit = cavi::fit_cavi(&data, &prior, &CaviConfig::default())?;
    let grid = QuadratureGrid::from_cavi(&data, &prior, args.nodes)?;
    let log_evidence = oracle::log_marginal_quadrature(&data, &prior, &grid)?;
    let log_evidence_doubled =
        oracle::log_marginal_quadrature(&data, &prior, &grid.with_nodes(2 * args.nodes)?)?;
    let (mean, cov) = oracle::posterior_moments_quadrature(&data, &prior, &grid)?;
    let doc = EvidenceDocument {
        command: "oracle",
        n: data.n(),
        p: data.p(),
        nodes: args.nodes,
        log_evidence,
        log_evidence_doubled,
        cavi_elbo: fit.trace.last().unwrap_or(f64::NAN),
        posterior_mean: report::vector(&mean),
        posterior_cov_lower: report::lower_triangle(&cov),
    };
    report::write_json(&doc, args.out.as_deref())
}

fn round_trip(args: &OracleArgs, result: &Path) -> Result<(), Failure> {
    let doc = report::read_document(result)?;
    let data_path = args
        .data
        .clone()
        .unwrap_or_else(|| doc.config.data.clone().into());
    let data = read_dataset(&data_path, doc.config.intercept)?;
    if data.p() != doc.p || data.n() != doc.n {
        return Err(Failure::validation(format!(
            "{} is {}x{} but the document describes {}x{}",
            data_path.display(),
            data.n(),
            data.p(),
            doc.n,
            doc.p
        )));
    }
    let missing = |field: &str| {
        Failure::validation(format!(
            "{}: no {field}; only variational fits can be re-evaluated",
            result.display()
        ))
    };
    let mean = doc
        .config
        .prior_mean
        .as_ref()
        .ok_or_else(|| missing("prior_mean"))?;
    let cov = doc
        .config
        .prior_cov
        .as_ref()
        .ok_or_else(|| missing("prior_cov"))?;
    let prior = build_prior(
        linalg::Vector::from_vec(mean.clone()),
        report::from_rows(cov, doc.p)?,
    )?;
    let mu = doc.mu.as_ref().ok_or_else(|| missing("mu"))?;
    let sigma = report::from_lower_triangle(
        doc.sigma_lower
            .as_ref()
            .ok_or_else(|| missing("sigma_lower"))?,
        doc.p,
    )?;
    let q = GlobalVariational::from_moments(linalg::Vector::from_vec(mu.clone()), sigma)?;
    let xi = match &doc.xi {
        Some(xi) => LocalVariational::new(xi.clone())?,
        None => cavi::update_local(&data, &q),
    };
    let reported = doc
        .final_objective
        .ok_or_else(|| missing("final_objective"))?;
    let recomputed = pg_bound::elbo(&data, &prior, &q, &xi)?;
    let out = RoundTripDocument {
        command: "oracle",
        result: result.display().to_string(),
        data: data_path.display().to_string(),
        reported_elbo: reported,
        recomputed_elbo: recomputed,
        abs_error: (reported - recomputed).abs(),
    };
    report::write_json(&out, args.out.as_deref())
}
