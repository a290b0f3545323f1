//! Coordinate ascent variational inference for the Polya-gamma augmented
//! logistic model.
//!
//! The global step is the conjugate Gaussian update given `E[z_i]`, the local
//! step sets `xi_i = sqrt(E_q[(x_i^T beta)^2])`. The tangent-bound EM performs
//! exactly the same two steps (its E-step is the global update and its M-step
//! the local one), so [`fit_em_jj`] runs this loop and only records the
//! expected-bound objective next to the ELBO.

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::model::{
    Dataset, FitTrace, GaussianPrior, GlobalVariational, LocalVariational, Termination,
};
use crate::par;
use crate::pg_bound::{self, pg_mean};

/// Starting value for the local parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiInit {
    Constant(f64),
    /// `|x_i^T mu0|`.
    PriorMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaviConfig {
    pub max_iterations: usize,
    /// Relative ELBO change, also used as the sup-norm bound on the change of
    /// `(mu, xi)` over one sweep.
    pub tolerance: f64,
    pub xi_init: XiInit,
}

impl Default for CaviConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-8,
            xi_init: XiInit::Constant(1.0),
        }
    }
}

impl CaviConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if let XiInit::Constant(v) = self.xi_init {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(
                    "xi initial value must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaviFit {
    pub q: GlobalVariational,
    pub xi: LocalVariational,
    pub trace: FitTrace,
}

/// Initial local parameters according to `rule`.
pub fn initial_xi(data: &Dataset, prior: &GaussianPrior, rule: XiInit) -> Result<LocalVariational> {
    match rule {
        XiInit::Constant(v) => LocalVariational::constant(data.n(), v),
        XiInit::PriorMean => LocalVariational::new(
            (0..data.n())
                .map(|i| linalg::row_dot(data.x(), i, prior.mean()))
                .collect(),
        ),
    }
}

/// Natural parameters of the optimal Gaussian factor given `xi`:
/// `lambda1 = X^T (y - 1/2) + Sigma0^{-1} mu0`,
/// `lambda2 = -(Sigma0^{-1} + X^T diag(E[z]) X) / 2`.
pub fn global_target(
    data: &Dataset,
    prior: &GaussianPrior,
    xi: &LocalVariational,
) -> Result<(Vector, linalg::Matrix)> {
    check(data, prior, xi)?;
    let lambda1 = data.centered_score() + prior.natural_mean();
    let weights: Vec<f64> = xi.values().iter().map(|&v| pg_mean(v)).collect();
    let lambda2 = (prior.precision() + linalg::weighted_gram(data.x(), &weights)) * -0.5;
    Ok((lambda1, lambda2))
}

pub fn update_global(
    data: &Dataset,
    prior: &GaussianPrior,
    xi: &LocalVariational,
) -> Result<GlobalVariational> {
    let (lambda1, lambda2) = global_target(data, prior, xi)?;
    GlobalVariational::from_natural(lambda1, lambda2)
}

/// `xi_i = sqrt(x_i^T Sigma x_i + (x_i^T mu)^2)`.
pub fn update_local(data: &Dataset, q: &GlobalVariational) -> LocalVariational {
    let xi = par::map_chunked(data.n(), |i| {
        let m = linalg::row_dot(data.x(), i, q.mean());
        let s = linalg::row_quad_form(data.x(), i, q.cov());
        (s.max(0.0) + m * m).sqrt()
    });
    LocalVariational::new(xi).expect("finite moments give finite xi")
}

/// Largest deviation from the stationarity equations `lambda = target(xi)`,
/// relative to `1 + |target|_inf`.
pub fn estimating_residual(
    data: &Dataset,
    prior: &GaussianPrior,
    q: &GlobalVariational,
    xi: &LocalVariational,
) -> Result<f64> {
    let (t1, t2) = global_target(data, prior, xi)?;
    let r1 = (q.lambda1() - &t1).amax() / (1.0 + t1.amax());
    let r2 = (q.lambda2() - &t2).amax() / (1.0 + t2.amax());
    Ok(r1.max(r2))
}

pub fn fit_cavi(data: &Dataset, prior: &GaussianPrior, config: &CaviConfig) -> Result<CaviFit> {
    run(data, prior, config, false)
}

/// The tangent-bound EM. Same iterates as [`fit_cavi`]; the trace also carries
/// the expected-bound objective in `em_objective`.
pub fn fit_em_jj(data: &Dataset, prior: &GaussianPrior, config: &CaviConfig) -> Result<CaviFit> {
    run(data, prior, config, true)
}

fn run(
    data: &Dataset,
    prior: &GaussianPrior,
    config: &CaviConfig,
    record_em: bool,
) -> Result<CaviFit> {
    config.validate()?;
    let mut xi = initial_xi(data, prior, config.xi_init)?;
    check(data, prior, &xi)?;
    let mut trace = FitTrace::new();
    let mut em = record_em.then(Vec::new);

    if data.n() == 0 {
        let q = prior.as_variational();
        trace.objective.push(pg_bound::elbo(data, prior, &q, &xi)?);
        if let Some(em) = em.as_mut() {
            em.push(pg_bound::expected_bound(data, prior, &q, &xi)?);
        }
        trace.em_objective = em;
        trace.finish(Termination::ToleranceMet);
        return Ok(CaviFit { q, xi, trace });
    }

    let mut q = prior.as_variational();
    let mut termination = Termination::MaxIterations;
    for _ in 0..config.max_iterations {
        let next_q = update_global(data, prior, &xi)?;
        let next_xi = update_local(data, &next_q);
        let value = pg_bound::elbo(data, prior, &next_q, &next_xi)?;
        if let Some(em) = em.as_mut() {
            em.push(pg_bound::expected_bound(data, prior, &next_q, &next_xi)?);
        }
        let moved = sup_change(&q, &next_q, &xi, &next_xi);
        let previous = trace.last();
        trace.objective.push(value);
        trace.iterations += 1;
        q = next_q;
        xi = next_xi;
        if !value.is_finite() {
            termination = Termination::Diverged;
            break;
        }
        if let Some(prev) = previous {
            if (value - prev).abs() < config.tolerance * (1.0 + value.abs())
                && moved < config.tolerance
            {
                termination = Termination::ToleranceMet;
                break;
            }
        }
    }
    trace.em_objective = em;
    trace.finish(termination);
    Ok(CaviFit { q, xi, trace })
}

fn sup_change(
    q: &GlobalVariational,
    next_q: &GlobalVariational,
    xi: &LocalVariational,
    next_xi: &LocalVariational,
) -> f64 {
    let dm = (next_q.mean() - q.mean()).amax();
    let dx = xi
        .values()
        .iter()
        .zip(next_xi.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    dm.max(dx)
}

fn check(data: &Dataset, prior: &GaussianPrior, xi: &LocalVariational) -> Result<()> {
    if data.p() != prior.p() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, prior has {} coefficients",
            data.p(),
            prior.p()
        )));
    }
    if xi.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} local parameters for {} rows",
            xi.len(),
            data.n()
        )));
    }
    Ok(())
}
