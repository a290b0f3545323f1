//! Stochastic variational inference: Robbins-Monro steps on the natural
//! parameters of `q(beta)`, one uniformly sampled row per step.
//!
//! A sampled row stands in for the whole dataset observed `n` times, so the
//! noisy target is `(n x_i (y_i - 1/2) + Sigma0^{-1} mu0,
//! -(Sigma0^{-1} + n E[z_i] x_i x_i^T) / 2)`, whose average over rows is the
//! full-data CAVI target.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cavi;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{Dataset, FitTrace, GaussianPrior, GlobalVariational, Termination};
use crate::pg_bound::{self, pg_mean};
use crate::simulate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SviInit {
    /// Start from the prior in natural form.
    Prior,
    /// Prior precision, with `N(0, scale^2)` noise added to the prior mean.
    Random { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SviConfig {
    pub tau: f64,
    pub kappa: f64,
    pub iterations: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub init: SviInit,
}

impl Default for SviConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            kappa: 0.75,
            iterations: 100_000,
            seed: 0,
            eval_every: 1000,
            init: SviInit::Prior,
        }
    }
}

impl SviConfig {
    /// `kappa` in (0.5, 1] is what makes `sum rho = inf` and `sum rho^2 < inf`.
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.5 && self.kappa <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "kappa must lie in (0.5, 1], got {}",
                self.kappa
            )));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
        }
        if let SviInit::Random { scale } = self.init {
            if !(scale >= 0.0) || !scale.is_finite() {
                return Err(Error::InvalidConfig("init scale must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// `rho_t = (t + tau)^{-kappa}`.
pub fn step_size(t: usize, tau: f64, kappa: f64) -> f64 {
    (t as f64 + tau).powf(-kappa)
}

/// Natural parameter of the locally optimal `PG(1, xi)` for row `x`:
/// `-(x^T Sigma x + (x^T mu)^2) / 2`.
pub fn local_phi(q: &GlobalVariational, x: &Vector) -> f64 {
    let m = x.dot(q.mean());
    let s = x.dot(&(q.cov() * x));
    -0.5 * (s.max(0.0) + m * m)
}

/// Noisy natural-parameter target for one observation scaled to `n` rows.
pub fn single_row_target(
    q: &GlobalVariational,
    prior: &GaussianPrior,
    y: f64,
    x: &Vector,
    n: usize,
) -> (Vector, Matrix) {
    let nf = n as f64;
    let z = pg_mean((-2.0 * local_phi(q, x)).sqrt());
    let t1 = x * (nf * (y - 0.5)) + prior.natural_mean();
    let t2 = (prior.precision() + x * x.transpose() * (nf * z)) * -0.5;
    (t1, t2)
}

/// One Robbins-Monro step toward the single-row target.
pub fn svi_update(
    q: &GlobalVariational,
    prior: &GaussianPrior,
    y: f64,
    x: &Vector,
    n: usize,
    rho: f64,
) -> Result<GlobalVariational> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!(
            "step size must lie in [0, 1], got {rho}"
        )));
    }
    if n < 1 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let (t1, t2) = single_row_target(q, prior, y, x, n);
    let lambda1 = q.lambda1() * (1.0 - rho) + t1 * rho;
    let lambda2 = q.lambda2() * (1.0 - rho) + t2 * rho;
    GlobalVariational::from_natural(lambda1, lambda2)
}

/// Average over all rows of the one-step displacement `lambda' - lambda`.
pub fn mean_displacement(
    data: &Dataset,
    prior: &GaussianPrior,
    q: &GlobalVariational,
    rho: f64,
) -> Result<(Vector, Matrix)> {
    let n = data.n();
    let p = data.p();
    let mut d1 = Vector::zeros(p);
    let mut d2 = Matrix::zeros(p, p);
    for i in 0..n {
        let next = svi_update(q, prior, data.y()[i], &row(data, i), n, rho)?;
        d1 += next.lambda1() - q.lambda1();
        d2 += next.lambda2() - q.lambda2();
    }
    Ok((d1 / n as f64, d2 / n as f64))
}

pub fn row(data: &Dataset, i: usize) -> Vector {
    data.x().row(i).transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SviFit {
    pub q: GlobalVariational,
    pub trace: FitTrace,
}

fn initial_state(prior: &GaussianPrior, config: &SviConfig) -> Result<GlobalVariational> {
    match config.init {
        SviInit::Prior => Ok(prior.as_variational()),
        SviInit::Random { scale } => {
            let mut rng = simulate::stream_rng(config.seed, u64::MAX);
            let mean = prior.mean()
                + Vector::from_fn(prior.p(), |_, _| {
                    scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                });
            GlobalVariational::from_moments(mean, prior.cov().clone())
        }
    }
}

/// Run `config.iterations` steps with rows drawn uniformly with replacement.
/// The trace holds the full-data ELBO, with locally optimal `xi`, every
/// `eval_every` steps; it is a diagnostic and is not monotone.
pub fn fit_svi(data: &Dataset, prior: &GaussianPrior, config: &SviConfig) -> Result<SviFit> {
    config.validate()?;
    if data.n() == 0 {
        return Err(Error::InvalidConfig(
            "SVI needs at least one observation".into(),
        ));
    }
    if data.p() != prior.p() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, prior has {} coefficients",
            data.p(),
            prior.p()
        )));
    }
    let n = data.n();
    let mut rng = simulate::stream_rng(config.seed, 0);
    let mut q = initial_state(prior, config)?;
    let mut trace = FitTrace::new();
    for t in 1..=config.iterations {
        let i = rng.random_range(0..n);
        let rho = step_size(t, config.tau, config.kappa);
        q = svi_update(&q, prior, data.y()[i], &row(data, i), n, rho)?;
        if t % config.eval_every == 0 || t == config.iterations {
            // from_natural already refused any lambda2 that is not negative definite
            debug_assert!(linalg::cholesky(&(q.lambda2() * -2.0)).is_ok());
            let xi = cavi::update_local(data, &q);
            trace.objective.push(pg_bound::elbo(data, prior, &q, &xi)?);
        }
        trace.iterations = t;
    }
    trace.finish(Termination::MaxIterations);
    Ok(SviFit { q, trace })
}
