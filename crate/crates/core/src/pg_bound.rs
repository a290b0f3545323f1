//! The logistic tangent bound and its Polya-gamma reading.
//!
//! For `z ~ PG(1, xi)` the bound
//!
//! ```text
//! (y - 1/2) eta - xi/2 - E[z]/2 (eta^2 - xi^2) - log(1 + e^{-xi})
//! ```
//!
//! minorizes `y eta - log(1 + e^eta)`, and the gap between the two is
//! `KL[PG(1, xi) || PG(1, eta)]`, which does not depend on `y`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, GaussianPrior, GlobalVariational, LocalVariational};
use crate::par;

const TAYLOR_CUTOFF: f64 = 1e-4;

/// `E[z]` for `z ~ PG(1, c)`: `tanh(|c|/2) / (2|c|)`, with value 1/4 at 0.
pub fn pg_mean(c: f64) -> f64 {
    let a = c.abs();
    if a < TAYLOR_CUTOFF {
        0.25 - a * a / 48.0
    } else {
        0.5 * (0.5 * a).tanh() / a
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(2 cosh(a/2))`, the log-normalizer of a tilted PG(1, 0).
fn log_two_cosh_half(a: f64) -> f64 {
    let a = a.abs();
    0.5 * a + softplus(-a)
}

/// Logistic log-likelihood `y eta - log(1 + e^eta)`.
pub fn log_lik(y: f64, eta: f64) -> f64 {
    y * eta - softplus(eta)
}

/// Tangent quadratic lower bound of [`log_lik`] at local parameter `xi`.
pub fn jj_bound(y: f64, eta: f64, xi: f64) -> f64 {
    let xi = xi.abs();
    (y - 0.5) * eta - 0.5 * xi - 0.5 * pg_mean(xi) * (eta * eta - xi * xi) - softplus(-xi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEval {
    pub exact_loglik: f64,
    pub bound_value: f64,
    /// `KL[PG(1, xi) || PG(1, eta)]`, equal to `exact_loglik - bound_value`.
    pub kl_gap: f64,
}

/// Log-likelihood, bound and their gap. The gap is evaluated in a form where
/// the `y` terms have already cancelled, so it is exactly `y`-free.
pub fn kl_gap(y: f64, eta: f64, xi: f64) -> BoundEval {
    let xi = xi.abs();
    let gap =
        log_two_cosh_half(xi) - log_two_cosh_half(eta) + 0.5 * pg_mean(xi) * (eta * eta - xi * xi);
    BoundEval {
        exact_loglik: log_lik(y, eta),
        bound_value: jj_bound(y, eta, xi),
        kl_gap: gap,
    }
}

/// `KL[N(mu, Sigma) || N(mu0, Sigma0)]`.
pub fn gaussian_kl(q: &GlobalVariational, prior: &GaussianPrior) -> Result<f64> {
    check_p(prior.p(), q.p())?;
    let p = q.p();
    let chol = linalg::cholesky(q.cov())?;
    let log_det_q = linalg::log_det(&chol);
    let prec = prior.precision();
    let trace: f64 = (0..p)
        .map(|i| (0..p).map(|j| prec[(i, j)] * q.cov()[(j, i)]).sum::<f64>())
        .sum();
    let d = q.mean() - prior.mean();
    let maha = d.dot(&(prec * &d));
    Ok(0.5 * (trace + maha - p as f64 + prior.log_det_cov() - log_det_q))
}

/// Closed-form ELBO of `q(beta) prod_i PG(1, xi_i)`.
pub fn elbo(
    data: &Dataset,
    prior: &GaussianPrior,
    q: &GlobalVariational,
    xi: &LocalVariational,
) -> Result<f64> {
    check_shapes(data, prior, q, xi)?;
    let kl = gaussian_kl(q, prior)?;
    let expected = row_sum(data, |i| {
        let m = linalg::row_dot(data.x(), i, q.mean());
        let s = linalg::row_quad_form(data.x(), i, q.cov());
        let z = xi.values()[i];
        (data.y()[i] - 0.5) * m - 0.5 * pg_mean(z) * (s + m * m - z * z) - 0.5 * z - softplus(-z)
    });
    Ok(expected - kl)
}

/// `E_q[sum_i bound_i(beta)] - KL[q || prior]`, evaluated as the bound at the
/// mean plus the variance correction. Equal to [`elbo`] as a function; kept as
/// a separate route for the EM fitter's trace.
pub fn expected_bound(
    data: &Dataset,
    prior: &GaussianPrior,
    q: &GlobalVariational,
    xi: &LocalVariational,
) -> Result<f64> {
    check_shapes(data, prior, q, xi)?;
    let kl = gaussian_kl(q, prior)?;
    let at_mean = row_sum(data, |i| {
        let z = xi.values()[i];
        let eta = linalg::row_dot(data.x(), i, q.mean());
        jj_bound(data.y()[i], eta, z)
            - 0.5 * pg_mean(z) * linalg::row_quad_form(data.x(), i, q.cov())
    });
    Ok(at_mean - kl)
}

/// Full log-likelihood `sum_i log p(y_i | beta)`.
pub fn total_log_lik(data: &Dataset, beta: &linalg::Vector) -> f64 {
    row_sum(data, |i| {
        log_lik(data.y()[i], linalg::row_dot(data.x(), i, beta))
    })
}

fn row_sum<F>(data: &Dataset, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    par::chunked_sum(
        data.n(),
        0.0,
        |rows| rows.map(&term).sum::<f64>(),
        |a, b| a + b,
    )
}

fn check_p(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch(format!(
            "expected {expected} coefficients, found {found}"
        )));
    }
    Ok(())
}

pub(crate) fn check_shapes(
    data: &Dataset,
    prior: &GaussianPrior,
    q: &GlobalVariational,
    xi: &LocalVariational,
) -> Result<()> {
    check_p(data.p(), prior.p())?;
    check_p(data.p(), q.p())?;
    if xi.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} local parameters for {} rows",
            xi.len(),
            data.n()
        )));
    }
    Ok(())
}
