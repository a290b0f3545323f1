//! Brute-force references: the exact log evidence and posterior moments by
//! tensor trapezoid quadrature (`p <= 2`), and the Polya-gamma mean by its
//! infinite series. These share no code path with the fitters beyond the
//! scalar log-likelihood.

use std::f64::consts::PI;

use crate::cavi::{fit_cavi, CaviConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{Dataset, GaussianPrior};
use crate::par;
use crate::pg_bound::log_lik;

pub const DEFAULT_NODES: usize = 400;
pub const DEFAULT_WIDTH_SD: f64 = 8.0;

/// Tensor trapezoid grid over `center +- width_sd * sd` in each coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: usize,
    pub center: Vector,
    pub sd: Vector,
    pub width_sd: f64,
}

impl QuadratureGrid {
    pub fn new(center: Vector, sd: Vector, nodes: usize) -> Result<Self> {
        if nodes < 100 {
            return Err(Error::InvalidConfig(format!(
                "quadrature needs at least 100 nodes per dimension, got {nodes}"
            )));
        }
        if center.len() != sd.len() || sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig("grid scales must be positive".into()));
        }
        Ok(Self {
            nodes,
            center,
            sd,
            width_sd: DEFAULT_WIDTH_SD,
        })
    }

    /// Box from a preliminary CAVI fit.
    pub fn from_cavi(data: &Dataset, prior: &GaussianPrior, nodes: usize) -> Result<Self> {
        if data.p() > 2 {
            return Err(Error::DimensionTooLarge { p: data.p() });
        }
        let fit = fit_cavi(data, prior, &CaviConfig::default())?;
        Self::new(fit.q.mean().clone(), fit.q.sd(), nodes)
    }

    pub fn with_nodes(&self, nodes: usize) -> Result<Self> {
        let mut g = Self::new(self.center.clone(), self.sd.clone(), nodes)?;
        g.width_sd = self.width_sd;
        Ok(g)
    }

    fn axis(&self, d: usize) -> (Vec<f64>, f64) {
        let lo = self.center[d] - self.width_sd * self.sd[d];
        let h = 2.0 * self.width_sd * self.sd[d] / (self.nodes - 1) as f64;
        ((0..self.nodes).map(|k| lo + h * k as f64).collect(), h)
    }
}

fn log_posterior_kernel(data: &Dataset, prior: &GaussianPrior, beta: &Vector) -> f64 {
    let d = beta - prior.mean();
    let p = prior.p() as f64;
    let log_prior =
        -0.5 * (p * (2.0 * PI).ln() + prior.log_det_cov() + d.dot(&(prior.precision() * &d)));
    let lik: f64 = (0..data.n())
        .map(|i| log_lik(data.y()[i], linalg::row_dot(data.x(), i, beta)))
        .sum();
    log_prior + lik
}

/// Node coordinates, log trapezoid weights and log kernel values.
struct Evaluated {
    points: Vec<Vector>,
    log_values: Vec<f64>,
}

fn evaluate(data: &Dataset, prior: &GaussianPrior, grid: &QuadratureGrid) -> Result<Evaluated> {
    let p = data.p();
    if p > 2 {
        return Err(Error::DimensionTooLarge { p });
    }
    if prior.p() != p || grid.center.len() != p {
        return Err(Error::DimensionMismatch(
            "grid, prior and data disagree on p".into(),
        ));
    }
    if p == 0 {
        let beta = Vector::zeros(0);
        return Ok(Evaluated {
            log_values: vec![log_posterior_kernel(data, prior, &beta)],
            points: vec![beta],
        });
    }
    let axes: Vec<(Vec<f64>, f64)> = (0..p).map(|d| grid.axis(d)).collect();
    let m = grid.nodes;
    let trap = |k: usize| {
        if k == 0 || k == m - 1 {
            0.5f64.ln()
        } else {
            0.0
        }
    };
    let log_cell: f64 = axes.iter().map(|(_, h)| h.ln()).sum();
    let rows = if p == 1 { 1 } else { m };
    let blocks = par::map_indexed(rows, |a| {
        let mut pts = Vec::with_capacity(m);
        let mut vals = Vec::with_capacity(m);
        for b in 0..m {
            let (beta, w) = if p == 1 {
                (Vector::from_vec(vec![axes[0].0[b]]), trap(b))
            } else {
                (
                    Vector::from_vec(vec![axes[0].0[a], axes[1].0[b]]),
                    trap(a) + trap(b),
                )
            };
            vals.push(w + log_cell + log_posterior_kernel(data, prior, &beta));
            pts.push(beta);
        }
        (pts, vals)
    });
    let mut points = Vec::with_capacity(rows * m);
    let mut log_values = Vec::with_capacity(rows * m);
    for (pts, vals) in blocks {
        points.extend(pts);
        log_values.extend(vals);
    }
    check_mode_inside(&log_values, m, p)?;
    Ok(Evaluated { points, log_values })
}

/// The largest kernel value must not sit on the boundary of the box.
fn check_mode_inside(log_values: &[f64], m: usize, p: usize) -> Result<()> {
    let (best, _) = log_values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    let on_edge = |k: usize| k == 0 || k == m - 1;
    let edge = if p == 1 {
        on_edge(best)
    } else {
        on_edge(best / m) || on_edge(best % m)
    };
    if edge {
        return Err(Error::InvalidConfig(
            "posterior mode lies outside the quadrature box".into(),
        ));
    }
    Ok(())
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log p(y) = log int p(beta) prod_i p(y_i | beta) d beta`.
pub fn log_marginal_quadrature(
    data: &Dataset,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let ev = evaluate(data, prior, grid)?;
    Ok(log_sum_exp(&ev.log_values))
}

/// Posterior mean and covariance from normalized grid weights.
pub fn posterior_moments_quadrature(
    data: &Dataset,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
) -> Result<(Vector, Matrix)> {
    let ev = evaluate(data, prior, grid)?;
    let p = data.p();
    let norm = log_sum_exp(&ev.log_values);
    let weights: Vec<f64> = ev.log_values.iter().map(|v| (v - norm).exp()).collect();
    let mut mean = Vector::zeros(p);
    for (w, b) in weights.iter().zip(&ev.points) {
        mean += b * *w;
    }
    let mut cov = Matrix::zeros(p, p);
    for (w, b) in weights.iter().zip(&ev.points) {
        let d = b - &mean;
        cov += &d * d.transpose() * *w;
    }
    Ok((mean, linalg::symmetrize(&cov)))
}

/// `E[z]` for `z ~ PG(1, c)` from
/// `(1 / 2 pi^2) sum_k 1 / ((k - 1/2)^2 + c^2 / (4 pi^2))`, truncated after
/// `terms` summands; the remainder is replaced by its integral
/// `int_terms^inf du / (u^2 + d^2)` (midpoint rule in `k - 1/2`).
pub fn pg_mean_series(c: f64, terms: usize) -> f64 {
    assert!(terms >= 1000, "series oracle needs at least 1000 terms");
    let d2 = c * c / (4.0 * PI * PI);
    // Neumaier summation, smallest terms first
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for k in (1..=terms).rev() {
        let h = k as f64 - 0.5;
        let term = 1.0 / (h * h + d2);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    let n = terms as f64;
    let d = d2.sqrt();
    let tail = if d > 0.0 { (d / n).atan() / d } else { 1.0 / n };
    (sum + comp + tail) / (2.0 * PI * PI)
}
