//! Maximum likelihood for logistic regression by minorize-maximize.
//!
//! Each method iterates `beta' = beta + A(beta)^{-1} X^T (y - pi(beta))` with a
//! different curvature `A`:
//!
//! * Jaakkola MM: `X^T Z X`, `Z_ii = E[PG(1, x_i^T beta)]`,
//! * Bohning MM: `X^T X / 4`, constant,
//! * Newton-Raphson: `X^T Lambda X`, `Lambda_ii = pi_i (1 - pi_i)`.
//!
//! Both MM curvatures dominate the observed information, so their
//! log-likelihood sequences never decrease. The rate of convergence at the
//! limit is the spectral radius of `I - A^{-1} X^T Lambda X`; since
//! `1/4 >= Z_ii` elementwise the Bohning rate is never smaller.

use nalgebra::{Cholesky, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{Dataset, FitTrace, Termination};
use crate::pg_bound::{self, pg_mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleMethod {
    JaakkolaMm,
    BohningMm,
    NewtonRaphson,
}

impl MleMethod {
    pub const ALL: [MleMethod; 3] = [Self::JaakkolaMm, Self::BohningMm, Self::NewtonRaphson];
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    /// Stop when `|beta' - beta|_inf` falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Declare divergence once `|beta|_inf` exceeds this.
    pub separation_threshold: f64,
    /// Optional Gaussian prior precision around zero (MAP estimation). It is
    /// added to every curvature matrix and the score is penalized to match.
    pub prior_precision: Option<Matrix>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
            separation_threshold: 1e3,
            prior_precision: None,
        }
    }
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Fitted probabilities `pi_i = 1 / (1 + exp(-x_i^T beta))`.
pub fn fitted(data: &Dataset, beta: &Vector) -> Vector {
    data.linear_predictor(beta).map(logistic)
}

/// Score `X^T (y - pi)`.
pub fn score(data: &Dataset, beta: &Vector) -> Vector {
    let pi = fitted(data, beta);
    let resid: Vec<f64> = data.y().iter().zip(pi.iter()).map(|(y, p)| y - p).collect();
    linalg::weighted_colsum(data.x(), &resid)
}

/// `X^T Z X` with `Z_ii = pg_mean(x_i^T beta)`.
pub fn jaakkola_curvature(data: &Dataset, beta: &Vector) -> Matrix {
    let w: Vec<f64> = data
        .linear_predictor(beta)
        .iter()
        .map(|&e| pg_mean(e))
        .collect();
    linalg::weighted_gram(data.x(), &w)
}

/// `X^T X / 4`.
pub fn bohning_curvature(data: &Dataset) -> Matrix {
    linalg::weighted_gram(data.x(), &vec![0.25; data.n()])
}

/// Observed information `X^T Lambda X`.
pub fn observed_information(data: &Dataset, beta: &Vector) -> Matrix {
    let w: Vec<f64> = fitted(data, beta).iter().map(|p| p * (1.0 - p)).collect();
    linalg::weighted_gram(data.x(), &w)
}

/// `beta' = (X^T Z X)^{-1} X^T (y - 1/2)`.
pub fn mm_jj_step(data: &Dataset, beta: &Vector) -> Result<Vector> {
    linalg::spd_solve_vec(&jaakkola_curvature(data, beta), &data.centered_score())
}

/// `beta' = beta + 4 (X^T X)^{-1} X^T (y - pi)`.
pub fn mm_bohning_step(data: &Dataset, beta: &Vector) -> Result<Vector> {
    Ok(beta + linalg::spd_solve_vec(&bohning_curvature(data), &score(data, beta))?)
}

/// `beta' = beta + (X^T Lambda X)^{-1} X^T (y - pi)`.
pub fn newton_step(data: &Dataset, beta: &Vector) -> Result<Vector> {
    Ok(beta + linalg::spd_solve_vec(&observed_information(data, beta), &score(data, beta))?)
}

pub fn step(data: &Dataset, method: MleMethod, beta: &Vector) -> Result<Vector> {
    match method {
        MleMethod::JaakkolaMm => mm_jj_step(data, beta),
        MleMethod::BohningMm => mm_bohning_step(data, beta),
        MleMethod::NewtonRaphson => newton_step(data, beta),
    }
}

/// Iteration state for [`fit_mle`]; the Bohning factorization is computed once.
struct Stepper<'a> {
    data: &'a Dataset,
    method: MleMethod,
    penalty: Option<&'a Matrix>,
    bohning: Option<Cholesky<f64, Dyn>>,
}

impl<'a> Stepper<'a> {
    fn new(data: &'a Dataset, method: MleMethod, penalty: Option<&'a Matrix>) -> Result<Self> {
        let bohning = match method {
            MleMethod::BohningMm => Some(linalg::cholesky(&with_penalty(
                bohning_curvature(data),
                penalty,
            ))?),
            _ => None,
        };
        Ok(Self {
            data,
            method,
            penalty,
            bohning,
        })
    }

    fn step(&self, beta: &Vector) -> Result<Vector> {
        let Some(penalty) = self.penalty else {
            return match &self.bohning {
                Some(chol) => Ok(beta + chol.solve(&score(self.data, beta))),
                None => step(self.data, self.method, beta),
            };
        };
        let grad = score(self.data, beta) - penalty * beta;
        match self.method {
            MleMethod::JaakkolaMm => {
                let a = jaakkola_curvature(self.data, beta) + penalty;
                linalg::spd_solve_vec(&a, &self.data.centered_score())
            }
            MleMethod::BohningMm => Ok(beta + self.bohning.as_ref().expect("cached").solve(&grad)),
            MleMethod::NewtonRaphson => {
                let a = observed_information(self.data, beta) + penalty;
                Ok(beta + linalg::spd_solve_vec(&a, &grad)?)
            }
        }
    }

    fn objective(&self, beta: &Vector) -> f64 {
        let ll = pg_bound::total_log_lik(self.data, beta);
        match self.penalty {
            Some(p) => ll - 0.5 * beta.dot(&(p * beta)),
            None => ll,
        }
    }
}

fn with_penalty(a: Matrix, penalty: Option<&Matrix>) -> Matrix {
    match penalty {
        Some(p) => a + p,
        None => a,
    }
}

/// True when `beta` classifies every row with a strictly positive margin,
/// which certifies that no finite maximizer exists.
pub fn separates(data: &Dataset, beta: &Vector) -> bool {
    data.n() > 0
        && data
            .linear_predictor(beta)
            .iter()
            .zip(data.y().iter())
            .all(|(eta, y)| (2.0 * y - 1.0) * eta > 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub beta: Vector,
    pub trace: FitTrace,
}

/// Iterate `method` from `beta = 0`. The trace records the log-likelihood
/// (penalized when a prior precision is set) at every iterate including the
/// start.
pub fn fit_mle(data: &Dataset, method: MleMethod, options: &MleOptions) -> Result<MleFit> {
    if !(options.tolerance > 0.0) || options.max_iterations < 1 {
        return Err(Error::InvalidConfig(
            "tolerance must be positive and max_iterations at least 1".into(),
        ));
    }
    let penalty = options.prior_precision.as_ref();
    if let Some(p) = penalty {
        if p.nrows() != data.p() || p.ncols() != data.p() {
            return Err(Error::DimensionMismatch("prior precision shape".into()));
        }
    }
    let stepper = Stepper::new(data, method, penalty)?;
    let mut beta = Vector::zeros(data.p());
    let mut trace = FitTrace::new();
    trace.objective.push(stepper.objective(&beta));
    let mut termination = Termination::MaxIterations;
    for _ in 0..options.max_iterations {
        let next = match stepper.step(&beta) {
            Ok(b) => b,
            // Newton's curvature vanishes numerically once fitted
            // probabilities saturate, which only happens on separated data.
            Err(Error::NotPositiveDefinite)
                if method == MleMethod::NewtonRaphson && trace.iterations > 0 =>
            {
                termination = Termination::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        let moved = (&next - &beta).amax();
        beta = next;
        trace.objective.push(stepper.objective(&beta));
        trace.iterations += 1;
        let unbounded = penalty.is_none()
            && (beta.amax() > options.separation_threshold || separates(data, &beta));
        if !beta.iter().all(|v| v.is_finite()) || unbounded {
            termination = Termination::Diverged;
            break;
        }
        if moved < options.tolerance {
            termination = Termination::ToleranceMet;
            break;
        }
    }
    trace.finish(termination);
    Ok(MleFit { beta, trace })
}

/// Convergence rates of the two MM maps at a limit point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_b: f64,
    pub r_j: f64,
    pub beta_star: Vec<f64>,
}

/// Symmetric matrices similar to the MM Jacobians `I - A^{-1} X^T Lambda X`,
/// formed as `I - L^{-1} (X^T Lambda X) L^{-T}` with `A = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrices {
    pub bohning: Matrix,
    pub jaakkola: Matrix,
}

pub const STATIONARITY_GATE: f64 = 1e-6;

pub fn rate_matrices(data: &Dataset, beta_star: &Vector) -> Result<RateMatrices> {
    let info = observed_information(data, beta_star);
    let similar = |a: &Matrix| -> Result<Matrix> {
        let chol = linalg::cholesky(a)?;
        let l = chol.l();
        let left = l
            .solve_lower_triangular(&info)
            .ok_or(Error::NotPositiveDefinite)?;
        let both = l
            .solve_lower_triangular(&left.transpose())
            .ok_or(Error::NotPositiveDefinite)?;
        let p = a.nrows();
        Ok(linalg::symmetrize(&(Matrix::identity(p, p) - both)))
    };
    Ok(RateMatrices {
        bohning: similar(&bohning_curvature(data))?,
        jaakkola: similar(&jaakkola_curvature(data, beta_star))?,
    })
}

/// Spectral radii of the Bohning and Jaakkola update maps at `beta_star`.
/// Refuses points whose score exceeds [`STATIONARITY_GATE`] in sup norm.
pub fn rate_report(data: &Dataset, beta_star: &Vector) -> Result<RateReport> {
    let residual = score(data, beta_star).amax();
    if !(residual < STATIONARITY_GATE) {
        return Err(Error::NotConverged { residual });
    }
    let m = rate_matrices(data, beta_star)?;
    // The matrices are PSD in exact arithmetic.
    Ok(RateReport {
        r_b: linalg::max_eigenvalue_symmetric(&m.bohning).max(0.0),
        r_j: linalg::max_eigenvalue_symmetric(&m.jaakkola).max(0.0),
        beta_star: beta_star.iter().copied().collect(),
    })
}

/// `Gamma_ii - Z_ii = 1/4 - pg_mean(x_i^T beta)` for every row.
pub fn curvature_gaps(data: &Dataset, beta: &Vector) -> Vec<f64> {
    data.linear_predictor(beta)
        .iter()
        .map(|&e| 0.25 - pg_mean(e))
        .collect()
}
