//! Datasets, priors and variational states shared by every fitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// One parsed input row: a binary response and its covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub y: f64,
    pub x: Vec<f64>,
}

/// Binary responses `y` and an `n x p` design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vector,
    x: Matrix,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: Vector, x: Matrix) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} design rows",
                y.len(),
                x.nrows()
            )));
        }
        for (row, &v) in y.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::BadResponse { row, value: v });
            }
        }
        for row in 0..x.nrows() {
            for col in 0..x.ncols() {
                if !x[(row, col)].is_finite() {
                    return Err(Error::NonFiniteValue { row, col });
                }
            }
        }
        Ok(Self {
            y,
            x,
            feature_names: None,
        })
    }

    /// A prior-only problem with `p` coefficients and no observations.
    pub fn empty(p: usize) -> Self {
        Self {
            y: Vector::zeros(0),
            x: Matrix::zeros(0, p),
            feature_names: None,
        }
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} columns",
                names.len(),
                self.p()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// `X^T (y - 0.5)`.
    pub fn centered_score(&self) -> Vector {
        let centered: Vec<f64> = self.y.iter().map(|v| v - 0.5).collect();
        linalg::weighted_colsum(&self.x, &centered)
    }

    /// Linear predictors `X beta`.
    pub fn linear_predictor(&self, beta: &Vector) -> Vector {
        &self.x * beta
    }

    /// The same rows stacked `times` times.
    pub fn replicate(&self, times: usize) -> Self {
        let n = self.n();
        let y = Vector::from_fn(n * times, |i, _| self.y[i % n]);
        let x = Matrix::from_fn(n * times, self.p(), |i, j| self.x[(i % n, j)]);
        Self {
            y,
            x,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Validate raw records and assemble a dataset, optionally prepending an
/// all-ones intercept column.
pub fn build_dataset(records: &[RawRecord], intercept: bool) -> Result<Dataset> {
    let offset = usize::from(intercept);
    let Some(first) = records.first() else {
        return Ok(Dataset::empty(offset));
    };
    let width = first.x.len();
    let p = width + offset;
    let n = records.len();
    let mut y = Vector::zeros(n);
    let mut x = Matrix::zeros(n, p);
    for (row, rec) in records.iter().enumerate() {
        if rec.x.len() != width {
            return Err(Error::RaggedRows {
                row,
                expected: width,
                found: rec.x.len(),
            });
        }
        if !rec.y.is_finite() {
            return Err(Error::NonFiniteValue { row, col: 0 });
        }
        if rec.y != 0.0 && rec.y != 1.0 {
            return Err(Error::BadResponse { row, value: rec.y });
        }
        y[row] = rec.y;
        if intercept {
            x[(row, 0)] = 1.0;
        }
        for (j, &v) in rec.x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row, col: j });
            }
            x[(row, j + offset)] = v;
        }
    }
    Dataset::new(y, x)
}

/// `beta ~ N(mu0, Sigma0)` with its precision cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Vector,
    cov: Matrix,
    precision: Matrix,
    log_det_cov: f64,
}

impl GaussianPrior {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "prior mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("prior mean must be finite".into()));
        }
        if !linalg::is_symmetric(&cov, 1e-12) {
            return Err(Error::InvalidConfig(
                "prior covariance is not symmetric".into(),
            ));
        }
        let chol = linalg::cholesky(&cov)?;
        let log_det_cov = linalg::log_det(&chol);
        let precision = linalg::symmetrize(&chol.inverse());
        Ok(Self {
            mean,
            cov,
            precision,
            log_det_cov,
        })
    }

    /// `N(mean * 1, variance * I)`.
    pub fn isotropic(p: usize, mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "prior variance must be positive, got {variance}"
            )));
        }
        Self::new(
            Vector::from_element(p, mean),
            Matrix::identity(p, p) * variance,
        )
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn log_det_cov(&self) -> f64 {
        self.log_det_cov
    }

    /// `Sigma0^{-1} mu0`.
    pub fn natural_mean(&self) -> Vector {
        &self.precision * &self.mean
    }

    /// The prior itself as a Gaussian variational state.
    pub fn as_variational(&self) -> GlobalVariational {
        GlobalVariational {
            lambda1: self.natural_mean(),
            lambda2: &self.precision * -0.5,
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }
}

/// Gaussian `q(beta)` held in natural form `(lambda1, lambda2)` together with
/// its mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVariational {
    lambda1: Vector,
    lambda2: Matrix,
    mean: Vector,
    cov: Matrix,
}

impl GlobalVariational {
    /// `mu = (-2 lambda2)^{-1} lambda1`, `Sigma = (-2 lambda2)^{-1}`.
    pub fn from_natural(lambda1: Vector, lambda2: Matrix) -> Result<Self> {
        if lambda2.nrows() != lambda1.len() || lambda2.ncols() != lambda1.len() {
            return Err(Error::DimensionMismatch(format!(
                "lambda1 has length {}, lambda2 is {}x{}",
                lambda1.len(),
                lambda2.nrows(),
                lambda2.ncols()
            )));
        }
        let lambda2 = linalg::symmetrize(&lambda2);
        let chol = linalg::cholesky(&(&lambda2 * -2.0))?;
        let mean = chol.solve(&lambda1);
        let cov = linalg::symmetrize(&chol.inverse());
        Ok(Self {
            lambda1,
            lambda2,
            mean,
            cov,
        })
    }

    pub fn from_moments(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let cov = linalg::symmetrize(&cov);
        let chol = linalg::cholesky(&cov)?;
        let precision = linalg::symmetrize(&chol.inverse());
        let lambda1 = &precision * &mean;
        Ok(Self {
            lambda1,
            lambda2: precision * -0.5,
            mean,
            cov,
        })
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn lambda1(&self) -> &Vector {
        &self.lambda1
    }

    pub fn lambda2(&self) -> &Matrix {
        &self.lambda2
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn sd(&self) -> Vector {
        self.cov.diagonal().map(f64::sqrt)
    }
}

/// Per-observation Polya-gamma parameters, stored as the nonnegative root.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVariational {
    xi: Vec<f64>,
}

impl LocalVariational {
    /// `xi` and `-xi` describe the same PG(1, xi) law; the sign is dropped.
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if let Some(row) = xi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row, col: 0 });
        }
        Ok(Self {
            xi: xi.into_iter().map(f64::abs).collect(),
        })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// From PG natural parameters `phi_i <= 0`, via `xi_i = sqrt(-2 phi_i)`.
    pub fn from_phi(phi: &[f64]) -> Result<Self> {
        Self::new(phi.iter().map(|&f| (-2.0 * f).max(0.0).sqrt()).collect())
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.xi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ToleranceMet,
    MaxIterations,
    Diverged,
}

/// Objective values per iteration and how the fit ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub objective: Vec<f64>,
    /// Expected tangent-bound objective, recorded only by the EM fitter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em_objective: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
}

impl FitTrace {
    pub fn new() -> Self {
        Self {
            objective: Vec::new(),
            em_objective: None,
            converged: false,
            iterations: 0,
            termination: Termination::MaxIterations,
        }
    }

    pub fn finish(&mut self, termination: Termination) {
        self.termination = termination;
        self.converged = termination == Termination::ToleranceMet;
    }

    /// True when every step is nondecreasing up to `rel_slack * (1 + |prev|)`.
    pub fn is_monotone(&self, rel_slack: f64) -> bool {
        self.objective
            .windows(2)
            .all(|w| w[1] >= w[0] - rel_slack * (1.0 + w[0].abs()))
    }

    pub fn last(&self) -> Option<f64> {
        self.objective.last().copied()
    }
}

impl Default for FitTrace {
    fn default() -> Self {
        Self::new()
    }
}
