//! Dense SPD linear algebra. Every inverse in this crate goes through a
//! Cholesky factor.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::par;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn cholesky(a: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite)
}

/// Solve `A X = B` for SPD `A`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} rows, matrix is {}x{}",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

pub fn spd_solve_vec(a: &Matrix, b: &Vector) -> Result<Vector> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has length {}, matrix is {}x{}",
            b.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    Ok(symmetrize(&cholesky(a)?.inverse()))
}

/// `log det A` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Symmetry within `rel_tol` of the largest absolute entry.
pub fn is_symmetric(a: &Matrix, rel_tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= rel_tol * scale))
}

/// `X^T diag(w) X`, accumulated over fixed row chunks.
pub fn weighted_gram(x: &Matrix, w: &[f64]) -> Matrix {
    let p = x.ncols();
    let mut g = par::chunked_sum(
        x.nrows(),
        Matrix::zeros(p, p),
        |rows| {
            let mut acc = Matrix::zeros(p, p);
            for i in rows {
                let wi = w[i];
                for a in 0..p {
                    let xa = wi * x[(i, a)];
                    for b in 0..=a {
                        acc[(a, b)] += xa * x[(i, b)];
                    }
                }
            }
            acc
        },
        |a, b| a + b,
    );
    for a in 0..p {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

/// `X^T v`, accumulated over fixed row chunks.
pub fn weighted_colsum(x: &Matrix, v: &[f64]) -> Vector {
    let p = x.ncols();
    par::chunked_sum(
        x.nrows(),
        Vector::zeros(p),
        |rows| {
            let mut acc = Vector::zeros(p);
            for i in rows {
                for a in 0..p {
                    acc[a] += v[i] * x[(i, a)];
                }
            }
            acc
        },
        |a, b| a + b,
    )
}

/// `x^T A x` for a row of `x`.
pub fn row_quad_form(x: &Matrix, row: usize, a: &Matrix) -> f64 {
    let p = x.ncols();
    let mut s = 0.0;
    for j in 0..p {
        let mut t = 0.0;
        for k in 0..p {
            t += a[(j, k)] * x[(row, k)];
        }
        s += x[(row, j)] * t;
    }
    s
}

pub fn row_dot(x: &Matrix, row: usize, v: &Vector) -> f64 {
    (0..x.ncols()).map(|j| x[(row, j)] * v[j]).sum()
}

/// Largest eigenvalue of a symmetric matrix by symmetric eigendecomposition.
pub fn max_eigenvalue_symmetric(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

/// Dominant eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, reported as the Rayleigh quotient of the final iterate.
pub fn power_iteration(m: &Matrix, tol: f64, max_iterations: usize) -> f64 {
    let p = m.nrows();
    if p == 0 {
        return 0.0;
    }
    // Non-constant start so no eigenvector is orthogonal to it generically.
    let mut v = Vector::from_fn(p, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut rayleigh = v.dot(&(m * &v));
    for _ in 0..max_iterations {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let next_rayleigh = next.dot(&(m * &next));
        let moved = (&next - &v).amax();
        v = next;
        rayleigh = next_rayleigh;
        if moved < tol {
            break;
        }
    }
    rayleigh
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve() {
        let i2 = Matrix::identity(2, 2);
        assert_eq!(spd_solve(&i2, &i2).unwrap(), i2);
    }

    #[test]
    fn diagonal_solve() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 4.0]));
        let b = Matrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let x = spd_solve(&a, &b).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(x[(1, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Matrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose() + Matrix::identity(5, 5);
        let b = Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let x = spd_solve(&a, &b).unwrap();
        assert!((&a * x - &b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(spd_solve(&a, &a).unwrap_err(), Error::NotPositiveDefinite);
        let nan = Matrix::from_element(1, 1, f64::NAN);
        assert_eq!(cholesky(&nan).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn gram_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(1500, 3, |_, _| rng.random_range(-1.0..1.0));
        let w: Vec<f64> = (0..1500).map(|_| rng.random_range(0.0..0.25)).collect();
        let direct = x.transpose() * Matrix::from_diagonal(&Vector::from_vec(w.clone())) * &x;
        let g = weighted_gram(&x, &w);
        assert!((g - direct).amax() < 1e-10);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let m = Matrix::from_row_slice(3, 3, &[0.6, 0.1, 0.0, 0.1, 0.5, 0.2, 0.0, 0.2, 0.3]);
        let a = max_eigenvalue_symmetric(&m);
        let b = power_iteration(&m, 1e-14, 100_000);
        assert_relative_eq!(a, b, epsilon = 1e-12);
        assert_eq!(power_iteration(&Matrix::zeros(2, 2), 1e-12, 10), 0.0);
    }

    proptest! {
        #[test]
        fn llt_is_always_factorable(
            diag in prop::collection::vec(0.1f64..3.0, 4),
            off in prop::collection::vec(-2.0f64..2.0, 6),
        ) {
            let mut l = Matrix::zeros(4, 4);
            let mut k = 0;
            for i in 0..4 {
                l[(i, i)] = diag[i];
                for j in 0..i {
                    l[(i, j)] = off[k];
                    k += 1;
                }
            }
            let a = &l * l.transpose();
            let b = Matrix::identity(4, 4);
            prop_assert!(spd_solve(&a, &b).is_ok());
        }
    }
}
