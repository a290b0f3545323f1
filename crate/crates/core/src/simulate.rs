//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{Matrix, Vector};
use crate::model::Dataset;

/// RNG for stream `stream` of a base seed. Streams are independent, so
/// replicate `r` sees the same draws whatever order replicates run in.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Draw `y_i ~ Bernoulli(logistic(x_i^T beta))` for every row of `x`.
pub fn draw_responses<R: Rng>(rng: &mut R, x: &Matrix, beta: &Vector) -> Vector {
    let eta = x * beta;
    eta.map(|e| {
        if rng.random::<f64>() < logistic(e) {
            1.0
        } else {
            0.0
        }
    })
}

/// Intercept plus `p - 1` standard normal covariates, coefficients drawn
/// from `N(0, 0.5^2)`.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, p: usize) -> Dataset {
    let x = Matrix::from_fn(n, p, |_, j| {
        if j == 0 {
            1.0
        } else {
            StandardNormal.sample(rng)
        }
    });
    let beta = Vector::from_fn(p, |_, _| {
        0.5 * Distribution::<f64>::sample(&StandardNormal, rng)
    });
    let y = draw_responses(rng, &x, &beta);
    Dataset::new(y, x).expect("simulated data is valid")
}

/// `logit P(y = 1) = beta_1 + beta_2 x` with `x ~ Unif(-2, 2)`.
pub fn single_covariate<R: Rng>(rng: &mut R, n: usize, beta: [f64; 2]) -> Dataset {
    let covariate: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = Matrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { covariate[i] });
    let y = draw_responses(rng, &x, &Vector::from_vec(beta.to_vec()));
    Dataset::new(y, x).expect("simulated data is valid")
}
