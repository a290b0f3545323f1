//! Variational Bayes for logistic regression through the Polya-gamma reading
//! of the Jaakkola-Jordan tangent bound.
//!
//! * [`pg_bound`]: the bound, Polya-gamma moments, the KL gap and the ELBO.
//! * [`cavi`]: coordinate ascent (equivalently, the tangent-bound EM).
//! * [`svi`]: stochastic variational inference with Robbins-Monro steps.
//! * [`mle`]: monotone MM algorithms for the maximum likelihood estimate and
//!   their convergence rates.
//! * [`oracle`]: brute-force references used to check all of the above.
//!
//! The `parallel` feature (on by default) runs row reductions, quadrature
//! grids and replicate sweeps on rayon; results are bit-identical without it.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavi;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mle;
pub mod model;
pub mod oracle;
pub mod par;
pub mod pg_bound;
pub mod simulate;
pub mod svi;

pub use error::{Error, Result};
pub use model::{
    build_dataset, Dataset, FitTrace, GaussianPrior, GlobalVariational, LocalVariational,
    RawRecord, Termination,
};
