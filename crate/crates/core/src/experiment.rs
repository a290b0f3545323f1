//! Replicated experiments: the CAVI/SVI shrinkage study on a single-covariate
//! model, and a sweep comparing the Bohning and Jaakkola MM rates.
//!
//! Every replicate draws from its own RNG stream of the base seed, so results
//! do not depend on scheduling or thread count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cavi::{fit_cavi, CaviConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mle::{self, MleMethod, MleOptions};
use crate::model::{Dataset, GaussianPrior, Termination};
use crate::par;
use crate::simulate::{self, stream_rng};
use crate::svi::{fit_svi, SviConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageConfig {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub true_beta: [f64; 2],
    pub prior_variance: f64,
    pub cavi: CaviConfig,
    /// `seed` is replaced per replicate.
    pub svi: SviConfig,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        Self {
            sizes: vec![20, 100, 1000, 10_000],
            replicates: 50,
            seed: 0,
            true_beta: [1.0, 1.0],
            prior_variance: 10.0,
            cavi: CaviConfig::default(),
            svi: SviConfig {
                eval_every: 100_000,
                ..SviConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cavi,
    Svi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cavi => "cavi",
            Method::Svi => "svi",
        }
    }
}

/// One row of the long-format result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRow {
    pub n: usize,
    pub replicate: usize,
    pub method: Method,
    /// 1 for the intercept, 2 for the slope.
    pub coefficient: usize,
    pub posterior_mean: f64,
    pub posterior_sd: f64,
}

fn replicate_stream(n: usize, replicate: usize) -> u64 {
    ((n as u64) << 32) | replicate as u64
}

/// Simulate, fit CAVI and SVI for every `(n, replicate)` pair.
pub fn run_shrinkage(config: &ShrinkageConfig) -> Result<Vec<ShrinkageRow>> {
    if config.replicates == 0 || config.sizes.is_empty() {
        return Err(Error::InvalidConfig(
            "need at least one size and one replicate".into(),
        ));
    }
    let prior = GaussianPrior::isotropic(2, 0.0, config.prior_variance)?;
    let tasks: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let results = par::map_indexed(tasks.len(), |k| {
        let (n, r) = tasks[k];
        let mut rng = stream_rng(config.seed, replicate_stream(n, r));
        let data = simulate::single_covariate(&mut rng, n, config.true_beta);
        let svi_config = SviConfig {
            seed: rng.random(),
            ..config.svi.clone()
        };
        let cavi = fit_cavi(&data, &prior, &config.cavi)?;
        let svi = fit_svi(&data, &prior, &svi_config)?;
        let mut rows = Vec::with_capacity(4);
        for (method, q) in [(Method::Cavi, &cavi.q), (Method::Svi, &svi.q)] {
            let sd = q.sd();
            for j in 0..2 {
                rows.push(ShrinkageRow {
                    n,
                    replicate: r,
                    method,
                    coefficient: j + 1,
                    posterior_mean: q.mean()[j],
                    posterior_sd: sd[j],
                });
            }
        }
        Ok(rows)
    });
    let mut out = Vec::with_capacity(tasks.len() * 4);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Linear-interpolation sample quantile (the common "type 7" rule).
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageSummary {
    pub n: usize,
    pub method: Method,
    pub coefficient: usize,
    pub median: f64,
    pub iqr: f64,
}

/// Median and interquartile range of posterior means per `(n, method, coefficient)`.
pub fn summarize(rows: &[ShrinkageRow]) -> Vec<ShrinkageSummary> {
    let mut keys: Vec<(usize, Method, usize)> = rows
        .iter()
        .map(|r| (r.n, r.method, r.coefficient))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(n, method, coefficient)| {
            let means: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.method == method && r.coefficient == coefficient)
                .map(|r| r.posterior_mean)
                .collect();
            ShrinkageSummary {
                n,
                method,
                coefficient,
                median: quantile(&means, 0.5),
                iqr: quantile(&means, 0.75) - quantile(&means, 0.25),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSweepConfig {
    pub instances: usize,
    pub seed: u64,
    pub min_n: usize,
    pub max_n: usize,
    pub max_p: usize,
    pub options: MleOptions,
}

impl Default for RateSweepConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            seed: 0,
            min_n: 30,
            max_n: 100,
            max_p: 4,
            options: MleOptions {
                tolerance: 1e-12,
                ..MleOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub instance: usize,
    pub n: usize,
    pub p: usize,
    pub r_b: f64,
    pub r_j: f64,
    /// Same radii by power iteration on the symmetrized Jacobians.
    pub r_b_power: f64,
    pub r_j_power: f64,
    pub iterations_bohning: usize,
    pub iterations_jaakkola: usize,
    /// Smallest `1/4 - Z_ii` at the limit.
    pub min_curvature_gap: f64,
}

/// Rates and iteration counts for one dataset. Fails with `NotConverged`
/// when the MLE cannot be located (for instance under separation).
pub fn rates_for(data: &Dataset, options: &MleOptions, instance: usize) -> Result<RateRow> {
    let newton = mle::fit_mle(data, MleMethod::NewtonRaphson, options)?;
    let jj = mle::fit_mle(data, MleMethod::JaakkolaMm, options)?;
    let boh = mle::fit_mle(data, MleMethod::BohningMm, options)?;
    for fit in [&newton, &jj, &boh] {
        if fit.trace.termination != Termination::ToleranceMet {
            return Err(Error::NotConverged {
                residual: mle::score(data, &fit.beta).amax(),
            });
        }
    }
    let report = mle::rate_report(data, &newton.beta)?;
    let m = mle::rate_matrices(data, &newton.beta)?;
    let gaps = mle::curvature_gaps(data, &newton.beta);
    Ok(RateRow {
        instance,
        n: data.n(),
        p: data.p(),
        r_b: report.r_b,
        r_j: report.r_j,
        r_b_power: linalg::power_iteration(&m.bohning, 1e-13, 1_000_000).max(0.0),
        r_j_power: linalg::power_iteration(&m.jaakkola, 1e-13, 1_000_000).max(0.0),
        iterations_bohning: boh.trace.iterations,
        iterations_jaakkola: jj.trace.iterations,
        min_curvature_gap: gaps.into_iter().fold(f64::INFINITY, f64::min),
    })
}

/// Random nonseparable instances; separable draws are redrawn from the same
/// stream.
pub fn run_rate_sweep(config: &RateSweepConfig) -> Result<Vec<RateRow>> {
    if config.min_n > config.max_n || config.max_p == 0 {
        return Err(Error::InvalidConfig("empty instance range".into()));
    }
    let rows = par::map_indexed(config.instances, |k| {
        let mut rng = stream_rng(config.seed, k as u64);
        loop {
            let n = rng.random_range(config.min_n..=config.max_n);
            let p = rng.random_range(1..=config.max_p);
            let data = simulate::random_instance(&mut rng, n, p);
            match rates_for(&data, &config.options, k) {
                Ok(row) => return Ok(row),
                Err(Error::NotConverged { .. }) | Err(Error::NotPositiveDefinite) => continue,
                Err(e) => return Err(e),
            }
        }
    });
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_type7() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn small_shrinkage_run_shape_and_determinism() {
        let config = ShrinkageConfig {
            sizes: vec![20, 50],
            replicates: 3,
            seed: 4,
            svi: SviConfig {
                iterations: 2000,
                eval_every: 2000,
                ..SviConfig::default()
            },
            ..ShrinkageConfig::default()
        };
        let rows = run_shrinkage(&config).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 2 * 2);
        assert_eq!(rows, run_shrinkage(&config).unwrap());
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 2 * 2 * 2);
    }

    #[test]
    fn small_rate_sweep() {
        let config = RateSweepConfig {
            instances: 10,
            seed: 1,
            ..RateSweepConfig::default()
        };
        let rows = run_rate_sweep(&config).unwrap();
        assert_eq!(rows.len(), 10);
        for r in &rows {
            assert!(r.r_b >= r.r_j - 1e-10);
            assert!((0.0..1.0).contains(&r.r_b));
            assert!(r.min_curvature_gap >= 0.0);
        }
    }
}
