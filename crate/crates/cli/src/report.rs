//! Result documents. Field order is fixed by declaration order, and floats are
//! written in shortest round-trip form, so seeded runs diff cleanly and a
//! document read back reproduces its numbers exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use logit_vb::linalg::{Matrix, Vector};
use logit_vb::{FitTrace, Termination};

use crate::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    pub command: String,
    pub status: Termination,
    pub converged: bool,
    pub iterations: usize,
    /// `elbo` for the variational fitters, `log_likelihood` for the MLE.
    pub objective: String,
    pub final_objective: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Row `i` holds `Sigma[i][0..=i]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_lower: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_hat: Option<Vec<f64>>,
    pub trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em_trace: Option<Vec<f64>>,
    pub seed: u64,
    pub config: ConfigEcho,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub data: String,
    pub intercept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_init: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

impl FitDocument {
    pub fn new(
        command: &str,
        objective: &str,
        trace: &FitTrace,
        features: Vec<String>,
        n: usize,
        seed: u64,
        config: ConfigEcho,
    ) -> Self {
        Self {
            command: command.to_string(),
            status: trace.termination,
            converged: trace.converged,
            iterations: trace.iterations,
            objective: objective.to_string(),
            final_objective: trace.last(),
            n,
            p: features.len(),
            features,
            mu: None,
            sigma_lower: None,
            xi: None,
            beta_hat: None,
            trace: trace.objective.clone(),
            em_trace: trace.em_objective.clone(),
            seed,
            config,
        }
    }
}

pub fn vector(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn lower_triangle(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..=i).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>], p: usize) -> Result<Matrix, Failure> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Failure::validation(format!("expected a {p}x{p} matrix")));
    }
    Ok(Matrix::from_fn(p, p, |i, j| rows[i][j]))
}

pub fn from_lower_triangle(rows: &[Vec<f64>], p: usize) -> Result<Matrix, Failure> {
    if rows.len() != p || rows.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
        return Err(Failure::validation(format!(
            "sigma_lower is not a {p}x{p} lower triangle"
        )));
    }
    Ok(Matrix::from_fn(p, p, |i, j| {
        if j <= i {
            rows[i][j]
        } else {
            rows[j][i]
        }
    }))
}

/// Pretty JSON to `out`, or stdout when no path is given.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Failure::validation(e.to_string()))?;
    text.push('\n');
    write_text(&text, out)
}

pub fn write_text(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::validation(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::validation(format!("cannot write to stdout: {e}"))),
    }
}

pub fn read_document(path: &Path) -> Result<FitDocument, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

/// Flat `step,objective[,em_objective]` trace. `steps[k]` labels entry `k`.
pub fn write_trace_csv(path: &Path, trace: &FitTrace, steps: &[usize]) -> Result<(), Failure> {
    let fail = |e: csv::Error| Failure::validation(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    let em = trace.em_objective.as_deref();
    let mut header = vec!["step", "objective"];
    if em.is_some() {
        header.push("em_objective");
    }
    w.write_record(&header).map_err(fail)?;
    for (k, value) in trace.objective.iter().enumerate() {
        let mut rec = vec![steps[k].to_string(), value.to_string()];
        if let Some(em) = em {
            rec.push(em[k].to_string());
        }
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush()
        .map_err(|e| Failure::validation(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_triangle_round_trip() {
        let m = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let tri = lower_triangle(&m);
        assert_eq!(tri.iter().map(Vec::len).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(from_lower_triangle(&tri, 3).unwrap(), m);
        assert!(from_lower_triangle(&tri, 2).is_err());
        assert_eq!(from_rows(&rows(&m), 3).unwrap(), m);
    }
}
