//! CSV ingestion and prior specification.

use std::fs;
use std::path::Path;

use logit_vb::linalg::{Matrix, Vector};
use logit_vb::{build_dataset, Dataset, GaussianPrior, RawRecord};

use crate::Failure;

pub const INTERCEPT_NAME: &str = "(intercept)";

/// Read a headed CSV. The column named `y` is the response; every other
/// column is a covariate, kept in header order.
pub fn read_dataset(path: &Path, intercept: bool) -> Result<Dataset, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Failure::validation(format!("{}: bad header: {e}", path.display())))?
        .clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Failure::validation(format!("{}: no column named \"y\"", path.display())))?;
    if headers.iter().filter(|h| *h == "y").count() > 1 {
        return Err(Failure::validation(format!(
            "{}: more than one \"y\" column",
            path.display()
        )));
    }

    let mut records = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        let parse = |field: &str, name: &str| {
            field.parse::<f64>().map_err(|_| {
                Failure::validation(format!(
                    "{}:{line}: column \"{name}\": cannot parse {field:?} as a number",
                    path.display()
                ))
            })
        };
        let mut y = f64::NAN;
        let mut x = Vec::with_capacity(rec.len().saturating_sub(1));
        for (j, field) in rec.iter().enumerate() {
            let v = parse(field, &headers[j])?;
            if j == y_col {
                y = v;
            } else {
                x.push(v);
            }
        }
        records.push(RawRecord { y, x });
    }

    let data = build_dataset(&records, intercept)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let mut names: Vec<String> = Vec::with_capacity(headers.len());
    if intercept {
        names.push(INTERCEPT_NAME.to_string());
    }
    names.extend(headers.iter().filter(|h| *h != "y").map(str::to_string));
    data.with_feature_names(names)
        .map_err(|e| Failure::validation(e.to_string()))
}

/// `--prior-mean`: one scalar broadcast to every coefficient, or a
/// comma-separated list of length `p`.
pub fn parse_prior_mean(spec: &str, p: usize) -> Result<Vector, Failure> {
    let values = parse_list(spec).map_err(|e| Failure::validation(format!("--prior-mean: {e}")))?;
    match values.len() {
        1 => Ok(Vector::from_element(p, values[0])),
        len if len == p => Ok(Vector::from_vec(values)),
        len => Err(Failure::validation(format!(
            "--prior-mean has {len} entries but the model has {p} coefficients"
        ))),
    }
}

/// `--prior-var`: a scalar `v` for `v I`, otherwise the path of a file
/// holding the full `p x p` covariance, one row per line.
pub fn parse_prior_cov(spec: &str, p: usize) -> Result<Matrix, Failure> {
    if let Ok(v) = spec.trim().parse::<f64>() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Failure::validation(format!(
                "--prior-var must be positive, got {v}"
            )));
        }
        return Ok(Matrix::identity(p, p) * v);
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| Failure::validation(format!("--prior-var: cannot read {spec}: {e}")))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_list)
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::validation(format!("--prior-var {spec}: {e}")))?;
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Failure::validation(format!(
            "--prior-var {spec}: expected a {p}x{p} matrix"
        )));
    }
    Ok(Matrix::from_fn(p, p, |i, j| rows[i][j]))
}

pub fn build_prior(mean: Vector, cov: Matrix) -> Result<GaussianPrior, Failure> {
    GaussianPrior::new(mean, cov).map_err(|e| Failure::validation(format!("prior covariance: {e}")))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("cannot parse {t:?} as a finite number"))
        })
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| {
            if v.is_empty() {
                Err("no values".to_string())
            } else {
                Ok(v)
            }
        })
}
