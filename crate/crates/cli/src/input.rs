use std::path::Path;

use anyhow::{bail, Context, Result};
use welfare_lcb::{Covariate, Sample};

/// Which CSV columns feed the sample.
pub struct ColumnSpec<'a> {
    pub treatment: &'a str,
    pub outcome: &'a str,
    /// `None` selects every remaining column.
    pub covariates: Option<&'a [String]>,
    pub continuous: &'a [String],
}

/// Reads a comma-separated file with a header row. Every used cell must
/// parse as a finite number; the treatment must be 0 or 1.
pub fn read_sample(path: &Path, spec: &ColumnSpec<'_>) -> Result<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot open input {}", path.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("cannot read header of {}", path.display()))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        bail!("empty input: {} has no header row", path.display());
    }
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column {name:?} in {}", path.display()))
    };
    let t_idx = index(spec.treatment)?;
    let y_idx = index(spec.outcome)?;
    let cov_names: Vec<String> = match spec.covariates {
        Some(names) => names.to_vec(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t_idx && *i != y_idx)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    for c in spec.continuous {
        if !cov_names.contains(c) {
            bail!("continuous column {c:?} is not among the covariates");
        }
    }
    let cov_idx = cov_names.iter().map(|c| index(c)).collect::<Result<Vec<_>>>()?;

    let mut treat = Vec::new();
    let mut outcome = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); cov_idx.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("malformed CSV record {}", r + 2))?;
        let row = r + 2;
        let cell = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            let v: f64 = raw
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .with_context(|| format!("non-numeric value {raw:?} in column {name:?} at line {row}"))?;
            Ok(v)
        };
        let d = cell(t_idx, spec.treatment)?;
        if d != 0.0 && d != 1.0 {
            bail!("treatment column {:?} is not binary: value {d} at line {row}", spec.treatment);
        }
        treat.push(d as u8);
        outcome.push(cell(y_idx, spec.outcome)?);
        for (k, &i) in cov_idx.iter().enumerate() {
            values[k].push(cell(i, &cov_names[k])?);
        }
    }
    if treat.is_empty() {
        bail!("empty input: {} has no data rows", path.display());
    }
    let covariates = cov_names
        .into_iter()
        .zip(values)
        .map(|(name, v)| {
            if spec.continuous.contains(&name) {
                Covariate::continuous(name, v)
            } else {
                Covariate::discrete(name, v)
            }
        })
        .collect();
    Ok(Sample::new(treat, outcome, covariates)?)
}
