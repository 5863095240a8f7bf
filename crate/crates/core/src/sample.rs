//! Observed records `(D, Y, X)` and covariate binning.

use std::collections::BTreeMap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Discrete,
    Continuous,
}

/// One covariate column, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub values: Vec<f64>,
}

impl Covariate {
    pub fn discrete(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Discrete,
            values,
        }
    }

    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Continuous,
            values,
        }
    }
}

/// A sample of `n` i.i.d. records with binary treatment, real outcome and
/// covariates. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    treat: Vec<u8>,
    outcome: Vec<f64>,
    covariates: Vec<Covariate>,
}

impl Sample {
    pub fn new(treat: Vec<u8>, outcome: Vec<f64>, covariates: Vec<Covariate>) -> Result<Self> {
        let n = treat.len();
        if n == 0 {
            return Err(Error::InvalidSample("sample is empty".into()));
        }
        if outcome.len() != n {
            return Err(Error::InvalidSample(format!(
                "outcome has length {} but treatment has length {n}",
                outcome.len()
            )));
        }
        if let Some(pos) = treat.iter().position(|&d| d > 1) {
            return Err(Error::InvalidSample(format!(
                "treatment must be 0 or 1 (row {pos} has {})",
                treat[pos]
            )));
        }
        if let Some(pos) = outcome.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite outcome at row {pos}")));
        }
        for c in &covariates {
            if c.values.len() != n {
                return Err(Error::InvalidSample(format!(
                    "covariate {} has length {} but sample has {n} rows",
                    c.name,
                    c.values.len()
                )));
            }
            if let Some(pos) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidSample(format!(
                    "non-finite value in covariate {} at row {pos}",
                    c.name
                )));
            }
        }
        Ok(Self {
            treat,
            outcome,
            covariates,
        })
    }

    pub fn n(&self) -> usize {
        self.treat.len()
    }

    pub fn treat(&self) -> &[u8] {
        &self.treat
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn ncols(&self) -> usize {
        self.covariates.len()
    }

    pub fn covariate(&self, col: usize) -> Result<&Covariate> {
        self.covariates.get(col).ok_or(Error::ColumnOutOfRange {
            index: col,
            ncols: self.covariates.len(),
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    /// Values of a discrete column; errors on a continuous one.
    pub fn discrete_column(&self, col: usize) -> Result<&[f64]> {
        let c = self.covariate(col)?;
        match c.kind {
            CovariateKind::Discrete => Ok(&c.values),
            CovariateKind::Continuous => Err(Error::DiscreteColumnRequired(col)),
        }
    }

    /// Covariate row `i` (allocates).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.covariates.iter().map(|c| c.values[i]).collect()
    }

    /// Rows at `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Sample::new(
            idx.iter().map(|&i| self.treat[i]).collect(),
            pick(&self.outcome),
            self.covariates
                .iter()
                .map(|c| Covariate {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: pick(&c.values),
                })
                .collect(),
        )
    }

    /// Same design, outcome replaced.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        Sample::new(self.treat.clone(), outcome, self.covariates.clone())
    }
}

/// Count of observations per `(treatment, cell)` pair.
pub type CellCounts = BTreeMap<(u8, OrderedFloat<f64>), usize>;

/// Counts `N_dx` for every treatment arm and every cell value present in
/// the column. Both arms are reported for each cell, so zero counts appear
/// explicitly.
pub fn cell_counts(sample: &Sample, col: usize) -> Result<CellCounts> {
    let x = sample.discrete_column(col)?;
    let mut counts = CellCounts::new();
    for (&d, &v) in sample.treat().iter().zip(x) {
        let cell = OrderedFloat(v);
        counts.entry((0, cell)).or_insert(0);
        counts.entry((1, cell)).or_insert(0);
        *counts.get_mut(&(d, cell)).expect("inserted above") += 1;
    }
    Ok(counts)
}

/// Replaces a continuous column by empirical-quantile bin ids
/// `0..n_bins`. Tied values always share a bin; with distinct values the
/// bin sizes differ by at most one.
pub fn bin_covariate(sample: &Sample, col: usize, n_bins: usize) -> Result<Sample> {
    if n_bins < 2 {
        return Err(crate::error::invalid("n_bins", "at least 2 bins required"));
    }
    let c = sample.covariate(col)?;
    if c.kind != CovariateKind::Continuous {
        return Err(Error::ContinuousColumnRequired(col));
    }
    let n = c.values.len();

    // distinct values with their counts, ascending
    let mut groups: BTreeMap<OrderedFloat<f64>, usize> = BTreeMap::new();
    for &v in &c.values {
        *groups.entry(OrderedFloat(v)).or_insert(0) += 1;
    }
    let n_groups = groups.len();
    if n_groups < n_bins {
        return Err(Error::TooFewDistinct {
            requested: n_bins,
            achievable: n_groups,
            distinct: n_groups,
        });
    }

    let mut assign: BTreeMap<OrderedFloat<f64>, usize> = BTreeMap::new();
    let mut start_rank = 0usize;
    let mut prev: Option<usize> = None;
    for (g, (&value, &count)) in groups.iter().enumerate() {
        let target = start_rank * n_bins / n;
        // the groups after this one must still be able to fill the remaining bins
        let floor = (n_bins + g).saturating_sub(n_groups);
        let mut b = target.max(floor);
        if let Some(p) = prev {
            b = b.clamp(p, p + 1);
        } else {
            b = 0;
        }
        assign.insert(value, b);
        prev = Some(b);
        start_rank += count;
    }

    let binned: Vec<f64> = c
        .values
        .iter()
        .map(|v| assign[&OrderedFloat(*v)] as f64)
        .collect();
    let mut covariates = sample.covariates().to_vec();
    covariates[col] = Covariate::discrete(c.name.clone(), binned);
    Sample::new(sample.treat().to_vec(), sample.outcome().to_vec(), covariates)
}
