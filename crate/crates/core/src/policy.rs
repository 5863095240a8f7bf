//! Treatment rules `G ⊆ 𝒳`, evaluated as indicators over sample rows.

use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::sample::Sample;

/// Predicate over a covariate row.
pub type RowPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum PolicyKind {
    TreatAll,
    TreatNone,
    /// Treat when `x[col] <= cutoff`.
    CutoffLe { col: usize, cutoff: f64 },
    /// Treat when `x[col]` is one of `cells`.
    CellSet { col: usize, cells: Vec<f64> },
    Predicate(RowPredicate),
}

impl fmt::Debug for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::TreatAll => write!(f, "TreatAll"),
            PolicyKind::TreatNone => write!(f, "TreatNone"),
            PolicyKind::CutoffLe { col, cutoff } => write!(f, "CutoffLe({col}, {cutoff})"),
            PolicyKind::CellSet { col, cells } => write!(f, "CellSet({col}, {cells:?})"),
            PolicyKind::Predicate(_) => write!(f, "Predicate"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub kind: PolicyKind,
    pub label: String,
}

impl Policy {
    pub fn treat_all() -> Self {
        Self {
            kind: PolicyKind::TreatAll,
            label: "treat-all".into(),
        }
    }

    pub fn treat_none() -> Self {
        Self {
            kind: PolicyKind::TreatNone,
            label: "treat-none".into(),
        }
    }

    pub fn cutoff_le(col: usize, cutoff: f64) -> Self {
        Self {
            kind: PolicyKind::CutoffLe { col, cutoff },
            label: format!("x{col}<={cutoff}"),
        }
    }

    pub fn cell_set(col: usize, cells: Vec<f64>) -> Self {
        let label = format!(
            "x{col} in {{{}}}",
            cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        );
        Self {
            kind: PolicyKind::CellSet { col, cells },
            label,
        }
    }

    pub fn predicate(label: impl Into<String>, f: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Self {
            kind: PolicyKind::Predicate(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Whether a single covariate row is treated.
    pub fn treats(&self, row: &[f64]) -> bool {
        match &self.kind {
            PolicyKind::TreatAll => true,
            PolicyKind::TreatNone => false,
            PolicyKind::CutoffLe { col, cutoff } => row[*col] <= *cutoff,
            PolicyKind::CellSet { col, cells } => cells.contains(&row[*col]),
            PolicyKind::Predicate(f) => f(row),
        }
    }

    /// Treatment indicator for every row of the sample.
    pub fn indicator(&self, sample: &Sample) -> Result<Vec<bool>> {
        let n = sample.n();
        Ok(match &self.kind {
            PolicyKind::TreatAll => vec![true; n],
            PolicyKind::TreatNone => vec![false; n],
            PolicyKind::CutoffLe { col, cutoff } => sample
                .covariate(*col)?
                .values
                .iter()
                .map(|v| v <= cutoff)
                .collect(),
            PolicyKind::CellSet { col, cells } => sample
                .covariate(*col)?
                .values
                .iter()
                .map(|v| cells.contains(v))
                .collect(),
            PolicyKind::Predicate(f) => (0..n).map(|i| f(&sample.row(i))).collect(),
        })
    }

    /// Fraction of the sample treated.
    pub fn treated_share(&self, sample: &Sample) -> Result<f64> {
        let ind = self.indicator(sample)?;
        Ok(ind.iter().filter(|&&b| b).count() as f64 / ind.len() as f64)
    }
}

/// Empirical share of rows where two policies disagree, `P̂(G △ H)`.
pub fn symmetric_difference_share(sample: &Sample, g: &Policy, h: &Policy) -> Result<f64> {
    let a = g.indicator(sample)?;
    let b = h.indicator(sample)?;
    Ok(a.iter().zip(&b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64)
}
