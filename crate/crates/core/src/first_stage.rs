//! Cell-mean regressions `m̂(d, x)` and propensity scores `π̂(x)` over one
//! discrete covariate.

use std::collections::{BTreeMap, BTreeSet};

use ordered_float::OrderedFloat;

use crate::error::{invalid, Error, Result};
use crate::sample::{cell_counts, Sample};

/// Overlap bounds applied to estimated propensities.
pub const PROPENSITY_CLIP: (f64, f64) = (0.01, 0.99);

type Cell = OrderedFloat<f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    /// Known design constant, e.g. an RCT assignment probability.
    Known(f64),
    /// Per-cell estimate.
    Cell(BTreeMap<Cell, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstStage {
    col: usize,
    cell_means: BTreeMap<(u8, Cell), f64>,
    prop_score: Propensity,
    smoothing: bool,
    clipped: bool,
}

impl FirstStage {
    /// First stage from given parts. `cell_means` must contain both arms
    /// for every cell that will be scored.
    pub fn new(
        col: usize,
        cell_means: impl IntoIterator<Item = ((u8, f64), f64)>,
        prop_score: Propensity,
    ) -> Result<Self> {
        match &prop_score {
            Propensity::Known(p) => check_open_unit(*p)?,
            Propensity::Cell(m) => {
                for p in m.values() {
                    check_open_unit(*p)?;
                }
            }
        }
        Ok(Self {
            col,
            cell_means: cell_means
                .into_iter()
                .map(|((d, x), m)| ((d, OrderedFloat(x)), m))
                .collect(),
            prop_score,
            smoothing: false,
            clipped: false,
        })
    }

    pub fn col(&self) -> usize {
        self.col
    }

    pub fn smoothing(&self) -> bool {
        self.smoothing
    }

    /// True when at least one estimated propensity hit the overlap bounds.
    pub fn clipped(&self) -> bool {
        self.clipped
    }

    pub fn propensity_kind(&self) -> &Propensity {
        &self.prop_score
    }

    pub fn cells(&self) -> Vec<f64> {
        self.cell_means
            .keys()
            .map(|(_, x)| *x)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|x| x.0)
            .collect()
    }

    /// `m̂(d, x)`.
    pub fn mean(&self, d: u8, x: f64) -> Result<f64> {
        self.cell_means
            .get(&(d, OrderedFloat(x)))
            .copied()
            .ok_or(Error::UncoveredCell(x))
    }

    /// `π̂(x)`.
    pub fn propensity(&self, x: f64) -> Result<f64> {
        match &self.prop_score {
            Propensity::Known(p) => Ok(*p),
            Propensity::Cell(m) => m.get(&OrderedFloat(x)).copied().ok_or(Error::UncoveredCell(x)),
        }
    }
}

#[cfg(test)]
impl FirstStage {
    /// Bypasses validation, for exercising downstream guards.
    pub(crate) fn with_raw_propensity(mut self, p: Propensity) -> Self {
        self.prop_score = p;
        self
    }
}

fn check_open_unit(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid("propensity", format!("{p} is outside (0, 1)")))
    }
}

/// Fits `m̂(d,x) = Σ Y 1{D=d, X=x} / (N_dx + s)` with `s = 1` when
/// `smoothing` is on, and `π̂(x) = N_1x / (N_1x + N_0x)` unless `known_pi`
/// is given. Estimated propensities are clipped into [`PROPENSITY_CLIP`].
pub fn fit_first_stage(sample: &Sample, col: usize, smoothing: bool, known_pi: Option<f64>) -> Result<FirstStage> {
    fit_over_cells(sample, col, &[], smoothing, known_pi)
}

/// As [`fit_first_stage`], additionally covering `extra_cells` that may be
/// absent from `sample` (used by cross-fitting). An absent cell gets
/// `π̂ = 1/2`; its means are `0` under smoothing and an error otherwise.
pub(crate) fn fit_over_cells(
    sample: &Sample,
    col: usize,
    extra_cells: &[f64],
    smoothing: bool,
    known_pi: Option<f64>,
) -> Result<FirstStage> {
    if let Some(p) = known_pi {
        check_open_unit(p)?;
    }
    let mut counts = cell_counts(sample, col)?;
    for &x in extra_cells {
        counts.entry((0, OrderedFloat(x))).or_insert(0);
        counts.entry((1, OrderedFloat(x))).or_insert(0);
    }
    let x = sample.discrete_column(col)?;
    let mut sums: BTreeMap<(u8, Cell), f64> = BTreeMap::new();
    for ((&d, &xi), &y) in sample.treat().iter().zip(x).zip(sample.outcome()) {
        *sums.entry((d, OrderedFloat(xi))).or_insert(0.0) += y;
    }

    let s = if smoothing { 1.0 } else { 0.0 };
    let mut cell_means = BTreeMap::new();
    for (&(d, cell), &n_dx) in &counts {
        if !smoothing && n_dx == 0 {
            return Err(Error::EmptyCell { treat: d, cell: cell.0 });
        }
        let sum = sums.get(&(d, cell)).copied().unwrap_or(0.0);
        cell_means.insert((d, cell), sum / (n_dx as f64 + s));
    }

    let mut clipped = false;
    let prop_score = match known_pi {
        Some(p) => Propensity::Known(p),
        None => {
            let mut m = BTreeMap::new();
            let cells: BTreeSet<Cell> = counts.keys().map(|(_, c)| *c).collect();
            for cell in cells {
                let n1 = counts[&(1, cell)] as f64;
                let n0 = counts[&(0, cell)] as f64;
                let raw = if n1 + n0 == 0.0 { 0.5 } else { n1 / (n1 + n0) };
                let p = raw.clamp(PROPENSITY_CLIP.0, PROPENSITY_CLIP.1);
                clipped |= p != raw;
                m.insert(cell, p);
            }
            Propensity::Cell(m)
        }
    };

    Ok(FirstStage {
        col,
        cell_means,
        prop_score,
        smoothing,
        clipped,
    })
}
