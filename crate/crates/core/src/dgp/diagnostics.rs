use std::collections::BTreeMap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::first_stage::FirstStage;
use crate::inference::normal_quantile;
use crate::policy::{symmetric_difference_share, Policy};
use crate::sample::Sample;
use crate::scores::dr_scores;

/// Two-sample t-test of `τ(x) = 0` within one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTest {
    pub cell: f64,
    pub cate: f64,
    /// `NaN` when an arm has fewer than two observations.
    pub t_stat: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginDiagnostics {
    /// `P̂(G* △ G)`.
    pub share: f64,
    /// `Ŵ_{G*} − Ŵ_G` from the doubly-robust scores.
    pub welfare_gap: f64,
    /// `C₁ = η δ (1/(1+δ))^{1+1/δ}`.
    pub c1: f64,
    /// `C₁ P̂(G*△G)^{1+1/δ} − (Ŵ_{G*} − Ŵ_G)`; positive values contradict
    /// the margin condition in sample.
    pub margin_lhs: f64,
    pub violated_in_sample: bool,
    pub cells: Vec<CellTest>,
    /// Intersection-union decision: the hypothesis that some cell has zero
    /// effect is rejected only if every cell rejects.
    pub iut_reject: bool,
}

/// Checks whether a candidate `G` and the reference rule `gstar` are
/// compatible with a margin condition of order `delta_low` and scale
/// `eta`, and tests every cell's CATE against zero at two-sided level
/// `alpha`. Cells are the values of the first stage's column.
pub fn margin_diagnostics(
    sample: &Sample,
    fs: &FirstStage,
    gstar: &Policy,
    g: &Policy,
    delta_low: f64,
    eta: f64,
    alpha: f64,
) -> Result<MarginDiagnostics> {
    if !(delta_low > 0.0) {
        return Err(invalid("delta_low", "must be positive"));
    }
    if !(eta > 0.0) {
        return Err(invalid("eta", "must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("{alpha} is outside (0, 1)")));
    }
    let share = symmetric_difference_share(sample, gstar, g)?;
    let panel = dr_scores(sample, fs, &[gstar.clone(), g.clone()])?;
    let welfare_gap = panel.w_hat()[0] - panel.w_hat()[1];
    let exponent = 1.0 + 1.0 / delta_low;
    let c1 = eta * delta_low * (1.0 / (1.0 + delta_low)).powf(exponent);
    let margin_lhs = c1 * share.powf(exponent) - welfare_gap;

    let cells = cell_tests(sample, fs.col(), normal_quantile(1.0 - alpha / 2.0))?;
    let iut_reject = !cells.is_empty() && cells.iter().all(|c| c.reject);
    Ok(MarginDiagnostics {
        share,
        welfare_gap,
        c1,
        margin_lhs,
        violated_in_sample: margin_lhs > 0.0,
        cells,
        iut_reject,
    })
}

fn cell_tests(sample: &Sample, col: usize, z: f64) -> Result<Vec<CellTest>> {
    let x = sample.discrete_column(col)?;
    // (count, sum, sum of squares) per (cell, arm)
    let mut acc: BTreeMap<(OrderedFloat<f64>, u8), (f64, f64, f64)> = BTreeMap::new();
    for ((&xi, &d), &y) in x.iter().zip(sample.treat()).zip(sample.outcome()) {
        let e = acc.entry((OrderedFloat(xi), d)).or_insert((0.0, 0.0, 0.0));
        e.0 += 1.0;
        e.1 += y;
        e.2 += y * y;
    }
    let cells: Vec<OrderedFloat<f64>> = {
        let mut v: Vec<_> = acc.keys().map(|k| k.0).collect();
        v.dedup();
        v
    };
    Ok(cells
        .into_iter()
        .map(|cell| {
            let arm = |d: u8| acc.get(&(cell, d)).copied().unwrap_or((0.0, 0.0, 0.0));
            let (n1, s1, q1) = arm(1);
            let (n0, s0, q0) = arm(0);
            let mean = |n: f64, s: f64| if n > 0.0 { s / n } else { f64::NAN };
            let var = |n: f64, s: f64, q: f64| if n > 1.0 { (q - s * s / n) / (n - 1.0) } else { f64::NAN };
            let cate = mean(n1, s1) - mean(n0, s0);
            let se = (var(n1, s1, q1) / n1 + var(n0, s0, q0) / n0).sqrt();
            let t_stat = cate / se;
            CellTest {
                cell: cell.0,
                cate,
                t_stat,
                reject: t_stat.abs() > z,
            }
        })
        .collect())
}
