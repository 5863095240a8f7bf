//! Doubly-robust welfare scores and the panel of their sample moments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::first_stage::{fit_over_cells, FirstStage};
use crate::policy::Policy;
use crate::sample::Sample;

/// `N × J` matrix of scores `ψ_G(Z_i)` for a finite policy class, with the
/// welfare estimates `Ŵ_G` (column means), standard deviations `σ̂_G`, and
/// covariance `Σ̂`, all normalized by `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    scores: DMatrix<f64>,
    w_hat: DVector<f64>,
    sigma_hat: DVector<f64>,
    cov_hat: DMatrix<f64>,
    labels: Vec<String>,
}

impl ScorePanel {
    /// Builds the panel from raw scores. `labels` names the columns.
    pub fn from_scores(scores: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, j) = scores.shape();
        if n == 0 || j == 0 {
            return Err(Error::InvalidSample(format!("score matrix is {n}x{j}")));
        }
        if labels.len() != j {
            return Err(Error::InvalidSample(format!(
                "{} labels for {j} score columns",
                labels.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite score".into()));
        }
        let nf = n as f64;
        let w_hat = DVector::from_iterator(j, scores.column_iter().map(|c| c.sum() / nf));
        let mut cov_hat = DMatrix::zeros(j, j);
        for a in 0..j {
            for b in a..j {
                let (ma, mb) = (w_hat[a], w_hat[b]);
                let s: f64 = scores
                    .column(a)
                    .iter()
                    .zip(scores.column(b).iter())
                    .map(|(x, y)| (x - ma) * (y - mb))
                    .sum();
                cov_hat[(a, b)] = s / nf;
                cov_hat[(b, a)] = s / nf;
            }
        }
        let sigma_hat = DVector::from_iterator(j, (0..j).map(|k| cov_hat[(k, k)].max(0.0).sqrt()));
        Ok(Self {
            scores,
            w_hat,
            sigma_hat,
            cov_hat,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    /// Number of policies `J`.
    pub fn len(&self) -> usize {
        self.scores.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn w_hat(&self) -> &DVector<f64> {
        &self.w_hat
    }

    pub fn sigma_hat(&self) -> &DVector<f64> {
        &self.sigma_hat
    }

    pub fn cov_hat(&self) -> &DMatrix<f64> {
        &self.cov_hat
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// `σ̂_j / √N`, the standard error of `Ŵ_j`.
    pub fn std_error(&self, j: usize) -> f64 {
        self.sigma_hat[j] / (self.n() as f64).sqrt()
    }

    /// Sub-panel restricted to the given columns, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        for &i in idx {
            if i >= self.len() {
                return Err(Error::PolicyIndex { index: i, len: self.len() });
            }
        }
        let scores = self.scores.select_columns(idx);
        let labels = idx.iter().map(|&i| self.labels[i].clone()).collect();
        Self::from_scores(scores, labels)
    }
}

/// Per-row treated and untreated branches of the score,
/// `m̂(1,X) + D/π̂ (Y − m̂(1,X))` and `m̂(0,X) + (1−D)/(1−π̂) (Y − m̂(0,X))`.
fn score_branches(sample: &Sample, fs: &FirstStage, rows: impl Iterator<Item = usize>) -> Result<Vec<(usize, f64, f64)>> {
    let x = sample.discrete_column(fs.col())?;
    let d = sample.treat();
    let y = sample.outcome();
    rows.map(|i| {
        let cell = x[i];
        let pi = fs.propensity(cell)?;
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::PropensityDegenerate { cell, value: pi });
        }
        let m1 = fs.mean(1, cell)?;
        let m0 = fs.mean(0, cell)?;
        let di = f64::from(d[i]);
        let a1 = m1 + di / pi * (y[i] - m1);
        let a0 = m0 + (1.0 - di) / (1.0 - pi) * (y[i] - m0);
        Ok((i, a1, a0))
    })
    .collect()
}

fn policy_labels(policies: &[Policy]) -> Vec<String> {
    policies.iter().map(|p| p.label.clone()).collect()
}

/// Efficient doubly-robust scores
/// `ψ_G(Z) = [m̂(1,X) + D/π̂(X)·(Y − m̂(1,X))]·1{X∈G} + [m̂(0,X) + (1−D)/(1−π̂(X))·(Y − m̂(0,X))]·1{X∉G}`
/// for every policy, using a first stage fitted on the same sample.
pub fn dr_scores(sample: &Sample, fs: &FirstStage, policies: &[Policy]) -> Result<ScorePanel> {
    if policies.is_empty() {
        return Err(Error::InvalidSample("empty policy class".into()));
    }
    let n = sample.n();
    let branches = score_branches(sample, fs, 0..n)?;
    let indicators = policies
        .iter()
        .map(|p| p.indicator(sample))
        .collect::<Result<Vec<_>>>()?;
    let scores = DMatrix::from_fn(n, policies.len(), |i, j| {
        let (_, a1, a0) = branches[i];
        if indicators[j][i] {
            a1
        } else {
            a0
        }
    });
    ScorePanel::from_scores(scores, policy_labels(policies))
}

/// How the first stage feeding the scores is fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstStageOptions {
    /// Discrete covariate column defining the cells.
    pub col: usize,
    /// Add one to the cell-mean denominators.
    pub smoothing: bool,
    /// Known propensity constant; cell-estimated when `None`.
    pub known_pi: Option<f64>,
    /// Number of cross-fitting folds; in-sample fit when `None`.
    pub cross_fit: Option<usize>,
}

impl FirstStageOptions {
    pub fn new(col: usize) -> Self {
        Self {
            col,
            smoothing: true,
            known_pi: None,
            cross_fit: None,
        }
    }
}

/// Fits the first stage per `opts` and returns the score panel. With
/// `cross_fit = Some(k)`, row `i` belongs to fold `i mod k` and is scored
/// with a first stage fitted on the other folds.
pub fn score_panel(sample: &Sample, opts: &FirstStageOptions, policies: &[Policy]) -> Result<ScorePanel> {
    match opts.cross_fit {
        None => {
            let fs = crate::first_stage::fit_first_stage(sample, opts.col, opts.smoothing, opts.known_pi)?;
            dr_scores(sample, &fs, policies)
        }
        Some(k) => cross_fit_scores(sample, opts, policies, k),
    }
}

fn cross_fit_scores(sample: &Sample, opts: &FirstStageOptions, policies: &[Policy], k: usize) -> Result<ScorePanel> {
    let n = sample.n();
    if k < 2 || k > n {
        return Err(crate::error::invalid("cross_fit", format!("need 2 <= folds <= N, got {k}")));
    }
    if policies.is_empty() {
        return Err(Error::InvalidSample("empty policy class".into()));
    }
    let all_cells = crate::first_stage::fit_first_stage(sample, opts.col, true, Some(0.5))?.cells();
    let indicators = policies
        .iter()
        .map(|p| p.indicator(sample))
        .collect::<Result<Vec<_>>>()?;
    let mut a1 = vec![0.0; n];
    let mut a0 = vec![0.0; n];
    for fold in 0..k {
        let train: Vec<usize> = (0..n).filter(|i| i % k != fold).collect();
        let fs = fit_over_cells(&sample.subset(&train)?, opts.col, &all_cells, opts.smoothing, opts.known_pi)?;
        for (i, b1, b0) in score_branches(sample, &fs, (fold..n).step_by(k))? {
            a1[i] = b1;
            a0[i] = b0;
        }
    }
    let scores = DMatrix::from_fn(n, policies.len(), |i, j| if indicators[j][i] { a1[i] } else { a0[i] });
    ScorePanel::from_scores(scores, policy_labels(policies))
}

/// Gain scores `ψ_G − ψ_baseline` for every column.
pub fn welfare_gain_scores(panel: &ScorePanel, baseline: usize) -> Result<ScorePanel> {
    if baseline >= panel.len() {
        return Err(Error::PolicyIndex {
            index: baseline,
            len: panel.len(),
        });
    }
    let base = panel.scores().column(baseline).clone_owned();
    let mut scores = panel.scores().clone();
    for mut col in scores.column_iter_mut() {
        col -= &base;
    }
    ScorePanel::from_scores(scores, panel.labels().to_vec())
}

/// Regression-adjusted plug-in `(1/N) Σ_i m̂(d_G(X_i), X_i)`, i.e. the sum
/// over cells of `m̂(d_G(x), x)` weighted by the empirical cell frequency.
pub fn estimate_welfare_cellwise(sample: &Sample, fs: &FirstStage, policy: &Policy) -> Result<f64> {
    let x = sample.discrete_column(fs.col())?;
    let ind = policy.indicator(sample)?;
    let mut total = 0.0;
    for (xi, treated) in x.iter().zip(ind) {
        total += fs.mean(u8::from(treated), *xi)?;
    }
    Ok(total / sample.n() as f64)
}
