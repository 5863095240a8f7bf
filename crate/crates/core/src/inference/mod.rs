//! Critical values and lower confidence bands for the best welfare in a
//! finite policy class.

mod draws;
mod max_stat;
mod qlr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

pub use draws::{order_statistic_quantile, StandardizedDraws};
pub use max_stat::{gms_crit, lf_crit_max, max_gms_lcb, max_lf_lcb, naive_best_lcb, naive_lcb};
pub use qlr::{qlr_lcb, qlr_lf_crit, qlr_stat, qlr_stat_ridged, ridged_covariance};

/// Standard normal quantile `z_p`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// GMS tuning sequence `κ_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kappa {
    /// `√(log N)`.
    SqrtLogN,
    Fixed(f64),
}

impl Kappa {
    pub fn value(&self, n: usize) -> f64 {
        match *self {
            Kappa::SqrtLogN => (n as f64).ln().max(0.0).sqrt(),
            Kappa::Fixed(k) => k,
        }
    }
}

/// How draws for simulated critical values are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CritMethod {
    /// `ξ ~ N(0, Σ̂)`.
    Gaussian,
    /// Gaussian multipliers on centered score rows.
    Multiplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcbConfig {
    pub alpha: f64,
    pub n_sim: usize,
    pub kappa: Kappa,
    pub seed: u64,
    /// QLR regularization: `ridge · trace(Σ̂)/J` is added to the diagonal.
    pub ridge: f64,
    pub crit_method: CritMethod,
}

impl Default for LcbConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_sim: 100_000,
            kappa: Kappa::SqrtLogN,
            seed: 0,
            ridge: 1e-8,
            crit_method: CritMethod::Gaussian,
        }
    }
}

impl LcbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("{} is outside (0, 1)", self.alpha)));
        }
        if self.n_sim < 1000 {
            return Err(invalid("n_sim", format!("{} draws; at least 1000 required", self.n_sim)));
        }
        if !(self.ridge >= 0.0) {
            return Err(invalid("ridge", "must be nonnegative"));
        }
        if let Kappa::Fixed(k) = self.kappa {
            if !(k >= 0.0) {
                return Err(invalid("kappa", "must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LcbMethod {
    Naive,
    MaxLF,
    MaxGMS,
    QlrMix,
}

impl LcbMethod {
    pub const ALL: [LcbMethod; 4] = [LcbMethod::Naive, LcbMethod::MaxLF, LcbMethod::MaxGMS, LcbMethod::QlrMix];

    pub fn name(&self) -> &'static str {
        match self {
            LcbMethod::Naive => "Naive",
            LcbMethod::MaxLF => "MaxLF",
            LcbMethod::MaxGMS => "MaxGMS",
            LcbMethod::QlrMix => "QlrMix",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LcbDiagnostics {
    /// Moments kept by GMS at the reported step.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selected: Option<Vec<usize>>,
    /// GMS inversion found no qualifying step and reported the LF bound.
    #[serde(default)]
    pub gms_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bisection_iterations: Option<usize>,
    /// QLR dual multipliers vanished; `lambda` is a placeholder.
    #[serde(default)]
    pub lambda_degenerate: bool,
}

/// A lower confidence band with the quantities that produced it.
///
/// `crit` is on the scale of the method's statistic: a standard-normal-like
/// multiplier for the max methods, and the squared QLR scale for `QlrMix`
/// (whose band uses `√crit`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcbResult {
    pub value: f64,
    pub method: LcbMethod,
    pub crit: f64,
    pub argmax_policy: Option<usize>,
    pub lambda: Option<Vec<f64>>,
    pub diagnostics: LcbDiagnostics,
}

/// Runs one method on a panel.
pub fn compute_lcb(method: LcbMethod, panel: &crate::scores::ScorePanel, cfg: &LcbConfig) -> Result<LcbResult> {
    match method {
        LcbMethod::Naive => naive_best_lcb(panel, cfg.alpha),
        LcbMethod::MaxLF => max_lf_lcb(panel, cfg),
        LcbMethod::MaxGMS => max_gms_lcb(panel, cfg),
        LcbMethod::QlrMix => qlr_lcb(panel, cfg),
    }
}

/// Bound for a panel whose scores have no variance at all: every method
/// reports the best estimate exactly.
pub(crate) fn zero_variance_lcb(panel: &crate::scores::ScorePanel, method: LcbMethod) -> Option<LcbResult> {
    if panel.is_empty() || panel.sigma_hat().iter().any(|&s| s != 0.0) {
        return None;
    }
    let (j, value) = argmax_lowest(panel.w_hat().iter().copied());
    let lambda = (method == LcbMethod::QlrMix).then(|| {
        let mut e = vec![0.0; panel.len()];
        e[j] = 1.0;
        e
    });
    Some(LcbResult {
        value,
        method,
        crit: 0.0,
        argmax_policy: Some(j),
        lambda,
        diagnostics: LcbDiagnostics::default(),
    })
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_lowest(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
