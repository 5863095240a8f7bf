//! Lower confidence bands for the optimal welfare of a treatment policy.
//!
//! The crate estimates welfare for a finite class of test policies with
//! doubly-robust scores, then reports a one-sided lower bound on the best
//! welfare in the class. Four constructions are available: the one-sided
//! t-bound for a single policy, the max statistic with least-favorable or
//! moment-selection critical values, and the QLR mixture bound, which is
//! computed through a projection onto the nonpositive orthant.
//!
//! The [`dgp`] module holds the synthetic designs and Monte Carlo
//! experiments used to study these bounds.

pub mod dgp;
pub mod error;
pub mod first_stage;
pub mod inference;
pub mod policy;
pub mod qp;
pub mod sample;
pub mod scores;

pub use error::{Error, Result};
pub use first_stage::{fit_first_stage, FirstStage, Propensity};
pub use inference::{
    compute_lcb, gms_crit, lf_crit_max, max_gms_lcb, max_lf_lcb, naive_best_lcb, naive_lcb, normal_quantile, qlr_lcb,
    qlr_lf_crit, qlr_stat, CritMethod, Kappa, LcbConfig, LcbDiagnostics, LcbMethod, LcbResult,
};
pub use policy::{Policy, PolicyKind};
pub use qp::{dual_ratio_max, project_nonpositive, DualRatio, QpProblem, QpSolution};
pub use sample::{bin_covariate, cell_counts, Covariate, CovariateKind, Sample};
pub use scores::{
    dr_scores, estimate_welfare_cellwise, score_panel, welfare_gain_scores, FirstStageOptions, ScorePanel,
};
