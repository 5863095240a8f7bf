use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::first_stage::fit_first_stage;
use crate::inference::{compute_lcb, LcbConfig, LcbMethod};
use crate::policy::Policy;
use crate::sample::{bin_covariate, Covariate, Sample};
use crate::scores::{estimate_welfare_cellwise, score_panel, FirstStageOptions};

use super::{sample_dominance, sample_margin, DgpVariant, DominanceDgp, MarginDgp};

/// A design to replicate, with how its first stage is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "lowercase")]
pub enum Design {
    /// Cells are the values of the binary covariate; propensities are
    /// estimated per cell.
    Dominance(DominanceDgp),
    /// Cell means are fitted on `bins` quantile bins of `x`; the propensity
    /// is the known `1/2`.
    Margin { dgp: MarginDgp, bins: usize },
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        match self {
            Design::Dominance(d) => d.validate(),
            Design::Margin { dgp, bins } => {
                if *bins < 2 {
                    return Err(invalid("bins", "at least 2 bins required"));
                }
                dgp.validate()
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        match self {
            Design::Dominance(d) => sample_dominance(d, n, seed),
            Design::Margin { dgp, .. } => sample_margin(dgp, n, seed),
        }
    }

    /// Population welfare of the optimal rule.
    pub fn optimal_welfare(&self) -> f64 {
        match self {
            Design::Dominance(d) => d.policy_moments(false, true).0,
            Design::Margin { dgp, .. } => dgp.optimal_welfare(),
        }
    }

    /// The sample to score and the first-stage options. For the margin
    /// design a discrete bin column is appended after `x`.
    pub fn scoring(&self, sample: &Sample) -> Result<(Sample, FirstStageOptions)> {
        match self {
            Design::Dominance(_) => Ok((sample.clone(), FirstStageOptions::new(0))),
            Design::Margin { bins, .. } => {
                let binned = bin_covariate(sample, 0, *bins)?;
                let ids = binned.covariate(0)?.values.clone();
                let mut covariates = sample.covariates().to_vec();
                covariates.push(Covariate::discrete("xbin", ids));
                let s = Sample::new(sample.treat().to_vec(), sample.outcome().to_vec(), covariates)?;
                let opts = FirstStageOptions {
                    known_pi: Some(0.5),
                    ..FirstStageOptions::new(1)
                };
                Ok((s, opts))
            }
        }
    }

    /// A small class containing the optimal rule: the four rules on the
    /// binary covariate, or upper-tail rules `{x ≥ c}` for `c` in steps of
    /// 0.1 plus `c = ε`.
    pub fn default_policies(&self) -> Vec<Policy> {
        match self {
            Design::Dominance(_) => vec![
                Policy::treat_none(),
                Policy::cell_set(0, vec![0.0]),
                Policy::cell_set(0, vec![1.0]),
                Policy::treat_all(),
            ],
            Design::Margin { dgp, .. } => {
                let mut cuts: Vec<f64> = (0..=5).map(|k| k as f64 / 10.0).collect();
                if !cuts.contains(&dgp.eps) {
                    cuts.push(dgp.eps);
                }
                cuts.into_iter()
                    .map(|c| Policy::predicate(format!("x>={c}"), move |r| r[0] >= c))
                    .collect()
            }
        }
    }
}

/// Aggregated Monte Carlo results. Standard errors in `mc_se` are the
/// replication-level standard deviation over `√n_reps`, keyed by field
/// (`coverage.<method>`, `mean_lcb.<method>`, `mse_*`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_reps: usize,
    pub n: usize,
    /// Population optimal welfare the estimates are judged against.
    pub target: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse_suboptimal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse_oracle: Option<f64>,
    pub coverage: BTreeMap<String, f64>,
    pub mean_lcb: BTreeMap<String, f64>,
    pub mc_se: BTreeMap<String, f64>,
    /// Replications where the GMS bound fell below the LF bound.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gms_below_lf: Option<usize>,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seeds for the sample and the critical-value draws of replication `rep`.
fn rep_seeds(seed: u64, rep: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    (rng.next_u64(), rng.next_u64())
}

fn check_reps(n: usize, n_reps: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid("n", "at least 2 observations required"));
    }
    if n_reps == 0 {
        return Err(invalid("n_reps", "at least one replication required"));
    }
    Ok(())
}

/// MSE of the cellwise estimators (smoothed cell means) of treat-all and
/// of the optimal rule `{X = 0}`, both against the optimal welfare.
pub fn mse_experiment(dgp: &DominanceDgp, n: usize, n_reps: usize, seed: u64) -> Result<McReport> {
    dgp.validate()?;
    check_reps(n, n_reps)?;
    if dgp.variant != DgpVariant::Welfare {
        return Err(invalid("variant", "the MSE experiment uses the welfare variant"));
    }
    let target = dgp.policy_moments(false, true).0;
    let optimal = Policy::cell_set(0, vec![0.0]);
    let all = Policy::treat_all();
    let errors = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let s = sample_dominance(dgp, n, rep_seeds(seed, rep).0)?;
            let fs = fit_first_stage(&s, 0, true, None)?;
            let ex = estimate_welfare_cellwise(&s, &fs, &all)? - target;
            let es = estimate_welfare_cellwise(&s, &fs, &optimal)? - target;
            Ok((ex * ex, es * es))
        })
        .collect::<Result<Vec<_>>>()?;
    let sub: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let ora: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let diff: Vec<f64> = errors.iter().map(|e| e.1 - e.0).collect();
    let (ms, ss) = mean_and_se(&sub);
    let (mo, so) = mean_and_se(&ora);
    let (_, sd) = mean_and_se(&diff);
    Ok(McReport {
        n_reps,
        n,
        target,
        mse_suboptimal: Some(ms),
        mse_oracle: Some(mo),
        coverage: BTreeMap::new(),
        mean_lcb: BTreeMap::new(),
        mc_se: BTreeMap::from([
            ("mse_suboptimal".to_string(), ss),
            ("mse_oracle".to_string(), so),
            ("mse_oracle_minus_suboptimal".to_string(), sd),
        ]),
        gms_below_lf: None,
    })
}

/// Frequency with which each method's bound lies at or below the optimal
/// welfare, and the mean bound. Replication `rep` uses substream `rep` of
/// `seed` for both the sample and the critical-value draws.
pub fn coverage_experiment(
    design: &Design,
    n: usize,
    policies: &[Policy],
    methods: &[LcbMethod],
    cfg: &LcbConfig,
    n_reps: usize,
    seed: u64,
) -> Result<McReport> {
    design.validate()?;
    cfg.validate()?;
    check_reps(n, n_reps)?;
    if methods.is_empty() {
        return Err(invalid("methods", "at least one method required"));
    }
    let target = design.optimal_welfare();
    let values = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let (sample_seed, crit_seed) = rep_seeds(seed, rep);
            let raw = design.sample(n, sample_seed)?;
            let (s, opts) = design.scoring(&raw)?;
            let panel = score_panel(&s, &opts, policies)?;
            let rep_cfg = LcbConfig { seed: crit_seed, ..*cfg };
            methods
                .iter()
                .map(|&m| Ok(compute_lcb(m, &panel, &rep_cfg)?.value))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut coverage = BTreeMap::new();
    let mut mean_lcb = BTreeMap::new();
    let mut mc_se = BTreeMap::new();
    for (k, m) in methods.iter().enumerate() {
        let lcbs: Vec<f64> = values.iter().map(|v| v[k]).collect();
        let hits: Vec<f64> = lcbs.iter().map(|&v| f64::from(u8::from(v <= target))).collect();
        let (c, cs) = mean_and_se(&hits);
        let (l, ls) = mean_and_se(&lcbs);
        coverage.insert(m.name().to_string(), c);
        mean_lcb.insert(m.name().to_string(), l);
        mc_se.insert(format!("coverage.{}", m.name()), cs);
        mc_se.insert(format!("mean_lcb.{}", m.name()), ls);
    }
    let lf = methods.iter().position(|&m| m == LcbMethod::MaxLF);
    let gms = methods.iter().position(|&m| m == LcbMethod::MaxGMS);
    let gms_below_lf = lf
        .zip(gms)
        .map(|(a, b)| values.iter().filter(|v| v[b] < v[a]).count());
    Ok(McReport {
        n_reps,
        n,
        target,
        mse_suboptimal: None,
        mse_oracle: None,
        coverage,
        mean_lcb,
        mc_se,
        gms_below_lf,
    })
}
