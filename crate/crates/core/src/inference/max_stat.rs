use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::scores::ScorePanel;

use super::draws::StandardizedDraws;
use super::{argmax_lowest, zero_variance_lcb, normal_quantile, LcbConfig, LcbDiagnostics, LcbMethod, LcbResult};

/// One-sided t-bound `Ŵ − z_{1−α} σ̂ / √n` for a single policy.
pub fn naive_lcb(w_hat: f64, sigma_hat: f64, n: usize, alpha: f64) -> LcbResult {
    let z = normal_quantile(1.0 - alpha);
    LcbResult {
        value: w_hat - z * sigma_hat / (n as f64).sqrt(),
        method: LcbMethod::Naive,
        crit: z,
        argmax_policy: None,
        lambda: None,
        diagnostics: LcbDiagnostics::default(),
    }
}

/// Naive bound for the policy with the largest `Ŵ`, ignoring selection.
pub fn naive_best_lcb(panel: &ScorePanel, alpha: f64) -> Result<LcbResult> {
    if panel.is_empty() {
        return Err(invalid("panel", "no policies"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("{alpha} is outside (0, 1)")));
    }
    let (j, w) = argmax_lowest(panel.w_hat().iter().copied());
    let mut r = naive_lcb(w, panel.sigma_hat()[j], panel.n(), alpha);
    r.argmax_policy = Some(j);
    Ok(r)
}

/// Least-favorable critical value: quantile of `max_j ξ_j/σ_j`, `ξ ~ N(0, Σ)`.
pub fn lf_crit_max(cov_hat: &DMatrix<f64>, alpha: f64, n_sim: usize, seed: u64) -> Result<f64> {
    let draws = StandardizedDraws::gaussian(cov_hat, n_sim, seed)?;
    let all: Vec<usize> = (0..draws.dim()).collect();
    Ok(draws.max_quantile(&all, alpha))
}

/// Critical value over the moments in `selected`; `0` when it is empty.
pub fn gms_crit(panel: &ScorePanel, selected: &[usize], cfg: &LcbConfig) -> Result<f64> {
    cfg.validate()?;
    if selected.is_empty() {
        return Ok(0.0);
    }
    if let Some(&bad) = selected.iter().find(|&&k| k >= panel.len()) {
        return Err(crate::error::Error::PolicyIndex { index: bad, len: panel.len() });
    }
    let draws = StandardizedDraws::for_panel(panel, cfg)?;
    Ok(draws.max_quantile(selected, cfg.alpha))
}

/// `max_j (Ŵ_j − c σ̂_j / √N)` and its lowest attaining index.
fn shifted_max(panel: &ScorePanel, c: f64) -> (usize, f64) {
    argmax_lowest((0..panel.len()).map(|j| panel.w_hat()[j] - c * panel.std_error(j)))
}

pub fn max_lf_lcb(panel: &ScorePanel, cfg: &LcbConfig) -> Result<LcbResult> {
    cfg.validate()?;
    if let Some(r) = zero_variance_lcb(panel, LcbMethod::MaxLF) {
        return Ok(r);
    }
    let draws = StandardizedDraws::for_panel(panel, cfg)?;
    Ok(lf_from_draws(panel, &draws, cfg.alpha))
}

fn lf_from_draws(panel: &ScorePanel, draws: &StandardizedDraws, alpha: f64) -> LcbResult {
    let all: Vec<usize> = (0..panel.len()).collect();
    let c = draws.max_quantile(&all, alpha);
    let (j, value) = shifted_max(panel, c);
    LcbResult {
        value,
        method: LcbMethod::MaxLF,
        crit: c,
        argmax_policy: Some(j),
        lambda: None,
        diagnostics: LcbDiagnostics::default(),
    }
}

/// Moment-selection bound by the closed-form inversion over nested top sets.
pub fn max_gms_lcb(panel: &ScorePanel, cfg: &LcbConfig) -> Result<LcbResult> {
    cfg.validate()?;
    if let Some(r) = zero_variance_lcb(panel, LcbMethod::MaxGMS) {
        return Ok(r);
    }
    let draws = StandardizedDraws::for_panel(panel, cfg)?;
    let kappa = cfg.kappa.value(panel.n());
    let t: Vec<f64> = (0..panel.len())
        .map(|j| panel.w_hat()[j] + kappa * panel.std_error(j))
        .collect();
    let mut order: Vec<usize> = (0..panel.len()).collect();
    order.sort_by(|&a, &b| t[b].total_cmp(&t[a]));
    let crits = draws.nested_max_quantiles(&order, cfg.alpha);

    let mut best: Option<(usize, usize, f64)> = None;
    for (step, &c) in crits.iter().enumerate() {
        let (j, theta) = shifted_max(panel, c);
        let upper = t[order[step]];
        let lower = order.get(step + 1).map_or(f64::NEG_INFINITY, |&k| t[k]);
        if upper >= theta && theta > lower && best.map_or(true, |(_, _, v)| theta < v) {
            best = Some((step, j, theta));
        }
    }

    Ok(match best {
        Some((step, j, value)) => LcbResult {
            value,
            method: LcbMethod::MaxGMS,
            crit: crits[step],
            argmax_policy: Some(j),
            lambda: None,
            diagnostics: LcbDiagnostics {
                selected: Some(order[..=step].to_vec()),
                ..LcbDiagnostics::default()
            },
        },
        None => {
            let lf = lf_from_draws(panel, &draws, cfg.alpha);
            LcbResult {
                method: LcbMethod::MaxGMS,
                diagnostics: LcbDiagnostics {
                    selected: Some(order.clone()),
                    gms_fallback: true,
                    ..LcbDiagnostics::default()
                },
                ..lf
            }
        }
    })
}
