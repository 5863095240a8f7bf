use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qp::{project_nonpositive, QpProblem, QpSolution};
use crate::scores::ScorePanel;

use super::draws::{order_statistic_quantile, StandardizedDraws};
use super::{LcbConfig, LcbDiagnostics, LcbMethod, LcbResult};

const MAX_DOUBLINGS: usize = 60;

/// `Σ̂ + ridge · trace(Σ̂)/J · I`.
pub fn ridged_covariance(cov: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let j = cov.nrows();
    let trace = cov.trace();
    if !(trace > 0.0) {
        return Err(Error::DegenerateMoment(0));
    }
    let mut out = cov.clone();
    for k in 0..j {
        out[(k, k)] += ridge * trace / j as f64;
        if !(out[(k, k)] > 0.0) {
            return Err(Error::DegenerateMoment(k));
        }
    }
    Ok(out)
}

fn solve_at(panel: &ScorePanel, sigma: &DMatrix<f64>, theta: f64) -> Result<QpSolution> {
    let root_n = (panel.n() as f64).sqrt();
    let x = panel.w_hat().map(|w| root_n * (w - theta));
    project_nonpositive(&QpProblem::new(x, sigma.clone()))
}

/// `min_{t ≤ 0} (x − t)'Σ⁻¹(x − t)` at `x = √N(Ŵ − θ1)` with the default ridge.
pub fn qlr_stat(panel: &ScorePanel, theta: f64) -> Result<f64> {
    qlr_stat_ridged(panel, theta, LcbConfig::default().ridge)
}

pub fn qlr_stat_ridged(panel: &ScorePanel, theta: f64, ridge: f64) -> Result<f64> {
    let sigma = ridged_covariance(panel.cov_hat(), ridge)?;
    Ok(solve_at(panel, &sigma, theta)?.objective)
}

/// Least-favorable QLR critical value: quantile of the projection
/// statistic at `ξ = σ̂ ∘ Z` over the shared draws.
pub fn qlr_lf_crit(panel: &ScorePanel, cfg: &LcbConfig) -> Result<f64> {
    cfg.validate()?;
    let sigma = ridged_covariance(panel.cov_hat(), cfg.ridge)?;
    let draws = StandardizedDraws::for_panel(panel, cfg)?;
    crit_from_draws(panel, &sigma, &draws, cfg.alpha)
}

fn crit_from_draws(panel: &ScorePanel, sigma: &DMatrix<f64>, draws: &StandardizedDraws, alpha: f64) -> Result<f64> {
    let sd = panel.sigma_hat();
    let mut stats = (0..draws.n_sim())
        .into_par_iter()
        .map(|i| {
            let z = draws.draw(i);
            if z.iter().all(|&v| v <= 0.0) {
                return Ok(0.0);
            }
            let xi = DVector::from_fn(z.len(), |k, _| z[k] * sd[k]);
            Ok(project_nonpositive(&QpProblem::new(xi, sigma.clone()))?.objective)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(order_statistic_quantile(&mut stats, alpha))
}

/// Smallest `θ` whose QLR statistic is within the critical value, found by
/// bisection; `lambda` holds the normalized duals at the crossing.
pub fn qlr_lcb(panel: &ScorePanel, cfg: &LcbConfig) -> Result<LcbResult> {
    cfg.validate()?;
    if let Some(r) = super::zero_variance_lcb(panel, LcbMethod::QlrMix) {
        return Ok(r);
    }
    let sigma = ridged_covariance(panel.cov_hat(), cfg.ridge)?;
    let draws = StandardizedDraws::for_panel(panel, cfg)?;
    let crit = crit_from_draws(panel, &sigma, &draws, cfg.alpha)?;

    let w = panel.w_hat();
    let w_max = w.max();
    let root_n = (panel.n() as f64).sqrt();
    let spread = 10.0 * panel.sigma_hat().max() / root_n;
    let tol = 1e-9 * (1.0 + w_max.abs());

    let stat = |theta: f64| -> Result<f64> { Ok(solve_at(panel, &sigma, theta)?.objective) };

    let mut hi = w_max;
    let mut lo = w.min() - spread;
    let mut doublings = 0;
    while stat(lo)? <= crit {
        if doublings == MAX_DOUBLINGS || lo == hi {
            return Err(Error::NoCrossing { doublings });
        }
        lo = hi - 2.0 * (hi - lo).max(tol);
        doublings += 1;
    }

    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stat(mid)? <= crit {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }

    let sol = solve_at(panel, &sigma, hi)?;
    let total = sol.dual_u.sum();
    let (lambda, degenerate) = if total > 0.0 {
        ((&sol.dual_u / total).iter().copied().collect(), false)
    } else {
        let mut e = vec![0.0; panel.len()];
        e[0] = 1.0;
        (e, true)
    };
    let argmax = lambda
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (k, &l)| if l > b.1 { (k, l) } else { b })
        .0;

    Ok(LcbResult {
        value: hi,
        method: LcbMethod::QlrMix,
        crit,
        argmax_policy: Some(argmax),
        lambda: Some(lambda),
        diagnostics: LcbDiagnostics {
            bisection_iterations: Some(iterations),
            lambda_degenerate: degenerate,
            ..LcbDiagnostics::default()
        },
    })
}
