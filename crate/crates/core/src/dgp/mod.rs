//! Synthetic designs with closed-form population moments, and seeded
//! Monte Carlo experiments over them.

mod diagnostics;
mod dominance;
mod experiments;
mod margin;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use diagnostics::{margin_diagnostics, CellTest, MarginDiagnostics};
pub use dominance::{closed_form_moments, sample_dominance, DgpVariant, DominanceDgp};
pub use experiments::{coverage_experiment, mse_experiment, Design, McReport};
pub use margin::{margin_moments, sample_margin, MarginDgp};

/// Conditional outcome law with given mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeFamily {
    /// `μ ± σ` with probability one half each.
    #[default]
    TwoPoint,
    Gaussian,
}

pub(crate) fn draw_outcome(rng: &mut impl Rng, family: OutcomeFamily, mean: f64, variance: f64) -> f64 {
    let sd = variance.sqrt();
    match family {
        OutcomeFamily::TwoPoint => {
            if rng.random_bool(0.5) {
                mean + sd
            } else {
                mean - sd
            }
        }
        OutcomeFamily::Gaussian => mean + sd * rng.sample::<f64, _>(StandardNormal),
    }
}

/// Population welfare and efficiency-bound variance of an optimal rule
/// `G*` and a competitor `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMoments {
    pub w_gstar: f64,
    pub w_g: f64,
    pub var_gstar: f64,
    pub var_g: f64,
    /// `z_{1−α}/√N·(σ_{G*} − σ_G) − (W_{G*} − W_G)`: how much lower the
    /// oracle bound sits than the competitor's.
    pub delta_gap: f64,
}

impl PopulationMoments {
    pub(crate) fn new(w_gstar: f64, w_g: f64, var_gstar: f64, var_g: f64, n: usize, alpha: f64) -> Self {
        let delta_gap = dominance::z_over_root_n(n, alpha) * (var_gstar.sqrt() - var_g.sqrt()) - (w_gstar - w_g);
        Self {
            w_gstar,
            w_g,
            var_gstar,
            var_g,
            delta_gap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_support_and_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| draw_outcome(&mut rng, OutcomeFamily::TwoPoint, 0.5, 1.0)).collect();
        assert!(draws.iter().all(|&y| y == -0.5 || y == 1.5));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        // s.e. of the mean is 1e-3; of the variance (fourth moment 1) ~1e-6
        assert!((mean - 0.5).abs() < 4e-3);
        assert!((var - 1.0).abs() < 4e-3);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| draw_outcome(&mut rng, OutcomeFamily::Gaussian, -1.0, 4.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean + 1.0).abs() < 4.0 * 2e-3);
        assert!((var - 4.0).abs() < 4.0 * (32.0f64 / n as f64).sqrt());
    }
}
