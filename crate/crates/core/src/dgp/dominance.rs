use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::normal_quantile;
use crate::sample::{Covariate, Sample};

use super::{draw_outcome, OutcomeFamily, PopulationMoments};

/// Which quantity the design separates: welfare against treat-all, or
/// welfare gain of `{0}` against `{1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpVariant {
    Welfare,
    Gain,
}

/// Binary covariate design where the optimal rule `{X = 0}` is estimated
/// less precisely than treating everyone.
///
/// Cell means are `m(1,1) = m(0,0) = 1/2 − ε` and `m(1,0) = m(0,1) = 1/2`.
/// `variances` lists `σ²(d,x)` for cells `(1,1), (1,0), (0,1), (0,0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceDgp {
    pub p: f64,
    pub pi1: f64,
    pub pi0: f64,
    pub eps: f64,
    pub variances: [f64; 4],
    pub family: OutcomeFamily,
    pub variant: DgpVariant,
}

impl Default for DominanceDgp {
    fn default() -> Self {
        Self::welfare(0.5, 0.5, 0.5, 0.1)
    }
}

impl DominanceDgp {
    pub const WELFARE_VARIANCES: [f64; 4] = [1.0, 1.0, 10.0, 10.0];
    pub const GAIN_VARIANCES: [f64; 4] = [1.0, 10.0, 1.0, 10.0];

    pub fn welfare(p: f64, pi1: f64, pi0: f64, eps: f64) -> Self {
        Self {
            p,
            pi1,
            pi0,
            eps,
            variances: Self::WELFARE_VARIANCES,
            family: OutcomeFamily::TwoPoint,
            variant: DgpVariant::Welfare,
        }
    }

    pub fn gain(p: f64, pi1: f64, pi0: f64, eps: f64) -> Self {
        Self {
            variances: Self::GAIN_VARIANCES,
            variant: DgpVariant::Gain,
            ..Self::welfare(p, pi1, pi0, eps)
        }
    }

    /// `p`, `π(1)`, `π(0)` in `(1/4, 3/4)`; `ε` in `[0, 1/2)`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("pi1", self.pi1), ("pi0", self.pi0)] {
            if !(v > 0.25 && v < 0.75) {
                return Err(invalid(name, format!("{v} is outside (1/4, 3/4)")));
            }
        }
        if !(self.eps >= 0.0 && self.eps < 0.5) {
            return Err(invalid("eps", format!("{} is outside [0, 1/2)", self.eps)));
        }
        if self.variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("variances", "must be positive and finite"));
        }
        Ok(())
    }

    pub fn mean(&self, d: u8, x: u8) -> f64 {
        if d == x {
            0.5 - self.eps
        } else {
            0.5
        }
    }

    pub fn variance(&self, d: u8, x: u8) -> f64 {
        self.variances[usize::from(1 - d) * 2 + usize::from(1 - x)]
    }

    pub fn propensity(&self, x: u8) -> f64 {
        if x == 1 {
            self.pi1
        } else {
            self.pi0
        }
    }

    /// Population welfare and efficiency bound of the rule treating
    /// `X = 1` when `t1` and `X = 0` when `t0`.
    pub fn policy_moments(&self, t1: bool, t0: bool) -> (f64, f64) {
        let (m1, m0) = (self.mean(u8::from(t1), 1), self.mean(u8::from(t0), 0));
        let w = self.p * m1 + (1.0 - self.p) * m0;
        let noise = |t: bool, x: u8| {
            let pi = self.propensity(x);
            if t {
                self.variance(1, x) / pi
            } else {
                self.variance(0, x) / (1.0 - pi)
            }
        };
        let var = self.p * noise(t1, 1) + (1.0 - self.p) * noise(t0, 0) + self.p * (1.0 - self.p) * (m1 - m0).powi(2);
        (w, var)
    }

    /// Welfare gain over treating nobody and its efficiency bound.
    pub fn gain_moments(&self, t1: bool, t0: bool) -> (f64, f64) {
        let tau = |x: u8| self.mean(1, x) - self.mean(0, x);
        let g1 = if t1 { tau(1) } else { 0.0 };
        let g0 = if t0 { tau(0) } else { 0.0 };
        let w = self.p * g1 + (1.0 - self.p) * g0;
        let both = |x: u8| {
            let pi = self.propensity(x);
            self.variance(1, x) / pi + self.variance(0, x) / (1.0 - pi)
        };
        let mut var = self.p * (1.0 - self.p) * (g1 - g0).powi(2);
        if t1 {
            var += self.p * both(1);
        }
        if t0 {
            var += (1.0 - self.p) * both(0);
        }
        (w, var)
    }
}

/// Draws `X ~ Bern(p)`, `D | X ~ Bern(π(X))` and `Y` from the cell's law.
/// The covariate column is discrete and named `x`.
pub fn sample_dominance(dgp: &DominanceDgp, n: usize, seed: u64) -> Result<Sample> {
    dgp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = u8::from(rng.random_bool(dgp.p));
        let di = u8::from(rng.random_bool(dgp.propensity(xi)));
        y.push(draw_outcome(&mut rng, dgp.family, dgp.mean(di, xi), dgp.variance(di, xi)));
        x.push(f64::from(xi));
        d.push(di);
    }
    Sample::new(d, y, vec![Covariate::discrete("x", x)])
}

/// Population moments of the optimal rule `{X = 0}` and its competitor:
/// treat-all for the welfare variant, `{X = 1}` in gain terms for the gain
/// variant. `delta_gap = z_{1−α}/√n·(σ_{G*} − σ_G) − (W_{G*} − W_G)`.
pub fn closed_form_moments(dgp: &DominanceDgp, n: usize, alpha: f64) -> Result<PopulationMoments> {
    dgp.validate()?;
    let ((w_gstar, var_gstar), (w_g, var_g)) = match dgp.variant {
        DgpVariant::Welfare => (dgp.policy_moments(false, true), dgp.policy_moments(true, true)),
        DgpVariant::Gain => (dgp.gain_moments(false, true), dgp.gain_moments(true, false)),
    };
    Ok(PopulationMoments::new(w_gstar, w_g, var_gstar, var_g, n, alpha))
}

/// `z_{1−α}/√n`.
pub(crate) fn z_over_root_n(n: usize, alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha) / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::first_stage::fit_first_stage;
    use crate::policy::Policy;
    use crate::scores::dr_scores;
    use proptest::prelude::*;

    #[test]
    fn symmetric_design_values() {
        let m = closed_form_moments(&DominanceDgp::default(), 100, 0.05).unwrap();
        assert_eq!(m.w_gstar, 0.5);
        assert!((m.w_g - 0.45).abs() < 1e-15);
        assert!((m.var_g - 2.0025).abs() < 1e-12);
        assert!((m.var_gstar - 11.0).abs() < 1e-12);
    }

    /// The printed closed forms `σ²_X = p/π1 + (1−p)/π0 + ε²p(1−p)` and
    /// `σ²_{G*} = 10p/(1−π1) + (1−p)/π0`.
    fn printed(p: f64, pi1: f64, pi0: f64, eps: f64) -> (f64, f64) {
        (
            10.0 * p / (1.0 - pi1) + (1.0 - p) / pi0,
            p / pi1 + (1.0 - p) / pi0 + eps * eps * p * (1.0 - p),
        )
    }

    proptest! {
        #[test]
        fn welfare_moments_match_printed_forms(
            p in 0.2501f64..0.7499, pi1 in 0.2501f64..0.7499, pi0 in 0.2501f64..0.7499, eps in 0.0f64..0.4999,
        ) {
            let dgp = DominanceDgp::welfare(p, pi1, pi0, eps);
            let m = closed_form_moments(&dgp, 1000, 0.05).unwrap();
            let (vs, vx) = printed(p, pi1, pi0, eps);
            prop_assert!((m.var_gstar - vs).abs() < 1e-12 * vs);
            prop_assert!((m.var_g - vx).abs() < 1e-12 * vx);
            prop_assert!((m.w_g - (0.5 - eps * p)).abs() < 1e-15);
            prop_assert!(m.var_gstar - m.var_g > 8.0 * p);
            prop_assert!(m.var_gstar.sqrt() - m.var_g.sqrt() > p);
        }

        #[test]
        fn lcb_gap_positive_at_local_rate(
            p in 0.2501f64..0.7499, pi1 in 0.2501f64..0.7499, pi0 in 0.2501f64..0.7499, n in 100usize..1_000_000,
        ) {
            let z = normal_quantile(0.95);
            let eps = z / (n as f64).sqrt();
            prop_assume!(eps < 0.5);
            let m = closed_form_moments(&DominanceDgp::welfare(p, pi1, pi0, eps), n, 0.05).unwrap();
            prop_assert!(m.delta_gap > 0.0);
        }

        #[test]
        fn gain_gap_bounded_by_eps(
            p in 0.2501f64..0.7499, pi1 in 0.2501f64..0.7499, pi0 in 0.2501f64..0.7499, eps in 0.0f64..0.4999,
        ) {
            let m = closed_form_moments(&DominanceDgp::gain(p, pi1, pi0, eps), 1000, 0.05).unwrap();
            prop_assert!(m.w_gstar - m.w_g <= eps + 1e-15);
            prop_assert!(m.var_gstar - m.var_g > 6.0);
        }
    }

    #[test]
    fn gain_variance_gap_at_symmetric_design() {
        let m = closed_form_moments(&DominanceDgp::gain(0.5, 0.5, 0.5, 0.1), 1000, 0.05).unwrap();
        assert!(m.var_gstar - m.var_g > 7.0);
        assert!((m.var_gstar - m.var_g - 18.0).abs() < 1e-12);
        assert!((m.w_gstar - m.w_g - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cell_frequencies_and_effects() {
        let n = 1_000_000;
        let s = sample_dominance(&DominanceDgp::default(), n, 17).unwrap();
        let x = s.discrete_column(0).unwrap();
        let mut count = [[0usize; 2]; 2];
        let mut sum = [[0.0; 2]; 2];
        for ((&d, &xi), &y) in s.treat().iter().zip(x).zip(s.outcome()) {
            let (d, xi) = (d as usize, xi as usize);
            count[d][xi] += 1;
            sum[d][xi] += y;
        }
        let se = (0.25 * 0.75 / n as f64).sqrt();
        for row in count {
            for c in row {
                assert!((c as f64 / n as f64 - 0.25).abs() < 3.0 * se);
            }
        }
        let mean = |d: usize, x: usize| sum[d][x] / count[d][x] as f64;
        // τ(1) = −ε with unit variances, τ(0) = +ε with variances 1 and 10
        let se1 = (1.0 / count[1][1] as f64 + 10.0 / count[0][1] as f64).sqrt();
        let se0 = (1.0 / count[1][0] as f64 + 10.0 / count[0][0] as f64).sqrt();
        assert!((mean(1, 1) - mean(0, 1) + 0.1).abs() < 3.0 * se1);
        assert!((mean(1, 0) - mean(0, 0) - 0.1).abs() < 3.0 * se0);
    }

    #[test]
    fn seeded() {
        let a = sample_dominance(&DominanceDgp::default(), 500, 3).unwrap();
        let b = sample_dominance(&DominanceDgp::default(), 500, 3).unwrap();
        assert_eq!(a.outcome(), b.outcome());
        assert_eq!(a.treat(), b.treat());
        let c = sample_dominance(&DominanceDgp::default(), 500, 4).unwrap();
        assert_ne!(a.outcome(), c.outcome());
    }

    #[test]
    fn scores_reproduce_efficiency_bounds() {
        let dgp = DominanceDgp::welfare(0.4, 0.6, 0.35, 0.2);
        let s = sample_dominance(&dgp, 1_000_000, 5).unwrap();
        let fs = fit_first_stage(&s, 0, true, None).unwrap();
        let panel = dr_scores(&s, &fs, &[Policy::cell_set(0, vec![0.0]), Policy::treat_all()]).unwrap();
        let m = closed_form_moments(&dgp, s.n(), 0.05).unwrap();
        let v = panel.sigma_hat().map(|s| s * s);
        assert!((v[0] / m.var_gstar - 1.0).abs() < 0.01, "{} vs {}", v[0], m.var_gstar);
        assert!((v[1] / m.var_g - 1.0).abs() < 0.01, "{} vs {}", v[1], m.var_g);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(DominanceDgp::welfare(0.8, 0.5, 0.5, 0.1).validate().is_err());
        assert!(DominanceDgp::welfare(0.5, 0.5, 0.5, 0.5).validate().is_err());
        let mut d = DominanceDgp::default();
        d.variances[2] = 0.0;
        assert!(sample_dominance(&d, 10, 0).is_err());
    }
}
