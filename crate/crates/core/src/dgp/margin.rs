use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::normal_quantile;
use crate::sample::{Covariate, Sample};

use super::{draw_outcome, OutcomeFamily, PopulationMoments};

/// Continuous-covariate design with a CATE crossing zero at `x = ε` with
/// order `ν`: `τ(x) = sgn(x−ε)|x−ε|^ν·M/5`, `X ~ U[0,1]`, `π ≡ 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginDgp {
    pub m: f64,
    pub eps: f64,
    pub nu: f64,
    pub family: OutcomeFamily,
}

impl Default for MarginDgp {
    fn default() -> Self {
        Self {
            m: 5.0,
            eps: 0.2,
            nu: 1.0,
            family: OutcomeFamily::TwoPoint,
        }
    }
}

impl MarginDgp {
    pub fn new(m: f64, eps: f64, nu: f64) -> Self {
        Self {
            m,
            eps,
            nu,
            family: OutcomeFamily::TwoPoint,
        }
    }

    /// Design with `ε^ν = (4 z_{1−α}/5) n^{−1/2}`.
    pub fn at_rate(m: f64, nu: f64, n: usize, alpha: f64) -> Result<Self> {
        let base = 4.0 * normal_quantile(1.0 - alpha) / 5.0 / (n as f64).sqrt();
        let dgp = Self::new(m, base.powf(1.0 / nu), nu);
        dgp.validate()?;
        Ok(dgp)
    }

    /// `M > 0`, `ν > 0`, `ε ∈ [0, 1/2)`.
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(invalid("M", "must be positive"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("nu", "must be positive"));
        }
        if !(self.eps >= 0.0 && self.eps < 0.5) {
            return Err(invalid("eps", format!("{} is outside [0, 1/2)", self.eps)));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.nu
    }

    fn signed_power(&self, x: f64) -> f64 {
        let u = x - self.eps;
        u.signum() * u.abs().powf(self.nu) * f64::from(u != 0.0)
    }

    pub fn mean(&self, d: u8, x: f64) -> f64 {
        if d == 1 {
            0.0
        } else {
            -self.signed_power(x) * self.m / 5.0
        }
    }

    pub fn variance(&self, d: u8) -> f64 {
        let m2 = self.m * self.m;
        if d == 1 {
            m2 / 10.0
        } else {
            m2 / 5.0
        }
    }

    pub fn cate(&self, x: f64) -> f64 {
        self.mean(1, x) - self.mean(0, x)
    }

    /// Population welfare of `G* = {x ≥ ε}`; treat-all has welfare zero.
    pub fn optimal_welfare(&self) -> f64 {
        self.eps.powf(self.nu + 1.0) * self.m / (5.0 * (self.nu + 1.0))
    }

    /// Population welfare of the cutoff rule `{x ≥ c}` for `c ∈ [0, 1]`.
    pub fn cutoff_welfare(&self, c: f64) -> f64 {
        // ∫_0^c m(0,x) dx with m(0,x) = −sgn(x−ε)|x−ε|^ν M/5
        let k = self.m / (5.0 * (self.nu + 1.0));
        let below = self.eps.min(c);
        let mut w = k * (self.eps.powf(self.nu + 1.0) - (self.eps - below).powf(self.nu + 1.0));
        if c > self.eps {
            w -= k * (c - self.eps).powf(self.nu + 1.0);
        }
        w
    }

    /// `η = M/(5·2^ν)` and `C_B = η δ (1/(1+δ))^{1+1/δ}` for `δ = 1/ν`.
    pub fn margin_constants(&self) -> (f64, f64) {
        let eta = self.m / (5.0 * 2f64.powf(self.nu));
        let d = self.delta();
        (eta, eta * d * (1.0 / (1.0 + d)).powf(1.0 + 1.0 / d))
    }
}

/// Draws `X ~ U[0,1]`, `D ~ Bern(1/2)` and `Y` from the cell's law. The
/// covariate column is continuous and named `x`.
pub fn sample_margin(dgp: &MarginDgp, n: usize, seed: u64) -> Result<Sample> {
    dgp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.random();
        let di = u8::from(rng.random_bool(0.5));
        y.push(draw_outcome(&mut rng, dgp.family, dgp.mean(di, xi), dgp.variance(di)));
        x.push(xi);
        d.push(di);
    }
    Sample::new(d, y, vec![Covariate::continuous("x", x)])
}

/// Exact moments of `G* = {x ≥ ε}` against treat-all. The variance gap is
/// `εM²/5 + ε^{2ν+1}M²/(25(2ν+1)) − W_{G*}²`.
pub fn margin_moments(dgp: &MarginDgp, n: usize, alpha: f64) -> Result<PopulationMoments> {
    dgp.validate()?;
    let m2 = dgp.m * dgp.m;
    let w_gstar = dgp.optimal_welfare();
    let var_g = 2.0 * dgp.variance(1);
    let t1 = dgp.eps * m2 / 5.0;
    let t2 = dgp.eps.powf(2.0 * dgp.nu + 1.0) / (2.0 * dgp.nu + 1.0) * m2 / 25.0;
    let t3 = -(w_gstar * w_gstar);
    Ok(PopulationMoments::new(w_gstar, 0.0, var_g + t1 + t2 + t3, var_g, n, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Midpoint rule for `∫_a^b f`.
    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
        let h = (b - a) / k as f64;
        (0..k).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    /// Efficiency bound of the cutoff rule `{x ≥ c}` by quadrature.
    fn quadrature_variance(dgp: &MarginDgp, c: f64) -> f64 {
        let k = 200_000;
        let noise = integrate(|x| if x >= c { 2.0 * dgp.variance(1) } else { 2.0 * dgp.variance(0) }, 0.0, 1.0, k);
        let m = |x: f64| if x >= c { dgp.mean(1, x) } else { dgp.mean(0, x) };
        let first = integrate(m, 0.0, 1.0, k);
        let second = integrate(|x| m(x) * m(x), 0.0, 1.0, k);
        noise + second - first * first
    }

    #[test]
    fn cate_root_and_linear_case() {
        let d = MarginDgp::new(5.0, 0.3, 1.7);
        assert_eq!(d.mean(0, 0.3), 0.0);
        assert_eq!(d.cate(0.3), 0.0);
        let lin = MarginDgp::new(5.0, 0.0, 1.0);
        for x in [0.0, 0.25, 0.6, 1.0] {
            assert!((lin.cate(x) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn welfare_gap_against_quadrature() {
        let d = MarginDgp::new(5.0, 0.2, 1.0);
        assert!((d.optimal_welfare() - 0.02).abs() < 1e-15);
        let q = integrate(|x| d.mean(0, x), 0.0, d.eps, 100_000);
        assert!((q - 0.02).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn variance_gap_against_quadrature(eps in 0.01f64..0.49, nu in 0.3f64..3.0, m in 0.5f64..10.0) {
            let d = MarginDgp::new(m, eps, nu);
            let mo = margin_moments(&d, 1000, 0.05).unwrap();
            let qs = quadrature_variance(&d, eps);
            let qx = quadrature_variance(&d, 0.0);
            prop_assert!((mo.var_gstar - qs).abs() < 1e-5 * qs);
            prop_assert!((mo.var_g - qx).abs() < 1e-9 * qx);
            prop_assert!(mo.var_gstar.sqrt() - mo.var_g.sqrt() > 4.0 * m * eps / 25.0);
        }

        #[test]
        fn cutoff_welfare_against_quadrature(c in 0.0f64..1.0, eps in 0.0f64..0.49, nu in 0.3f64..3.0) {
            let d = MarginDgp::new(5.0, eps, nu);
            let q = integrate(|x| if x >= c { 0.0 } else { d.mean(0, x) }, 0.0, 1.0, 200_000);
            prop_assert!((d.cutoff_welfare(c) - q).abs() < 1e-5);
            prop_assert!(d.cutoff_welfare(c) <= d.optimal_welfare() + 1e-15);
        }

        #[test]
        fn gap_rate_at_critical_eps(n in 1_000usize..10_000_000, nu in 0.5f64..4.0, m in 1.0f64..10.0) {
            let d = MarginDgp::at_rate(m, nu, n, 0.05).unwrap();
            let mo = margin_moments(&d, n, 0.05).unwrap();
            let delta = d.delta();
            let z = normal_quantile(0.95);
            // (z/√N)(4M/25)ε − ε^{ν+1}M/(5(ν+1)) with z/√N = (5/4)ε^ν
            let lower = (m / 5.0) * (4.0 * z / 5.0).powf(1.0 + delta) / (1.0 + delta)
                * (n as f64).powf(-(1.0 + delta) / 2.0);
            prop_assert!(mo.delta_gap > lower, "{} <= {}", mo.delta_gap, lower);
        }
    }

    #[test]
    fn margin_bounds_bracket_welfare_gap() {
        for nu in [0.5, 1.0, 1.5, 2.0, 3.0] {
            for eps in [0.01, 0.05, 0.1, 0.2, 0.3, 0.45] {
                let d = MarginDgp::new(5.0, eps, nu);
                let (_, c_b) = d.margin_constants();
                let gap = d.optimal_welfare();
                // treat-all differs from G* on [0, ε)
                let share = eps;
                assert!(c_b * share.powf(1.0 + 1.0 / d.delta()) <= gap);
                assert!(gap <= d.m * share);
            }
        }
    }

    #[test]
    fn gaps_vanish_with_eps() {
        let mo = margin_moments(&MarginDgp::new(5.0, 1e-12, 1.0), 100, 0.05).unwrap();
        assert!(mo.w_gstar - mo.w_g < 1e-20);
        assert!(mo.var_gstar - mo.var_g < 1e-10);
    }

    #[test]
    fn sample_shape() {
        let s = sample_margin(&MarginDgp::default(), 2000, 9).unwrap();
        assert_eq!(s.n(), 2000);
        assert!(s.covariate(0).unwrap().values.iter().all(|x| (0.0..1.0).contains(x)));
        let t = s.treat().iter().filter(|&&d| d == 1).count() as f64 / 2000.0;
        assert!((t - 0.5).abs() < 0.05);
        assert_eq!(s.outcome(), sample_margin(&MarginDgp::default(), 2000, 9).unwrap().outcome());
    }
}
