use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use welfare_lcb::dgp::{
    closed_form_moments, coverage_experiment, margin_moments, mse_experiment, Design, DgpVariant, DominanceDgp,
    MarginDgp, McReport, OutcomeFamily, PopulationMoments,
};
use welfare_lcb::{normal_quantile, LcbConfig};

use crate::args::{parse_methods, DgpArg, FamilyArg, SimulateArgs, VariantArg};
use crate::output::{emit, num, opt_num, short, Table, SPEC_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub design: Design,
    pub n: usize,
    pub reps: usize,
    pub methods: Vec<String>,
    pub lcb: LcbConfig,
}

/// Population welfare (and score variance where available) of one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMoment {
    pub policy: String,
    pub welfare: f64,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub eps: f64,
    pub delta_gap: f64,
    /// `(M/5)(4z/5)^{1+δ} N^{−(1+δ)/2}/(1+δ)`.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweep {
    pub points: Vec<RatePoint>,
    /// Least-squares slope of `log Δ` on `log N`; absent when some gap is
    /// not positive.
    pub slope: Option<f64>,
    pub expected_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub spec_version: String,
    pub command: String,
    pub config: SimulateConfig,
    pub closed_form: PopulationMoments,
    pub policies: Vec<PolicyMoment>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse: Option<McReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<McReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rate_sweep: Option<RateSweep>,
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let out = simulate(args)?;
    emit(&args.output, &out, &flat_table(&out), &terminal_table(&out))
}

fn family(f: FamilyArg) -> OutcomeFamily {
    match f {
        FamilyArg::TwoPoint => OutcomeFamily::TwoPoint,
        FamilyArg::Gaussian => OutcomeFamily::Gaussian,
    }
}

pub fn design(args: &SimulateArgs) -> Result<Design> {
    if args.n < 2 {
        bail!("n = {} is too small: at least 2 observations required", args.n);
    }
    let d = match args.dgp {
        DgpArg::Dominance => {
            let eps = args.eps.unwrap_or(1.0 / (args.n as f64).sqrt());
            let mut dgp = match args.variant {
                VariantArg::Welfare => DominanceDgp::welfare(args.p, args.pi1, args.pi0, eps),
                VariantArg::Gain => DominanceDgp::gain(args.p, args.pi1, args.pi0, eps),
            };
            if let Some(v) = &args.variances {
                if v.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    bail!("variances must be positive, got {v:?}");
                }
                dgp.variances = [v[0], v[1], v[2], v[3]];
            }
            dgp.family = family(args.family);
            Design::Dominance(dgp)
        }
        DgpArg::Margin => {
            let mut dgp = match args.eps {
                Some(eps) => MarginDgp::new(args.m, eps, args.nu),
                None => MarginDgp::at_rate(args.m, args.nu, args.n, args.lcb.alpha)?,
            };
            dgp.family = family(args.family);
            Design::Margin { dgp, bins: args.bins }
        }
    };
    d.validate()?;
    Ok(d)
}

pub fn simulate(args: &SimulateArgs) -> Result<SimulateOutput> {
    let cfg = args.lcb.config()?;
    let methods = parse_methods(&args.methods)?;
    let design = design(args)?;
    let alpha = cfg.alpha;
    let (closed_form, policies) = match &design {
        Design::Dominance(d) => {
            let rows = [
                ("treat-none", false, false),
                ("x=0", false, true),
                ("x=1", true, false),
                ("treat-all", true, true),
            ];
            let policies = rows
                .iter()
                .map(|&(label, t1, t0)| {
                    let (welfare, variance) = match d.variant {
                        DgpVariant::Welfare => d.policy_moments(t1, t0),
                        DgpVariant::Gain => d.gain_moments(t1, t0),
                    };
                    PolicyMoment {
                        policy: label.into(),
                        welfare,
                        variance: Some(variance),
                    }
                })
                .collect();
            (closed_form_moments(d, args.n, alpha)?, policies)
        }
        Design::Margin { dgp, .. } => {
            let mut cuts: Vec<f64> = (0..=5).map(|k| k as f64 / 10.0).collect();
            cuts.push(dgp.eps);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let policies = cuts
                .into_iter()
                .map(|c| PolicyMoment {
                    policy: format!("x>={c}"),
                    welfare: dgp.cutoff_welfare(c),
                    variance: None,
                })
                .collect();
            (margin_moments(dgp, args.n, alpha)?, policies)
        }
    };

    let mse = match (args.mse, &design) {
        (false, _) => None,
        (true, Design::Dominance(d)) if d.variant == DgpVariant::Welfare => {
            Some(mse_experiment(d, args.n, args.reps, args.lcb.seed)?)
        }
        (true, _) => bail!("--mse requires --dgp dominance with --variant welfare"),
    };
    let coverage = if args.coverage {
        Some(coverage_experiment(
            &design,
            args.n,
            &design.default_policies(),
            &methods,
            &cfg,
            args.reps,
            args.lcb.seed,
        )?)
    } else {
        None
    };
    let rate_sweep = if args.rate_sweep {
        match &design {
            Design::Margin { dgp, .. } => Some(rate_sweep(dgp.m, dgp.nu, &args.n_grid, alpha)?),
            Design::Dominance(_) => bail!("--rate-sweep requires --dgp margin"),
        }
    } else {
        None
    };

    Ok(SimulateOutput {
        spec_version: SPEC_VERSION.into(),
        command: "simulate".into(),
        config: SimulateConfig {
            design,
            n: args.n,
            reps: args.reps,
            methods: methods.iter().map(|m| m.name().to_string()).collect(),
            lcb: cfg,
        },
        closed_form,
        policies,
        mse,
        coverage,
        rate_sweep,
    })
}

/// Closed-form gap at the critical rate for each `N` in `grid`.
pub fn rate_sweep(m: f64, nu: f64, grid: &[usize], alpha: f64) -> Result<RateSweep> {
    if grid.len() < 2 {
        bail!("--n-grid needs at least two sample sizes");
    }
    let delta = 1.0 / nu;
    let z = normal_quantile(1.0 - alpha);
    let points = grid
        .iter()
        .map(|&n| {
            let dgp = MarginDgp::at_rate(m, nu, n, alpha)?;
            let gap = margin_moments(&dgp, n, alpha)?.delta_gap;
            let lower_bound =
                (m / 5.0) * (4.0 * z / 5.0).powf(1.0 + delta) * (n as f64).powf(-(1.0 + delta) / 2.0) / (1.0 + delta);
            Ok(RatePoint {
                n,
                eps: dgp.eps,
                delta_gap: gap,
                lower_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = points.iter().all(|p| p.delta_gap > 0.0).then(|| {
        let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.delta_gap.ln()).collect();
        ols_slope(&xs, &ys)
    });
    Ok(RateSweep {
        points,
        slope,
        expected_slope: -(1.0 + delta) / 2.0,
    })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn flat_table(out: &SimulateOutput) -> Table {
    let mut t = Table::new(&["section", "key", "value", "mc_se"]);
    let cf = &out.closed_form;
    for (k, v) in [
        ("w_gstar", cf.w_gstar),
        ("w_g", cf.w_g),
        ("var_gstar", cf.var_gstar),
        ("var_g", cf.var_g),
        ("delta_gap", cf.delta_gap),
    ] {
        t.push(vec!["closed_form".into(), k.into(), num(v), String::new()]);
    }
    for p in &out.policies {
        t.push(vec!["welfare".into(), p.policy.clone(), num(p.welfare), String::new()]);
        if let Some(v) = p.variance {
            t.push(vec!["variance".into(), p.policy.clone(), num(v), String::new()]);
        }
    }
    for (section, rep) in [("mse", &out.mse), ("coverage", &out.coverage)] {
        if let Some(r) = rep {
            push_report(&mut t, section, r);
        }
    }
    if let Some(s) = &out.rate_sweep {
        for p in &s.points {
            t.push(vec!["rate_sweep".into(), format!("delta_gap@{}", p.n), num(p.delta_gap), String::new()]);
        }
        t.push(vec!["rate_sweep".into(), "slope".into(), opt_num(s.slope), String::new()]);
        t.push(vec!["rate_sweep".into(), "expected_slope".into(), num(s.expected_slope), String::new()]);
    }
    t
}

fn push_report(t: &mut Table, section: &str, r: &McReport) {
    let se = |k: &str| opt_num(r.mc_se.get(k).copied());
    t.push(vec![section.into(), "target".into(), num(r.target), String::new()]);
    if let Some(v) = r.mse_suboptimal {
        t.push(vec![section.into(), "mse_suboptimal".into(), num(v), se("mse_suboptimal")]);
    }
    if let Some(v) = r.mse_oracle {
        t.push(vec![section.into(), "mse_oracle".into(), num(v), se("mse_oracle")]);
    }
    for (m, v) in &r.coverage {
        t.push(vec![section.into(), format!("coverage.{m}"), num(*v), se(&format!("coverage.{m}"))]);
    }
    for (m, v) in &r.mean_lcb {
        t.push(vec![section.into(), format!("mean_lcb.{m}"), num(*v), se(&format!("mean_lcb.{m}"))]);
    }
}

fn terminal_table(out: &SimulateOutput) -> Table {
    let flat = flat_table(out);
    let mut t = Table::new(&["section", "key", "value", "mc s.e."]);
    for r in flat.rows {
        let fmt = |s: &str| s.parse::<f64>().map(short).unwrap_or_default();
        t.push(vec![r[0].clone(), r[1].clone(), fmt(&r[2]), fmt(&r[3])]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [1e3f64, 1e4, 1e5].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = [1e3f64, 1e4, 1e5].iter().map(|x| (3.0 * x.powf(-0.75)).ln()).collect();
        assert!((ols_slope(&xs, &ys) + 0.75).abs() < 1e-12);
    }

    #[test]
    fn sweep_matches_rate() {
        for nu in [1.0, 2.0] {
            let s = rate_sweep(5.0, nu, &[1000, 10_000, 100_000, 1_000_000], 0.05).unwrap();
            let slope = s.slope.unwrap();
            assert!((slope - s.expected_slope).abs() < 0.1, "nu {nu}: slope {slope}");
            assert!(s.points.iter().all(|p| p.delta_gap > p.lower_bound));
        }
        assert!(rate_sweep(5.0, 1.0, &[1000], 0.05).is_err());
    }
}
