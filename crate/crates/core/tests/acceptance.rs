//! Acceptance checks, one line each. Runs without the libtest harness so
//! every line is printed; exits nonzero if any criterion fails.
//!
//! The optional replication on the JTPA sample reads the CSV named by
//! `WELFARE_LCB_JTPA_CSV` (columns overridable through
//! `WELFARE_LCB_JTPA_{TREATMENT,OUTCOME,EDUC}`, propensity through
//! `WELFARE_LCB_JTPA_PI`) and is skipped when the variable is unset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use welfare_lcb::dgp::{
    closed_form_moments, coverage_experiment, margin_moments, mse_experiment, Design, DominanceDgp, MarginDgp,
};
use welfare_lcb::{
    compute_lcb, dr_scores, dual_ratio_max, max_gms_lcb, max_lf_lcb, normal_quantile, project_nonpositive, qlr_lcb,
    welfare_gain_scores, Covariate, FirstStage, LcbConfig, LcbMethod, Policy, Propensity, QpProblem, Sample,
    ScorePanel,
};

type Criterion = (&'static str, fn() -> Outcome, Duration);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn z95() -> f64 {
    normal_quantile(0.95)
}

fn closed_forms() -> Outcome {
    let m = closed_form_moments(&DominanceDgp::welfare(0.5, 0.5, 0.5, 0.1), 10_000, 0.05).unwrap();
    let exact = m.w_gstar == 0.5 && m.w_g == 0.45 && m.var_g == 2.0025 && m.var_gstar == 11.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    let mut min_var_margin = f64::INFINITY;
    let mut min_sd_margin = f64::INFINITY;
    for _ in 0..1000 {
        let p = rng.random_range(0.2501..0.7499);
        let pi1 = rng.random_range(0.2501..0.7499);
        let pi0 = rng.random_range(0.2501..0.7499);
        let eps = rng.random_range(0.0..0.4999);
        let m = closed_form_moments(&DominanceDgp::welfare(p, pi1, pi0, eps), 10_000, 0.05).unwrap();
        let a = m.var_gstar - m.var_g - 8.0 * p;
        let b = m.var_gstar.sqrt() - m.var_g.sqrt() - p;
        min_var_margin = min_var_margin.min(a);
        min_sd_margin = min_sd_margin.min(b);
        if !(a > 0.0 && b > 0.0) {
            violations += 1;
        }
    }
    check(
        exact && violations == 0,
        format!(
            "exact values {exact}; {violations}/1000 violations; min margins {min_var_margin:.4} (variance), {min_sd_margin:.4} (sd)"
        ),
    )
}

fn mse_dominance() -> Outcome {
    let n = 10_000;
    let dgp = DominanceDgp::welfare(0.5, 0.5, 0.5, 1.0 / (n as f64).sqrt());
    let r = mse_experiment(&dgp, n, 2000, 20_240_601).unwrap();
    let (sub, oracle) = (r.mse_suboptimal.unwrap(), r.mse_oracle.unwrap());
    let paired = r.mc_se["mse_oracle_minus_suboptimal"];
    let pooled = r.mc_se["mse_suboptimal"].hypot(r.mc_se["mse_oracle"]);
    let se = paired.max(pooled);
    let gap = oracle - sub;
    let scaled = n as f64 * oracle;
    check(
        gap > 3.0 * se && (scaled - 11.0).abs() <= 1.1,
        format!(
            "MSE(X) {sub:.3e} < MSE(G*) {oracle:.3e}, gap {:.1} s.e.; N*MSE(G*) = {scaled:.3}",
            gap / se
        ),
    )
}

fn lcb_gap_sign() -> Outcome {
    let z = z95();
    let p = 0.5;
    let mut worst = f64::INFINITY;
    for n in [5000usize, 10_000, 100_000] {
        let root = (n as f64).sqrt();
        let m = closed_form_moments(&DominanceDgp::welfare(p, 0.5, 0.5, z / root), n, 0.05).unwrap();
        worst = worst.min(m.delta_gap / (z * p / root));
    }
    check(worst > 1.0, format!("min Δ / (z p/√N) = {worst:.4} over N in {{5e3, 1e4, 1e5}}"))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

fn margin_rate() -> Outcome {
    let grid = [1_000usize, 10_000, 100_000, 1_000_000];
    let mut ok = true;
    let mut parts = Vec::new();
    for nu in [1.0, 2.0] {
        let delta = 1.0 / nu;
        let gaps: Vec<f64> = grid
            .iter()
            .map(|&n| {
                let dgp = MarginDgp::at_rate(5.0, nu, n, 0.05).unwrap();
                let eps_nu = dgp.eps.powf(nu);
                assert!((eps_nu - 0.8 * z95() / (n as f64).sqrt()).abs() < 1e-12);
                margin_moments(&dgp, n, 0.05).unwrap().delta_gap
            })
            .collect();
        let positive = gaps.iter().all(|&g| g > 0.0);
        let xs: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let s = slope(&xs, &ys);
        let target = -(1.0 + delta) / 2.0;
        ok &= positive && (s - target).abs() <= 0.1;
        parts.push(format!("δ={delta}: slope {s:.4} vs {target}"));
    }
    check(ok, parts.join("; "))
}

/// Exact projection by enumerating which coordinates sit at zero: with
/// `A` bound, the minimum of `r'Σ⁻¹r` given `r_A = x_A` is
/// `x_A' Σ_AA⁻¹ x_A`, attained at `t_F = x_F − Σ_FA Σ_AA⁻¹ x_A`.
fn enumeration_oracle(x: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let j = x.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << j) {
        let a: Vec<usize> = (0..j).filter(|k| mask & (1 << k) != 0).collect();
        let f: Vec<usize> = (0..j).filter(|k| mask & (1 << k) == 0).collect();
        let (obj, tf) = if a.is_empty() {
            (0.0, x.clone())
        } else {
            let saa = sigma.select_rows(&a).select_columns(&a);
            let sfa = sigma.select_rows(&f).select_columns(&a);
            let xa = x.select_rows(&a);
            let sol = saa.cholesky().unwrap().solve(&xa);
            (xa.dot(&sol), x.select_rows(&f) - sfa * sol)
        };
        if tf.iter().all(|&t| t <= 1e-12) {
            best = best.min(obj);
        }
    }
    best
}

fn duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_dual, mut worst_enum) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..500 {
        let j = rng.random_range(1..=6);
        let b = DMatrix::from_fn(j, j, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = &b * b.transpose() + DMatrix::identity(j, j) * 0.1;
        let t = DVector::from_fn(j, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
        let qp = project_nonpositive(&QpProblem::new(t.clone(), sigma.clone())).unwrap();
        let dual = dual_ratio_max(&t, &sigma).unwrap();
        // ratio recomputed at the returned weights
        let l = &dual.lambda;
        let ratio = if dual.degenerate {
            0.0
        } else {
            l.dot(&t) / l.dot(&(&sigma * l)).sqrt()
        };
        let scale = 1.0 + t.norm_squared();
        let d1 = (dual.value.powi(2) - qp.objective).abs() / scale;
        let d2 = (ratio.max(0.0).powi(2) - qp.objective).abs() / scale;
        let oracle = enumeration_oracle(&t, &sigma);
        let d3 = (qp.objective - oracle).abs() / (1.0 + oracle);
        worst_dual = worst_dual.max(d1.max(d2));
        worst_enum = worst_enum.max(d3);
        if d1 > 1e-8 || d2 > 1e-8 || d3 > 1e-9 {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!(
            "{failures}/500 failures; max |ratio² − QP|/(1+‖T‖²) {worst_dual:.2e}, max |QP − enumeration|/(1+obj) {worst_enum:.2e}"
        ),
    )
}

fn random_panel(rng: &mut ChaCha8Rng, j: usize, n: usize) -> ScorePanel {
    let load = DMatrix::from_fn(j, j, |_, _| rng.random::<f64>() - 0.3);
    let means: Vec<f64> = (0..j).map(|_| rng.random::<f64>() * 0.3).collect();
    let scale: Vec<f64> = (0..j).map(|_| 0.5 + rng.random::<f64>() * 3.0).collect();
    let raw = DMatrix::from_fn(n, j, |_, _| rng.sample::<f64, _>(StandardNormal)) * load;
    let scores = DMatrix::from_fn(n, j, |i, k| raw[(i, k)] * scale[k] + means[k]);
    ScorePanel::from_scores(scores, (0..j).map(|k| format!("g{k}")).collect()).unwrap()
}

fn collapse_and_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut below, mut worst_single) = (0, 0.0f64);
    let mut singles = 0;
    for i in 0..200 {
        let j = 1 + i % 8;
        let panel = random_panel(&mut rng, j, 400);
        let cfg = LcbConfig {
            seed: i as u64,
            ..LcbConfig::default()
        };
        let lf = max_lf_lcb(&panel, &cfg).unwrap().value;
        let gms = max_gms_lcb(&panel, &cfg).unwrap().value;
        if gms < lf {
            below += 1;
        }
        if j == 1 {
            singles += 1;
            let se = panel.std_error(0);
            let vals: Vec<f64> = LcbMethod::ALL
                .iter()
                .map(|&m| compute_lcb(m, &panel, &cfg).unwrap().value)
                .collect();
            let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - vals.iter().cloned().fold(f64::INFINITY, f64::min);
            worst_single = worst_single.max(spread / se);
        }
    }
    check(
        below == 0 && worst_single <= 0.02,
        format!("GMS < LF in {below}/200 panels; J=1 ({singles} panels) max spread {worst_single:.4} s.e."),
    )
}

fn coverage() -> Outcome {
    let n = 5000;
    let design = Design::Dominance(DominanceDgp::welfare(0.5, 0.5, 0.5, 1.0 / (n as f64).sqrt()));
    let policies = vec![
        Policy::treat_all(),
        Policy::treat_none(),
        Policy::cell_set(0, vec![0.0]),
        Policy::cell_set(0, vec![1.0]),
    ];
    let methods = [LcbMethod::Naive, LcbMethod::MaxLF, LcbMethod::MaxGMS, LcbMethod::QlrMix];
    let cfg = LcbConfig::default();
    let r = coverage_experiment(&design, n, &policies, &methods, &cfg, 1000, 77).unwrap();
    let ok = ["MaxLF", "MaxGMS", "QlrMix"].iter().all(|m| r.coverage[*m] >= 0.94);
    let parts: Vec<String> = r.coverage.iter().map(|(m, c)| format!("{m} {c:.3}")).collect();
    check(ok, format!("coverage {} (Naive informational)", parts.join(", ")))
}

fn env_or(key: &str, default: &str) -> String {
    std::env::var(key).unwrap_or_else(|_| default.to_string())
}

fn jtpa() -> Outcome {
    let Ok(path) = std::env::var("WELFARE_LCB_JTPA_CSV") else {
        return Outcome::Skip("WELFARE_LCB_JTPA_CSV not set".into());
    };
    let (tcol, ycol, ecol) = (
        env_or("WELFARE_LCB_JTPA_TREATMENT", "D"),
        env_or("WELFARE_LCB_JTPA_OUTCOME", "earnings"),
        env_or("WELFARE_LCB_JTPA_EDUC", "edu"),
    );
    let pi: f64 = env_or("WELFARE_LCB_JTPA_PI", "0.6666666666666666").parse().unwrap();
    let mut reader = match csv::Reader::from_path(&path) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("cannot read {path}: {e}")),
    };
    let headers = reader.headers().unwrap().clone();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ti), Some(yi), Some(ei)) = (idx(&tcol), idx(&ycol), idx(&ecol)) else {
        return Outcome::Fail(format!("columns {tcol:?}, {ycol:?}, {ecol:?} not all present"));
    };
    let (mut d, mut y, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.unwrap();
        d.push(rec[ti].trim().parse::<f64>().unwrap() as u8);
        y.push(rec[yi].trim().parse::<f64>().unwrap());
        e.push(rec[ei].trim().parse::<f64>().unwrap());
    }
    let n = d.len();
    let sample = Sample::new(d, y, vec![Covariate::discrete("educ", e), Covariate::discrete("_all", vec![0.0; n])])
        .unwrap();
    // IPW with the known assignment probability: zero outcome regressions
    let fs = FirstStage::new(1, [((0, 0.0), 0.0), ((1, 0.0), 0.0)], Propensity::Known(pi)).unwrap();
    let gain_panel = |cuts: &[f64]| {
        let mut policies: Vec<Policy> = cuts.iter().map(|&c| Policy::cutoff_le(0, c)).collect();
        policies.push(Policy::treat_none());
        let full = dr_scores(&sample, &fs, &policies).unwrap();
        let keep: Vec<usize> = (0..cuts.len()).collect();
        welfare_gain_scores(&full, cuts.len()).unwrap().select(&keep).unwrap()
    };
    let cfg = LcbConfig::default();
    let narrow = gain_panel(&[11.0, 15.0, 18.0]);
    let wide = gain_panel(&(7..=18).map(f64::from).collect::<Vec<_>>());
    let (lf1, gms1) = (
        max_lf_lcb(&narrow, &cfg).unwrap().value,
        max_gms_lcb(&narrow, &cfg).unwrap().value,
    );
    let (lf2, gms2) = (
        max_lf_lcb(&wide, &cfg).unwrap().value,
        max_gms_lcb(&wide, &cfg).unwrap().value,
    );
    let best = narrow.w_hat().max();
    let ok = n == 9223
        && (lf1 - 783.28).abs() <= 2.0
        && (gms1 - 783.28).abs() <= 2.0
        && (lf2 - 649.53).abs() <= 2.0
        && (gms2 - 724.26).abs() <= 2.0
        && (best - 1440.25).abs() <= 0.01;
    check(
        ok,
        format!(
            "N={n}; {{11,15,18}}: LF {lf1:.2}, GMS {gms1:.2}; {{7..18}}: LF {lf2:.2}, GMS {gms2:.2}; best estimate {best:.2}"
        ),
    )
}

fn qlr_grid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = 1000usize;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let panel = random_panel(&mut rng, 3, 300);
        let cfg = LcbConfig {
            seed: i,
            n_sim: 10_000,
            ..LcbConfig::default()
        };
        let r = qlr_lcb(&panel, &cfg).unwrap();
        let cov = panel.cov_hat();
        let sigma = cov + DMatrix::identity(3, 3) * (cfg.ridge * cov.trace() / 3.0);
        let root_n = (panel.n() as f64).sqrt();
        let c = r.crit.sqrt();
        let mut best = f64::NEG_INFINITY;
        for a in 0..=m {
            for b in 0..=(m - a) {
                let l = DVector::from_vec(vec![a as f64, b as f64, (m - a - b) as f64]) / m as f64;
                best = best.max(l.dot(panel.w_hat()) - c * l.dot(&(&sigma * &l)).sqrt() / root_n);
            }
        }
        let se_max = panel.sigma_hat().max() / root_n;
        worst = worst.max((r.value - best).abs() / se_max);
    }
    check(worst <= 1e-4, format!("max |QLR − grid| = {worst:.2e} σ̂_max/√N over 100 panels"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("closed-form dominance moments", closed_forms, Duration::from_secs(1)),
        ("MSE dominance", mse_dominance, Duration::from_secs(120)),
        ("LCB gap sign at the local rate", lcb_gap_sign, Duration::from_secs(1)),
        ("margin design rate", margin_rate, Duration::from_secs(1)),
        ("duality identity", duality, Duration::from_secs(30)),
        ("method collapse and ordering", collapse_and_ordering, Duration::from_secs(120)),
        ("coverage", coverage, Duration::from_secs(600)),
        ("JTPA replication", jtpa, Duration::from_secs(600)),
        ("QLR simplex-grid oracle", qlr_grid, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) if secs <= *budget => ("PASS", d),
            Outcome::Pass(d) => ("FAIL", format!("{d}; over runtime budget {budget:?}")),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("criterion {} {tag} [{name}] {:.2}s: {detail}", k + 1, secs.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
