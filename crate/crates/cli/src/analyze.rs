use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use welfare_lcb::{
    bin_covariate, compute_lcb, dr_scores, fit_first_stage, naive_lcb, score_panel, welfare_gain_scores, Covariate, CovariateKind,
    FirstStage, FirstStageOptions, LcbConfig, LcbDiagnostics, Policy, Propensity, Sample,
};

use crate::args::{parse_cutoffs, parse_methods, parse_pi, AnalyzeArgs, PolicyDirection};
use crate::input::{read_sample, ColumnSpec};
use crate::output::{emit, num, short, Table, SPEC_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub input: String,
    pub treatment: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub continuous: Vec<String>,
    pub policy_col: Option<String>,
    pub cell_col: String,
    pub bins: Option<usize>,
    pub pi: String,
    pub gain: bool,
    pub ipw: bool,
    pub smoothing: bool,
    pub cross_fit: Option<usize>,
    pub methods: Vec<String>,
    pub lcb: LcbConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub policy: String,
    pub w_hat: f64,
    pub sigma_hat: f64,
    pub std_error: f64,
    pub naive_lcb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcbEntry {
    pub value: f64,
    pub crit: f64,
    pub argmax: Option<String>,
    pub lambda: Option<Vec<f64>>,
    pub diagnostics: LcbDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeDiagnostics {
    pub propensity_clipped: bool,
    pub n_cells: usize,
    pub kappa_value: f64,
    /// Label of the gain baseline, which is excluded from the test class.
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutput {
    pub spec_version: String,
    pub command: String,
    pub config: AnalyzeConfig,
    pub n: usize,
    pub estimates: Vec<Estimate>,
    pub lcbs: BTreeMap<String, LcbEntry>,
    pub diagnostics: AnalyzeDiagnostics,
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let out = analyze(args)?;
    emit(&args.output, &out, &flat_table(&out), &terminal_table(&out))
}

pub fn analyze(args: &AnalyzeArgs) -> Result<AnalyzeOutput> {
    let cfg = args.lcb.config()?;
    let methods = parse_methods(&args.methods)?;
    let known_pi = parse_pi(&args.pi)?;
    let sample = read_sample(
        &args.input,
        &ColumnSpec {
            treatment: &args.treatment,
            outcome: &args.outcome,
            covariates: args.covariates.as_deref(),
            continuous: &args.continuous,
        },
    )?;
    let covariates: Vec<String> = sample.covariates().iter().map(|c| c.name.clone()).collect();

    let mut policies = build_policies(args, &sample)?;
    if policies.is_empty() {
        bail!("empty policy class: give --cutoffs, --cells, --treat-all or --treat-none");
    }
    let baseline = if args.gain {
        if args.treat_none {
            bail!("--treat-none cannot be combined with --gain: treat-none is the gain baseline");
        }
        policies.push(Policy::treat_none());
        Some(policies.len() - 1)
    } else {
        None
    };

    let (sample, cell_col, cell_name) = cell_column(args, sample)?;
    let full = if args.ipw {
        let pi = known_pi.context("--ipw needs a known propensity: --pi known:<value>")?;
        let zero = [0u8, 1].into_iter().map(|d| ((d, 0.0), 0.0));
        dr_scores(&sample, &FirstStage::new(cell_col, zero, Propensity::Known(pi))?, &policies)?
    } else {
        let opts = FirstStageOptions {
            col: cell_col,
            smoothing: !args.no_smoothing,
            known_pi,
            cross_fit: args.cross_fit,
        };
        score_panel(&sample, &opts, &policies)?
    };
    let panel = match baseline {
        Some(b) => {
            let keep: Vec<usize> = (0..policies.len()).filter(|&j| j != b).collect();
            welfare_gain_scores(&full, b)?.select(&keep)?
        }
        None => full,
    };
    let fs = fit_first_stage(&sample, cell_col, !args.no_smoothing && !args.ipw, known_pi)?;

    let n = panel.n();
    let estimates: Vec<Estimate> = (0..panel.len())
        .map(|j| {
            let w = panel.w_hat()[j];
            let s = panel.sigma_hat()[j];
            Estimate {
                policy: panel.labels()[j].clone(),
                w_hat: w,
                sigma_hat: s,
                std_error: panel.std_error(j),
                naive_lcb: naive_lcb(w, s, n, cfg.alpha).value,
            }
        })
        .collect();

    let mut lcbs = BTreeMap::new();
    for m in &methods {
        let r = compute_lcb(*m, &panel, &cfg).with_context(|| format!("computing {}", m.name()))?;
        lcbs.insert(
            m.name().to_string(),
            LcbEntry {
                value: r.value,
                crit: r.crit,
                argmax: r.argmax_policy.map(|j| panel.labels()[j].clone()),
                lambda: r.lambda,
                diagnostics: r.diagnostics,
            },
        );
    }

    Ok(AnalyzeOutput {
        spec_version: SPEC_VERSION.into(),
        command: "analyze".into(),
        config: AnalyzeConfig {
            input: args.input.display().to_string(),
            treatment: args.treatment.clone(),
            outcome: args.outcome.clone(),
            covariates,
            continuous: args.continuous.clone(),
            policy_col: args.policy_col.clone(),
            cell_col: cell_name,
            bins: args.bins,
            pi: args.pi.clone(),
            gain: args.gain,
            ipw: args.ipw,
            smoothing: !args.no_smoothing,
            cross_fit: args.cross_fit,
            methods: methods.iter().map(|m| m.name().to_string()).collect(),
            lcb: cfg,
        },
        n,
        estimates,
        lcbs,
        diagnostics: AnalyzeDiagnostics {
            propensity_clipped: fs.clipped(),
            n_cells: fs.cells().len(),
            kappa_value: cfg.kappa.value(n),
            baseline: baseline.map(|b| policies[b].label.clone()),
        },
    })
}

fn column(sample: &Sample, name: &str) -> Result<usize> {
    sample
        .column_index(name)
        .with_context(|| format!("missing column {name:?} among the covariates"))
}

fn build_policies(args: &AnalyzeArgs, sample: &Sample) -> Result<Vec<Policy>> {
    let mut out = Vec::new();
    if args.cutoffs.is_some() || !args.cells.is_empty() {
        let name = args
            .policy_col
            .as_deref()
            .context("--cutoffs and --cells need --policy-col")?;
        let col = column(sample, name)?;
        if let Some(spec) = &args.cutoffs {
            for c in parse_cutoffs(spec)? {
                out.push(match args.direction {
                    PolicyDirection::Le => Policy::cutoff_le(col, c).with_label(format!("{name}<={c}")),
                    PolicyDirection::Ge => {
                        Policy::predicate(format!("{name}>={c}"), move |row: &[f64]| row[col] >= c)
                    }
                });
            }
        }
        for set in &args.cells {
            let cells = parse_cutoffs(set)?;
            let label = format!(
                "{name} in {{{}}}",
                cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            );
            out.push(Policy::cell_set(col, cells).with_label(label));
        }
    }
    if args.treat_all {
        out.push(Policy::treat_all());
    }
    if args.treat_none {
        out.push(Policy::treat_none());
    }
    Ok(out)
}

/// Resolves the first-stage cell column. A continuous column is replaced
/// by quantile bins appended as `<name>_bin`; without any covariate, and
/// under IPW, a constant column gives a single cell.
fn cell_column(args: &AnalyzeArgs, sample: Sample) -> Result<(Sample, usize, String)> {
    let chosen = if args.ipw {
        None
    } else {
        args.cell_col.as_deref().or(args.policy_col.as_deref())
    };
    let name = match chosen {
        Some(n) => n.to_string(),
        None => {
            let mut covs = sample.covariates().to_vec();
            covs.push(Covariate::discrete("_all", vec![0.0; sample.n()]));
            let s = Sample::new(sample.treat().to_vec(), sample.outcome().to_vec(), covs)?;
            let col = s.ncols() - 1;
            return Ok((s, col, "_all".into()));
        }
    };
    let col = column(&sample, &name)?;
    match (sample.covariate(col)?.kind, args.bins) {
        (CovariateKind::Discrete, None) => Ok((sample, col, name)),
        (CovariateKind::Discrete, Some(_)) => bail!("--bins applies to a continuous cell column; {name:?} is discrete"),
        (CovariateKind::Continuous, None) => {
            bail!("cell column {name:?} is continuous; give --bins or a discrete --cell-col")
        }
        (CovariateKind::Continuous, Some(b)) => {
            let ids = bin_covariate(&sample, col, b)?.covariate(col)?.values.clone();
            let bin_name = format!("{name}_bin");
            let mut covs = sample.covariates().to_vec();
            covs.push(Covariate::discrete(bin_name.clone(), ids));
            let s = Sample::new(sample.treat().to_vec(), sample.outcome().to_vec(), covs)?;
            let col = s.ncols() - 1;
            Ok((s, col, bin_name))
        }
    }
}

fn flat_table(out: &AnalyzeOutput) -> Table {
    let mut t = Table::new(&["kind", "name", "value", "w_hat", "sigma_hat", "std_error", "crit", "argmax"]);
    for e in &out.estimates {
        t.push(vec![
            "estimate".into(),
            e.policy.clone(),
            num(e.naive_lcb),
            num(e.w_hat),
            num(e.sigma_hat),
            num(e.std_error),
            String::new(),
            String::new(),
        ]);
    }
    for (m, l) in &out.lcbs {
        t.push(vec![
            "lcb".into(),
            m.clone(),
            num(l.value),
            String::new(),
            String::new(),
            String::new(),
            num(l.crit),
            l.argmax.clone().unwrap_or_default(),
        ]);
    }
    t
}

fn terminal_table(out: &AnalyzeOutput) -> Table {
    let mut t = Table::new(&["", "estimate", "s.e.", "LCB", "crit", "argmax"]);
    for e in &out.estimates {
        t.push(vec![
            e.policy.clone(),
            short(e.w_hat),
            short(e.std_error),
            short(e.naive_lcb),
            String::new(),
            String::new(),
        ]);
    }
    for (m, l) in &out.lcbs {
        t.push(vec![
            m.clone(),
            String::new(),
            String::new(),
            short(l.value),
            short(l.crit),
            l.argmax.clone().unwrap_or_default(),
        ]);
    }
    t
}

/// Reads an `analyze` JSON document back.
pub fn read_output(path: &Path) -> Result<AnalyzeOutput> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let version = value.get("spec_version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if version != SPEC_VERSION {
        bail!(
            "schema mismatch: {} has spec_version {:?}, expected {SPEC_VERSION:?}",
            path.display(),
            version
        );
    }
    let command = value.get("command").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if command != "analyze" {
        bail!("schema mismatch: {} comes from command {:?}, expected \"analyze\"", path.display(), command);
    }
    serde_json::from_value(value).with_context(|| format!("schema mismatch: {} has unexpected fields", path.display()))
}
