use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use welfare_lcb::{CritMethod, Kappa, LcbConfig, LcbMethod};

#[derive(Debug, Parser)]
#[command(name = "welfare-lcb", version, about = "Lower confidence bands for the optimal welfare of a policy class")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate welfare and lower bounds for a policy class on a CSV sample.
    Analyze(AnalyzeArgs),
    /// Closed-form moments and Monte Carlo experiments on synthetic designs.
    Simulate(SimulateArgs),
    /// Merge analyze outputs into comparison tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CritArg {
    Gaussian,
    Multiplier,
}

#[derive(Debug, Clone, Args)]
pub struct LcbArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Simulation draws for critical values.
    #[arg(long, default_value_t = 100_000)]
    pub nsim: usize,
    /// GMS tuning: "sqrt-log-n" or a nonnegative number.
    #[arg(long, default_value = "sqrt-log-n")]
    pub kappa: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// QLR covariance regularization scale.
    #[arg(long, default_value_t = 1e-8)]
    pub ridge: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub crit: CritArg,
}

impl LcbArgs {
    pub fn config(&self) -> Result<LcbConfig> {
        let kappa = parse_kappa(&self.kappa)?;
        let cfg = LcbConfig {
            alpha: self.alpha,
            n_sim: self.nsim,
            kappa,
            seed: self.seed,
            ridge: self.ridge,
            crit_method: match self.crit {
                CritArg::Gaussian => CritMethod::Gaussian,
                CritArg::Multiplier => CritMethod::Multiplier,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_kappa(s: &str) -> Result<Kappa> {
    if s == "sqrt-log-n" {
        return Ok(Kappa::SqrtLogN);
    }
    let k: f64 = s
        .parse()
        .with_context(|| format!("kappa must be \"sqrt-log-n\" or a number, got {s:?}"))?;
    if !(k >= 0.0 && k.is_finite()) {
        bail!("kappa must be nonnegative, got {k}");
    }
    Ok(Kappa::Fixed(k))
}

pub fn parse_methods(list: &[String]) -> Result<Vec<LcbMethod>> {
    list.iter()
        .map(|m| {
            LcbMethod::ALL
                .into_iter()
                .find(|x| x.name().eq_ignore_ascii_case(m))
                .with_context(|| format!("unknown method {m:?}; expected one of Naive, MaxLF, MaxGMS, QlrMix"))
        })
        .collect()
}

/// `"11,15,18"`, `"7..18"` (inclusive, unit step) or `"0..1:0.25"`.
pub fn parse_cutoffs(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, st)) => (h, st.trim().parse::<f64>().context("cutoff step")?),
            None => (rest, 1.0),
        };
        let lo: f64 = lo.trim().parse().context("cutoff range start")?;
        let hi: f64 = hi.trim().parse().context("cutoff range end")?;
        if !(step > 0.0) || !(hi >= lo) {
            bail!("cutoff range {s:?} needs start <= end and a positive step");
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| lo + k as f64 * step).collect());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("cutoff {:?} is not a number", v.trim()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyDirection {
    /// Treat when the covariate is at most the cutoff.
    Le,
    /// Treat when the covariate is at least the cutoff.
    Ge,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Binary treatment column.
    #[arg(long)]
    pub treatment: String,
    #[arg(long)]
    pub outcome: String,
    /// Covariate columns; all other columns when omitted.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Covariates to treat as continuous; the rest are discrete.
    #[arg(long, value_delimiter = ',')]
    pub continuous: Vec<String>,
    /// Covariate the cutoff and cell-set policies refer to.
    #[arg(long)]
    pub policy_col: Option<String>,
    /// Cutoff policies on the policy column.
    #[arg(long)]
    pub cutoffs: Option<String>,
    #[arg(long, value_enum, default_value = "le")]
    pub direction: PolicyDirection,
    /// Cell-set policy on the policy column, e.g. "9,10,11"; repeatable.
    #[arg(long)]
    pub cells: Vec<String>,
    #[arg(long)]
    pub treat_all: bool,
    #[arg(long)]
    pub treat_none: bool,
    /// Discrete covariate defining first-stage cells; defaults to the
    /// policy column.
    #[arg(long)]
    pub cell_col: Option<String>,
    /// Quantile bins for a continuous cell column.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Propensity: "known:<value>" or "cell".
    #[arg(long, default_value = "cell")]
    pub pi: String,
    /// Report welfare gains over treating nobody.
    #[arg(long)]
    pub gain: bool,
    /// Inverse-propensity weighting: zero outcome regressions, known
    /// propensity required.
    #[arg(long, conflicts_with_all = ["cross_fit", "cell_col", "bins", "no_smoothing"])]
    pub ipw: bool,
    /// Drop the +1 in the cell-mean denominators.
    #[arg(long)]
    pub no_smoothing: bool,
    /// Cross-fitting folds.
    #[arg(long)]
    pub cross_fit: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "MaxLF,MaxGMS,QlrMix")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub lcb: LcbArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn parse_pi(s: &str) -> Result<Option<f64>> {
    if s == "cell" {
        return Ok(None);
    }
    let v = s
        .strip_prefix("known:")
        .with_context(|| format!("--pi must be \"cell\" or \"known:<value>\", got {s:?}"))?;
    let p: f64 = v.parse().with_context(|| format!("propensity {v:?} is not a number"))?;
    if !(p > 0.0 && p < 1.0) {
        bail!("known propensity {p} is outside (0, 1)");
    }
    Ok(Some(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DgpArg {
    Dominance,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    TwoPoint,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Welfare,
    Gain,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub dgp: DgpArg,
    /// Sample size.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pi1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pi0: f64,
    /// Effect size; defaults to n^{-1/2} (dominance) or the critical rate
    /// for the margin design.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Cell variances for (d,x) = (1,1),(1,0),(0,1),(0,0).
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub variances: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "two-point")]
    pub family: FamilyArg,
    #[arg(long, value_enum, default_value = "welfare")]
    pub variant: VariantArg,
    /// Outcome bound of the margin design.
    #[arg(long = "m", default_value_t = 5.0)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    /// First-stage bins for the margin design.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Only the closed-form moments; no sampling.
    #[arg(long, conflicts_with_all = ["mse", "coverage", "rate_sweep"])]
    pub closed_form_only: bool,
    #[arg(long)]
    pub mse: bool,
    #[arg(long)]
    pub coverage: bool,
    /// Closed-form LCB gap over a grid of sample sizes (margin design).
    #[arg(long)]
    pub rate_sweep: bool,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000,1000000")]
    pub n_grid: Vec<usize>,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "Naive,MaxLF,MaxGMS,QlrMix")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub lcb: LcbArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// JSON outputs of `analyze`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Row label used as the reference for gap columns; first row when
    /// omitted.
    #[arg(long)]
    pub reference: Option<String>,
    /// Externally estimated row "label=estimate,std_error"; repeatable.
    #[arg(long)]
    pub external: Vec<String>,
    /// Level for the bounds of external rows.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}
