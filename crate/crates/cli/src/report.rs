use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use welfare_lcb::normal_quantile;

use crate::analyze::{read_output, AnalyzeOutput};
use crate::args::ReportArgs;
use crate::output::{emit, num, opt_num, short, Table, SPEC_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// One policy's estimate with its naive bound.
    Policy,
    /// A class-level bound; the estimate is the best policy estimate.
    Lcb,
    /// User-supplied estimate and standard error.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub source: String,
    pub kind: RowKind,
    pub label: String,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub lcb: f64,
    /// Estimate minus the reference estimate.
    pub welfare_gap: Option<f64>,
    /// `100 (1 − LCB / LCB_ref)`.
    pub relative_lcb_gap_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutput {
    pub spec_version: String,
    pub command: String,
    pub reference: String,
    pub rows: Vec<ReportRow>,
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let out = report(args)?;
    emit(&args.output, &out, &flat_table(&out), &terminal_table(&out))
}

fn source_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Rows contributed by one `analyze` document.
pub fn rows_from(source: &str, doc: &AnalyzeOutput) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = doc
        .estimates
        .iter()
        .map(|e| ReportRow {
            source: source.into(),
            kind: RowKind::Policy,
            label: e.policy.clone(),
            estimate: Some(e.w_hat),
            std_error: Some(e.std_error),
            lcb: e.naive_lcb,
            welfare_gap: None,
            relative_lcb_gap_pct: 0.0,
        })
        .collect();
    let best = doc.estimates.iter().map(|e| e.w_hat).reduce(f64::max);
    for (method, l) in &doc.lcbs {
        rows.push(ReportRow {
            source: source.into(),
            kind: RowKind::Lcb,
            label: method.clone(),
            estimate: best,
            std_error: None,
            lcb: l.value,
            welfare_gap: None,
            relative_lcb_gap_pct: 0.0,
        });
    }
    rows
}

/// Parses `label=estimate,std_error` into a row bounded at level `alpha`.
pub fn external_row(spec: &str, alpha: f64) -> Result<ReportRow> {
    let (label, nums) = spec
        .split_once('=')
        .with_context(|| format!("--external expects label=estimate,std_error, got {spec:?}"))?;
    let (w, se) = nums
        .split_once(',')
        .with_context(|| format!("--external expects label=estimate,std_error, got {spec:?}"))?;
    let w: f64 = w.trim().parse().with_context(|| format!("external estimate {w:?} is not a number"))?;
    let se: f64 = se.trim().parse().with_context(|| format!("external standard error {se:?} is not a number"))?;
    if !(se >= 0.0) {
        bail!("external standard error must be nonnegative, got {se}");
    }
    Ok(ReportRow {
        source: "external".into(),
        kind: RowKind::External,
        label: label.trim().into(),
        estimate: Some(w),
        std_error: Some(se),
        lcb: w - normal_quantile(1.0 - alpha) * se,
        welfare_gap: None,
        relative_lcb_gap_pct: 0.0,
    })
}

/// Fills the gap columns against the row matching `reference` (by label
/// or `source/label`), or the first row.
pub fn fill_gaps(rows: &mut [ReportRow], reference: Option<&str>) -> Result<String> {
    let idx = match reference {
        None => 0,
        Some(r) => rows
            .iter()
            .position(|row| row.label == r || format!("{}/{}", row.source, row.label) == r)
            .with_context(|| format!("reference row {r:?} not found"))?,
    };
    let reference = rows.get(idx).cloned().context("nothing to report")?;
    for row in rows.iter_mut() {
        row.welfare_gap = match (row.estimate, reference.estimate) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        row.relative_lcb_gap_pct = 100.0 * (1.0 - row.lcb / reference.lcb);
    }
    Ok(format!("{}/{}", reference.source, reference.label))
}

pub fn report(args: &ReportArgs) -> Result<ReportOutput> {
    let mut rows = Vec::new();
    for path in &args.inputs {
        let doc = read_output(path)?;
        rows.extend(rows_from(&source_name(path), &doc));
    }
    for e in &args.external {
        rows.push(external_row(e, args.alpha)?);
    }
    let reference = fill_gaps(&mut rows, args.reference.as_deref())?;
    Ok(ReportOutput {
        spec_version: SPEC_VERSION.into(),
        command: "report".into(),
        reference,
        rows,
    })
}

fn flat_table(out: &ReportOutput) -> Table {
    let mut t = Table::new(&[
        "source",
        "kind",
        "label",
        "estimate",
        "std_error",
        "lcb",
        "welfare_gap",
        "relative_lcb_gap_pct",
    ]);
    for r in &out.rows {
        t.push(vec![
            r.source.clone(),
            kind_name(r.kind).into(),
            r.label.clone(),
            opt_num(r.estimate),
            opt_num(r.std_error),
            num(r.lcb),
            opt_num(r.welfare_gap),
            num(r.relative_lcb_gap_pct),
        ]);
    }
    t
}

fn kind_name(k: RowKind) -> &'static str {
    match k {
        RowKind::Policy => "policy",
        RowKind::Lcb => "lcb",
        RowKind::External => "external",
    }
}

fn terminal_table(out: &ReportOutput) -> Table {
    let mut t = Table::new(&["source", "kind", "label", "estimate", "s.e.", "LCB", "gap", "LCB gap"]);
    let o = |v: Option<f64>| v.map(short).unwrap_or_default();
    for r in &out.rows {
        t.push(vec![
            r.source.clone(),
            kind_name(r.kind).into(),
            r.label.clone(),
            o(r.estimate),
            o(r.std_error),
            short(r.lcb),
            o(r.welfare_gap),
            format!("{:.0}%", r.relative_lcb_gap_pct),
        ]);
    }
    t
}
