//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use welfare_lcb::dgp::{Design, MarginDgp};
use welfare_lcb::{score_panel, Policy, QpProblem, ScorePanel};

/// Score panel of `j` upper-tail cutoff rules on a margin-design sample
/// of size `n`.
pub fn margin_panel(j: usize, n: usize, seed: u64) -> ScorePanel {
    let design = Design::Margin {
        dgp: MarginDgp::at_rate(5.0, 1.0, n, 0.05).expect("valid design"),
        bins: 20,
    };
    let sample = design.sample(n, seed).expect("sample");
    let (scored, opts) = design.scoring(&sample).expect("scoring");
    let policies: Vec<Policy> = (0..j)
        .map(|k| {
            let c = k as f64 / (2 * j) as f64;
            Policy::predicate(format!("x>={c}"), move |row: &[f64]| row[0] >= c)
        })
        .collect();
    score_panel(&scored, &opts, &policies).expect("panel")
}

/// A well-conditioned `j`-dimensional projection problem with a mix of
/// positive and negative coordinates.
pub fn qp_problem(j: usize) -> QpProblem {
    let a = DMatrix::from_fn(j, j, |r, c| ((r * 7 + c * 3) as f64).sin());
    let sigma = &a * a.transpose() + DMatrix::identity(j, j);
    let x = DVector::from_fn(j, |r, _| ((r as f64) * 1.3).cos());
    QpProblem::new(x, sigma)
}
