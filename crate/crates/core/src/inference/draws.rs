use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scores::ScorePanel;

use super::{CritMethod, LcbConfig};

/// Draws per RNG substream. Fixed so the draw array does not depend on the
/// thread count.
const CHUNK: usize = 1024;

/// Bits of the substream index reserved for the coordinate.
const COORD_BITS: usize = 24;

/// `n_sim` draws of the standardized vector `ξ_j / σ_j`, stored row-major.
///
/// Every critical value computed from one panel and config reads the same
/// array, so subset maxima are pointwise no larger than full maxima.
#[derive(Debug, Clone)]
pub struct StandardizedDraws {
    n_sim: usize,
    dim: usize,
    values: Vec<f64>,
}

impl StandardizedDraws {
    /// Gaussian draws with the correlation matrix implied by `cov`.
    pub fn gaussian(cov: &DMatrix<f64>, n_sim: usize, seed: u64) -> Result<Self> {
        let sd = check_diagonal(cov)?;
        let j = cov.nrows();
        if j >= 1 << COORD_BITS {
            return Err(crate::error::invalid("cov_hat", "dimension too large"));
        }
        let corr = DMatrix::from_fn(j, j, |a, b| if a == b { 1.0 } else { cov[(a, b)] / (sd[a] * sd[b]) });
        let factor = psd_factor(corr);
        let mut values = vec![0.0; n_sim * j];
        values
            .par_chunks_mut(CHUNK * j)
            .enumerate()
            .for_each(|(c, block)| {
                let rows = block.len() / j;
                // one substream per coordinate: coordinate k sees the same
                // normals whatever the dimension
                let mut e = DMatrix::zeros(j, rows);
                for k in 0..j {
                    let mut rng = substream(seed, (c << COORD_BITS) | k);
                    for r in 0..rows {
                        e[(k, r)] = rng.sample(StandardNormal);
                    }
                }
                let z = &factor * e;
                block.copy_from_slice(z.as_slice());
            });
        Ok(Self { n_sim, dim: j, values })
    }

    /// Multiplier draws `N^{-1/2} Σ_i e_i (ψ_i − Ŵ) / σ̂` with `e_i ~ N(0,1)`.
    pub fn multiplier(panel: &ScorePanel, n_sim: usize, seed: u64) -> Result<Self> {
        let sd = check_diagonal(panel.cov_hat())?;
        let n = panel.n();
        let j = panel.len();
        let root_n = (n as f64).sqrt();
        let mut centered = panel.scores().clone();
        for (c, mut col) in centered.column_iter_mut().enumerate() {
            let shift = panel.w_hat()[c];
            let scale = 1.0 / (root_n * sd[c]);
            col.apply(|v| *v = (*v - shift) * scale);
        }
        let mut values = vec![0.0; n_sim * j];
        values
            .par_chunks_mut(CHUNK * j)
            .enumerate()
            .for_each(|(c, block)| {
                let mut rng = substream(seed, c);
                let rows = block.len() / j;
                let e = DMatrix::from_fn(rows, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let z = e * &centered;
                for (r, row) in block.chunks_mut(j).enumerate() {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = z[(r, k)];
                    }
                }
            });
        Ok(Self { n_sim, dim: j, values })
    }

    pub fn for_panel(panel: &ScorePanel, cfg: &LcbConfig) -> Result<Self> {
        match cfg.crit_method {
            CritMethod::Gaussian => Self::gaussian(panel.cov_hat(), cfg.n_sim, cfg.seed),
            CritMethod::Multiplier => Self::multiplier(panel, cfg.n_sim, cfg.seed),
        }
    }

    pub fn n_sim(&self) -> usize {
        self.n_sim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    /// `(1−α)`-quantile of `max_{j ∈ subset} Z_j`; `0` for an empty subset.
    pub fn max_quantile(&self, subset: &[usize], alpha: f64) -> f64 {
        if subset.is_empty() {
            return 0.0;
        }
        let mut maxima: Vec<f64> = self
            .rows()
            .map(|z| subset.iter().map(|&k| z[k]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        order_statistic_quantile(&mut maxima, alpha)
    }

    /// Quantiles of the running maximum over the prefixes of `order`: entry
    /// `k` is the quantile for the first `k + 1` indices.
    pub fn nested_max_quantiles(&self, order: &[usize], alpha: f64) -> Vec<f64> {
        let mut running = vec![f64::NEG_INFINITY; self.n_sim];
        let mut scratch = vec![0.0; self.n_sim];
        order
            .iter()
            .map(|&k| {
                for (m, z) in running.iter_mut().zip(self.rows()) {
                    *m = m.max(z[k]);
                }
                scratch.copy_from_slice(&running);
                order_statistic_quantile(&mut scratch, alpha)
            })
            .collect()
    }
}

/// Order statistic at rank `⌈(1−α)·n⌉` (1-based). Reorders `values`.
pub fn order_statistic_quantile(values: &mut [f64], alpha: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty set");
    let n = values.len();
    // the offset keeps exact products such as 0.95 * 100000 from rounding up
    let rank = (((1.0 - alpha) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

fn substream(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn check_diagonal(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    if cov.nrows() == 0 || cov.nrows() != cov.ncols() {
        return Err(crate::error::invalid("cov_hat", "must be a nonempty square matrix"));
    }
    (0..cov.nrows())
        .map(|j| {
            let v = cov[(j, j)];
            if v > 0.0 && v.is_finite() {
                Ok(v.sqrt())
            } else {
                Err(Error::DegenerateMoment(j))
            }
        })
        .collect()
}

/// Lower-triangular `L` with `L L' = R` for positive semidefinite `R`.
/// Columns with a vanishing pivot are zero, so a moment that duplicates an
/// earlier one reuses that moment's draw exactly.
fn psd_factor(r: DMatrix<f64>) -> DMatrix<f64> {
    let j = r.nrows();
    let mut l = DMatrix::zeros(j, j);
    for c in 0..j {
        let d = r[(c, c)] - (0..c).map(|k| l[(c, k)] * l[(c, k)]).sum::<f64>();
        if d <= 1e-12 {
            continue;
        }
        let root = d.sqrt();
        l[(c, c)] = root;
        for i in c + 1..j {
            let s = r[(i, c)] - (0..c).map(|k| l[(i, k)] * l[(c, k)]).sum::<f64>();
            l[(i, c)] = s / root;
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::normal_quantile;

    #[test]
    fn quantile_rank() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(order_statistic_quantile(&mut v, 0.05), 95.0);
        let mut v: Vec<f64> = (1..=1000).rev().map(f64::from).collect();
        assert_eq!(order_statistic_quantile(&mut v, 0.05), 950.0);
        let mut v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(order_statistic_quantile(&mut v, 0.01), 10.0);
        assert_eq!(order_statistic_quantile(&mut [3.0], 0.5), 3.0);
    }

    #[test]
    fn correlation_is_reproduced() {
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.2, 1.2, 1.0]);
        let d = StandardizedDraws::gaussian(&cov, 200_000, 3).unwrap();
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        for z in d.rows() {
            s11 += z[0] * z[0];
            s22 += z[1] * z[1];
            s12 += z[0] * z[1];
        }
        let n = d.n_sim() as f64;
        assert!((s11 / n - 1.0).abs() < 0.01);
        assert!((s22 / n - 1.0).abs() < 0.01);
        assert!((s12 / n - 0.6).abs() < 0.01);
    }

    #[test]
    fn seeded_and_thread_independent() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 2.0, 0.2, 0.1, 0.2, 1.5]);
        let a = StandardizedDraws::gaussian(&cov, 5000, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| StandardizedDraws::gaussian(&cov, 5000, 11).unwrap());
        assert_eq!(a.values, b.values);
        let c = StandardizedDraws::gaussian(&cov, 5000, 12).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let err = StandardizedDraws::gaussian(&cov, 1000, 0).unwrap_err();
        assert_eq!(err, Error::DegenerateMoment(1));
        assert!(err.to_string().contains("degenerate moment"));
    }

    #[test]
    fn nested_matches_direct() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 1.0]);
        let d = StandardizedDraws::gaussian(&cov, 4000, 5).unwrap();
        let order = [2, 0, 1];
        let nested = d.nested_max_quantiles(&order, 0.1);
        for k in 0..3 {
            assert_eq!(nested[k], d.max_quantile(&order[..=k], 0.1));
        }
        assert!(nested.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(d.max_quantile(&[], 0.1), 0.0);
    }

    #[test]
    fn multiplier_draws_are_standardized() {
        use crate::scores::ScorePanel;
        let n = 400;
        let scores = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 + j as f64 * (i % 2) as f64);
        let panel = ScorePanel::from_scores(scores, vec!["a".into(), "b".into()]).unwrap();
        let d = StandardizedDraws::multiplier(&panel, 20_000, 1).unwrap();
        let var = d.rows().map(|z| z[0] * z[0]).sum::<f64>() / 20_000.0;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        let q = d.max_quantile(&[0], 0.05);
        assert!((q - normal_quantile(0.95)).abs() < 0.05, "{q}");
    }
}
