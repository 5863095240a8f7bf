//! Projection onto the nonpositive orthant in the `Σ⁻¹` metric,
//!
//! ```text
//! min_{t ≤ 0} (x − t)' Σ⁻¹ (x − t),
//! ```
//!
//! solved through its dual `max_{u ≥ 0} x'u − ¼ u'Σu`. Writing `u = 2v`, the
//! dual is the bound-constrained problem `min_{v ≥ 0} ½ v'Σv − x'v`, whose
//! solution gives `t* = x − Σv` and objective `v'Σv`. No inverse of `Σ` is
//! ever formed.
//!
//! The same solve yields the ratio maximization over the simplex,
//! `max_λ λ'T / √(λ'Σλ)`, as the square root of the objective with
//! `λ = u / 1'u`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Above this dimension the solver switches to coordinate descent.
pub const ACTIVE_SET_MAX_DIM: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub x: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl QpProblem {
    /// Problem with default tolerance `1e-10` and `10·J² + 1000` iterations.
    pub fn new(x: DVector<f64>, sigma: DMatrix<f64>) -> Self {
        let j = x.len();
        Self {
            x,
            sigma,
            tol: 1e-10,
            max_iter: 10 * j * j + 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub objective: f64,
    pub t_star: DVector<f64>,
    /// Lagrange multipliers `u ≥ 0` of the constraints `t ≤ 0`.
    pub dual_u: DVector<f64>,
    pub iterations: usize,
    /// Largest violation among primal feasibility, dual feasibility and
    /// complementary slackness.
    pub kkt_residual: f64,
}

fn validate(p: &QpProblem) -> Result<()> {
    let j = p.x.len();
    if j == 0 {
        return Err(invalid("x", "empty vector"));
    }
    if p.sigma.shape() != (j, j) {
        return Err(invalid(
            "sigma",
            format!("shape {:?} does not match dimension {j}", p.sigma.shape()),
        ));
    }
    if p.x.iter().chain(p.sigma.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("x/sigma", "non-finite entry"));
    }
    if (0..j).any(|k| p.sigma[(k, k)] <= 0.0) {
        return Err(invalid("sigma", "diagonal must be strictly positive"));
    }
    Ok(())
}

/// Unique minimizer of `(x − t)'Σ⁻¹(x − t)` over `t ≤ 0`.
pub fn project_nonpositive(p: &QpProblem) -> Result<QpSolution> {
    validate(p)?;
    let j = p.x.len();
    let scale = 1.0 + p.x.norm();

    // all slack: t = x is feasible and optimal
    if p.x.iter().all(|&v| v <= 0.0) {
        return Ok(QpSolution {
            objective: 0.0,
            t_star: p.x.clone(),
            dual_u: DVector::zeros(j),
            iterations: 0,
            kkt_residual: 0.0,
        });
    }

    let (v, iterations) = if j > ACTIVE_SET_MAX_DIM {
        coordinate_descent(p, scale)?
    } else {
        active_set(p, scale)?
    };
    Ok(finish(p, v, iterations))
}

fn finish(p: &QpProblem, v: DVector<f64>, iterations: usize) -> QpSolution {
    let sv = &p.sigma * &v;
    let mut t_star = &p.x - &sv;
    for k in 0..t_star.len() {
        if v[k] > 0.0 {
            t_star[k] = 0.0;
        } else {
            t_star[k] = t_star[k].min(0.0);
        }
    }
    let raw = &p.x - &sv;
    let dual_u = &v * 2.0;
    let mut residual: f64 = 0.0;
    for k in 0..v.len() {
        residual = residual
            .max(raw[k].max(0.0))
            .max((-dual_u[k]).max(0.0))
            .max((raw[k] * dual_u[k]).abs());
    }
    QpSolution {
        objective: v.dot(&sv).max(0.0),
        t_star,
        dual_u,
        iterations,
        kkt_residual: residual,
    }
}

fn solve_free(sigma: &DMatrix<f64>, x: &DVector<f64>, free: &[usize]) -> Option<DVector<f64>> {
    let sub = sigma.select_rows(free).select_columns(free);
    let rhs = DVector::from_iterator(free.len(), free.iter().map(|&k| x[k]));
    Cholesky::new(sub).map(|c| c.solve(&rhs))
}

/// Lawson–Hanson style primal active set on `min ½v'Σv − x'v, v ≥ 0`.
fn active_set(p: &QpProblem, scale: f64) -> Result<(DVector<f64>, usize)> {
    let j = p.x.len();
    let sigma = &p.sigma;
    let x = &p.x;
    let thresh = p.tol * scale;
    let mut v = DVector::<f64>::zeros(j);
    let mut free: Vec<usize> = Vec::with_capacity(j);
    let mut blocked = vec![false; j];
    let mut iter = 0usize;

    loop {
        let w = x - sigma * &v;
        let next = (0..j)
            .filter(|k| !free.contains(k) && !blocked[*k] && w[*k] > thresh)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
        let Some(enter) = next else {
            return Ok((v, iter));
        };
        free.push(enter);
        free.sort_unstable();
        blocked.iter_mut().for_each(|b| *b = false);

        loop {
            iter += 1;
            if iter > p.max_iter {
                let w = x - sigma * &v;
                let residual = (0..j).map(|k| w[k].max(0.0)).fold(0.0, f64::max);
                return Err(Error::QpNotConverged {
                    iterations: iter - 1,
                    residual,
                });
            }
            let z = solve_free(sigma, x, &free).ok_or_else(|| invalid("sigma", "not positive definite"))?;
            if z.iter().all(|&zk| zk > 0.0) {
                for (pos, &k) in free.iter().enumerate() {
                    v[k] = z[pos];
                }
                break;
            }
            // step toward z until the first free coordinate hits zero
            let mut alpha = f64::INFINITY;
            for (pos, &k) in free.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let denom = v[k] - z[pos];
                    let a = if denom > 0.0 { v[k] / denom } else { 0.0 };
                    alpha = alpha.min(a);
                }
            }
            for (pos, &k) in free.iter().enumerate() {
                v[k] += alpha * (z[pos] - v[k]);
            }
            let before = free.len();
            free.retain(|&k| {
                if v[k] <= 0.0 || (v[k] < f64::EPSILON * scale && alpha < 1.0) {
                    v[k] = 0.0;
                    false
                } else {
                    true
                }
            });
            if free.len() == before {
                // no coordinate left the set: drop the most negative target
                let (pos, _) = z
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .expect("free set is nonempty");
                let k = free.remove(pos);
                v[k] = 0.0;
            }
            if free.is_empty() {
                // the entering coordinate was infeasible on its own; skip it
                blocked[enter] = true;
                break;
            }
        }
    }
}

/// Projected coordinate descent on the same dual, for large `J`.
fn coordinate_descent(p: &QpProblem, scale: f64) -> Result<(DVector<f64>, usize)> {
    let j = p.x.len();
    let sigma = &p.sigma;
    let x = &p.x;
    let mut v = DVector::<f64>::zeros(j);
    let mut sv = DVector::<f64>::zeros(j);
    let thresh = p.tol * scale;
    for sweep in 1..=p.max_iter {
        let mut max_change: f64 = 0.0;
        for k in 0..j {
            let grad = sv[k] - x[k];
            let new = (v[k] - grad / sigma[(k, k)]).max(0.0);
            let delta = new - v[k];
            if delta != 0.0 {
                v[k] = new;
                sv.axpy(delta, &sigma.column(k), 1.0);
                max_change = max_change.max(delta.abs() * sigma[(k, k)]);
            }
        }
        if max_change <= thresh {
            return Ok((v, sweep));
        }
    }
    let w = x - sigma * &v;
    let residual = (0..j)
        .map(|k| if v[k] > 0.0 { w[k].abs() } else { w[k].max(0.0) })
        .fold(0.0, f64::max);
    Err(Error::QpNotConverged {
        iterations: p.max_iter,
        residual,
    })
}

/// Result of `max_{λ ∈ simplex} λ'T / √(λ'Σλ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRatio {
    pub value: f64,
    pub lambda: DVector<f64>,
    /// The optimum is `u = 0` (no positive direction); `lambda` is the first
    /// unit vector by convention.
    pub degenerate: bool,
}

/// Simplex ratio maximization via the projection dual.
pub fn dual_ratio_max(t: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DualRatio> {
    let sol = project_nonpositive(&QpProblem::new(t.clone(), sigma.clone()))?;
    let total: f64 = sol.dual_u.sum();
    if total <= 0.0 {
        let mut lambda = DVector::zeros(t.len());
        lambda[0] = 1.0;
        return Ok(DualRatio {
            value: 0.0,
            lambda,
            degenerate: true,
        });
    }
    Ok(DualRatio {
        value: sol.objective.sqrt(),
        lambda: &sol.dual_u / total,
        degenerate: false,
    })
}
