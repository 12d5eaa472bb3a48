//! Invertibility constant of the Dirichlet problem and the smallest
//! eigenvalue of the discrete operator.
//!
//! `K(ω, R, θ)` is the norm of `g ↦ φ` from `C⁰_θ` to `C⁰` on the grid, i.e.
//! the max weighted absolute row sum of the inverse matrix:
//! `K = max_i Σ_j |G_ij| / cosh(θ x_j)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::banded::SymBandLdl;
use crate::error::{Error, Result};
use crate::norms::{NormContext, Projector};
use crate::operator::DiscreteOperator;

/// Largest interior unknown count the exact norm is attempted for.
pub const EXACT_BUDGET: usize = 200_000;

/// Dropped columns may change `K` by at most this fraction.
pub const TRUNCATION_REL: f64 = 1e-14;

pub const ESTIMATE_RESTARTS: usize = 5;

/// Seed of the estimator's random restarts unless one is given.
pub const DEFAULT_SEED: u64 = 42;

/// Result of the exact norm computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactNorm {
    pub value: f64,
    /// Columns of the inverse actually formed.
    pub columns: usize,
    /// Upper bound on what the skipped columns could add to any row sum.
    pub tail_bound: f64,
}

/// Smallest eigenvalue from inverse iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    /// A shift `s` for which `L - s I` factored with all pivots positive,
    /// hence `λ_min > s`.
    pub certified_lower: f64,
    pub iterations: usize,
}

/// `K` for the unconstrained problem.
pub fn inv_constant_exact(op: &DiscreteOperator, ctx: NormContext) -> Result<f64> {
    Ok(exact_norm(op, ctx, None)?.value)
}

/// `K` restricted to right-hand sides in the range of `projector`.
pub fn constrained_inv_constant_exact(
    op: &DiscreteOperator,
    ctx: NormContext,
    projector: &Projector,
) -> Result<f64> {
    Ok(exact_norm(op, ctx, Some(projector))?.value)
}

/// [`exact_norm_with_bound`] with the eigenvalue bound computed here.
pub fn exact_norm(
    op: &DiscreteOperator,
    ctx: NormContext,
    projector: Option<&Projector>,
) -> Result<ExactNorm> {
    check_budget(op)?;
    let lower = certified_lower_eigenvalue(op)?;
    exact_norm_with_bound(op, ctx, projector, lower)
}

fn check_budget(op: &DiscreteOperator) -> Result<()> {
    let m = op.dim();
    if m > EXACT_BUDGET {
        return Err(Error::BudgetExceeded {
            unknowns: m,
            budget: EXACT_BUDGET,
        });
    }
    Ok(())
}

/// Exact `∞`-norm of `g ↦ solve(P (W g))` where `W = diag(1/cosh(θx))` and
/// `P` is the optional orthogonality projector.
///
/// Columns of the composed map are formed from the centre outward (largest
/// weight first) and accumulated into absolute row sums. Every remaining
/// column `j` is bounded by `w_j (‖G‖max + Σ_k |c_k(e_j)| ‖G p_k‖∞)` with
/// `‖G‖max ≤ 1/s` for a certified eigenvalue bound `0 < s < λ_min`; once the
/// bound on everything not yet formed drops below [`TRUNCATION_REL`] times
/// the current maximum, the remaining columns are skipped. With `s = 0` all
/// columns are formed.
pub fn exact_norm_with_bound(
    op: &DiscreteOperator,
    ctx: NormContext,
    projector: Option<&Projector>,
    lower_eigenvalue: f64,
) -> Result<ExactNorm> {
    check_budget(op)?;
    let m = op.dim();
    let ldl = op.factorization()?;
    let grid = *op.grid();
    let n = grid.len();

    // columns ordered by decreasing weight: node index by |x|, then component
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let xa = grid.x(a / 2 + 1).abs();
        let xb = grid.x(b / 2 + 1).abs();
        xa.partial_cmp(&xb).unwrap().then(a.cmp(&b))
    });
    let weight = |col: usize| ctx.inverse_weight(grid.x(col / 2 + 1));

    // images of the projection carriers
    let carrier_images: Vec<Vec<f64>> = match projector {
        Some(p) => p
            .carriers()
            .iter()
            .map(|c| {
                let mut v = c.interior_interleaved();
                ldl.solve_in_place(&mut v);
                v
            })
            .collect(),
        None => Vec::new(),
    };
    let image_sup: Vec<f64> = carrier_images
        .iter()
        .map(|v| v.iter().fold(0.0f64, |a, x| a.max(x.abs())))
        .collect();
    let coefficients = |col: usize| -> Vec<f64> {
        match projector {
            Some(p) => p.unit_coefficients(col / 2 + 1, col % 2),
            None => Vec::new(),
        }
    };

    let g_max = if lower_eigenvalue > 0.0 {
        1.0 / lower_eigenvalue
    } else {
        f64::INFINITY
    };
    let column_bound = |col: usize| -> f64 {
        let c = coefficients(col);
        let extra: f64 = c.iter().zip(&image_sup).map(|(a, s)| a.abs() * s).sum();
        weight(col) * (g_max + extra)
    };
    // suffix sums of the bounds in processing order
    let mut tail = vec![0.0; m + 1];
    if g_max.is_finite() {
        for k in (0..m).rev() {
            tail[k] = tail[k + 1] + column_bound(order[k]);
        }
    } else {
        tail.iter_mut().for_each(|t| *t = f64::INFINITY);
    }

    let mut acc = vec![0.0; m];
    let mut col_buf = vec![0.0; m];
    let mut done = 0;
    let mut batch = (2 * (n / 16).max(64)).min(m);
    loop {
        let end = (done + batch).min(m);
        for &col in &order[done..end] {
            ldl.solve_unit(col, &mut col_buf);
            let c = coefficients(col);
            for (ck, img) in c.iter().zip(&carrier_images) {
                for (v, y) in col_buf.iter_mut().zip(img) {
                    *v -= ck * y;
                }
            }
            let w = weight(col);
            for (a, v) in acc.iter_mut().zip(&col_buf) {
                *a += w * v.abs();
            }
        }
        done = end;
        let current = acc.iter().copied().fold(0.0, f64::max);
        if done == m || tail[done] <= TRUNCATION_REL * current {
            let tail_bound = if done == m { 0.0 } else { tail[done] };
            return Ok(ExactNorm {
                value: current,
                columns: done,
                tail_bound,
            });
        }
        batch *= 2;
    }
}

/// Finds a shift `s > 0` below the smallest eigenvalue, certified by a
/// positive-definite `L D Lᵀ` of `L - s I`.
pub fn certified_lower_eigenvalue(op: &DiscreteOperator) -> Result<f64> {
    let estimate = smallest_eigenvalue(op, 1e-10)?;
    Ok(estimate.certified_lower)
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    norm
}

const WARMUP_ITERS: usize = 40;
const MAX_EIG_ITERS: usize = 5000;

/// Smallest eigenvalue of the interior matrix by inverse iteration.
///
/// A few unshifted steps with the cached factorization give a Rayleigh
/// quotient `μ ≥ λ_min`; the iteration then continues with the largest shift
/// `s = μ (1 - δ)` whose factorization is positive definite, which both
/// accelerates convergence and certifies `λ_min > s`.
pub fn smallest_eigenvalue(op: &DiscreteOperator, eig_tol: f64) -> Result<EigenEstimate> {
    let m = op.dim();
    let base = op.factorization()?;
    let mut x: Vec<f64> = (0..m)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + 0.25 * (0.37 * i as f64).sin())
        })
        .collect();
    normalize(&mut x);
    let mut mu = op.rayleigh_quotient(&x);
    let mut iterations = 0;
    for _ in 0..WARMUP_ITERS {
        base.solve_in_place(&mut x);
        normalize(&mut x);
        iterations += 1;
        let next = op.rayleigh_quotient(&x);
        let change = (next - mu).abs();
        mu = next;
        if change < eig_tol * mu.abs() {
            break;
        }
    }

    let pivot_tol = op.pivot_tolerance();
    let mut shifted: Option<(f64, SymBandLdl)> = None;
    for delta in [1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9] {
        let s = mu * (1.0 - delta);
        if let Ok(f) = SymBandLdl::factor(&op.band().shifted(s), pivot_tol * 1e-6) {
            if f.is_positive_definite() {
                shifted = Some((s, f));
                break;
            }
        }
    }
    let (shift, factor) = match shifted {
        Some(v) => v,
        None => {
            if !base.is_positive_definite() {
                return Err(Error::NoConvergence {
                    iterations,
                    last: mu,
                });
            }
            // only s = 0 is certified
            (0.0, base.clone())
        }
    };

    let mut stable = 0;
    loop {
        if iterations >= MAX_EIG_ITERS {
            return Err(Error::NoConvergence {
                iterations,
                last: mu,
            });
        }
        factor.solve_in_place(&mut x);
        normalize(&mut x);
        iterations += 1;
        let next = op.rayleigh_quotient(&x);
        let change = (next - mu).abs();
        mu = next;
        if change < eig_tol * mu.abs() {
            stable += 1;
            if stable >= 2 {
                break;
            }
        } else {
            stable = 0;
        }
    }
    Ok(EigenEstimate {
        value: mu,
        certified_lower: shift,
        iterations,
    })
}

/// Lower estimate of `K` with the default 5 seeded restarts.
pub fn inv_constant_estimate(op: &DiscreteOperator, ctx: NormContext, max_iters: usize) -> Result<f64> {
    estimate_norm(op, ctx, None, max_iters, ESTIMATE_RESTARTS, DEFAULT_SEED)
}

/// Lower estimate of the norm of `G P W` by the 1-norm power estimator
/// applied to its transpose `W Pᵀ G`, maximized over restarts.
///
/// Each step costs two banded solves. The first start is the uniform vector,
/// later ones are random sign vectors drawn from `seed`, so more restarts
/// never give a smaller estimate.
pub fn estimate_norm(
    op: &DiscreteOperator,
    ctx: NormContext,
    projector: Option<&Projector>,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    let ldl = op.factorization()?;
    let grid = *op.grid();
    let m = op.dim();
    let w: Vec<f64> = (0..m)
        .map(|i| ctx.inverse_weight(grid.x(i / 2 + 1)))
        .collect();
    // B = W Pᵀ G;  Bᵀ y = G P W y
    let apply_b = |x: &[f64]| -> Vec<f64> {
        let mut y = x.to_vec();
        ldl.solve_in_place(&mut y);
        if let Some(p) = projector {
            p.project_transpose_interior(&mut y);
        }
        y.iter_mut().zip(&w).for_each(|(v, wi)| *v *= wi);
        y
    };
    let apply_bt = |y: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = y.iter().zip(&w).map(|(v, wi)| v * wi).collect();
        if let Some(p) = projector {
            p.project_interior(&mut z);
        }
        ldl.solve_in_place(&mut z);
        z
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for restart in 0..restarts.max(1) {
        let mut x: Vec<f64> = if restart == 0 {
            vec![1.0 / m as f64; m]
        } else {
            (0..m)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 } / m as f64)
                .collect()
        };
        let mut estimate = 0.0f64;
        let mut last_index = usize::MAX;
        for _ in 0..max_iters.max(1) {
            let y = apply_b(&x);
            let value: f64 = y.iter().map(|v| v.abs()).sum();
            if value <= estimate {
                break;
            }
            estimate = value;
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = apply_bt(&xi);
            let (j, zmax) = z.iter().enumerate().fold((0, 0.0f64), |(bj, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bj, bv)
                }
            });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx || j == last_index {
                break;
            }
            last_index = j;
            x = vec![0.0; m];
            x[j] = 1.0;
        }
        best = best.max(estimate);
    }
    Ok(best)
}
