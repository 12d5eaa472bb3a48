//! Heteroclinic phase-separation profile `(V1, V2)`.
//!
//! Solves `-V1'' + V1 V2^2 = 0`, `-V2'' + V2 V1^2 = 0` with `V1(0) = V2(0) = 1`
//! and `V1(-x) = V2(x)` by damped Newton on a second-order finite-difference
//! discretization of the half line `[0, T]`, then mirrors the result onto
//! `[-T, 0]`.

pub mod cache;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_HALF_LENGTH: f64 = 12.0;
pub const DEFAULT_NODES: usize = 4801;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const TAIL_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;

const MAX_NEWTON_ITERS: usize = 60;
const MAX_HALVINGS: usize = 30;

/// Affine far-field behaviour `V1(x) ≈ A x + B` as `x → +∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticConstants {
    pub slope: f64,
    pub intercept: f64,
    /// Rate `c` of the Gaussian decay `|V1 - (A x + B)| ~ exp(-c x^2)`;
    /// infinite when the deviation never rises above rounding noise.
    pub c_fit: f64,
    /// Max deviation from the affine fit over the fit window.
    pub fit_residual: f64,
}

/// Sampled profile on the symmetric grid `x_j = -T + j h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub half_length: f64,
    pub newton_tol: f64,
    pub nodes: Vec<f64>,
    pub v1: Vec<f64>,
    pub dv1: Vec<f64>,
    pub v2: Vec<f64>,
    pub dv2: Vec<f64>,
    pub asymptotics: AsymptoticConstants,
}

/// Values of the profile and its derivative at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub v1: f64,
    pub dv1: f64,
    pub v2: f64,
    pub dv2: f64,
}

/// Shared node formula for half and full grids so mirrored nodes agree bit-for-bit.
fn node(j: usize, last: usize, half_length: f64) -> f64 {
    (2 * j as i64 - last as i64) as f64 / last as f64 * half_length
}

/// Second difference written as a difference of first differences.
/// For neighbouring values within a factor of two both subtractions are exact.
#[inline]
fn second_difference(prev: f64, mid: f64, next: f64) -> f64 {
    (next - mid) - (mid - prev)
}

/// Half-line Newton system. Unknowns are interleaved `(v1_j, v2_j)` for
/// `j = 1..M-1`; `v1_0 = v2_0 = 1` are fixed.
struct HalfLineSystem {
    m: usize,
    h2: f64,
}

impl HalfLineSystem {
    fn unknowns(&self) -> usize {
        2 * (self.m - 1)
    }

    fn split(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut v1 = vec![1.0; self.m];
        let mut v2 = vec![1.0; self.m];
        for j in 1..self.m {
            v1[j] = u[2 * (j - 1)];
            v2[j] = u[2 * (j - 1) + 1];
        }
        (v1, v2)
    }

    /// Residual vector. Row `2(j-1)` is the `v1` equation at node `j - 1`,
    /// row `2(j-1)+1` the `v2` equation at node `j` (or `v2(T) = 0` at the end).
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let (v1, v2) = self.split(u);
        let m = self.m;
        let mut f = vec![0.0; self.unknowns()];
        // node 0: the mirror ghost value v1(-h) = v2(h)
        f[0] = -second_difference(v2[1], 1.0, v1[1]) / self.h2 + 1.0;
        for k in 1..m - 1 {
            f[2 * k] = -second_difference(v1[k - 1], v1[k], v1[k + 1]) / self.h2
                + v1[k] * v2[k] * v2[k];
        }
        for j in 1..m - 1 {
            f[2 * (j - 1) + 1] = -second_difference(v2[j - 1], v2[j], v2[j + 1]) / self.h2
                + v2[j] * v1[j] * v1[j];
        }
        f[2 * (m - 2) + 1] = v2[m - 1] / self.h2;
        f
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        let (v1, v2) = self.split(u);
        let m = self.m;
        let inv = 1.0 / self.h2;
        let col1 = |j: usize| 2 * (j - 1);
        let col2 = |j: usize| 2 * (j - 1) + 1;
        let mut jac = BandMatrix::zeros(self.unknowns(), 4, 2);
        jac.add(0, col1(1), -inv);
        jac.add(0, col2(1), -inv);
        for k in 1..m - 1 {
            let row = 2 * k;
            jac.add(row, col1(k + 1), -inv);
            jac.add(row, col1(k), 2.0 * inv + v2[k] * v2[k]);
            if k >= 2 {
                jac.add(row, col1(k - 1), -inv);
            }
            jac.add(row, col2(k), 2.0 * v1[k] * v2[k]);
        }
        for j in 1..m - 1 {
            let row = col2(j);
            if j >= 2 {
                jac.add(row, col2(j - 1), -inv);
            }
            jac.add(row, col2(j), 2.0 * inv + v1[j] * v1[j]);
            jac.add(row, col2(j + 1), -inv);
            jac.add(row, col1(j), 2.0 * v1[j] * v2[j]);
        }
        jac.add(col2(m - 1), col2(m - 1), inv);
        jac
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

/// Solves for the profile on `[-T, T]` with `N` nodes (odd, so `x = 0` is a node).
pub fn solve_profile(half_length: f64, nodes: usize, newton_tol: f64) -> Result<ProfileTable> {
    if !(half_length >= 8.0) {
        return Err(Error::InvalidParameter(format!(
            "profile half-length must be at least 8, got {half_length}"
        )));
    }
    if nodes.is_multiple_of(2) || nodes < 17 {
        return Err(Error::InvalidParameter(format!(
            "profile node count must be odd and at least 17, got {nodes}"
        )));
    }
    if !(newton_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "newton tolerance must be positive, got {newton_tol}"
        )));
    }

    let last = nodes - 1;
    let m = nodes / 2 + 1;
    let h = 2.0 * half_length / last as f64;
    let system = HalfLineSystem { m, h2: h * h };
    let half_x: Vec<f64> = (0..m).map(|j| node(m - 1 + j, last, half_length)).collect();

    let mut u = vec![0.0; system.unknowns()];
    for j in 1..m {
        let x = half_x[j];
        let r = (x * x + 4.0).sqrt();
        u[2 * (j - 1)] = (x + r) / 2.0;
        u[2 * (j - 1) + 1] = 2.0 / (x + r);
    }

    let mut f = system.residual(&u);
    let mut norm = sup_norm(&f);
    let mut iterations = 0;
    // The last Newton step lands on rounding noise; one extra step settles it.
    let mut converged_steps = 0;
    while converged_steps < 2 {
        if iterations >= MAX_NEWTON_ITERS {
            return Err(Error::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let lu = system.jacobian(&u).factor()?;
        let mut step: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut step);

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            let ft = system.residual(&trial);
            let nt = sup_norm(&ft);
            if nt.is_finite() && (nt < norm || norm <= newton_tol) {
                accepted = Some((trial, ft, nt));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, ft, nt)) => {
                u = trial;
                f = ft;
                norm = nt;
            }
            // Stalled at rounding level: the far-field polish below and the
            // residual check on the final table decide.
            None if norm <= newton_tol || norm <= rounding_floor(&u, h * h) => break,
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: norm,
                })
            }
        }
        if norm <= newton_tol {
            converged_steps += 1;
        }
    }

    let (mut h1, mut h2v) = system.split(&u);
    polish_far_field(&mut h1, &mut h2v, h * h);
    let mut table = assemble_table(half_length, newton_tol, last, &h1, &h2v);
    let fit_lo = half_length / 2.0;
    table.asymptotics = extract_asymptotics(&table, fit_lo, half_length)?;

    let residual = ode_residual(&table);
    if residual > newton_tol {
        return Err(Error::NonConvergence {
            iterations,
            residual,
        });
    }
    if let Some(j) = table.dv1.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::MonotonicityViolation {
            x: table.nodes[j],
            value: table.dv1[j],
        });
    }
    Ok(table)
}

/// Size of the residual that a few ulps of error in `u` produce.
fn rounding_floor(u: &[f64], h2: f64) -> f64 {
    16.0 * f64::EPSILON * sup_norm(u) / h2
}

/// Level below which `v2` is treated as far field.
const FAR_FIELD_V2: f64 = 1e-6;

/// Rebuilds the far field of a converged half-line solution from the
/// three-term recurrences of the discrete equations.
///
/// Beyond the first node with `v2 < FAR_FIELD_V2`, `v1` is continued outward
/// by `v1[k+1] = 2 v1[k] - v1[k-1] + h² v1[k] v2[k]²` (neutral direction), so
/// each stencil holds to half an ulp instead of the few-ulp pattern left by
/// the Newton update. `v2` is rebuilt inward from `v2(T) = 0`, the dominant
/// direction of the decaying solution, and rescaled to the Newton value at
/// the matching node. This keeps the superexponentially small tail positive
/// where the linear solve only resolves it to absolute rounding noise.
fn polish_far_field(v1: &mut [f64], v2: &mut [f64], h2: f64) {
    let m = v1.len();
    let Some(k0) = (1..m - 1).find(|&k| v2[k] < FAR_FIELD_V2 && v2[k] > 0.0) else {
        return;
    };
    for k in k0..m - 1 {
        v1[k + 1] = 2.0 * v1[k] - v1[k - 1] + h2 * v1[k] * v2[k] * v2[k];
    }

    let mut w = vec![0.0; m];
    w[m - 2] = 1e-200;
    for k in (k0..m - 1).rev() {
        w[k - 1] = (2.0 + h2 * v1[k] * v1[k]) * w[k] - w[k + 1];
        if w[k - 1] > 1e100 {
            for v in &mut w[k - 1..] {
                *v *= 1e-100;
            }
        }
    }
    let scale = v2[k0] / w[k0];
    for k in k0 + 1..m - 1 {
        v2[k] = w[k] * scale;
    }
    v2[m - 1] = 0.0;
}

/// Mirrors half-line values onto the full grid and differentiates.
fn assemble_table(
    half_length: f64,
    newton_tol: f64,
    last: usize,
    half_v1: &[f64],
    half_v2: &[f64],
) -> ProfileTable {
    let n = last + 1;
    let c = last / 2;
    let nodes: Vec<f64> = (0..n).map(|j| node(j, last, half_length)).collect();
    let mut v1 = vec![0.0; n];
    let mut v2 = vec![0.0; n];
    for (k, (a, b)) in half_v1.iter().zip(half_v2).enumerate() {
        v1[c + k] = *a;
        v2[c + k] = *b;
        v1[c - k] = *b;
        v2[c - k] = *a;
    }
    let h = 2.0 * half_length / last as f64;
    let mut dv1 = vec![0.0; n];
    let mut dv2 = vec![0.0; n];
    for k in 0..=c {
        let j = c + k;
        dv1[j] = derivative(&v1, j, h);
        dv2[j] = derivative(&v2, j, h);
    }
    // mirror: d/dx V1(-x) = -V2'(x)
    for k in 1..=c {
        dv1[c - k] = -dv2[c + k];
        dv2[c - k] = -dv1[c + k];
    }
    dv2[c] = -dv1[c];
    ProfileTable {
        half_length,
        newton_tol,
        nodes,
        v1,
        dv1,
        v2,
        dv2,
        asymptotics: AsymptoticConstants {
            slope: 0.0,
            intercept: 0.0,
            c_fit: 0.0,
            fit_residual: 0.0,
        },
    }
}

/// Fourth-order finite-difference derivative, one-sided near the ends.
fn derivative(v: &[f64], j: usize, h: f64) -> f64 {
    let n = v.len();
    let one_sided = |s: &dyn Fn(usize) -> f64| {
        (25.0 * s(0) - 48.0 * s(1) + 36.0 * s(2) - 16.0 * s(3) + 3.0 * s(4)) / (12.0 * h)
    };
    if j < 2 {
        -one_sided(&|i| v[j + i])
    } else if j + 2 >= n {
        one_sided(&|i| v[j - i])
    } else {
        (v[j - 2] - 8.0 * v[j - 1] + 8.0 * v[j + 1] - v[j + 2]) / (12.0 * h)
    }
}

/// Sup norm of the discrete ODE residual over the interior nodes of the table.
pub fn ode_residual(p: &ProfileTable) -> f64 {
    let h = p.spacing();
    let h2 = h * h;
    let mut worst = 0.0f64;
    for k in 1..p.nodes.len() - 1 {
        let r1 = -second_difference(p.v1[k - 1], p.v1[k], p.v1[k + 1]) / h2
            + p.v1[k] * p.v2[k] * p.v2[k];
        let r2 = -second_difference(p.v2[k - 1], p.v2[k], p.v2[k + 1]) / h2
            + p.v2[k] * p.v1[k] * p.v1[k];
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    worst
}

/// Least-squares affine fit `A x + B` of `v1` on `[x_lo, x_hi]`, plus a
/// Gaussian decay-rate diagnostic for the deviation on `[1, x_hi]`.
pub fn extract_asymptotics(p: &ProfileTable, x_lo: f64, x_hi: f64) -> Result<AsymptoticConstants> {
    if !(x_lo > 0.0 && x_lo < x_hi && x_hi <= p.half_length) {
        return Err(Error::InvalidParameter(format!(
            "fit window [{x_lo}, {x_hi}] must satisfy 0 < lo < hi <= {}",
            p.half_length
        )));
    }
    let window: Vec<usize> = (0..p.nodes.len())
        .filter(|&j| p.nodes[j] >= x_lo && p.nodes[j] <= x_hi)
        .collect();
    if window.len() < 8 {
        return Err(Error::DegenerateFit(format!(
            "{} nodes in [{x_lo}, {x_hi}], need at least 8",
            window.len()
        )));
    }
    if let Some(&j) = window.iter().find(|&&j| p.v2[j].abs() > TAIL_TOL) {
        return Err(Error::WindowTooContaminated {
            x: p.nodes[j],
            v2: p.v2[j],
        });
    }

    let count = window.len() as f64;
    let x_mean = window.iter().map(|&j| p.nodes[j]).sum::<f64>() / count;
    let y_mean = window.iter().map(|&j| p.v1[j]).sum::<f64>() / count;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &j in &window {
        let dx = p.nodes[j] - x_mean;
        sxy += dx * (p.v1[j] - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let deviation = |j: usize| p.v1[j] - (slope * p.nodes[j] + intercept);
    let fit_residual = window
        .iter()
        .map(|&j| deviation(j).abs())
        .fold(0.0, f64::max);

    let noise = 1e3 * f64::EPSILON * window.iter().map(|&j| p.v1[j].abs()).fold(0.0, f64::max);
    let decay: Vec<(f64, f64)> = (0..p.nodes.len())
        .filter(|&j| p.nodes[j] >= 1.0 && p.nodes[j] <= x_hi)
        .filter_map(|j| {
            let d = deviation(j).abs();
            (d > noise).then(|| (-p.nodes[j] * p.nodes[j], d.ln()))
        })
        .collect();
    let c_fit = if decay.len() < 3 {
        f64::INFINITY
    } else {
        let k = decay.len() as f64;
        let mx = decay.iter().map(|d| d.0).sum::<f64>() / k;
        let my = decay.iter().map(|d| d.1).sum::<f64>() / k;
        let num: f64 = decay.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
        let den: f64 = decay.iter().map(|d| (d.0 - mx) * (d.0 - mx)).sum();
        num / den
    };

    Ok(AsymptoticConstants {
        slope,
        intercept,
        c_fit,
        fit_residual,
    })
}

impl ProfileTable {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / (self.nodes.len() - 1) as f64
    }

    pub fn center_index(&self) -> usize {
        self.nodes.len() / 2
    }

    /// Slope `A` of the affine far field.
    pub fn slope(&self) -> f64 {
        self.asymptotics.slope
    }

    /// Profile and derivatives at any `x`: cubic Hermite inside `[-T, T]`,
    /// the affine/zero tails outside. Negative `x` is evaluated through the
    /// mirror symmetry, so `eval(-x)` is bit-for-bit the reflection of `eval(x)`.
    pub fn eval(&self, x: f64) -> ProfilePoint {
        if x < 0.0 {
            let q = self.eval(-x);
            return ProfilePoint {
                v1: q.v2,
                dv1: -q.dv2,
                v2: q.v1,
                dv2: -q.dv1,
            };
        }
        let t_half = self.half_length;
        let a = self.asymptotics.slope;
        let b = self.asymptotics.intercept;
        if x > t_half {
            return ProfilePoint {
                v1: a * x + b,
                dv1: a,
                v2: 0.0,
                dv2: 0.0,
            };
        }
        let last = self.nodes.len() - 1;
        let h = self.spacing();
        let s = (x + t_half) / h;
        let mut j = (s.floor() as usize).min(last - 1);
        let rounded = s.round() as usize;
        if rounded <= last && self.nodes[rounded] == x {
            return self.point(rounded);
        }
        // nodes are not exactly j*h apart; pick the containing cell
        if x < self.nodes[j] && j > 0 {
            j -= 1;
        } else if x > self.nodes[j + 1] && j + 1 < last {
            j += 1;
        }
        let (x0, x1) = (self.nodes[j], self.nodes[j + 1]);
        let dx = x1 - x0;
        let t = (x - x0) / dx;
        let (v1, dv1) = hermite(t, dx, self.v1[j], self.dv1[j], self.v1[j + 1], self.dv1[j + 1]);
        let (v2, dv2) = hermite(t, dx, self.v2[j], self.dv2[j], self.v2[j + 1], self.dv2[j + 1]);
        ProfilePoint { v1, dv1, v2, dv2 }
    }

    fn point(&self, j: usize) -> ProfilePoint {
        ProfilePoint {
            v1: self.v1[j],
            dv1: self.dv1[j],
            v2: self.v2[j],
            dv2: self.dv2[j],
        }
    }

    /// `max |v1(-x) - v2(x)|` over mirrored node pairs.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.nodes.len();
        (0..n)
            .map(|j| (self.v1[n - 1 - j] - self.v2[j]).abs())
            .fold(0.0, f64::max)
    }
}

/// Cubic Hermite value and derivative on a cell of width `dx` at `t ∈ [0, 1]`.
fn hermite(t: f64, dx: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * y0 + h10 * dx * d0 + h01 * y1 + h11 * dx * d1;
    let g00 = (6.0 * t2 - 6.0 * t) / dx;
    let g10 = 3.0 * t2 - 4.0 * t + 1.0;
    let g01 = (-6.0 * t2 + 6.0 * t) / dx;
    let g11 = 3.0 * t2 - 2.0 * t;
    let slope = g00 * y0 + g10 * d0 + g01 * y1 + g11 * d1;
    (value, slope)
}
