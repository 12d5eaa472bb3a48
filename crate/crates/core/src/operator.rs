//! Finite-difference Dirichlet discretization of `L_ω` on `(-R, R)`.
//!
//! Unknowns are the interior values ordered `(φ1_1, φ2_1, φ1_2, φ2_2, ...)`,
//! which makes the matrix symmetric pentadiagonal: the second-difference
//! couplings sit two places off the diagonal, the `2 V1 V2` coupling one.

use std::sync::OnceLock;

use crate::banded::{SymBand, SymBandLdl};
use crate::error::{Error, Result};
use crate::grid::{Grid, PairGridFunction};
use crate::profile::ProfileTable;

/// Relative pivot tolerance of the symmetric factorization.
pub const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug)]
pub struct DiscreteOperator {
    grid: Grid,
    omega: f64,
    /// `V2²` at every node (component-1 potential).
    pot1: Vec<f64>,
    /// `V1²` at every node (component-2 potential).
    pot2: Vec<f64>,
    /// `2 V1 V2` at every node.
    coupling: Vec<f64>,
    band: SymBand,
    factorization: OnceLock<std::result::Result<SymBandLdl, Error>>,
}

impl Clone for DiscreteOperator {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid,
            omega: self.omega,
            pot1: self.pot1.clone(),
            pot2: self.pot2.clone(),
            coupling: self.coupling.clone(),
            band: self.band.clone(),
            factorization: OnceLock::new(),
        }
    }
}

/// Assembles `L_ω` on `grid` with potentials taken from `p` (tails included).
pub fn assemble(p: &ProfileTable, omega: f64, grid: Grid) -> Result<DiscreteOperator> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "omega must be finite and non-negative, got {omega}"
        )));
    }
    let n = grid.len();
    let mut pot1 = vec![0.0; n];
    let mut pot2 = vec![0.0; n];
    let mut coupling = vec![0.0; n];
    for j in 0..n {
        let q = p.eval(grid.x(j));
        pot1[j] = q.v2 * q.v2;
        pot2[j] = q.v1 * q.v1;
        coupling[j] = 2.0 * q.v1 * q.v2;
    }
    Ok(DiscreteOperator::from_potentials(grid, omega, pot1, pot2, coupling))
}

impl DiscreteOperator {
    /// Builds the operator from node-wise potentials (length `N`, endpoints ignored).
    pub fn from_potentials(
        grid: Grid,
        omega: f64,
        pot1: Vec<f64>,
        pot2: Vec<f64>,
        coupling: Vec<f64>,
    ) -> Self {
        let n = grid.len();
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let w2 = omega * omega;
        let m = grid.interior_unknowns();
        let mut band = SymBand::zeros(m, 2);
        for j in 1..n - 1 {
            let r = 2 * (j - 1);
            band.set(r, r, (2.0 * inv_h2 + pot1[j]) + w2);
            band.set(r + 1, r + 1, (2.0 * inv_h2 + pot2[j]) + w2);
            band.set(r, r + 1, coupling[j]);
            if r + 2 < m {
                band.set(r, r + 2, -inv_h2);
                band.set(r + 1, r + 3, -inv_h2);
            }
        }
        Self {
            grid,
            omega,
            pot1,
            pot2,
            coupling,
            band,
            factorization: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn band(&self) -> &SymBand {
        &self.band
    }

    pub fn dim(&self) -> usize {
        self.band.dim()
    }

    pub fn pivot_tolerance(&self) -> f64 {
        PIVOT_TOL * self.band.max_abs_diag()
    }

    /// Cached `L D Lᵀ` factorization, computed on first use.
    pub fn factorization(&self) -> Result<&SymBandLdl> {
        self.factorization
            .get_or_init(|| SymBandLdl::factor(&self.band, self.pivot_tolerance()))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Smallest pivot of the factorization (a conditioning diagnostic at ω = 0).
    pub fn min_pivot(&self) -> Result<f64> {
        Ok(self.factorization()?.min_pivot())
    }

    /// `L_ω u` at interior nodes; endpoint values of `u` act as boundary data,
    /// endpoint values of the result are zero.
    pub fn apply(&self, u: &PairGridFunction) -> Result<PairGridFunction> {
        u.check_grid(&self.grid)?;
        let n = self.grid.len();
        let h = self.grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let w2 = self.omega * self.omega;
        let mut out = PairGridFunction::zeros(self.grid);
        let (a, b) = (&u.comp1, &u.comp2);
        for j in 1..n - 1 {
            let d1 = (a[j + 1] - a[j]) - (a[j] - a[j - 1]);
            let d2 = (b[j + 1] - b[j]) - (b[j] - b[j - 1]);
            out.comp1[j] = -d1 * inv_h2 + (self.pot1[j] + w2) * a[j] + self.coupling[j] * b[j];
            out.comp2[j] = -d2 * inv_h2 + (self.pot2[j] + w2) * b[j] + self.coupling[j] * a[j];
        }
        Ok(out)
    }

    /// Solves `L_ω φ = g` with `φ(±R) = 0`; endpoint values of `g` are ignored.
    pub fn solve(&self, g: &PairGridFunction) -> Result<PairGridFunction> {
        g.check_grid(&self.grid)?;
        let mut rhs = g.interior_interleaved();
        self.solve_interior_in_place(&mut rhs)?;
        Ok(PairGridFunction::from_interior_interleaved(self.grid, &rhs))
    }

    /// Solves on the interleaved interior vector in place.
    pub fn solve_interior_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        self.factorization()?.solve_in_place(rhs);
        Ok(())
    }

    /// Rayleigh quotient `xᵀ L x / xᵀ x` of an interleaved interior vector,
    /// evaluated from squared differences so the `2/h²` diagonal and the
    /// `-1/h²` couplings never cancel in floating point.
    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let n = self.grid.len();
        let h = self.grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let comp = |c: usize, j: usize| -> f64 {
            if j == 0 || j == n - 1 {
                0.0
            } else {
                x[2 * (j - 1) + c]
            }
        };
        let mut kinetic = 0.0;
        for c in 0..2 {
            for j in 0..n - 1 {
                let d = comp(c, j + 1) - comp(c, j);
                kinetic += d * d;
            }
        }
        let mut potential = 0.0;
        let mut norm2 = 0.0;
        for j in 1..n - 1 {
            let (a, b) = (comp(0, j), comp(1, j));
            potential += self.pot1[j] * a * a + self.pot2[j] * b * b + 2.0 * self.coupling[j] * a * b;
            norm2 += a * a + b * b;
        }
        (kinetic * inv_h2 + potential) / norm2 + self.omega * self.omega
    }

    pub(crate) fn potentials(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.pot1, &self.pot2, &self.coupling)
    }
}

/// One refinement level of a manufactured-solution study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub nodes: usize,
    pub spacing: f64,
    /// `max |φ_h - φ*|` over the nodes.
    pub error: f64,
    /// `log2(e_prev / e_this)` against the previous row.
    pub observed_order: Option<f64>,
}

/// Manufactured solution `φ*` on `(-R, R)` and its second derivative.
///
/// `φ1* = sin(π(x+R)/(2R)) w(x)`, `φ2* = -sin(π(x+R)/R) w(x)` with the
/// Gaussian bump `w(x) = exp(-x²/(2 s²))`, `s = R/4`. Both vanish at `±R`.
pub fn manufactured(x: f64, half_length: f64) -> [(f64, f64); 2] {
    let r = half_length;
    let s = r / 4.0;
    let w = (-x * x / (2.0 * s * s)).exp();
    let dw = -x / (s * s) * w;
    let d2w = (x * x / (s * s * s * s) - 1.0 / (s * s)) * w;
    let mut out = [(0.0, 0.0); 2];
    for (c, (k, sign)) in [(std::f64::consts::PI / (2.0 * r), 1.0), (std::f64::consts::PI / r, -1.0)]
        .into_iter()
        .enumerate()
    {
        let arg = k * (x + r);
        let (sn, cs) = arg.sin_cos();
        let value = sn * w;
        let second = -k * k * sn * w + 2.0 * k * cs * dw + sn * d2w;
        out[c] = (sign * value, sign * second);
    }
    out
}

/// Manufactured pair `φ*` sampled on `grid`, with exact zero endpoints.
pub fn manufactured_pair(grid: Grid) -> PairGridFunction {
    let r = grid.half_length();
    let mut u = PairGridFunction::sample(grid, |x| {
        let m = manufactured(x, r);
        (m[0].0, m[1].0)
    });
    let last = grid.len() - 1;
    for c in [&mut u.comp1, &mut u.comp2] {
        c[0] = 0.0;
        c[last] = 0.0;
    }
    u
}

/// Continuum right-hand side `L_ω φ*` sampled on `grid`.
pub fn manufactured_rhs(p: &ProfileTable, omega: f64, grid: Grid) -> PairGridFunction {
    let r = grid.half_length();
    let w2 = omega * omega;
    PairGridFunction::sample(grid, |x| {
        let [(a, a2), (b, b2)] = manufactured(x, r);
        let q = p.eval(x);
        let c = 2.0 * q.v1 * q.v2;
        (
            -a2 + (q.v2 * q.v2 + w2) * a + c * b,
            -b2 + (q.v1 * q.v1 + w2) * b + c * a,
        )
    })
}

/// Manufactured-solution convergence study over increasing odd node counts.
pub fn convergence_report(
    p: &ProfileTable,
    omega: f64,
    half_length: f64,
    node_counts: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if node_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "node counts must be strictly increasing".into(),
        ));
    }
    if let Some(n) = node_counts.iter().find(|&&n| n % 2 == 0) {
        return Err(Error::InvalidParameter(format!("node count {n} is even")));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(node_counts.len());
    for &n in node_counts {
        let grid = Grid::new(half_length, n)?;
        let op = assemble(p, omega, grid)?;
        let phi = op.solve(&manufactured_rhs(p, omega, grid))?;
        let error = phi.max_abs_diff(&manufactured_pair(grid));
        let observed_order = rows
            .last()
            .map(|prev| (prev.error / error).ln() / (prev.spacing / grid.spacing()).ln());
        rows.push(ConvergenceRow {
            nodes: n,
            spacing: grid.spacing(),
            error,
            observed_order,
        });
    }
    Ok(rows)
}
