//! Approximate kernel element of `L_ω` built by gluing the bounded kernel
//! element `(V1', V2')` of `L_0` to the decaying outer solution
//! `A sinh(ω(R - x)) / sinh(ωR)` through a cutoff at scale `ln R`.
//!
//! The pair has unit size while `ω⁻¹ ‖L_ω φ‖_θ` stays bounded as `R → ∞`
//! with `ω = R^{-α}`, which bounds the invertibility constant from below by
//! a multiple of `ω⁻¹`.

use crate::error::{Error, Result};
use crate::grid::{Grid, PairGridFunction};
use crate::norms::{unweighted_sup_norm, weighted_sup_norm, NormContext};
use crate::operator::{assemble, DiscreteOperator};
use crate::profile::ProfileTable;

/// Relative change of `r` between `N` and `2N - 1` nodes that still counts
/// as resolved.
pub const RESOLUTION_GATE: f64 = 0.05;

/// Width of the window on which the outer correction is switched on.
pub const SMOOTHING_LENGTH: f64 = 2.0;

/// `exp(-1/t)` for `t > 0`, else 0.
fn flat(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step from 0 (`t ≤ 0`) to 1 (`t ≥ 1`).
fn smooth_step(t: f64) -> f64 {
    let a = flat(t);
    let b = flat(1.0 - t);
    a / (a + b)
}

/// C∞ cutoff: 1 for `|y| ≤ 1/2`, 0 for `|y| ≥ 3/4`, monotone in between.
pub fn smooth_cutoff(y: f64) -> f64 {
    smooth_step((0.75 - y.abs()) * 4.0)
}

/// How the outer solution is attached to `(V1', V2')` near `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gluing {
    /// `φ1 = (V1' - A) η + A S` on `[0, R]` as written. The mirrored pair has
    /// a corner at `x = 0` (`φ1'` jumps by `A S'(0)`), so `L_ω φ` carries a
    /// point mass and the discrete residual grows like `1/h`.
    Literal,
    /// `φ1 = (V1' - A) η + A [1 + χ (S - 1)]`, where the quintic step `χ`
    /// rises from 0 at `x = 0` to 1 at [`SMOOTHING_LENGTH`]. `χ` vanishes to
    /// third order at 0, so the mirrored pair is C³ and the residual is `O(ω)`.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleSpec {
    pub half_length: f64,
    pub theta: f64,
    /// Exponent of `ω = R^{-α}`; `None` when ω was given directly.
    pub alpha: Option<f64>,
    pub omega: f64,
    pub grid: Grid,
    pub gluing: Gluing,
}

impl CounterexampleSpec {
    /// The canonical choice `α = θ`, `ω = R^{-θ}` on the default grid.
    pub fn canonical(half_length: f64, theta: f64) -> Result<Self> {
        Self::with_alpha(half_length, theta, theta)
    }

    pub fn with_alpha(half_length: f64, theta: f64, alpha: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "counterexample needs theta in (0, 1), got {theta}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1] so that omega R >= 1, got {alpha}"
            )));
        }
        let omega = half_length.powf(-alpha);
        let mut spec = Self::with_omega(half_length, theta, omega, Grid::with_default_density(half_length)?)?;
        spec.alpha = Some(alpha);
        Ok(spec)
    }

    /// Arbitrary `(ω, R)` pair, e.g. a point of the nine-point sweep.
    pub fn with_omega(half_length: f64, theta: f64, omega: f64, grid: Grid) -> Result<Self> {
        if !(half_length > std::f64::consts::E.powf(1.5)) {
            return Err(Error::InvalidParameter(format!(
                "counterexample needs R > e^1.5 so that ln R / 2 > 3/4, got {half_length}"
            )));
        }
        if !(theta > 0.0) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
        }
        if !(omega > 0.0 && omega * half_length >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "counterexample needs omega > 0 and omega R >= 1, got omega = {omega}, R = {half_length}"
            )));
        }
        if grid.half_length() != half_length || grid.center().is_none() {
            return Err(Error::InvalidParameter(
                "counterexample grid must be symmetric on (-R, R) with an odd node count".into(),
            ));
        }
        Ok(Self {
            half_length,
            theta,
            alpha: None,
            omega,
            grid,
            gluing: Gluing::Smoothed,
        })
    }

    pub fn with_gluing(mut self, gluing: Gluing) -> Self {
        self.gluing = gluing;
        self
    }

    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        if grid.half_length() != self.half_length || grid.center().is_none() {
            return Err(Error::InvalidParameter(
                "counterexample grid must be symmetric on (-R, R) with an odd node count".into(),
            ));
        }
        self.grid = grid;
        Ok(self)
    }

    /// Past this `|x|` the cutoff `η` vanishes and the smoothing step is 1.
    fn far_field_start(&self) -> f64 {
        (0.75 * self.half_length.ln()).max(SMOOTHING_LENGTH)
    }
}

/// Decay rate of the outer solution on a grid of spacing `h`: the root of
/// `2 (cosh(κh) - 1) / h² = ω²`, so `sinh(κ(R - x))` solves the discrete
/// equation `-δ²u/h² + ω² u = 0` exactly. `κ = ω + O(ω³ h²)`.
pub fn discrete_rate(omega: f64, h: f64) -> f64 {
    let z = omega * h;
    // acosh(1 + z²/2) = 2 asinh(z/2)
    2.0 * (0.5 * z).asinh() / h
}

/// `sinh(κ(R - x)) / sinh(κR)` for `0 ≤ x ≤ R` without overflow; `(R - x)/R` at κ = 0.
pub fn sinh_ratio(kappa: f64, half_length: f64, x: f64) -> f64 {
    if kappa == 0.0 {
        return (half_length - x) / half_length;
    }
    let num = -(-2.0 * kappa * (half_length - x)).exp_m1();
    let den = -(-2.0 * kappa * half_length).exp_m1();
    (-kappa * x).exp() * num / den
}

/// `σ(x) = A [sinh(ω(R - x)) / sinh(ωR) - 1]`, which solves
/// `-σ'' + ω² σ = -A ω²` with `σ(0) = 0`.
pub fn sigma(slope: f64, omega: f64, half_length: f64, x: f64) -> f64 {
    slope * (sinh_ratio(omega, half_length, x) - 1.0)
}

/// Quintic step `6t⁵ - 15t⁴ + 10t³` on `[0, 1]`, clamped outside.
fn quintic_step(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Samples the approximate kernel pair on `spec.grid`.
pub fn build_counterexample(p: &ProfileTable, spec: &CounterexampleSpec) -> PairGridFunction {
    let grid = spec.grid;
    let r = spec.half_length;
    let a = p.slope();
    let kappa = discrete_rate(spec.omega, grid.spacing());
    let ln_r = r.ln();
    let c = grid.center().expect("validated odd grid");
    let last = grid.len() - 1;
    let mut u = PairGridFunction::zeros(grid);
    for j in c..=last {
        let x = grid.x(j);
        let q = p.eval(x);
        let eta = smooth_cutoff(x / ln_r);
        let s = sinh_ratio(kappa, r, x);
        let outer = match spec.gluing {
            Gluing::Literal => a * s,
            Gluing::Smoothed => a * (1.0 + quintic_step(x / SMOOTHING_LENGTH) * (s - 1.0)),
        };
        u.comp1[j] = (q.dv1 - a) * eta + outer;
        u.comp2[j] = q.dv2 * eta;
    }
    u.comp1[last] = 0.0;
    u.comp2[last] = 0.0;
    for k in 1..=c {
        u.comp1[c - k] = -u.comp2[c + k];
        u.comp2[c - k] = -u.comp1[c + k];
    }
    u
}

/// `L_ω φ` for the counterexample pair on `op`'s grid.
///
/// Nodes whose stencil lies beyond the cutoff region carry only the outer
/// solution, which the discrete `-δ²/h² + ω²` annihilates exactly; there the
/// residual is the potential part alone. Evaluating the stencil literally
/// would leave rounding noise of size `ε |φ| / h²`, which the weight
/// `cosh(θx) ~ e^{θR}` inflates beyond any meaningful scale.
pub fn counterexample_operator_residual(
    op: &DiscreteOperator,
    phi: &PairGridFunction,
    spec: &CounterexampleSpec,
) -> Result<PairGridFunction> {
    let mut res = op.apply(phi)?;
    let grid = op.grid();
    let x_far = spec.far_field_start();
    let (pot1, pot2, coupling) = op.potentials();
    for j in 1..grid.len() - 1 {
        let inner_edge = grid.x(j - 1).abs().min(grid.x(j + 1).abs());
        if inner_edge > x_far && grid.x(j - 1).signum() == grid.x(j + 1).signum() {
            res.comp1[j] = pot1[j] * phi.comp1[j] + coupling[j] * phi.comp2[j];
            res.comp2[j] = pot2[j] * phi.comp2[j] + coupling[j] * phi.comp1[j];
        }
    }
    Ok(res)
}

/// Measurements of one counterexample at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleMeasurement {
    pub nodes: usize,
    /// `ω⁻¹ ‖L_ω φ‖_θ`.
    pub r: f64,
    pub weighted_residual: f64,
    pub phi_at_0: (f64, f64),
    pub norm_phi: f64,
    /// `max |φ(0) - (V1'(0), V2'(0))|`.
    pub phi0_deviation: f64,
    /// `max_{|x| ≤ 2} |φ - (V1', V2')|`.
    pub local_deviation: f64,
}

impl CounterexampleMeasurement {
    /// Certified lower bound `‖φ‖∞ / ‖L_ω φ‖_θ` on the invertibility constant.
    pub fn lower_bound(&self) -> f64 {
        self.norm_phi / self.weighted_residual
    }
}

pub fn measure(p: &ProfileTable, spec: &CounterexampleSpec) -> Result<CounterexampleMeasurement> {
    let ctx = NormContext::new(spec.theta)?;
    let op = assemble(p, spec.omega, spec.grid)?;
    let phi = build_counterexample(p, spec);
    let res = counterexample_operator_residual(&op, &phi, spec)?;
    let weighted_residual = weighted_sup_norm(&res, ctx);
    let grid = spec.grid;
    let c = grid.center().expect("validated odd grid");
    let q0 = p.eval(0.0);
    let phi_at_0 = (phi.comp1[c], phi.comp2[c]);
    let phi0_deviation = (phi_at_0.0 - q0.dv1).abs().max((phi_at_0.1 - q0.dv2).abs());
    let local_deviation = (0..grid.len())
        .filter(|&j| grid.x(j).abs() <= 2.0)
        .map(|j| {
            let q = p.eval(grid.x(j));
            (phi.comp1[j] - q.dv1).abs().max((phi.comp2[j] - q.dv2).abs())
        })
        .fold(0.0, f64::max);
    Ok(CounterexampleMeasurement {
        nodes: grid.len(),
        r: weighted_residual / spec.omega,
        weighted_residual,
        phi_at_0,
        norm_phi: unweighted_sup_norm(&phi),
        phi0_deviation,
        local_deviation,
    })
}

/// Residual report with the two-resolution consistency gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub r: f64,
    pub phi_at_0: (f64, f64),
    pub norm_phi: f64,
    pub coarse: CounterexampleMeasurement,
    pub fine: CounterexampleMeasurement,
}

impl ResidualReport {
    pub fn relative_change(&self) -> f64 {
        (self.fine.r - self.coarse.r).abs() / self.fine.r.abs()
    }
}

/// Measures `r` on `spec.grid` and on the grid with twice as many intervals;
/// fails with [`Error::ResolutionInsufficient`] when they differ by 5% or more.
pub fn counterexample_residual(p: &ProfileTable, spec: &CounterexampleSpec) -> Result<ResidualReport> {
    let (report, ok) = counterexample_residual_ungated(p, spec)?;
    if !ok {
        return Err(Error::ResolutionInsufficient {
            coarse: report.coarse.r,
            fine: report.fine.r,
        });
    }
    Ok(report)
}

/// Same as [`counterexample_residual`] but returns the gate outcome instead of failing.
pub fn counterexample_residual_ungated(
    p: &ProfileTable,
    spec: &CounterexampleSpec,
) -> Result<(ResidualReport, bool)> {
    let coarse = measure(p, spec)?;
    let fine_grid = Grid::new(spec.half_length, 2 * spec.grid.len() - 1)?;
    let fine = measure(p, &spec.with_grid(fine_grid)?)?;
    let report = ResidualReport {
        r: coarse.r,
        phi_at_0: coarse.phi_at_0,
        norm_phi: coarse.norm_phi,
        coarse,
        fine,
    };
    let ok = report.relative_change() < RESOLUTION_GATE;
    Ok((report, ok))
}
