//! Weighted sup norms, trapezoid inner products, the kernel elements of
//! `L_0`, and projection of right-hand sides onto their orthogonal complement.

use crate::error::{Error, Result};
use crate::grid::{Grid, PairGridFunction};
use crate::profile::ProfileTable;

/// Exponential weight rate of the `C⁰_θ` norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormContext {
    theta: f64,
}

impl NormContext {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "theta must be positive, got {theta}"
            )));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn weight(&self, x: f64) -> f64 {
        (self.theta * x).cosh()
    }

    /// `1 / cosh(θ x)`, without overflow for large `|θ x|`.
    pub fn inverse_weight(&self, x: f64) -> f64 {
        let e = (-(self.theta * x).abs()).exp();
        2.0 * e / (1.0 + e * e)
    }
}

/// `max_j max_i |u_i(x_j)| cosh(θ x_j)`.
pub fn weighted_sup_norm(u: &PairGridFunction, ctx: NormContext) -> f64 {
    let g = &u.grid;
    (0..g.len())
        .map(|j| {
            let m = u.comp1[j].abs().max(u.comp2[j].abs());
            if m == 0.0 {
                0.0
            } else {
                m * ctx.weight(g.x(j))
            }
        })
        .fold(0.0, f64::max)
}

pub fn unweighted_sup_norm(u: &PairGridFunction) -> f64 {
    u.comp1
        .iter()
        .chain(&u.comp2)
        .fold(0.0, |a, v| a.max(v.abs()))
}

/// Trapezoid-rule `∫ (u1 v1 + u2 v2) dx`.
pub fn inner_product(u: &PairGridFunction, v: &PairGridFunction) -> f64 {
    let w = u.grid.trapezoid_weights();
    (0..w.len())
        .map(|j| w[j] * (u.comp1[j] * v.comp1[j] + u.comp2[j] * v.comp2[j]))
        .sum()
}

/// The two kernel elements of `L_0` on the whole line.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    /// `(V1', V2')`, the translation mode.
    pub z1: PairGridFunction,
    /// `(x V1' + V1, x V2' + V2)`, the scaling mode.
    pub z2: PairGridFunction,
}

pub fn kernel_basis(p: &ProfileTable, grid: Grid) -> KernelBasis {
    let z1 = PairGridFunction::sample(grid, |x| {
        let q = p.eval(x);
        (q.dv1, q.dv2)
    });
    let z2 = PairGridFunction::sample(grid, |x| {
        let q = p.eval(x);
        (x * q.dv1 + q.v1, x * q.dv2 + q.v2)
    });
    KernelBasis { z1, z2 }
}

/// Which orthogonality conditions a right-hand side is projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrthMode {
    None,
    /// `∫ (V1' g1 + V2' g2) = 0`.
    One,
    /// Both kernel pairings vanish.
    Two,
}

impl OrthMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrthMode::None => "none",
            OrthMode::One => "one",
            OrthMode::Two => "two",
        }
    }
}

impl std::str::FromStr for OrthMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(OrthMode::None),
            "one" => Ok(OrthMode::One),
            "two" => Ok(OrthMode::Two),
            other => Err(Error::InvalidParameter(format!("unknown orth_mode '{other}'"))),
        }
    }
}

/// Oblique projector `g ↦ g - Σ c_k z_k / cosh(2θx)` with coefficients
/// chosen so that `∫ z_i · P g = 0` for every selected `z_i`.
///
/// The carriers decay like `exp(-2θ|x|)`, so a projected right-hand side
/// stays in the `C⁰_θ` class even though `z2` grows linearly.
#[derive(Debug, Clone)]
pub struct Projector {
    elements: Vec<PairGridFunction>,
    carriers: Vec<PairGridFunction>,
    gram_inv: Vec<Vec<f64>>,
    quad: Vec<f64>,
}

const GRAM_TOL: f64 = 1e-12;

impl Projector {
    pub fn new(elements: Vec<PairGridFunction>, ctx: NormContext) -> Result<Self> {
        let k = elements.len();
        if k == 0 || k > 2 {
            return Err(Error::InvalidParameter(format!(
                "projector supports 1 or 2 elements, got {k}"
            )));
        }
        let grid = elements[0].grid;
        let carrier_ctx = NormContext::new(2.0 * ctx.theta())?;
        let carriers: Vec<PairGridFunction> = elements
            .iter()
            .map(|z| {
                let mut c = z.clone();
                for j in 0..grid.len() {
                    let w = carrier_ctx.inverse_weight(grid.x(j));
                    c.comp1[j] *= w;
                    c.comp2[j] *= w;
                }
                c
            })
            .collect();
        let gram: Vec<Vec<f64>> = elements
            .iter()
            .map(|z| carriers.iter().map(|c| inner_product(z, c)).collect())
            .collect();
        let gram_inv = invert_small(&gram)?;
        Ok(Self {
            elements,
            carriers,
            gram_inv,
            quad: grid.trapezoid_weights(),
        })
    }

    /// Projector for `mode` built from `basis`; `None` for [`OrthMode::None`].
    pub fn for_mode(basis: &KernelBasis, mode: OrthMode, ctx: NormContext) -> Result<Option<Self>> {
        match mode {
            OrthMode::None => Ok(None),
            OrthMode::One => Self::new(vec![basis.z1.clone()], ctx).map(Some),
            OrthMode::Two => Self::new(vec![basis.z1.clone(), basis.z2.clone()], ctx).map(Some),
        }
    }

    pub fn carriers(&self) -> &[PairGridFunction] {
        &self.carriers
    }

    pub fn elements(&self) -> &[PairGridFunction] {
        &self.elements
    }

    /// Coefficients `c` for a given right-hand side.
    pub fn coefficients(&self, g: &PairGridFunction) -> Vec<f64> {
        let b: Vec<f64> = self.elements.iter().map(|z| inner_product(z, g)).collect();
        self.apply_gram_inv(&b)
    }

    fn apply_gram_inv(&self, b: &[f64]) -> Vec<f64> {
        self.gram_inv
            .iter()
            .map(|row| row.iter().zip(b).map(|(a, v)| a * v).sum())
            .collect()
    }

    /// Coefficients for the unit right-hand side supported on component
    /// `comp` at node `j`.
    pub fn unit_coefficients(&self, j: usize, comp: usize) -> Vec<f64> {
        let b: Vec<f64> = self
            .elements
            .iter()
            .map(|z| {
                let v = if comp == 0 { z.comp1[j] } else { z.comp2[j] };
                self.quad[j] * v
            })
            .collect();
        self.apply_gram_inv(&b)
    }

    /// `P g` on an interleaved interior vector (boundary values taken as zero).
    pub fn project_interior(&self, g: &mut [f64]) {
        let b: Vec<f64> = self
            .elements
            .iter()
            .map(|z| self.interior_pairing(z, g, true))
            .collect();
        let c = self.apply_gram_inv(&b);
        for (carrier, ck) in self.carriers.iter().zip(&c) {
            self.interior_axpy(-ck, carrier, g, false);
        }
    }

    /// `Pᵀ y` on an interleaved interior vector.
    pub fn project_transpose_interior(&self, y: &mut [f64]) {
        let d: Vec<f64> = self
            .carriers
            .iter()
            .map(|c| self.interior_pairing(c, y, false))
            .collect();
        // (Γ⁻¹)ᵀ d
        let k = d.len();
        let e: Vec<f64> = (0..k)
            .map(|l| (0..k).map(|i| self.gram_inv[i][l] * d[i]).sum())
            .collect();
        for (z, el) in self.elements.iter().zip(&e) {
            self.interior_axpy(-el, z, y, true);
        }
    }

    fn interior_pairing(&self, u: &PairGridFunction, v: &[f64], quadrature: bool) -> f64 {
        (1..u.grid.len() - 1)
            .map(|j| {
                let r = 2 * (j - 1);
                let w = if quadrature { self.quad[j] } else { 1.0 };
                w * (u.comp1[j] * v[r] + u.comp2[j] * v[r + 1])
            })
            .sum()
    }

    fn interior_axpy(&self, s: f64, u: &PairGridFunction, v: &mut [f64], quadrature: bool) {
        for j in 1..u.grid.len() - 1 {
            let r = 2 * (j - 1);
            let w = if quadrature { self.quad[j] } else { 1.0 };
            v[r] += s * w * u.comp1[j];
            v[r + 1] += s * w * u.comp2[j];
        }
    }

    pub fn project(&self, g: &PairGridFunction) -> Result<PairGridFunction> {
        g.check_grid(&self.elements[0].grid)?;
        let c = self.coefficients(g);
        Ok(self
            .carriers
            .iter()
            .zip(&c)
            .fold(g.clone(), |acc, (carrier, ck)| acc.axpy(-ck, carrier)))
    }
}

fn invert_small(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    match a.len() {
        1 => {
            if !(a[0][0].abs() > 0.0) {
                return Err(Error::GramSingular(a[0][0]));
            }
            Ok(vec![vec![1.0 / a[0][0]]])
        }
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let scale = (a[0][0] * a[1][1]).abs().max((a[0][1] * a[1][0]).abs());
            if !(det.abs() > GRAM_TOL * scale) {
                return Err(Error::GramSingular(det));
            }
            Ok(vec![
                vec![a[1][1] / det, -a[0][1] / det],
                vec![-a[1][0] / det, a[0][0] / det],
            ])
        }
        _ => unreachable!(),
    }
}

/// Projects `g` onto the complement selected by `elements` (see [`Projector`]).
pub fn project_orthogonal(
    g: &PairGridFunction,
    elements: &[&PairGridFunction],
    ctx: NormContext,
) -> Result<PairGridFunction> {
    Projector::new(elements.iter().map(|z| (*z).clone()).collect(), ctx)?.project(g)
}
