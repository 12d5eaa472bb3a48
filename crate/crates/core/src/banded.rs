//! Banded matrix storage and direct factorizations.
//!
//! [`SymBand`] keeps the diagonal and the first `p` superdiagonals of a
//! symmetric matrix; the lower triangle is implied, so the stored matrix is
//! exactly symmetric. [`SymBandLdl`] factors it as `L D Lᵀ` without pivoting.
//! [`BandLu`] is a general banded LU with partial pivoting, used for the
//! nonsymmetric Newton Jacobians of the profile solver.

use crate::error::{Error, Result};

/// Symmetric banded matrix with half-bandwidth `p`.
///
/// `upper[i * (p + 1) + k]` holds `A[i][i + k]`; entries that would fall
/// outside the matrix are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    p: usize,
    upper: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            upper: vec![0.0; n * (p + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.p
    }

    /// Entry `A[i][j]` for any `i, j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let k = c - r;
        if k > self.p || c >= self.n {
            0.0
        } else {
            self.upper[r * (self.p + 1) + k]
        }
    }

    /// Sets `A[i][j]` and, implicitly, `A[j][i]`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let k = c - r;
        assert!(k <= self.p && c < self.n, "entry ({i},{j}) outside band");
        self.upper[r * (self.p + 1) + k] = value;
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.upper[i * (self.p + 1)]
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let p = self.p;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            let lo = i.saturating_sub(p);
            for j in lo..i {
                s += self.upper[j * (p + 1) + (i - j)] * x[j];
            }
            let hi = (i + p).min(self.n - 1);
            for j in i..=hi {
                s += self.upper[i * (p + 1) + (j - i)] * x[j];
            }
            *yi = s;
        }
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.p);
                let hi = (i + self.p).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n).map(|i| self.diag(i).abs()).fold(0.0, f64::max)
    }

    /// Copy with `shift` subtracted from every diagonal entry.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.upper[i * (self.p + 1)] -= shift;
        }
        out
    }
}

/// `L D Lᵀ` factorization of a [`SymBand`] matrix, no pivoting.
#[derive(Debug, Clone)]
pub struct SymBandLdl {
    n: usize,
    p: usize,
    /// `lower[i * p + (k - 1)] = L[i][i - k]` for `k = 1..=p`.
    lower: Vec<f64>,
    d: Vec<f64>,
}

impl SymBandLdl {
    /// Factors `a`, failing when a pivot magnitude drops to `pivot_tol`.
    pub fn factor(a: &SymBand, pivot_tol: f64) -> Result<Self> {
        let n = a.n;
        let p = a.p;
        let mut lower = vec![0.0; n * p];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let lo = j.saturating_sub(p);
            // d_j = a_jj - sum_k L_jk^2 d_k
            let mut dj = a.diag(j);
            for k in lo..j {
                let l = lower[j * p + (j - k - 1)];
                dj -= l * l * d[k];
            }
            if !(dj.abs() > pivot_tol) {
                return Err(Error::SingularSystem {
                    row: j,
                    pivot: dj,
                    tolerance: pivot_tol,
                });
            }
            d[j] = dj;
            let hi = (j + p).min(n - 1);
            for i in (j + 1)..=hi {
                let mut s = a.get(i, j);
                let lo_i = i.saturating_sub(p);
                for k in lo_i.max(lo)..j {
                    s -= lower[i * p + (i - k - 1)] * lower[j * p + (j - k - 1)] * d[k];
                }
                lower[i * p + (i - j - 1)] = s / dj;
            }
        }
        Ok(Self { n, p, lower, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn min_pivot(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every pivot is positive, i.e. the factored matrix is
    /// positive definite (Sylvester's inertia).
    pub fn is_positive_definite(&self) -> bool {
        self.d.iter().all(|&v| v > 0.0)
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let p = self.p;
        for i in 0..self.n {
            let lo = i.saturating_sub(p);
            let mut s = b[i];
            for k in lo..i {
                s -= self.lower[i * p + (i - k - 1)] * b[k];
            }
            b[i] = s;
        }
        self.finish_solve(b);
    }

    /// Column `j` of `A⁻¹` into `out`; forward substitution skips the
    /// leading zeros of the unit vector.
    pub fn solve_unit(&self, j: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.n);
        let p = self.p;
        out[..j].iter_mut().for_each(|v| *v = 0.0);
        out[j] = 1.0;
        for i in (j + 1)..self.n {
            let lo = i.saturating_sub(p).max(j);
            let mut s = 0.0;
            for k in lo..i {
                s -= self.lower[i * p + (i - k - 1)] * out[k];
            }
            out[i] = s;
        }
        self.finish_solve(out);
    }

    fn finish_solve(&self, b: &mut [f64]) {
        let p = self.p;
        for (bi, di) in b.iter_mut().zip(&self.d) {
            *bi /= di;
        }
        for i in (0..self.n).rev() {
            let hi = (i + p).min(self.n - 1);
            let mut s = b[i];
            for k in (i + 1)..=hi {
                s -= self.lower[k * p + (k - i - 1)] * b[k];
            }
            b[i] = s;
        }
    }
}

/// General banded LU with partial pivoting (`kl` sub-, `ku` superdiagonals).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band of width `2 kl + ku + 1`; row `i` column `j` lives at
    /// `i * width + (j + kl - i)`, leaving room for pivoting fill.
    ab: Vec<f64>,
    piv: Vec<usize>,
}

/// Builder for the nonsymmetric banded matrix factored by [`BandLu`].
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ab: vec![0.0; n * width],
        }
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i},{j}) outside band");
        let w = self.width();
        self.ab[i * w + (j + self.kl - i)] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku || j >= self.n {
            return 0.0;
        }
        self.ab[i * self.width() + (j + self.kl - i)]
    }

    pub fn factor(self) -> Result<BandLu> {
        BandLu::factor(self)
    }
}

impl BandLu {
    fn factor(m: BandMatrix) -> Result<Self> {
        let BandMatrix { n, kl, ku, mut ab } = m;
        let width = 2 * kl + ku + 1;
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        let mut piv = vec![0; n];
        let scale = ab.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut best = k;
            let mut best_val = ab[idx(k, k)].abs();
            for i in (k + 1)..=last_row {
                let v = ab[idx(i, k)].abs();
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            if !(best_val > f64::EPSILON * scale * 1e-3) {
                return Err(Error::SingularSystem {
                    row: k,
                    pivot: best_val,
                    tolerance: f64::EPSILON * scale * 1e-3,
                });
            }
            piv[k] = best;
            // after fill, row k may reach column k + kl + ku
            let last_col = (k + kl + ku).min(n - 1);
            if best != k {
                for j in k..=last_col {
                    ab.swap(idx(k, j), idx(best, j));
                }
            }
            let pivot = ab[idx(k, k)];
            for i in (k + 1)..=last_row {
                let f = ab[idx(i, k)] / pivot;
                ab[idx(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..=last_col {
                        ab[idx(i, j)] -= f * ab[idx(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, ab, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let width = 2 * self.kl + self.ku + 1;
        let idx = |i: usize, j: usize| i * width + (j + self.kl - i);
        let n = self.n;
        for k in 0..n {
            let pk = self.piv[k];
            if pk != k {
                b.swap(k, pk);
            }
            let last_row = (k + self.kl).min(n - 1);
            for i in (k + 1)..=last_row {
                b[i] -= self.ab[idx(i, k)] * b[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.kl + self.ku).min(n - 1);
            let mut s = b[k];
            for j in (k + 1)..=last_col {
                s -= self.ab[idx(k, j)] * b[j];
            }
            b[k] = s / self.ab[idx(k, k)];
        }
    }
}
