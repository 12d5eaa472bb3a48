use crate::error::{Error, Result};

/// Uniform mesh on `[-R, R]` with `N` nodes including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_length: f64,
    nodes: usize,
}

impl Grid {
    pub fn new(half_length: f64, nodes: usize) -> Result<Self> {
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid half-length must be positive, got {half_length}"
            )));
        }
        if nodes < 5 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 5 nodes, got {nodes}"
            )));
        }
        Ok(Self { half_length, nodes })
    }

    /// Grid with the default experiment density:
    /// `N = max(2001, round(80 R) + 1)`, bumped to the next odd count.
    pub fn with_default_density(half_length: f64) -> Result<Self> {
        Self::new(half_length, default_node_count(half_length))
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / (self.nodes - 1) as f64
    }

    /// Node `j`; symmetric nodes are exact negatives of each other.
    pub fn x(&self, j: usize) -> f64 {
        let last = self.nodes - 1;
        // (2j - last) / last * R keeps x_j = -x_{last-j} bit-for-bit
        let num = 2 * j as i64 - last as i64;
        num as f64 / last as f64 * self.half_length
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.x(j)).collect()
    }

    /// Index of the node at `x = 0`, if the node count is odd.
    pub fn center(&self) -> Option<usize> {
        (self.nodes % 2 == 1).then_some(self.nodes / 2)
    }

    /// Number of interior unknowns of a pair function (`2 (N - 2)`).
    pub fn interior_unknowns(&self) -> usize {
        2 * (self.nodes - 2)
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.nodes];
        w[0] = 0.5 * h;
        w[self.nodes - 1] = 0.5 * h;
        w
    }
}

pub fn default_node_count(half_length: f64) -> usize {
    let n = ((80.0 * half_length).round() as usize + 1).max(2001);
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

/// Two-component function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairGridFunction {
    pub grid: Grid,
    pub comp1: Vec<f64>,
    pub comp2: Vec<f64>,
}

impl PairGridFunction {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            comp1: vec![0.0; grid.len()],
            comp2: vec![0.0; grid.len()],
        }
    }

    pub fn from_components(grid: Grid, comp1: Vec<f64>, comp2: Vec<f64>) -> Result<Self> {
        for c in [&comp1, &comp2] {
            if c.len() != grid.len() {
                return Err(Error::GridMismatch {
                    expected: grid.len(),
                    found: c.len(),
                });
            }
            if let Some(v) = c.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite value {v}")));
            }
        }
        Ok(Self { grid, comp1, comp2 })
    }

    /// Samples `f(x) -> (u1, u2)` at every node.
    pub fn sample(grid: Grid, mut f: impl FnMut(f64) -> (f64, f64)) -> Self {
        let (comp1, comp2) = (0..grid.len()).map(|j| f(grid.x(j))).unzip();
        Self { grid, comp1, comp2 }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            comp1: self.comp1.iter().map(|v| v * s).collect(),
            comp2: self.comp2.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect();
        Self {
            grid: self.grid,
            comp1: zip(&self.comp1, &other.comp1),
            comp2: zip(&self.comp2, &other.comp2),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        d(&self.comp1, &other.comp1).max(d(&self.comp2, &other.comp2))
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid != *grid || self.comp1.len() != grid.len() || self.comp2.len() != grid.len()
        {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: self.comp1.len(),
            });
        }
        Ok(())
    }

    /// Interleaved interior vector `(u1_1, u2_1, u1_2, u2_2, ...)`.
    pub fn interior_interleaved(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = Vec::with_capacity(2 * (n - 2));
        for j in 1..n - 1 {
            out.push(self.comp1[j]);
            out.push(self.comp2[j]);
        }
        out
    }

    /// Inverse of [`interior_interleaved`](Self::interior_interleaved), with
    /// zero endpoint values.
    pub fn from_interior_interleaved(grid: Grid, v: &[f64]) -> Self {
        assert_eq!(v.len(), grid.interior_unknowns());
        let mut out = Self::zeros(grid);
        for (k, pair) in v.chunks_exact(2).enumerate() {
            out.comp1[k + 1] = pair[0];
            out.comp2[k + 1] = pair[1];
        }
        out
    }

    /// The reflected pair `(-u2(-x), -u1(-x))`.
    pub fn reflected(&self) -> Self {
        let n = self.grid.len();
        let mut out = Self::zeros(self.grid);
        for j in 0..n {
            out.comp1[j] = -self.comp2[n - 1 - j];
            out.comp2[j] = -self.comp1[n - 1 - j];
        }
        out
    }
}
