//! Three-point Laplacians and the block-tridiagonal implicit Euler step.
//!
//! The coupled unknown at node `i` is the pair `(u_i, v_i)`. `u` carries
//! homogeneous Dirichlet conditions (pinned boundary rows), `v` carries
//! homogeneous Neumann conditions through a mirrored ghost node, so that
//! `W * Delta_N` is symmetric for the trapezoid weights `W`.

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid1D};
use crate::solvers::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilKind {
    Dirichlet,
    Neumann,
}

/// Standard second difference `(f_{i-1} - 2 f_i + f_{i+1}) / h^2` with a
/// boundary closure chosen by [`StencilKind`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStencil {
    kind: StencilKind,
    nodes: usize,
    inv_h2: f64,
}

impl LinearStencil {
    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    /// Row `i` as `(left, center, right)` coefficients.
    pub fn row(&self, i: usize) -> (f64, f64, f64) {
        let last = self.nodes - 1;
        let k = self.inv_h2;
        match self.kind {
            StencilKind::Dirichlet if i == 0 || i == last => (0.0, 0.0, 0.0),
            StencilKind::Neumann if i == 0 => (0.0, -2.0 * k, 2.0 * k),
            StencilKind::Neumann if i == last => (2.0 * k, -2.0 * k, 0.0),
            _ => (k, -2.0 * k, k),
        }
    }

    pub fn apply(&self, f: &[f64]) -> Result<Field> {
        if f.len() != self.nodes {
            return Err(Error::LengthMismatch {
                expected: self.nodes,
                found: f.len(),
            });
        }
        let last = self.nodes - 1;
        Ok((0..self.nodes)
            .map(|i| {
                let (l, c, r) = self.row(i);
                let left = if i > 0 { l * f[i - 1] } else { 0.0 };
                let right = if i < last { r * f[i + 1] } else { 0.0 };
                left + c * f[i] + right
            })
            .collect::<Vec<_>>()
            .into())
    }
}

pub fn laplacian_dirichlet(grid: &Grid1D) -> LinearStencil {
    LinearStencil {
        kind: StencilKind::Dirichlet,
        nodes: grid.len(),
        inv_h2: 1.0 / (grid.h() * grid.h()),
    }
}

pub fn laplacian_neumann(grid: &Grid1D) -> LinearStencil {
    LinearStencil {
        kind: StencilKind::Neumann,
        nodes: grid.len(),
        inv_h2: 1.0 / (grid.h() * grid.h()),
    }
}

/// 2x2 block, row-major.
pub type Block = [[f64; 2]; 2];

const ZERO: Block = [[0.0; 2]; 2];

#[inline]
fn mat_vec(m: &Block, x: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * x[0] + m[0][1] * x[1],
        m[1][0] * x[0] + m[1][1] * x[1],
    ]
}

#[inline]
fn mat_mul(a: &Block, b: &Block) -> Block {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn invert(m: &Block, node: usize) -> Result<Block> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m
        .iter()
        .flatten()
        .fold(0.0_f64, |s, x| s.max(x.abs()));
    if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
        return Err(Error::SingularPivot { node });
    }
    let inv = 1.0 / det;
    Ok([
        [m[1][1] * inv, -m[0][1] * inv],
        [-m[1][0] * inv, m[0][0] * inv],
    ])
}

/// Block-tridiagonal matrix with one 2x2 block per node pair.
///
/// `lower[i]` multiplies the unknowns of node `i - 1`, `upper[i]` those of
/// node `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStepMatrix {
    lower: Vec<Block>,
    diag: Vec<Block>,
    upper: Vec<Block>,
}

impl BlockStepMatrix {
    pub fn from_blocks(lower: Vec<Block>, diag: Vec<Block>, upper: Vec<Block>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty block matrix".into()));
        }
        for len in [lower.len(), upper.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        Ok(Self { lower, diag, upper })
    }

    /// Identity on `nodes` node pairs.
    pub fn identity(nodes: usize) -> Self {
        Self {
            lower: vec![ZERO; nodes],
            diag: vec![[[1.0, 0.0], [0.0, 1.0]]; nodes],
            upper: vec![ZERO; nodes],
        }
    }

    /// Implicit Euler matrix for
    /// `u_t - u_xx = r00 u + r01 v`, `tau v_t - sigma v_xx = r10 u + r11 v`
    /// with the second row kept in `tau`-scaled form:
    ///
    /// ```text
    /// (1 - dt r00) u_i - dt (D u)_i - dt r01 v_i            = rhs_u
    /// -dt r10 u_i + (tau - dt r11) v_i - dt sigma (N v)_i   = rhs_v
    /// ```
    ///
    /// `u` rows at the two boundary nodes are identity rows.
    pub fn assemble(reaction: Block, tau: f64, sigma: f64, dt: f64, grid: &Grid1D) -> Result<Self> {
        if !(dt > 0.0) || !(tau > 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step matrix needs dt, tau, sigma > 0 (dt = {dt}, tau = {tau}, sigma = {sigma})"
            )));
        }
        let n = grid.len();
        let lap_d = laplacian_dirichlet(grid);
        let lap_n = laplacian_neumann(grid);
        let mut lower = vec![ZERO; n];
        let mut diag = vec![ZERO; n];
        let mut upper = vec![ZERO; n];
        for i in 0..n {
            let (dl, dc, dr) = lap_d.row(i);
            let (nl, nc, nr) = lap_n.row(i);
            if i == 0 || i == n - 1 {
                diag[i][0] = [1.0, 0.0];
            } else {
                diag[i][0] = [1.0 - dt * reaction[0][0] - dt * dc, -dt * reaction[0][1]];
                lower[i][0][0] = -dt * dl;
                upper[i][0][0] = -dt * dr;
            }
            diag[i][1] = [
                -dt * reaction[1][0],
                tau - dt * reaction[1][1] - dt * sigma * nc,
            ];
            lower[i][1][1] = -dt * sigma * nl;
            upper[i][1][1] = -dt * sigma * nr;
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn nodes(&self) -> usize {
        self.diag.len()
    }

    pub fn lower(&self) -> &[Block] {
        &self.lower
    }

    pub fn diag(&self) -> &[Block] {
        &self.diag
    }

    pub fn upper(&self) -> &[Block] {
        &self.upper
    }

    /// Matrix-vector product.
    pub fn apply(&self, u: &[f64], v: &[f64]) -> Result<(Field, Field)> {
        let n = self.nodes();
        for len in [u.len(), v.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let mut out_u = Field::zeros(n);
        let mut out_v = Field::zeros(n);
        for i in 0..n {
            let mut acc = mat_vec(&self.diag[i], [u[i], v[i]]);
            if i > 0 {
                let l = mat_vec(&self.lower[i], [u[i - 1], v[i - 1]]);
                acc[0] += l[0];
                acc[1] += l[1];
            }
            if i + 1 < n {
                let r = mat_vec(&self.upper[i], [u[i + 1], v[i + 1]]);
                acc[0] += r[0];
                acc[1] += r[1];
            }
            out_u[i] = acc[0];
            out_v[i] = acc[1];
        }
        Ok((out_u, out_v))
    }

    /// Dense row-major copy, unknowns ordered `u_0, v_0, u_1, v_1, ...`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.nodes();
        let mut dense = vec![vec![0.0; 2 * n]; 2 * n];
        let mut put = |i: usize, j: usize, b: &Block| {
            for r in 0..2 {
                for c in 0..2 {
                    dense[2 * i + r][2 * j + c] = b[r][c];
                }
            }
        };
        for i in 0..n {
            put(i, i, &self.diag[i]);
            if i > 0 {
                put(i, i - 1, &self.lower[i]);
            }
            if i + 1 < n {
                put(i, i + 1, &self.upper[i]);
            }
        }
        dense
    }

    /// Block LU (block Thomas) factorization.
    pub fn factorize(&self) -> Result<FactoredStepMatrix> {
        let n = self.nodes();
        let mut pivot_inv = Vec::with_capacity(n);
        let mut gain = Vec::with_capacity(n);
        let mut pivot = self.diag[0];
        for i in 0..n {
            if i > 0 {
                // D'_i = D_i - L_i D'_{i-1}^{-1} U_{i-1}
                let correction = mat_mul(&self.lower[i], &gain[i - 1]);
                pivot = self.diag[i];
                for r in 0..2 {
                    for c in 0..2 {
                        pivot[r][c] -= correction[r][c];
                    }
                }
            }
            let inv = invert(&pivot, i)?;
            gain.push(mat_mul(&inv, &self.upper[i]));
            pivot_inv.push(inv);
        }
        let scaled_lower = pivot_inv
            .iter()
            .zip(&self.lower)
            .map(|(p, l)| mat_mul(p, l))
            .collect();
        Ok(FactoredStepMatrix {
            scaled_lower,
            pivot_inv,
            gain,
        })
    }
}

pub fn assemble_step_matrix(p: &SystemParams, dt: f64, grid: &Grid1D) -> Result<BlockStepMatrix> {
    BlockStepMatrix::assemble(p.reaction(), p.tau, p.sigma, dt, grid)
}

/// Factored form of a [`BlockStepMatrix`]; solves cost `O(N)`.
#[derive(Debug, Clone)]
pub struct FactoredStepMatrix {
    /// `D'_i^{-1} L_i`
    scaled_lower: Vec<Block>,
    pivot_inv: Vec<Block>,
    gain: Vec<Block>,
}

impl FactoredStepMatrix {
    pub fn nodes(&self) -> usize {
        self.pivot_inv.len()
    }

    /// Solves in place: `u`, `v` hold the right-hand side on entry and the
    /// solution on exit.
    pub fn solve_in_place(&self, u: &mut [f64], v: &mut [f64]) {
        let n = self.nodes();
        assert!(u.len() == n && v.len() == n);
        let mut prev = [0.0; 2];
        for (((ui, vi), p), pl) in u.iter_mut().zip(v.iter_mut()).zip(&self.pivot_inv).zip(&self.scaled_lower) {
            let y = mat_vec(p, [*ui, *vi]);
            let c = mat_vec(pl, prev);
            prev = [y[0] - c[0], y[1] - c[1]];
            *ui = prev[0];
            *vi = prev[1];
        }
        let mut next = prev;
        for ((ui, vi), g) in u[..n - 1]
            .iter_mut()
            .zip(v[..n - 1].iter_mut())
            .zip(&self.gain[..n - 1])
            .rev()
        {
            let c = mat_vec(g, next);
            next = [*ui - c[0], *vi - c[1]];
            *ui = next[0];
            *vi = next[1];
        }
    }

    pub fn solve(&self, rhs_u: &[f64], rhs_v: &[f64]) -> Result<(Field, Field)> {
        let n = self.nodes();
        for len in [rhs_u.len(), rhs_v.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let mut u = Field::from(rhs_u.to_vec());
        let mut v = Field::from(rhs_v.to_vec());
        self.solve_in_place(&mut u, &mut v);
        Ok((u, v))
    }
}

/// Factors `m` and solves one right-hand side.
pub fn solve_block_tridiagonal(m: &BlockStepMatrix, rhs_u: &[f64], rhs_v: &[f64]) -> Result<(Field, Field)> {
    m.factorize()?.solve(rhs_u, rhs_v)
}

/// Scalar tridiagonal matrix with a factorization cached for repeated solves.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    lower: Vec<f64>,
    pivot_inv: Vec<f64>,
    gain: Vec<f64>,
}

impl Tridiagonal {
    pub(crate) fn factorize(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut pivot_inv = Vec::with_capacity(n);
        let mut gain = Vec::with_capacity(n);
        for i in 0..n {
            let pivot = if i == 0 {
                diag[0]
            } else {
                diag[i] - lower[i] * gain[i - 1]
            };
            let scale = diag[i].abs().max(lower[i].abs()).max(upper[i].abs());
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale {
                return Err(Error::SingularPivot { node: i });
            }
            pivot_inv.push(1.0 / pivot);
            gain.push(upper[i] / pivot);
        }
        Ok(Self {
            lower: lower.to_vec(),
            pivot_inv,
            gain,
        })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let r = if i > 0 { x[i] - self.lower[i] * x[i - 1] } else { x[i] };
            x[i] = r * self.pivot_inv[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.gain[i] * x[i + 1];
        }
    }
}
