//! Uniform space and time meshes on `(0,1) x [0,T]`, trapezoid quadrature
//! and the nodal field types shared by every solver.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Uniform grid on `[0,1]` with `N` interior nodes and spacing `h = 1/(N+1)`.
///
/// Both components of the coupled system live on the full node set
/// `x_0 = 0, ..., x_{N+1} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    n_interior: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior == 0 {
            return Err(Error::InvalidGrid(n_interior));
        }
        let cells = (n_interior + 1) as f64;
        // i / (N+1) rather than i * h keeps nodes such as 0.7 exactly representable
        let nodes = (0..=n_interior + 1).map(|i| i as f64 / cells).collect();
        Ok(Self {
            n_interior,
            h: 1.0 / cells,
            nodes,
        })
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Total node count `N + 2`.
    pub fn len(&self) -> usize {
        self.n_interior + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_interior + 1 {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from(self.nodes.iter().map(|&x| f(x)).collect::<Vec<_>>())
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.len())
    }

    pub fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// Trapezoid inner product `int_0^1 f g dx`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(self.inner_unchecked(f, g))
    }

    pub(crate) fn inner_unchecked(&self, f: &[f64], g: &[f64]) -> f64 {
        let n = f.len();
        let interior: f64 = f[1..n - 1]
            .iter()
            .zip(&g[1..n - 1])
            .map(|(a, b)| a * b)
            .sum();
        self.h * (interior + 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]))
    }

    pub(crate) fn integral_unchecked(&self, f: &[f64]) -> f64 {
        let n = f.len();
        let interior: f64 = f[1..n - 1].iter().sum();
        self.h * (interior + 0.5 * (f[0] + f[n - 1]))
    }
}

pub fn make_grid(n_interior: usize) -> Result<Grid1D> {
    Grid1D::new(n_interior)
}

/// Uniform partition `t_n = n * dt` of `[0,T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    horizon: f64,
    m_steps: usize,
    dt: f64,
}

impl TimeMesh {
    pub fn new(horizon: f64, m_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() || m_steps == 0 {
            return Err(Error::InvalidTimeMesh { horizon, m_steps });
        }
        Ok(Self {
            horizon,
            m_steps,
            dt: horizon / m_steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn m_steps(&self) -> usize {
        self.m_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.m_steps {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.m_steps).map(|n| self.time(n))
    }
}

pub fn make_time_mesh(horizon: f64, m_steps: usize) -> Result<TimeMesh> {
    TimeMesh::new(horizon, m_steps)
}

/// Nodal values aligned with a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|x| *x *= alpha);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &[f64]) {
        debug_assert_eq!(self.values.len(), other.len());
        for (x, y) in self.values.iter_mut().zip(other) {
            *x += alpha * y;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Scalar samples aligned with the `M + 1` instants of a [`TimeMesh`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl From<Vec<f64>> for TimeSeries {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

impl Deref for TimeSeries {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Composite-trapezoid `L^2(0,1)` norm.
pub fn l2_norm(f: &[f64], grid: &Grid1D) -> Result<f64> {
    grid.check(f)?;
    Ok(grid.inner_unchecked(f, f).max(0.0).sqrt())
}

/// Composite-trapezoid `L^2(0,T)` norm of a time series.
pub fn l2_norm_time(s: &[f64], tm: &TimeMesh) -> Result<f64> {
    if s.len() != tm.m_steps() + 1 {
        return Err(Error::LengthMismatch {
            expected: tm.m_steps() + 1,
            found: s.len(),
        });
    }
    let m = s.len() - 1;
    let interior: f64 = s[1..m].iter().map(|x| x * x).sum();
    let sum = interior + 0.5 * (s[0] * s[0] + s[m] * s[m]);
    Ok((tm.dt() * sum).sqrt())
}

/// Spatial mean over `(0,1)`; `|Omega| = 1`.
pub fn mean_value(f: &[f64], grid: &Grid1D) -> Result<f64> {
    grid.check(f)?;
    Ok(grid.integral_unchecked(f))
}

/// Nodal indicator of the open interval `(a, b)`; nodes on the endpoints get 0.
pub fn indicator(a: f64, b: f64, grid: &Grid1D) -> Result<Field> {
    if !(a < b) || a < 0.0 || b > 1.0 {
        return Err(Error::InvalidInterval { a, b });
    }
    let tol = 1e-12;
    Ok(grid.sample(|x| if x > a + tol && x < b - tol { 1.0 } else { 0.0 }))
}
