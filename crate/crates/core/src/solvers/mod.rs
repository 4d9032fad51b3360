//! Implicit Euler time integration of the coupled fast-diffusion system, its
//! discrete adjoint and the scalar nonlocal equations obtained in the limit.

mod coupled;
mod nonlocal;

use std::io::Write;

pub use coupled::{solve_adjoint, solve_forward, CoupledSolver};
pub use nonlocal::{solve_nonlocal_linear, solve_semilinear_nonlocal, NonlinearitySpec, ScalarTrajectory};

use crate::error::{Error, Result};
use crate::mesh::{indicator, mean_value, Field, Grid1D, TimeMesh, TimeSeries};
use crate::operators::Block;

/// Solutions whose norm exceeds this are reported as [`Error::BlowUp`].
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Coefficients of
///
/// ```text
/// u_t - u_xx           = a u + b v + h 1_omega
/// tau v_t - sigma v_xx = c u + d v
/// ```
///
/// with `u = 0` and `v_x = 0` on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tau: f64,
    pub sigma: f64,
    pub omega: (f64, f64),
}

impl SystemParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64, tau: f64, sigma: f64, omega: (f64, f64)) -> Result<Self> {
        let p = Self {
            a,
            b,
            c,
            d,
            tau,
            sigma,
            omega,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.a, self.b, self.c, self.d].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("coupling coefficients must be finite".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        let (lo, hi) = self.omega;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidInterval { a: lo, b: hi });
        }
        Ok(())
    }

    /// Null controllability from `omega` needs `c != 0`.
    pub fn require_controllable(&self) -> Result<()> {
        if self.c == 0.0 {
            return Err(Error::InvalidParameter(
                "c = 0 decouples v from the control; HUM needs c != 0".into(),
            ));
        }
        Ok(())
    }

    /// Zero-order coupling matrix `[[a, b], [c, d]]`.
    pub fn reaction(&self) -> Block {
        [[self.a, self.b], [self.c, self.d]]
    }

    pub fn with_tau_sigma(mut self, tau: f64, sigma: f64) -> Result<Self> {
        self.tau = tau;
        self.sigma = sigma;
        self.validate()?;
        Ok(self)
    }
}

/// `sqrt(|u|^2 + tau |v|^2)` in the trapezoid `L^2` norm.
pub fn weighted_norm(u: &[f64], v: &[f64], tau: f64, grid: &Grid1D) -> Result<f64> {
    grid.check(u)?;
    grid.check(v)?;
    Ok((grid.inner_unchecked(u, u) + tau * grid.inner_unchecked(v, v)).sqrt())
}

/// Snapshots `(u^n, v^n)`, `n = 0..=M`, of a two-component solve.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub time_mesh: TimeMesh,
    pub u: Vec<Field>,
    pub v: Vec<Field>,
}

impl Trajectory {
    pub fn terminal(&self) -> (&Field, &Field) {
        (self.u.last().unwrap(), self.v.last().unwrap())
    }

    pub fn initial(&self) -> (&Field, &Field) {
        (&self.u[0], &self.v[0])
    }

    /// Writes `t,x,u,v` rows for every `stride`-th stored snapshot (the last
    /// one is always included).
    pub fn write_csv<W: Write>(&self, out: W, stride: usize) -> Result<()> {
        let stride = stride.max(1);
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "x", "u", "v"])?;
        let m = self.u.len() - 1;
        for n in (0..=m).filter(|n| n % stride == 0 || *n == m) {
            let t = fmt_num(self.time_mesh.time(n));
            for (i, x) in self.grid.nodes().iter().enumerate() {
                wtr.write_record([
                    t.as_str(),
                    &fmt_num(*x),
                    &fmt_num(self.u[n][i]),
                    &fmt_num(self.v[n][i]),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Deterministic number formatting shared by all CSV writers.
pub fn fmt_num(x: f64) -> String {
    let ax = x.abs();
    if x == 0.0 || (1e-4..1e6).contains(&ax) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Distributed control `h^n`, `n = 1..=M`, supported in `omega`.
///
/// Slice `n` drives the step `t_{n-1} -> t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    slices: Vec<Field>,
}

impl Control {
    pub fn zeros(grid: &Grid1D, m_steps: usize) -> Self {
        Self {
            slices: vec![grid.zeros(); m_steps],
        }
    }

    /// Builds a control from `M` slices, zeroing values outside `omega`.
    pub fn from_slices(mut slices: Vec<Field>, omega: (f64, f64), grid: &Grid1D) -> Result<Self> {
        let mask = indicator(omega.0, omega.1, grid)?;
        for s in slices.iter_mut() {
            grid.check(s)?;
            s.iter_mut().zip(mask.iter()).for_each(|(x, m)| *x *= m);
        }
        Ok(Self { slices })
    }

    pub(crate) fn from_masked(slices: Vec<Field>) -> Self {
        Self { slices }
    }

    pub fn m_steps(&self) -> usize {
        self.slices.len()
    }

    /// Slice `n` for `n` in `1..=M`.
    pub fn slice(&self, n: usize) -> &Field {
        &self.slices[n - 1]
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    /// `||h||_{L^2(omega x (0,T))}` as `sqrt(dt * sum_n |h^n|^2)`.
    pub fn l2_norm(&self, grid: &Grid1D, tm: &TimeMesh) -> f64 {
        let sum: f64 = self.slices.iter().map(|s| grid.inner_unchecked(s, s)).sum();
        (tm.dt() * sum).sqrt()
    }
}

/// Smallest `M` with `|d| (T/M) / tau^2 <= h^2`.
pub fn stable_time_steps(p: &SystemParams, grid: &Grid1D, horizon: f64) -> usize {
    if p.d == 0.0 {
        return 1;
    }
    let h = grid.h();
    let dt_max = h * h * p.tau * p.tau / p.d.abs();
    let ratio = horizon / dt_max;
    let nearest = ratio.round();
    let m = if (ratio - nearest).abs() <= 1e-9 * ratio {
        nearest
    } else {
        ratio.ceil()
    };
    (m as usize).max(1)
}

/// Spatial means `(mean u(t_n), mean v(t_n))` for `n = 0..=M`.
pub fn average_series(traj: &Trajectory) -> (TimeSeries, TimeSeries) {
    let mean = |fields: &[Field]| -> TimeSeries {
        fields
            .iter()
            .map(|f| mean_value(f, &traj.grid).expect("trajectory fields are grid-aligned"))
            .collect::<Vec<_>>()
            .into()
    };
    (mean(&traj.u), mean(&traj.v))
}
