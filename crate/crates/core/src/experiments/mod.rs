//! Scenario presets and the sweep drivers behind the convergence and
//! uniformity experiments.

mod fit;
mod output;
mod runs;

use std::fmt;
use std::str::FromStr;

pub use fit::{fit_slope, SlopeFit};
pub use output::{write_limit_csv, write_sweep_csv, LIMIT_COLUMNS, SWEEP_COLUMNS};
pub use runs::{
    run_average_convergence, run_controlled, run_energy_lattice, run_limit_check, run_mesh_sweep, run_tau_sweep,
    run_uncontrolled, ControlledRun, EnergyCell, LimitRow, MeshSweep, RowStatus, SweepRow, TauSweep, UncontrolledRun, MAX_TIME_STEPS,
};

use crate::error::{Error, Result};
use crate::mesh::{indicator, Field, Grid1D};
use crate::solvers::{fmt_num, SystemParams};

/// Analytic initial profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    Zero,
    /// `sin(k pi x)`
    Sine(f64),
    /// `1_{(a,b)}(x)`
    Indicator(f64, f64),
    Constant(f64),
}

impl InitialData {
    pub fn eval(&self, grid: &Grid1D) -> Result<Field> {
        match *self {
            InitialData::Zero => Ok(grid.zeros()),
            InitialData::Sine(k) => Ok(grid.sample(|x| (k * std::f64::consts::PI * x).sin())),
            InitialData::Indicator(a, b) => indicator(a, b, grid),
            InitialData::Constant(c) => Ok(grid.sample(|_| c)),
        }
    }

    /// Same as [`Self::eval`] with both boundary values set to zero.
    pub fn eval_dirichlet(&self, grid: &Grid1D) -> Result<Field> {
        let mut f = self.eval(grid)?;
        let last = f.len() - 1;
        f[0] = 0.0;
        f[last] = 0.0;
        Ok(f)
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Zero => write!(f, "zero"),
            InitialData::Sine(k) => write!(f, "sine({k})"),
            InitialData::Indicator(a, b) => write!(f, "indicator({a},{b})"),
            InitialData::Constant(c) => write!(f, "constant({c})"),
        }
    }
}

fn parse_args(s: &str, name: &str) -> Option<Vec<f64>> {
    let inner = s.strip_prefix(name)?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    let inner = inner.strip_prefix('(')?.strip_suffix(')')?;
    inner.split(',').map(|t| t.trim().parse().ok()).collect()
}

impl FromStr for InitialData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("unknown initial datum `{s}`"));
        if s == "zero" {
            return Ok(InitialData::Zero);
        }
        if let Some(args) = parse_args(s, "sine") {
            return match args.as_slice() {
                [] => Ok(InitialData::Sine(1.0)),
                [k] => Ok(InitialData::Sine(*k)),
                _ => Err(bad()),
            };
        }
        if let Some(args) = parse_args(s, "indicator") {
            return match args.as_slice() {
                [a, b] if a < b => Ok(InitialData::Indicator(*a, *b)),
                _ => Err(bad()),
            };
        }
        if let Some(args) = parse_args(s, "constant") {
            return match args.as_slice() {
                [c] => Ok(InitialData::Constant(*c)),
                _ => Err(bad()),
            };
        }
        Err(bad())
    }
}

/// System coefficients plus initial data and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub params: SystemParams,
    pub u0: InitialData,
    pub v0: InitialData,
    pub horizon: f64,
}

impl Scenario {
    /// `a = 2, b = -1/2, c = 11/2`, `tau = 0.5, sigma = 2`, `omega = (0.3, 0.8)`,
    /// `u0 = sin(pi x)`, `v0 = 1_{(0.2,0.7)}`, `T = 0.1`.
    pub fn reference(d: f64) -> Self {
        Self {
            label: format!("reference d={d}"),
            params: SystemParams {
                a: 2.0,
                b: -0.5,
                c: 5.5,
                d,
                tau: 0.5,
                sigma: 2.0,
                omega: (0.3, 0.8),
            },
            u0: InitialData::Sine(1.0),
            v0: InitialData::Indicator(0.2, 0.7),
            horizon: 0.1,
        }
    }

    /// `a = -3, b = 2, c = 1, d = -1` with the reference initial data.
    pub fn mean_relaxation() -> Self {
        Self {
            label: "mean relaxation".into(),
            params: SystemParams {
                a: -3.0,
                b: 2.0,
                c: 1.0,
                d: -1.0,
                tau: 1.0,
                sigma: 1.0,
                omega: (0.3, 0.8),
            },
            ..Self::reference(-1.0)
        }
    }

    pub fn initial_data(&self, grid: &Grid1D) -> Result<(Field, Field)> {
        Ok((self.u0.eval_dirichlet(grid)?, self.v0.eval(grid)?))
    }
}

/// Penalization as a function of the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsRule {
    /// `eps = h^4`
    H4,
    Fixed(f64),
}

impl EpsRule {
    pub fn eps(&self, grid: &Grid1D) -> f64 {
        match *self {
            EpsRule::H4 => grid.h().powi(4),
            EpsRule::Fixed(e) => e,
        }
    }
}

impl fmt::Display for EpsRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsRule::H4 => write!(f, "h4"),
            EpsRule::Fixed(e) => f.write_str(&fmt_num(*e)),
        }
    }
}

impl FromStr for EpsRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "h4" => Ok(EpsRule::H4),
            other => match other.parse::<f64>() {
                Ok(e) if e > 0.0 => Ok(EpsRule::Fixed(e)),
                _ => Err(Error::InvalidParameter(format!("eps must be `h4` or a positive number, got `{s}`"))),
            },
        }
    }
}

/// How `sigma` follows `tau` in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    TwoOverTau,
    OneOverTau,
    Fixed(f64),
}

impl SigmaRule {
    pub fn sigma(&self, tau: f64) -> f64 {
        match *self {
            SigmaRule::TwoOverTau => 2.0 / tau,
            SigmaRule::OneOverTau => 1.0 / tau,
            SigmaRule::Fixed(s) => s,
        }
    }
}

impl fmt::Display for SigmaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaRule::TwoOverTau => write!(f, "two_over_tau"),
            SigmaRule::OneOverTau => write!(f, "one_over_tau"),
            SigmaRule::Fixed(s) => f.write_str(&fmt_num(*s)),
        }
    }
}

impl FromStr for SigmaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "two_over_tau" => Ok(SigmaRule::TwoOverTau),
            "one_over_tau" => Ok(SigmaRule::OneOverTau),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 => Ok(SigmaRule::Fixed(v)),
                _ => Err(Error::InvalidParameter(format!(
                    "sigma rule must be two_over_tau, one_over_tau or a positive number, got `{s}`"
                ))),
            },
        }
    }
}
