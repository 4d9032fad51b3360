use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hum::{solve_penalized_hum, CgOptions, HumSolution};
use crate::mesh::{l2_norm, l2_norm_time, make_grid, make_time_mesh, mean_value, Grid1D, TimeMesh};
use crate::solvers::{
    average_series, solve_nonlocal_linear, stable_time_steps, weighted_norm, Control, CoupledSolver, Trajectory,
    BLOW_UP_THRESHOLD,
};

use super::{fit_slope, EpsRule, Scenario, SigmaRule, SlopeFit};

/// Upper limit on time steps for a single tau-sweep row.
pub const MAX_TIME_STEPS: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// The stability rule asked for more than [`MAX_TIME_STEPS`] steps.
    Capped,
    BlowUp,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "ok",
            RowStatus::Capped => "capped",
            RowStatus::BlowUp => "blow_up",
        })
    }
}

/// One line of a sweep table. Columns a sweep does not produce are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `h` for mesh sweeps, `tau` otherwise.
    pub x: f64,
    pub nv: Option<f64>,
    pub nyt: Option<f64>,
    pub inf_f: Option<f64>,
    pub big_m: Option<f64>,
    pub free_norm: Option<f64>,
    pub avg_diff: Option<f64>,
    pub nyt_unweighted: Option<f64>,
    pub n: usize,
    pub m: usize,
    pub status: RowStatus,
}

impl SweepRow {
    fn empty(x: f64, n: usize, m: usize) -> Self {
        Self {
            x,
            nv: None,
            nyt: None,
            inf_f: None,
            big_m: None,
            free_norm: None,
            avg_diff: None,
            nyt_unweighted: None,
            n,
            m,
            status: RowStatus::Ok,
        }
    }

    fn from_hum(x: f64, n: usize, m: usize, sol: &HumSolution) -> Self {
        Self {
            nv: Some(sol.cost),
            nyt: Some(sol.target_norm),
            inf_f: Some(sol.inf_f),
            big_m: Some(sol.big_m),
            free_norm: Some(sol.free_norm),
            nyt_unweighted: Some(sol.target_norm_unweighted),
            ..Self::empty(x, n, m)
        }
    }
}

fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

fn meshes(n: usize, m: usize, horizon: f64) -> Result<(Grid1D, TimeMesh)> {
    Ok((make_grid(n)?, make_time_mesh(horizon, m)?))
}

/// Uncontrolled trajectory plus norms at the first and last stored levels.
#[derive(Debug, Clone)]
pub struct UncontrolledRun {
    /// Snapshots up to the blow-up step when one occurred.
    pub trajectory: Trajectory,
    /// `(||u(0)||, ||v(0)||)`
    pub initial_norms: (f64, f64),
    /// `(||u||, ||v||)` at the last stored level.
    pub terminal_norms: (f64, f64),
    /// `(step, weighted norm)` of the first level above the blow-up threshold.
    pub blow_up: Option<(usize, f64)>,
}

pub fn run_uncontrolled(s: &Scenario, n: usize, m: usize) -> Result<UncontrolledRun> {
    let (grid, tm) = meshes(n, m, s.horizon)?;
    let (u0, v0) = s.initial_data(&grid)?;
    let solver = CoupledSolver::new(s.params, &grid, &tm)?;
    let scale = weighted_norm(&u0, &v0, s.params.tau, &grid)?.max(1.0);
    let norms = |u: &[f64], v: &[f64]| -> Result<(f64, f64)> { Ok((l2_norm(u, &grid)?, l2_norm(v, &grid)?)) };
    let initial_norms = norms(&u0, &v0)?;
    let mut us = vec![u0];
    let mut vs = vec![v0];
    let mut blow_up = None;
    for step in 1..=m {
        let (u, v) = solver.step(&us[step - 1], &vs[step - 1], None)?;
        let norm = weighted_norm(&u, &v, s.params.tau, &grid)?;
        us.push(u);
        vs.push(v);
        if !norm.is_finite() || norm > BLOW_UP_THRESHOLD * scale {
            blow_up = Some((step, norm));
            break;
        }
    }
    let terminal_norms = norms(us.last().unwrap(), vs.last().unwrap())?;
    Ok(UncontrolledRun {
        trajectory: Trajectory {
            grid,
            time_mesh: tm,
            u: us,
            v: vs,
        },
        initial_norms,
        terminal_norms,
        blow_up,
    })
}

/// A penalized HUM solve with its bound checks.
#[derive(Debug, Clone)]
pub struct ControlledRun {
    pub solution: HumSolution,
    pub eps: f64,
    /// `target_norm <= big_m sqrt(eps)`
    pub target_bound_holds: bool,
    /// `cost <= big_m`
    pub cost_bound_holds: bool,
}

pub fn run_controlled(s: &Scenario, n: usize, m: usize, eps_rule: EpsRule, cg: &CgOptions) -> Result<ControlledRun> {
    let (grid, tm) = meshes(n, m, s.horizon)?;
    let (u0, v0) = s.initial_data(&grid)?;
    let eps = eps_rule.eps(&grid);
    let solution = solve_penalized_hum(&s.params, &grid, &tm, &u0, &v0, eps, cg)?;
    let slack = 1.0 + 1e-12;
    Ok(ControlledRun {
        target_bound_holds: solution.target_norm <= solution.big_m * eps.sqrt() * slack,
        cost_bound_holds: solution.cost <= solution.big_m * slack,
        solution,
        eps,
    })
}

/// Rows computed before the first failure, the fit when every row
/// succeeded, and the failure otherwise.
#[derive(Debug)]
pub struct MeshSweep {
    pub rows: Vec<SweepRow>,
    pub fit: Option<SlopeFit>,
    pub failure: Option<Error>,
}

/// Mesh refinement study: one HUM solve per `N`, with `M = m0 N / n0`.
pub fn run_mesh_sweep(
    s: &Scenario,
    n_list: &[usize],
    base: (usize, usize),
    eps_rule: EpsRule,
    cg: &CgOptions,
    jobs: usize,
) -> Result<MeshSweep> {
    if n_list.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: n_list.len(),
        });
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("mesh sizes must be strictly increasing".into()));
    }
    let (m0, n0) = base;
    if m0 == 0 || n0 == 0 {
        return Err(Error::InvalidParameter("base mesh must be nonzero".into()));
    }
    s.params.require_controllable()?;
    let results = par_map(n_list, jobs, |&n| -> Result<SweepRow> {
        let m = ((m0 * n) as f64 / n0 as f64).round().max(1.0) as usize;
        let run = run_controlled(s, n, m, eps_rule, cg)?;
        Ok(SweepRow::from_hum(make_grid(n)?.h(), n, m, &run.solution))
    })?;
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                return Ok(MeshSweep {
                    rows,
                    fit: None,
                    failure: Some(e),
                })
            }
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.nyt.unwrap()).collect();
    let fit = fit_slope(&xs, &ys)?;
    Ok(MeshSweep {
        rows,
        fit: Some(fit),
        failure: None,
    })
}

fn check_taus(tau_list: &[f64]) -> Result<()> {
    if tau_list.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    if let Some(&t) = tau_list.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::InvalidParameter(format!("tau must lie in (0, 1], got {t}")));
    }
    if tau_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("tau values must be strictly decreasing".into()));
    }
    Ok(())
}

/// Rows of a tau sweep and the error that stopped it, if any.
#[derive(Debug)]
pub struct TauSweep {
    pub rows: Vec<SweepRow>,
    pub failure: Option<Error>,
}

/// One HUM solve per `tau` with `sigma` from `sigma_rule`. For `d > 0` the
/// step count is raised to the stability count, capped at [`MAX_TIME_STEPS`].
#[allow(clippy::too_many_arguments)]
pub fn run_tau_sweep(
    s: &Scenario,
    n: usize,
    m: usize,
    tau_list: &[f64],
    sigma_rule: SigmaRule,
    eps_rule: EpsRule,
    cg: &CgOptions,
    jobs: usize,
) -> Result<TauSweep> {
    check_taus(tau_list)?;
    s.params.require_controllable()?;
    let grid = make_grid(n)?;
    let results = par_map(tau_list, jobs, |&tau| -> Result<SweepRow> {
        let params = s.params.with_tau_sigma(tau, sigma_rule.sigma(tau))?;
        let (mut steps, mut status) = (m, RowStatus::Ok);
        if params.d > 0.0 {
            let stable = stable_time_steps(&params, &grid, s.horizon);
            if stable > MAX_TIME_STEPS {
                steps = MAX_TIME_STEPS.max(m);
                status = RowStatus::Capped;
            } else {
                steps = steps.max(stable);
            }
        }
        let row_scenario = Scenario {
            params,
            ..s.clone()
        };
        match run_controlled(&row_scenario, n, steps, eps_rule, cg) {
            Ok(run) => Ok(SweepRow {
                status,
                ..SweepRow::from_hum(tau, n, steps, &run.solution)
            }),
            Err(Error::BlowUp { .. }) => Ok(SweepRow {
                status: RowStatus::BlowUp,
                ..SweepRow::empty(tau, n, steps)
            }),
            Err(e) => Err(e),
        }
    })?;
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => return Ok(TauSweep { rows, failure: Some(e) }),
        }
    }
    Ok(TauSweep { rows, failure: None })
}

/// `||mean u - mean v||_{L^2(0,T)}` per `tau` for uncontrolled solves, with a
/// log-log fit against `tau`.
pub fn run_average_convergence(
    s: &Scenario,
    n: usize,
    m: usize,
    tau_list: &[f64],
    sigma_rule: SigmaRule,
    jobs: usize,
) -> Result<(Vec<SweepRow>, SlopeFit)> {
    check_taus(tau_list)?;
    if tau_list.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: tau_list.len(),
        });
    }
    let (grid, tm) = meshes(n, m, s.horizon)?;
    let (u0, v0) = s.initial_data(&grid)?;
    let rows = par_map(tau_list, jobs, |&tau| -> Result<SweepRow> {
        let params = s.params.with_tau_sigma(tau, sigma_rule.sigma(tau))?;
        let traj = CoupledSolver::new(params, &grid, &tm)?.forward(&u0, &v0, None)?;
        let (mu, mv) = average_series(&traj);
        let diff: Vec<f64> = mu.iter().zip(mv.iter()).map(|(a, b)| a - b).collect();
        Ok(SweepRow {
            avg_diff: Some(l2_norm_time(&diff, &tm)?),
            ..SweepRow::empty(tau, n, m)
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = rows.iter().map(|r| r.avg_diff.unwrap()).collect();
    let fit = fit_slope(tau_list, &ys)?;
    Ok((rows, fit))
}

/// One line of a limit check.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub tau: f64,
    /// `||v - kappa mean(y)||_{L^2((0,T) x Omega)}` with `kappa = -c/d`.
    pub discrepancy: f64,
    pub n: usize,
    pub m: usize,
}

/// Compares `v` of the coupled system at `sigma = 1/tau` with the rescaled
/// mean of the nonlocal limit `y_t - y_xx = a y - (b c / d) mean(y) + h`.
pub fn run_limit_check(
    s: &Scenario,
    n: usize,
    m: usize,
    tau_list: &[f64],
    control: Option<&Control>,
    jobs: usize,
) -> Result<Vec<LimitRow>> {
    check_taus(tau_list)?;
    let p = &s.params;
    if p.d == 0.0 {
        return Err(Error::InvalidParameter("the limit equation needs d != 0".into()));
    }
    let (grid, tm) = meshes(n, m, s.horizon)?;
    let (u0, v0) = s.initial_data(&grid)?;
    let kappa = -p.c / p.d;
    let limit = solve_nonlocal_linear(p.a, p.b * kappa, &u0, control, &tm, &grid)?;
    let limit_means: Vec<f64> = limit
        .y
        .iter()
        .map(|y| Ok(kappa * mean_value(y, &grid)?))
        .collect::<Result<_>>()?;
    par_map(tau_list, jobs, |&tau| -> Result<LimitRow> {
        let params = p.with_tau_sigma(tau, 1.0 / tau)?;
        let traj = CoupledSolver::new(params, &grid, &tm)?.forward(&u0, &v0, control)?;
        let sq: Vec<f64> = traj
            .v
            .iter()
            .zip(&limit_means)
            .map(|(v, &mean)| {
                let d: Vec<f64> = v.iter().map(|x| x - mean).collect();
                grid.inner(&d, &d)
            })
            .collect::<Result<_>>()?;
        let total: f64 = tm.dt() * (sq.iter().sum::<f64>() - 0.5 * (sq[0] + sq[sq.len() - 1]));
        Ok(LimitRow {
            tau,
            discrepancy: total.max(0.0).sqrt(),
            n,
            m,
        })
    })?
    .into_iter()
    .collect()
}

/// Growth factor of the energy along one uncontrolled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCell {
    pub tau: f64,
    pub sigma: f64,
    /// `max_n (||u^n||^2 + tau ||v^n||^2) / (||u^0||^2 + tau ||v^0||^2)`
    pub ratio: f64,
}

/// Energy growth factors over a `(tau, sigma)` lattice, row-major in `taus`.
pub fn run_energy_lattice(
    s: &Scenario,
    n: usize,
    m: usize,
    taus: &[f64],
    sigmas: &[f64],
    jobs: usize,
) -> Result<Vec<EnergyCell>> {
    let (grid, tm) = meshes(n, m, s.horizon)?;
    let (u0, v0) = s.initial_data(&grid)?;
    let cells: Vec<(f64, f64)> = taus.iter().flat_map(|&t| sigmas.iter().map(move |&sg| (t, sg))).collect();
    par_map(&cells, jobs, |&(tau, sigma)| -> Result<EnergyCell> {
        let params = s.params.with_tau_sigma(tau, sigma)?;
        let traj = CoupledSolver::new(params, &grid, &tm)?.forward(&u0, &v0, None)?;
        let energy = |u: &[f64], v: &[f64]| weighted_norm(u, v, tau, &grid).map(|x| x * x);
        let e0 = energy(&u0, &v0)?;
        if e0 == 0.0 {
            return Err(Error::InvalidParameter("initial energy vanishes".into()));
        }
        let mut sup: f64 = 0.0;
        for (u, v) in traj.u.iter().zip(&traj.v) {
            sup = sup.max(energy(u, v)?);
        }
        Ok(EnergyCell {
            tau,
            sigma,
            ratio: sup / e0,
        })
    })?
    .into_iter()
    .collect()
}
