use crate::error::{Error, Result};
use crate::mesh::{indicator, Field, Grid1D, TimeMesh};
use crate::operators::{BlockStepMatrix, FactoredStepMatrix};

use super::{weighted_norm, Control, SystemParams, Trajectory, BLOW_UP_THRESHOLD};

pub const GROWTH_CHECK_STRIDE: usize = 8;

/// Factored forward and adjoint step matrices for one `(params, grid, dt)`.
///
/// The adjoint step uses the transposed coupling `[[a, c], [b, d]]`; with the
/// control slice `n` entering the step `t_{n-1} -> t_n`, the backward
/// recursion is the exact transpose of the forward control-to-state map in
/// the inner product `<(u,v),(u',v')> = int u u' + tau int v v'`.
#[derive(Debug, Clone)]
pub struct CoupledSolver {
    params: SystemParams,
    grid: Grid1D,
    time_mesh: TimeMesh,
    forward: FactoredStepMatrix,
    adjoint: FactoredStepMatrix,
    mask: Field,
}

impl CoupledSolver {
    pub fn new(params: SystemParams, grid: &Grid1D, time_mesh: &TimeMesh) -> Result<Self> {
        params.validate()?;
        let dt = time_mesh.dt();
        let reaction = params.reaction();
        let transposed = [[reaction[0][0], reaction[1][0]], [reaction[0][1], reaction[1][1]]];
        let forward = BlockStepMatrix::assemble(reaction, params.tau, params.sigma, dt, grid)?.factorize()?;
        let adjoint = BlockStepMatrix::assemble(transposed, params.tau, params.sigma, dt, grid)?.factorize()?;
        let mask = indicator(params.omega.0, params.omega.1, grid)?;
        Ok(Self {
            params,
            grid: grid.clone(),
            time_mesh: time_mesh.clone(),
            forward,
            adjoint,
            mask,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn time_mesh(&self) -> &TimeMesh {
        &self.time_mesh
    }

    /// Nodal indicator of the control window.
    pub fn mask(&self) -> &Field {
        &self.mask
    }

    fn check_control(&self, control: Option<&Control>) -> Result<()> {
        if let Some(h) = control {
            if h.m_steps() != self.time_mesh.m_steps() {
                return Err(Error::LengthMismatch {
                    expected: self.time_mesh.m_steps(),
                    found: h.m_steps(),
                });
            }
            h.slices().iter().try_for_each(|s| self.grid.check(s))?;
        }
        Ok(())
    }

    fn check_dirichlet(&self, u: &[f64]) -> Result<()> {
        self.grid.check(u)?;
        let last = u.len() - 1;
        if u[0] != 0.0 || u[last] != 0.0 {
            return Err(Error::InvalidParameter(
                "Dirichlet component must vanish at x = 0 and x = 1".into(),
            ));
        }
        Ok(())
    }

    /// In-place forward step: `(u, v) <- (u^{n+1}, v^{n+1})` given the
    /// (already masked) control slice acting on this step.
    fn step_in_place(&self, u: &mut [f64], v: &mut [f64], slice: Option<&[f64]>) {
        let dt = self.time_mesh.dt();
        if let Some(h) = slice {
            for (ui, hi) in u.iter_mut().zip(h) {
                *ui += dt * hi;
            }
        }
        let last = u.len() - 1;
        u[0] = 0.0;
        u[last] = 0.0;
        v.iter_mut().for_each(|x| *x *= self.params.tau);
        self.forward.solve_in_place(u, v);
    }

    fn adjoint_step_in_place(&self, phi: &mut [f64], psi: &mut [f64]) {
        let last = phi.len() - 1;
        phi[0] = 0.0;
        phi[last] = 0.0;
        psi.iter_mut().for_each(|x| *x *= self.params.tau);
        self.adjoint.solve_in_place(phi, psi);
    }

    /// One implicit Euler step of the controlled system; the slice is
    /// restricted to the control window first.
    pub fn step(&self, u: &[f64], v: &[f64], control_slice: Option<&[f64]>) -> Result<(Field, Field)> {
        self.grid.check(u)?;
        self.grid.check(v)?;
        if let Some(h) = control_slice {
            self.grid.check(h)?;
        }
        let masked: Option<Vec<f64>> =
            control_slice.map(|h| h.iter().zip(self.mask.iter()).map(|(x, m)| x * m).collect());
        let mut u = Field::from(u.to_vec());
        let mut v = Field::from(v.to_vec());
        self.step_in_place(&mut u, &mut v, masked.as_deref());
        Ok((u, v))
    }

    fn blow_up_limit(&self, u0: &[f64], v0: &[f64], control: Option<&Control>) -> f64 {
        let data = self.grid.inner_unchecked(u0, u0) + self.params.tau * self.grid.inner_unchecked(v0, v0);
        let source = control.map_or(0.0, |h| h.l2_norm(&self.grid, &self.time_mesh));
        BLOW_UP_THRESHOLD * (data.sqrt() + source).max(1.0)
    }

    /// Full forward trajectory from `(u0, v0)` under `control` (zero if `None`).
    pub fn forward(&self, u0: &[f64], v0: &[f64], control: Option<&Control>) -> Result<Trajectory> {
        self.check_dirichlet(u0)?;
        self.grid.check(v0)?;
        self.check_control(control)?;
        let limit = self.blow_up_limit(u0, v0, control);
        let m = self.time_mesh.m_steps();
        let mut us = Vec::with_capacity(m + 1);
        let mut vs = Vec::with_capacity(m + 1);
        us.push(Field::from(u0.to_vec()));
        vs.push(Field::from(v0.to_vec()));
        for n in 1..=m {
            let mut u = us[n - 1].clone();
            let mut v = vs[n - 1].clone();
            self.step_in_place(&mut u, &mut v, control.map(|h| &h.slice(n)[..]));
            self.check_growth(&u, &v, n, limit)?;
            us.push(u);
            vs.push(v);
        }
        Ok(Trajectory {
            grid: self.grid.clone(),
            time_mesh: self.time_mesh.clone(),
            u: us,
            v: vs,
        })
    }

    /// Terminal state of [`Self::forward`] without storing the trajectory.
    /// Growth is checked every [`GROWTH_CHECK_STRIDE`] steps.
    pub fn forward_terminal(&self, u0: &[f64], v0: &[f64], control: Option<&Control>) -> Result<(Field, Field)> {
        self.check_dirichlet(u0)?;
        self.grid.check(v0)?;
        self.check_control(control)?;
        let limit = self.blow_up_limit(u0, v0, control);
        let mut u = Field::from(u0.to_vec());
        let mut v = Field::from(v0.to_vec());
        let m = self.time_mesh.m_steps();
        for n in 1..=m {
            self.step_in_place(&mut u, &mut v, control.map(|h| &h.slice(n)[..]));
            if n % GROWTH_CHECK_STRIDE == 0 || n == m {
                self.check_growth(&u, &v, n, limit)?;
            }
        }
        Ok((u, v))
    }

    fn check_growth(&self, u: &[f64], v: &[f64], step: usize, limit: f64) -> Result<()> {
        let norm = weighted_norm(u, v, self.params.tau, &self.grid)?;
        if !norm.is_finite() || norm > limit {
            return Err(Error::BlowUp { step, norm });
        }
        Ok(())
    }

    /// Backward trajectory `(phi^n, psi^n)`, `n = 0..=M`, from terminal data.
    pub fn adjoint(&self, phi_t: &[f64], psi_t: &[f64]) -> Result<Trajectory> {
        self.check_dirichlet(phi_t)?;
        self.grid.check(psi_t)?;
        let m = self.time_mesh.m_steps();
        let mut phis = vec![Field::default(); m + 1];
        let mut psis = vec![Field::default(); m + 1];
        phis[m] = Field::from(phi_t.to_vec());
        psis[m] = Field::from(psi_t.to_vec());
        for n in (0..m).rev() {
            let mut phi = phis[n + 1].clone();
            let mut psi = psis[n + 1].clone();
            self.adjoint_step_in_place(&mut phi, &mut psi);
            phis[n] = phi;
            psis[n] = psi;
        }
        Ok(Trajectory {
            grid: self.grid.clone(),
            time_mesh: self.time_mesh.clone(),
            u: phis,
            v: psis,
        })
    }

    /// The control `h^n = 1_omega phi^{n-1}`, `n = 1..=M`, observed from the
    /// adjoint solve with terminal data `(phi_t, psi_t)`.
    pub fn adjoint_observation(&self, phi_t: &[f64], psi_t: &[f64]) -> Result<Control> {
        self.check_dirichlet(phi_t)?;
        self.grid.check(psi_t)?;
        let m = self.time_mesh.m_steps();
        let mut slices = vec![Field::default(); m];
        let mut phi = Field::from(phi_t.to_vec());
        let mut psi = Field::from(psi_t.to_vec());
        for n in (1..=m).rev() {
            self.adjoint_step_in_place(&mut phi, &mut psi);
            // phi now holds phi^{n-1}
            let mut slice = phi.clone();
            slice.iter_mut().zip(self.mask.iter()).for_each(|(x, m)| *x *= m);
            slices[n - 1] = slice;
        }
        Ok(Control::from_masked(slices))
    }
}

pub fn solve_forward(
    p: &SystemParams,
    grid: &Grid1D,
    time_mesh: &TimeMesh,
    u0: &[f64],
    v0: &[f64],
    control: Option<&Control>,
) -> Result<Trajectory> {
    CoupledSolver::new(*p, grid, time_mesh)?.forward(u0, v0, control)
}

pub fn solve_adjoint(
    p: &SystemParams,
    grid: &Grid1D,
    time_mesh: &TimeMesh,
    phi_t: &[f64],
    psi_t: &[f64],
) -> Result<Trajectory> {
    CoupledSolver::new(*p, grid, time_mesh)?.adjoint(phi_t, psi_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{l2_norm, make_grid, make_time_mesh, mean_value};
    use crate::operators::assemble_step_matrix;
    use crate::solvers::average_series;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(a: f64, b: f64, c: f64, d: f64, tau: f64, sigma: f64) -> SystemParams {
        SystemParams::new(a, b, c, d, tau, sigma, (0.3, 0.8)).unwrap()
    }

    fn sine(g: &Grid1D) -> Field {
        let mut f = g.sample(|x| (PI * x).sin());
        let last = f.len() - 1;
        f[0] = 0.0;
        f[last] = 0.0;
        f
    }

    #[test]
    fn zero_in_zero_out() {
        let g = make_grid(12).unwrap();
        let tm = make_time_mesh(0.1, 20).unwrap();
        let s = CoupledSolver::new(params(2.0, -0.5, 5.5, -4.5, 0.5, 2.0), &g, &tm).unwrap();
        let (u, v) = s.step(&g.zeros(), &g.zeros(), Some(&g.zeros())).unwrap();
        assert!(u.iter().chain(v.iter()).all(|&x| x == 0.0));
        let traj = s.forward(&g.zeros(), &g.zeros(), None).unwrap();
        assert!(traj.u.iter().chain(&traj.v).all(|f| f.iter().all(|&x| x == 0.0)));
        let adj = s.adjoint(&g.zeros(), &g.zeros()).unwrap();
        assert!(adj.u.iter().chain(&adj.v).all(|f| f.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn pure_heat_matches_analytic_decay() {
        let g = make_grid(100).unwrap();
        let tm = make_time_mesh(0.1, 2000).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0, 1.0, 1.0);
        let traj = solve_forward(&p, &g, &tm, &sine(&g), &g.zeros(), None).unwrap();
        let decay = (-PI * PI * 0.1).exp();
        let (u, _) = traj.terminal();
        for (i, x) in g.nodes().iter().enumerate() {
            assert!((u[i] - decay * (PI * x).sin()).abs() < 2e-3);
        }
        // backward heat from the same profile
        let adj = solve_adjoint(&p, &g, &tm, &sine(&g), &g.zeros()).unwrap();
        for (i, x) in g.nodes().iter().enumerate() {
            assert!((adj.u[0][i] - decay * (PI * x).sin()).abs() < 2e-3);
        }
    }

    #[test]
    fn damped_and_growing_regimes() {
        let g = make_grid(50).unwrap();
        let tm = make_time_mesh(0.1, 500).unwrap();
        let u0 = sine(&g);
        let v0 = indicator(0.2, 0.7, &g).unwrap();
        let damped = solve_forward(&params(2.0, -0.5, 5.5, -4.5, 0.5, 2.0), &g, &tm, &u0, &v0, None).unwrap();
        let (ut, vt) = damped.terminal();
        assert!(l2_norm(ut, &g).unwrap() < l2_norm(&u0, &g).unwrap());
        assert!(l2_norm(vt, &g).unwrap() < l2_norm(&v0, &g).unwrap());

        let growing = solve_forward(&params(2.0, -0.5, 5.5, 5.0, 0.5, 2.0), &g, &tm, &u0, &v0, None).unwrap();
        let (_, vt) = growing.terminal();
        assert!(l2_norm(vt, &g).unwrap() > l2_norm(&v0, &g).unwrap());
    }

    #[test]
    fn uncoupled_u_matches_scalar_oracle() {
        let g = make_grid(20).unwrap();
        let tm = make_time_mesh(0.05, 40).unwrap();
        let p = params(1.5, 0.0, 0.0, -2.0, 0.3, 4.0);
        let u0 = sine(&g);
        let v0 = g.sample(|x| x * x);
        let h = Control::from_slices(
            (1..=40).map(|n| g.sample(|x| (n as f64 * x).cos())).collect(),
            p.omega,
            &g,
        )
        .unwrap();
        let traj = solve_forward(&p, &g, &tm, &u0, &v0, Some(&h)).unwrap();

        // dense scalar implicit Euler for u_t = u_xx + a u + h 1_omega
        let n = g.len();
        let dt = tm.dt();
        let k = 1.0 / (g.h() * g.h());
        let mut a = DMatrix::<f64>::identity(n, n);
        for i in 1..n - 1 {
            a[(i, i)] = 1.0 - dt * p.a + 2.0 * dt * k;
            a[(i, i - 1)] = -dt * k;
            a[(i, i + 1)] = -dt * k;
        }
        let lu = a.lu();
        let mut u = DVector::from_column_slice(&u0);
        for step in 1..=40 {
            let mut rhs = u.clone();
            for i in 0..n {
                rhs[i] += dt * h.slice(step)[i];
            }
            rhs[0] = 0.0;
            rhs[n - 1] = 0.0;
            u = lu.solve(&rhs).unwrap();
            for i in 0..n {
                assert!((traj.u[step][i] - u[i]).abs() < 1e-12 * (1.0 + u.amax()));
            }
        }
    }

    /// Dense one-step propagator `R = A^{-1} diag(1, tau)` in interleaved ordering.
    fn dense_propagator(p: &SystemParams, g: &Grid1D, dt: f64) -> DMatrix<f64> {
        let d = assemble_step_matrix(p, dt, g).unwrap().to_dense();
        let n2 = d.len();
        let a = DMatrix::from_fn(n2, n2, |r, c| d[r][c]);
        let mut scale = DMatrix::<f64>::identity(n2, n2);
        for i in 0..n2 / 2 {
            scale[(2 * i + 1, 2 * i + 1)] = p.tau;
            if i == 0 || i == n2 / 2 - 1 {
                scale[(2 * i, 2 * i)] = 0.0;
            }
        }
        a.lu().solve(&scale).unwrap()
    }

    #[test]
    fn adjoint_matches_dense_transpose_propagator() {
        let g = make_grid(4).unwrap();
        let tm = make_time_mesh(0.1, 5).unwrap();
        let p = params(2.0, -0.5, 5.5, -4.5, 0.5, 2.0);
        let r = dense_propagator(&p, &g, tm.dt());
        let n = g.len();
        let mut mass = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            mass[(2 * i, 2 * i)] = g.weight(i);
            mass[(2 * i + 1, 2 * i + 1)] = p.tau * g.weight(i);
        }
        // tau-weighted adjoint R* = M^{-1} R^T M restricted to pinned-u states
        let mut r_adj = mass.clone().try_inverse().unwrap() * r.transpose() * &mass;
        for j in 0..2 * n {
            r_adj[(0, j)] = 0.0;
            r_adj[(2 * n - 2, j)] = 0.0;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut phi_t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        phi_t[0] = 0.0;
        phi_t[n - 1] = 0.0;
        let psi_t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let adj = solve_adjoint(&p, &g, &tm, &phi_t, &psi_t).unwrap();
        let mut x = DVector::from_iterator(2 * n, phi_t.iter().zip(&psi_t).flat_map(|(a, b)| [*a, *b]));
        for step in (0..5).rev() {
            x = &r_adj * x;
            for i in 0..n {
                assert!((adj.u[step][i] - x[2 * i]).abs() < 1e-12 * (1.0 + x.amax()));
                assert!((adj.v[step][i] - x[2 * i + 1]).abs() < 1e-12 * (1.0 + x.amax()));
            }
        }
    }

    #[test]
    fn observation_matches_adjoint_trajectory() {
        let g = make_grid(8).unwrap();
        let tm = make_time_mesh(0.1, 10).unwrap();
        let s = CoupledSolver::new(params(2.0, -0.5, 5.5, -4.5, 0.5, 2.0), &g, &tm).unwrap();
        let phi_t = sine(&g);
        let psi_t = g.sample(|x| x);
        let adj = s.adjoint(&phi_t, &psi_t).unwrap();
        let obs = s.adjoint_observation(&phi_t, &psi_t).unwrap();
        for n in 1..=10 {
            for i in 0..g.len() {
                assert_eq!(obs.slice(n)[i], adj.u[n - 1][i] * s.mask()[i]);
            }
        }
    }

    #[test]
    fn dissipative_decoupled_norms_never_grow() {
        let g = make_grid(30).unwrap();
        for m in [3, 30, 300] {
            let tm = make_time_mesh(0.1, m).unwrap();
            let p = params(0.0, 0.7, 0.0, -2.0, 0.2, 5.0);
            let traj = solve_forward(&p, &g, &tm, &sine(&g), &g.sample(|x| (5.0 * x).cos() + x), None).unwrap();
            for n in 0..m {
                assert!(l2_norm(&traj.u[n + 1], &g).unwrap() <= l2_norm(&traj.u[n], &g).unwrap() + 1e-15);
                assert!(l2_norm(&traj.v[n + 1], &g).unwrap() <= l2_norm(&traj.v[n], &g).unwrap() + 1e-15);
            }
        }
    }

    #[test]
    fn mean_of_neumann_component_satisfies_relaxation_identity() {
        let g = make_grid(40).unwrap();
        let tm = make_time_mesh(0.1, 100).unwrap();
        let p = params(-3.0, 2.0, 1.0, -1.0, 0.1, 10.0);
        let traj = solve_forward(&p, &g, &tm, &sine(&g), &indicator(0.2, 0.7, &g).unwrap(), None).unwrap();
        let (mu, mv) = average_series(&traj);
        for n in 0..100 {
            let lhs = p.tau * (mv[n + 1] - mv[n]) / tm.dt();
            let rhs = p.c * mu[n + 1] + p.d * mv[n + 1];
            // Neumann rows integrate to zero flux under the trapezoid weights
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "n={n}");
        }
        assert!(mean_value(&traj.v[0], &g).is_ok());
    }

    #[test]
    fn accuracy_orders() {
        let err = |n: usize, m: usize| {
            let g = make_grid(n).unwrap();
            let tm = make_time_mesh(0.1, m).unwrap();
            let p = params(0.0, 0.0, 0.0, 0.0, 1.0, 1.0);
            let traj = solve_forward(&p, &g, &tm, &sine(&g), &g.zeros(), None).unwrap();
            let exact = g.sample(|x| (-PI * PI * 0.1).exp() * (PI * x).sin());
            let mut diff = traj.terminal().0.clone();
            diff.axpy(-1.0, &exact);
            l2_norm(&diff, &g).unwrap()
        };
        let spatial = err(19, 20_000) / err(39, 20_000);
        assert!((3.5..4.5).contains(&spatial), "spatial ratio {spatial}");
        let temporal = err(799, 100) / err(799, 200);
        assert!((1.8..2.2).contains(&temporal), "temporal ratio {temporal}");
    }

    #[test]
    fn blow_up_is_detected() {
        let g = make_grid(10).unwrap();
        let tm = make_time_mesh(10.0, 20_000).unwrap();
        let p = params(0.0, 0.0, 1.0, 5.0, 0.01, 1.0);
        let err = solve_forward(&p, &g, &tm, &g.zeros(), &g.sample(|_| 1.0), None).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err:?}");
    }

    #[test]
    fn rejects_nonzero_dirichlet_data() {
        let g = make_grid(10).unwrap();
        let tm = make_time_mesh(0.1, 5).unwrap();
        let p = params(0.0, 0.0, 1.0, -1.0, 1.0, 1.0);
        assert!(solve_forward(&p, &g, &tm, &g.sample(|_| 1.0), &g.zeros(), None).is_err());
        assert!(solve_adjoint(&p, &g, &tm, &g.sample(|_| 1.0), &g.zeros()).is_err());
    }
}
