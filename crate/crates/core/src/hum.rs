//! Penalized Hilbert Uniqueness Method.
//!
//! For a penalty `eps > 0` the control minimizing
//!
//! ```text
//! F_eps(h) = 1/2 ||h||^2 + 1/(2 eps) (||u(T)||^2 + tau ||v(T)||^2)
//! ```
//!
//! is `h = 1_omega phi`, where `(phi, psi)` solves the adjoint system from the
//! terminal data `x = (phi_T, psi_T)` solving `(G + eps I) x = -(u_free(T), v_free(T))`.
//! `G` is the Gramian `x -> (w(T), z(T))`; it is self-adjoint and positive
//! semidefinite for `<x, y>_tau = int phi phi' + tau int psi psi'`, so the
//! dual problem is solved by conjugate gradients in that inner product.

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid1D, TimeMesh};
use crate::solvers::{weighted_norm, Control, CoupledSolver, SystemParams, Trajectory};

/// Terminal adjoint data `(phi_T, psi_T)`; `phi_T` vanishes on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    pub phi_t: Field,
    pub psi_t: Field,
}

impl DualVector {
    pub fn new(phi_t: Field, psi_t: Field, grid: &Grid1D) -> Result<Self> {
        grid.check(&phi_t)?;
        grid.check(&psi_t)?;
        if phi_t[0] != 0.0 || phi_t[phi_t.len() - 1] != 0.0 {
            return Err(Error::InvalidParameter(
                "phi_T must vanish at x = 0 and x = 1".into(),
            ));
        }
        Ok(Self { phi_t, psi_t })
    }

    pub fn zeros(grid: &Grid1D) -> Self {
        Self {
            phi_t: grid.zeros(),
            psi_t: grid.zeros(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &DualVector) {
        self.phi_t.axpy(alpha, &other.phi_t);
        self.psi_t.axpy(alpha, &other.psi_t);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.phi_t.scale(alpha);
        self.psi_t.scale(alpha);
    }

    /// `self <- other + beta * self`
    fn xpby(&mut self, other: &DualVector, beta: f64) {
        for (s, o) in self.phi_t.iter_mut().zip(other.phi_t.iter()) {
            *s = o + beta * *s;
        }
        for (s, o) in self.psi_t.iter_mut().zip(other.psi_t.iter()) {
            *s = o + beta * *s;
        }
    }
}

/// `<x, y>_tau = int phi_x phi_y + tau int psi_x psi_y`.
pub fn weighted_inner(x: &DualVector, y: &DualVector, tau: f64, grid: &Grid1D) -> Result<f64> {
    Ok(grid.inner(&x.phi_t, &y.phi_t)? + tau * grid.inner(&x.psi_t, &y.psi_t)?)
}

/// Conjugate gradient stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 500,
        }
    }
}

impl CgOptions {
    pub fn new(rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must lie in (0,1), got {rel_tol}")));
        }
        if max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(Self { rel_tol, max_iter })
    }
}

/// Terminal state of the uncontrolled system.
pub fn free_terminal(
    p: &SystemParams,
    grid: &Grid1D,
    tm: &TimeMesh,
    u0: &[f64],
    v0: &[f64],
) -> Result<(Field, Field)> {
    CoupledSolver::new(*p, grid, tm)?.forward_terminal(u0, v0, None)
}

/// The Gramian `x -> (w(T), z(T))` for one discretization.
#[derive(Debug, Clone)]
pub struct Gramian {
    solver: CoupledSolver,
}

impl Gramian {
    pub fn new(solver: CoupledSolver) -> Self {
        Self { solver }
    }

    pub fn solver(&self) -> &CoupledSolver {
        &self.solver
    }

    /// Adjoint solve from `x`, then the forward solve from zero data driven
    /// by `1_omega phi`. Returns `(w(T), z(T))`.
    pub fn apply(&self, x: &DualVector) -> Result<DualVector> {
        let (phi_t, psi_t) = self.apply_with_observation(x)?.0;
        Ok(DualVector { phi_t, psi_t })
    }

    /// The same operator written for the unweighted `L^2` pairing: `(w(T), tau z(T))`.
    pub fn apply_l2_form(&self, x: &DualVector) -> Result<DualVector> {
        let mut out = self.apply(x)?;
        out.psi_t.scale(self.solver.params().tau);
        Ok(out)
    }

    fn apply_with_observation(&self, x: &DualVector) -> Result<((Field, Field), Control)> {
        let grid = self.solver.grid();
        let obs = self.solver.adjoint_observation(&x.phi_t, &x.psi_t)?;
        let terminal = self
            .solver
            .forward_terminal(&grid.zeros(), &grid.zeros(), Some(&obs))?;
        Ok((terminal, obs))
    }
}

pub fn apply_gramian(p: &SystemParams, grid: &Grid1D, tm: &TimeMesh, x: &DualVector) -> Result<DualVector> {
    Gramian::new(CoupledSolver::new(*p, grid, tm)?).apply(x)
}

/// Output of [`solve_penalized_hum`].
#[derive(Debug, Clone)]
pub struct HumSolution {
    pub eps: f64,
    pub tau: f64,
    /// `h = 1_omega phi` at the staggered time indices.
    pub control: Control,
    /// Controlled forward trajectory.
    pub trajectory: Trajectory,
    /// Minimizer of the dual functional.
    pub dual: DualVector,
    /// `||h||_{L^2(omega x (0,T))}`.
    pub cost: f64,
    /// `(||u(T)||^2 + tau ||v(T)||^2)^{1/2}`.
    pub target_norm: f64,
    /// `(||u(T)||^2 + ||v(T)||^2)^{1/2}`.
    pub target_norm_unweighted: f64,
    /// Weighted norm of the uncontrolled terminal state.
    pub free_norm: f64,
    /// `F_eps` at the computed control.
    pub inf_f: f64,
    /// `-1/2 <x, y_free(T)>_tau`, equal to `inf_f` at the exact optimum.
    pub dual_value: f64,
    pub big_m: f64,
    pub cg_iterations: usize,
    /// True relative residual `||(G + eps) x - rhs||_tau / ||rhs||_tau`.
    pub cg_residual: f64,
    /// Recursive relative residual after each iteration.
    pub residual_history: Vec<f64>,
    /// Dual functional `J(x_k)` after each iteration.
    pub dual_history: Vec<f64>,
}

struct CgOutcome {
    x: DualVector,
    iterations: usize,
    residual_history: Vec<f64>,
    dual_history: Vec<f64>,
}

/// Conjugate gradients for `(G + eps) x = rhs` in `<., .>_tau`, zero initial guess.
fn conjugate_gradient(gramian: &Gramian, eps: f64, rhs: &DualVector, opts: &CgOptions) -> Result<CgOutcome> {
    let grid = gramian.solver().grid();
    let tau = gramian.solver().params().tau;
    let inner = |x: &DualVector, y: &DualVector| grid.inner_unchecked(&x.phi_t, &y.phi_t) + tau * grid.inner_unchecked(&x.psi_t, &y.psi_t);

    let mut x = DualVector::zeros(grid);
    let rhs_norm = inner(rhs, rhs).sqrt();
    let mut residual_history = Vec::new();
    let mut dual_history = Vec::new();
    if rhs_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual_history,
            dual_history,
        });
    }

    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = inner(&r, &r);
    for k in 1..=opts.max_iter {
        let mut ap = gramian.apply(&p)?;
        ap.axpy(eps, &p);
        let curvature = inner(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::CgNoConvergence {
                iterations: k,
                residual: rr.sqrt() / rhs_norm,
            });
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = inner(&r, &r);
        let rel = rr_new.sqrt() / rhs_norm;
        residual_history.push(rel);
        // J(x) = 1/2 <(G + eps) x, x> - <rhs, x> = -1/2 <rhs + r, x>
        let mut sum = rhs.clone();
        sum.axpy(1.0, &r);
        dual_history.push(-0.5 * inner(&sum, &x));
        if rel <= opts.rel_tol {
            return Ok(CgOutcome {
                x,
                iterations: k,
                residual_history,
                dual_history,
            });
        }
        p.xpby(&r, rr_new / rr);
        rr = rr_new;
    }
    Err(Error::CgNoConvergence {
        iterations: opts.max_iter,
        residual: rr.sqrt() / rhs_norm,
    })
}

/// Penalized HUM control steering `(u0, v0)` towards zero at time `T`.
pub fn solve_penalized_hum(
    p: &SystemParams,
    grid: &Grid1D,
    tm: &TimeMesh,
    u0: &[f64],
    v0: &[f64],
    eps: f64,
    opts: &CgOptions,
) -> Result<HumSolution> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("penalization must be positive, got {eps}")));
    }
    p.require_controllable()?;
    let solver = CoupledSolver::new(*p, grid, tm)?;
    let (u_free, v_free) = solver.forward_terminal(u0, v0, None)?;
    let free_norm = weighted_norm(&u_free, &v_free, p.tau, grid)?;
    let mut rhs = DualVector {
        phi_t: u_free,
        psi_t: v_free,
    };
    rhs.scale(-1.0);

    let gramian = Gramian::new(solver);
    let cg = conjugate_gradient(&gramian, eps, &rhs, opts)?;
    let x = cg.x;

    let ((w_t, z_t), control) = gramian.apply_with_observation(&x)?;
    let mut residual = DualVector { phi_t: w_t, psi_t: z_t };
    residual.axpy(eps, &x);
    residual.axpy(-1.0, &rhs);
    let rhs_norm = weighted_inner(&rhs, &rhs, p.tau, grid)?.sqrt();
    let cg_residual = if rhs_norm > 0.0 {
        weighted_inner(&residual, &residual, p.tau, grid)?.sqrt() / rhs_norm
    } else {
        0.0
    };

    let solver = gramian.solver();
    let trajectory = solver.forward(u0, v0, Some(&control))?;
    let (ut, vt) = trajectory.terminal();
    let cost = control.l2_norm(grid, tm);
    let target_norm = weighted_norm(ut, vt, p.tau, grid)?;
    let target_norm_unweighted = weighted_norm(ut, vt, 1.0, grid)?;
    let inf_f = primal_value(cost, target_norm, eps);
    // rhs = -y_free, so -1/2 <x, y_free> = 1/2 <x, rhs>
    let dual_value = 0.5 * weighted_inner(&x, &rhs, p.tau, grid)?;

    Ok(HumSolution {
        eps,
        tau: p.tau,
        control,
        trajectory,
        dual: x,
        cost,
        target_norm,
        target_norm_unweighted,
        free_norm,
        inf_f,
        dual_value,
        big_m: hum_constant(inf_f)?,
        cg_iterations: cg.iterations,
        cg_residual,
        residual_history: cg.residual_history,
        dual_history: cg.dual_history,
    })
}

/// `1/2 cost^2 + target^2 / (2 eps)`.
pub fn primal_value(cost: f64, target_norm: f64, eps: f64) -> f64 {
    0.5 * cost * cost + 0.5 * target_norm * target_norm / eps
}

/// `F_eps(h)` recomputed from the stored control and controlled trajectory.
pub fn evaluate_primal(sol: &HumSolution, eps: f64, tau: f64) -> Result<f64> {
    let traj = &sol.trajectory;
    let cost = sol.control.l2_norm(&traj.grid, &traj.time_mesh);
    let (ut, vt) = traj.terminal();
    let target = weighted_norm(ut, vt, tau, &traj.grid)?;
    Ok(primal_value(cost, target, eps))
}

/// `M = sqrt(2 inf F_eps)` at the working penalization.
pub fn hum_constant(inf_f: f64) -> Result<f64> {
    if inf_f < 0.0 || inf_f.is_nan() {
        return Err(Error::InvalidParameter(format!("inf F must be nonnegative, got {inf_f}")));
    }
    Ok((2.0 * inf_f).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{indicator, make_grid, make_time_mesh};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn reference(d: f64) -> SystemParams {
        SystemParams::new(2.0, -0.5, 5.5, d, 0.5, 2.0, (0.3, 0.8)).unwrap()
    }

    fn sine(g: &Grid1D) -> Field {
        let mut f = g.sample(|x| (PI * x).sin());
        let last = f.len() - 1;
        f[0] = 0.0;
        f[last] = 0.0;
        f
    }

    fn random_dual(g: &Grid1D, rng: &mut ChaCha8Rng) -> DualVector {
        let n = g.len();
        let mut phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        phi[0] = 0.0;
        phi[n - 1] = 0.0;
        let psi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DualVector::new(phi.into(), psi.into(), g).unwrap()
    }

    /// Coordinates: phi at interior nodes, then psi at every node.
    fn basis(g: &Grid1D, j: usize) -> DualVector {
        let mut x = DualVector::zeros(g);
        let interior = g.n_interior();
        if j < interior {
            x.phi_t[j + 1] = 1.0;
        } else {
            x.psi_t[j - interior] = 1.0;
        }
        x
    }

    fn coords(g: &Grid1D, x: &DualVector) -> DVector<f64> {
        let n = g.len();
        DVector::from_iterator(
            g.n_interior() + n,
            x.phi_t[1..n - 1].iter().chain(x.psi_t.iter()).copied(),
        )
    }

    fn mass(g: &Grid1D, tau: f64) -> DMatrix<f64> {
        let interior = g.n_interior();
        let dim = interior + g.len();
        DMatrix::from_fn(dim, dim, |r, c| {
            if r != c {
                0.0
            } else if r < interior {
                g.weight(r + 1)
            } else {
                tau * g.weight(r - interior)
            }
        })
    }

    fn dense_gramian(gram: &Gramian) -> DMatrix<f64> {
        let g = gram.solver().grid().clone();
        let dim = g.n_interior() + g.len();
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let col = coords(&g, &gram.apply(&basis(&g, j)).unwrap());
            m.set_column(j, &col);
        }
        m
    }

    #[test]
    fn weighted_inner_examples() {
        let g = make_grid(200).unwrap();
        let x = DualVector::new(sine(&g), g.zeros(), &g).unwrap();
        assert!((weighted_inner(&x, &x, 0.7, &g).unwrap() - 0.5).abs() < 1e-4);
        let one = DualVector::new(g.zeros(), g.sample(|_| 1.0), &g).unwrap();
        assert!((weighted_inner(&one, &one, 0.5, &g).unwrap() - 0.5).abs() < 1e-14);
        let left = DualVector::new(g.zeros(), indicator(0.0, 0.4, &g).unwrap(), &g).unwrap();
        let right = DualVector::new(g.zeros(), indicator(0.6, 1.0, &g).unwrap(), &g).unwrap();
        assert_eq!(weighted_inner(&left, &right, 0.5, &g).unwrap(), 0.0);
    }

    #[test]
    fn dual_vector_rejects_boundary_values() {
        let g = make_grid(5).unwrap();
        assert!(DualVector::new(g.sample(|_| 1.0), g.zeros(), &g).is_err());
    }

    #[test]
    fn free_terminal_cases() {
        let g = make_grid(60).unwrap();
        let tm = make_time_mesh(0.1, 400).unwrap();
        let (u, v) = free_terminal(&reference(-4.5), &g, &tm, &g.zeros(), &g.zeros()).unwrap();
        assert!(u.iter().chain(v.iter()).all(|&x| x == 0.0));

        let heat = SystemParams::new(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, (0.3, 0.8)).unwrap();
        let (u, _) = free_terminal(&heat, &g, &tm, &sine(&g), &g.zeros()).unwrap();
        let decay = (-PI * PI * 0.1).exp();
        for (i, x) in g.nodes().iter().enumerate() {
            assert!((u[i] - decay * (PI * x).sin()).abs() < 3e-3);
        }

        let v0 = indicator(0.2, 0.7, &g).unwrap();
        let (_, v_neg) = free_terminal(&reference(-4.5), &g, &tm, &sine(&g), &v0).unwrap();
        let (_, v_pos) = free_terminal(&reference(5.0), &g, &tm, &sine(&g), &v0).unwrap();
        let n = |f: &Field| crate::mesh::l2_norm(f, &g).unwrap();
        assert!(n(&v_pos) > n(&v_neg));
    }

    #[test]
    fn gramian_is_linear() {
        let g = make_grid(8).unwrap();
        let tm = make_time_mesh(0.1, 10).unwrap();
        let x0 = DualVector::zeros(&g);
        let out = apply_gramian(&reference(-4.5), &g, &tm, &x0).unwrap();
        assert!(out.phi_t.iter().chain(out.psi_t.iter()).all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_dual(&g, &mut rng);
        let gx = apply_gramian(&reference(-4.5), &g, &tm, &x).unwrap();
        let mut x37 = x.clone();
        x37.scale(3.7);
        let gx37 = apply_gramian(&reference(-4.5), &g, &tm, &x37).unwrap();
        let mut diff = gx37.clone();
        diff.axpy(-3.7, &gx);
        let rel = weighted_inner(&diff, &diff, 0.5, &g).unwrap().sqrt() / weighted_inner(&gx37, &gx37, 0.5, &g).unwrap().sqrt();
        assert!(rel < 1e-10, "rel {rel}");
    }

    #[test]
    fn dense_gramian_is_weighted_symmetric_and_psd() {
        let g = make_grid(4).unwrap();
        let tm = make_time_mesh(0.1, 5).unwrap();
        for p in [reference(-4.5), reference(5.0), SystemParams::new(-3.0, 2.0, 1.0, -1.0, 0.1, 10.0, (0.3, 0.8)).unwrap()] {
            let gram = Gramian::new(CoupledSolver::new(p, &g, &tm).unwrap());
            let big = dense_gramian(&gram);
            let w = mass(&g, p.tau);
            let sym = &w * &big;
            let asym = (&sym - sym.transpose()).amax();
            assert!(asym <= 1e-10 * sym.amax(), "asym {asym}");
            // similarity transform to a symmetric matrix
            let ws = w.map(f64::sqrt);
            let wi = w.map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 });
            let s = &ws * &big * &wi;
            let s = 0.5 * (&s + s.transpose());
            let eig = s.clone().symmetric_eigen();
            let min = eig.eigenvalues.min();
            assert!(min >= -1e-10 * s.trace(), "min eigenvalue {min}");
        }
    }

    #[test]
    fn l2_form_scales_psi_by_tau() {
        let g = make_grid(6).unwrap();
        let tm = make_time_mesh(0.1, 8).unwrap();
        let gram = Gramian::new(CoupledSolver::new(reference(-4.5), &g, &tm).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_dual(&g, &mut rng);
        let a = gram.apply(&x).unwrap();
        let b = gram.apply_l2_form(&x).unwrap();
        assert_eq!(a.phi_t, b.phi_t);
        for (p, q) in a.psi_t.iter().zip(b.psi_t.iter()) {
            assert!((0.5 * p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn duality_identity_on_random_vectors() {
        let g = make_grid(8).unwrap();
        let tm = make_time_mesh(0.1, 10).unwrap();
        let p = reference(-4.5);
        let solver = CoupledSolver::new(p, &g, &tm).unwrap();
        let gram = Gramian::new(solver.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x = random_dual(&g, &mut rng);
            let lhs = weighted_inner(&gram.apply(&x).unwrap(), &x, p.tau, &g).unwrap();
            let adj = solver.adjoint(&x.phi_t, &x.psi_t).unwrap();
            let mask = solver.mask();
            let rhs: f64 = (0..tm.m_steps())
                .map(|n| {
                    let phi: Vec<f64> = adj.u[n].iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
                    g.inner(&phi, &phi).unwrap()
                })
                .sum::<f64>()
                * tm.dt();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs(), "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn zero_data_gives_zero_control() {
        let g = make_grid(10).unwrap();
        let tm = make_time_mesh(0.1, 20).unwrap();
        let sol = solve_penalized_hum(&reference(-4.5), &g, &tm, &g.zeros(), &g.zeros(), 1e-4, &CgOptions::default()).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.inf_f, 0.0);
        assert_eq!(sol.big_m, 0.0);
        assert_eq!(sol.cg_iterations, 0);
        assert_eq!(evaluate_primal(&sol, 1e-4, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn cg_matches_dense_solve() {
        let g = make_grid(6).unwrap();
        let tm = make_time_mesh(0.1, 8).unwrap();
        let p = reference(-4.5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut u0: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        u0[0] = 0.0;
        u0[g.len() - 1] = 0.0;
        let v0: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps = 1e-3;
        let opts = CgOptions::new(1e-12, 500).unwrap();
        let sol = solve_penalized_hum(&p, &g, &tm, &u0, &v0, eps, &opts).unwrap();

        let gram = Gramian::new(CoupledSolver::new(p, &g, &tm).unwrap());
        let big = dense_gramian(&gram) + DMatrix::identity(g.n_interior() + g.len(), g.n_interior() + g.len()) * eps;
        let (uf, vf) = free_terminal(&p, &g, &tm, &u0, &v0).unwrap();
        let rhs = -coords(&g, &DualVector { phi_t: uf, psi_t: vf });
        let x = big.lu().solve(&rhs).unwrap();
        let got = coords(&g, &sol.dual);
        assert!((got - &x).amax() <= 1e-8 * x.amax());
    }

    #[test]
    fn optimality_identities_and_fenchel_value() {
        let g = make_grid(30).unwrap();
        let tm = make_time_mesh(0.1, 150).unwrap();
        let p = reference(-4.5);
        let u0 = sine(&g);
        let v0 = indicator(0.2, 0.7, &g).unwrap();
        let eps = g.h().powi(4);
        let opts = CgOptions::default();
        let sol = solve_penalized_hum(&p, &g, &tm, &u0, &v0, eps, &opts).unwrap();
        let (ut, vt) = sol.trajectory.terminal();
        let (uf, _) = free_terminal(&p, &g, &tm, &u0, &v0).unwrap();
        let mut du = ut.clone();
        du.axpy(eps, &sol.dual.phi_t);
        let mut dv = vt.clone();
        dv.axpy(eps, &sol.dual.psi_t);
        let free_u = crate::mesh::l2_norm(&uf, &g).unwrap();
        assert!(crate::mesh::l2_norm(&du, &g).unwrap() <= 10.0 * opts.rel_tol * free_u);
        assert!(crate::mesh::l2_norm(&dv, &g).unwrap() <= 10.0 * opts.rel_tol * sol.free_norm / p.tau.sqrt());

        let primal = evaluate_primal(&sol, eps, p.tau).unwrap();
        assert!((primal - sol.inf_f).abs() <= 1e-12 * primal);
        assert!((primal - sol.dual_value).abs() <= 1e-6 * primal, "{primal} vs {}", sol.dual_value);
        assert!(sol.cost * sol.cost <= 2.0 * sol.inf_f * (1.0 + 1e-12));
        assert!(sol.target_norm <= sol.big_m * eps.sqrt() * (1.0 + 1e-12));
        assert!(sol.cg_residual <= 10.0 * opts.rel_tol);
    }

    #[test]
    fn control_lives_in_window() {
        let g = make_grid(20).unwrap();
        let tm = make_time_mesh(0.1, 40).unwrap();
        let sol = solve_penalized_hum(&reference(-4.5), &g, &tm, &sine(&g), &g.zeros(), 1e-5, &CgOptions::default()).unwrap();
        let mask = indicator(0.3, 0.8, &g).unwrap();
        for s in sol.control.slices() {
            for (v, m) in s.iter().zip(mask.iter()) {
                if *m == 0.0 {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn dual_functional_decreases_along_cg() {
        let g = make_grid(25).unwrap();
        let tm = make_time_mesh(0.1, 100).unwrap();
        let sol = solve_penalized_hum(
            &reference(5.0),
            &g,
            &tm,
            &sine(&g),
            &indicator(0.2, 0.7, &g).unwrap(),
            g.h().powi(4),
            &CgOptions::default(),
        )
        .unwrap();
        let scale = sol.dual_history.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for w in sol.dual_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * scale, "{} -> {}", w[0], w[1]);
        }
        assert!(sol.residual_history.last().unwrap() <= &1e-8);
    }

    #[test]
    fn penalization_monotonicity() {
        let g = make_grid(20).unwrap();
        let tm = make_time_mesh(0.1, 100).unwrap();
        let p = reference(-4.5);
        let u0 = sine(&g);
        let v0 = indicator(0.2, 0.7, &g).unwrap();
        let h4 = g.h().powi(4);
        let sols: Vec<HumSolution> = [1.0, 10.0, 100.0]
            .iter()
            .map(|k| solve_penalized_hum(&p, &g, &tm, &u0, &v0, k * h4, &CgOptions::default()).unwrap())
            .collect();
        for w in sols.windows(2) {
            assert!(w[1].target_norm >= w[0].target_norm);
            assert!(w[1].cost <= w[0].cost);
        }
    }

    #[test]
    fn no_convergence_is_reported() {
        let g = make_grid(20).unwrap();
        let tm = make_time_mesh(0.1, 50).unwrap();
        let opts = CgOptions::new(1e-8, 1).unwrap();
        let err = solve_penalized_hum(&reference(-4.5), &g, &tm, &sine(&g), &g.zeros(), 1e-6, &opts).unwrap_err();
        assert!(matches!(err, Error::CgNoConvergence { iterations: 1, .. }));
    }

    #[test]
    fn requires_coupling() {
        let g = make_grid(5).unwrap();
        let tm = make_time_mesh(0.1, 5).unwrap();
        let p = SystemParams::new(1.0, 1.0, 0.0, -1.0, 1.0, 1.0, (0.3, 0.8)).unwrap();
        assert!(solve_penalized_hum(&p, &g, &tm, &g.zeros(), &g.zeros(), 1e-3, &CgOptions::default()).is_err());
        assert!(solve_penalized_hum(&reference(-1.0), &g, &tm, &g.zeros(), &g.zeros(), 0.0, &CgOptions::default()).is_err());
    }

    #[test]
    fn hum_constant_values() {
        assert_eq!(hum_constant(0.0).unwrap(), 0.0);
        assert_eq!(hum_constant(2.0).unwrap(), 2.0);
        assert_eq!(hum_constant(0.5).unwrap(), 1.0);
        assert!(hum_constant(-1.0).is_err());
        assert_eq!(primal_value(1.0, 0.0, 1e-3), 0.5);
        assert!(CgOptions::new(0.0, 10).is_err());
        assert!(CgOptions::new(1e-8, 0).is_err());
    }
}
