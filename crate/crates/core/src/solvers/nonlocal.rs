use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{l2_norm, Field, Grid1D, TimeMesh};
use crate::operators::Tridiagonal;

use super::{Control, BLOW_UP_THRESHOLD};

/// Snapshots `y^n`, `n = 0..=M`, of a scalar nonlocal solve.
#[derive(Debug, Clone)]
pub struct ScalarTrajectory {
    pub grid: Grid1D,
    pub time_mesh: TimeMesh,
    pub y: Vec<Field>,
}

impl ScalarTrajectory {
    pub fn terminal(&self) -> &Field {
        self.y.last().unwrap()
    }
}

/// `I - dt (Delta_D + a)` with identity rows at both boundary nodes.
fn heat_matrix(grid: &Grid1D, dt: f64, a: f64) -> Result<Tridiagonal> {
    let n = grid.len();
    let k = dt / (grid.h() * grid.h());
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        lower[i] = -k;
        diag[i] = 1.0 - dt * a + 2.0 * k;
        upper[i] = -k;
    }
    Tridiagonal::factorize(&lower, &diag, &upper)
}

fn check_inputs(y0: &[f64], control: Option<&Control>, tm: &TimeMesh, grid: &Grid1D) -> Result<()> {
    grid.check(y0)?;
    if y0[0] != 0.0 || y0[y0.len() - 1] != 0.0 {
        return Err(Error::InvalidParameter(
            "initial datum must vanish at x = 0 and x = 1".into(),
        ));
    }
    if let Some(h) = control {
        if h.m_steps() != tm.m_steps() {
            return Err(Error::LengthMismatch {
                expected: tm.m_steps(),
                found: h.m_steps(),
            });
        }
        h.slices().iter().try_for_each(|s| grid.check(s))?;
    }
    Ok(())
}

/// Implicit Euler for `y_t - y_xx = a y + b mean(y) + h 1_omega` with
/// homogeneous Dirichlet conditions.
///
/// The step matrix is `A - dt b e w^T` with `A` tridiagonal, `e` the
/// interior-node indicator and `w` the trapezoid weights; it is inverted with
/// a Sherman-Morrison correction so each step stays `O(N)`.
///
/// `control` slices are applied as given; mask them with
/// [`Control::from_slices`] to restrict them to a window.
pub fn solve_nonlocal_linear(
    a: f64,
    b: f64,
    y0: &[f64],
    control: Option<&Control>,
    tm: &TimeMesh,
    grid: &Grid1D,
) -> Result<ScalarTrajectory> {
    check_inputs(y0, control, tm, grid)?;
    let dt = tm.dt();
    let n = grid.len();
    let base = heat_matrix(grid, dt, a)?;

    let mut q = vec![1.0; n];
    q[0] = 0.0;
    q[n - 1] = 0.0;
    base.solve_in_place(&mut q);
    let denominator = 1.0 - dt * b * grid.integral_unchecked(&q);
    if !denominator.is_finite() || denominator.abs() < 1e-12 {
        return Err(Error::RankOneBreakdown { denominator });
    }

    let mut ys = Vec::with_capacity(tm.m_steps() + 1);
    ys.push(Field::from(y0.to_vec()));
    for step in 1..=tm.m_steps() {
        let mut y = ys[step - 1].clone();
        if let Some(h) = control {
            y.axpy(dt, h.slice(step));
        }
        y[0] = 0.0;
        y[n - 1] = 0.0;
        base.solve_in_place(&mut y);
        let gain = dt * b * grid.integral_unchecked(&y) / denominator;
        y.axpy(gain, &q);
        ys.push(y);
    }
    Ok(ScalarTrajectory {
        grid: grid.clone(),
        time_mesh: tm.clone(),
        y: ys,
    })
}

type ScalarFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type ScalarFn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Nonlinearity `f(u, v) = a u + b v + g1(u, v) u^2 + g2(u) u v` where `v`
/// stands for the spatial mean.
#[derive(Clone)]
pub struct NonlinearitySpec {
    pub a: f64,
    pub b: f64,
    g1: ScalarFn2,
    g2: ScalarFn1,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("a", &self.a)
            .field("b", &self.b)
            .finish_non_exhaustive()
    }
}

impl NonlinearitySpec {
    pub fn new(
        a: f64,
        b: f64,
        g1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            a,
            b,
            g1: Arc::new(g1),
            g2: Arc::new(g2),
        }
    }

    pub fn linear(a: f64, b: f64) -> Self {
        Self::new(a, b, |_, _| 0.0, |_| 0.0)
    }

    /// `f(y, m) = chi(y) y (birth_rate - m)` with a smooth cutoff `chi` that
    /// vanishes on `|y| <= threshold` and equals one for `|y| >= 2 threshold`
    /// up to `cap`, then vanishes again beyond `2 cap`.
    pub fn adaptive_evolution(birth_rate: f64, threshold: f64, cap: f64) -> Self {
        let chi = move |s: f64| smooth_window(s.abs(), threshold, cap);
        Self::new(
            0.0,
            0.0,
            move |u, _| if u == 0.0 { 0.0 } else { birth_rate * chi(u) / u },
            move |u| -chi(u),
        )
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.a * u + self.b * v + (self.g1)(u, v) * u * u + (self.g2)(u) * u * v
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn smooth_window(s: f64, lo: f64, hi: f64) -> f64 {
    smoothstep((s - lo) / lo) * (1.0 - smoothstep((s - hi) / hi))
}

/// Semi-implicit Euler for `y_t - y_xx = f(y, mean(y)) + h 1_omega`:
/// diffusion implicit, `f` evaluated at the previous level.
pub fn solve_semilinear_nonlocal(
    f: &NonlinearitySpec,
    y0: &[f64],
    control: Option<&Control>,
    tm: &TimeMesh,
    grid: &Grid1D,
) -> Result<ScalarTrajectory> {
    if f.eval(0.0, 0.0) != 0.0 {
        return Err(Error::InvalidParameter("nonlinearity must satisfy f(0,0) = 0".into()));
    }
    check_inputs(y0, control, tm, grid)?;
    let dt = tm.dt();
    let n = grid.len();
    let heat = heat_matrix(grid, dt, 0.0)?;
    let mut ys = Vec::with_capacity(tm.m_steps() + 1);
    ys.push(Field::from(y0.to_vec()));
    for step in 1..=tm.m_steps() {
        let prev = &ys[step - 1];
        let mean = grid.integral_unchecked(prev);
        let mut y: Field = prev.iter().map(|&yi| yi + dt * f.eval(yi, mean)).collect::<Vec<_>>().into();
        if let Some(h) = control {
            y.axpy(dt, h.slice(step));
        }
        y[0] = 0.0;
        y[n - 1] = 0.0;
        heat.solve_in_place(&mut y);
        let norm = l2_norm(&y, grid)?;
        if !norm.is_finite() || norm > BLOW_UP_THRESHOLD {
            return Err(Error::BlowUp { step, norm });
        }
        ys.push(y);
    }
    Ok(ScalarTrajectory {
        grid: grid.clone(),
        time_mesh: tm.clone(),
        y: ys,
    })
}
