//! Null controls for the 1-D fast-diffusion reaction-diffusion system
//!
//! ```text
//! u_t - u_xx           = a u + b v + h 1_omega
//! tau v_t - sigma v_xx = c u + d v
//! ```
//!
//! computed by the penalized Hilbert Uniqueness Method, together with
//! solvers for the nonlocal heat equation reached as `(tau, sigma) -> (0, inf)`
//! and drivers for the convergence and uniformity experiments.

pub mod error;
pub mod experiments;
pub mod hum;
pub mod mesh;
pub mod operators;
pub mod solvers;

pub use error::{Error, Result};
pub use hum::{solve_penalized_hum, CgOptions, DualVector, HumSolution};
pub use mesh::{Field, Grid1D, TimeMesh, TimeSeries};
pub use solvers::{Control, SystemParams, Trajectory};
