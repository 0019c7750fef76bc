//! Lyapunov and Riccati solvers and single-output pole placement.

pub mod care;
pub mod lyapunov;
pub mod placement;

pub use care::{care_residual, lqr_gain, solve_care, solve_control_care};
pub use lyapunov::{solve_lyapunov, LyapunovSolver};
pub use placement::{observability_matrix, place_poles};
