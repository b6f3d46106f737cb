//! Time stepping: the linearized system, its exact discrete adjoint, and the
//! true semilinear dynamics.

mod propagator;
mod semilinear;
mod trajectory;

pub use propagator::{solve_adjoint, solve_forward, Forcing, LinearSystem, Propagator};
pub use semilinear::{solve_semilinear_forward, SemilinearOptions, SemilinearSystem};
pub use trajectory::{AdjointTrajectory, ControlSignal, StateTrajectory};
