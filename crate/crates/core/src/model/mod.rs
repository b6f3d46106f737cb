//! Problem data: grids, coefficients, kernels, couplings, and the discrete
//! operators assembled from them.

mod coupling;
mod grid;
mod kernel;
mod operators;

pub use coupling::{
    decompose_coupling, freeze_coefficients, CouplingKind, CouplingSpec, FrozenCoefficients,
};
pub use grid::{ControlRegion, Grid, TimeGrid};
pub use kernel::{KernelShape, KernelSpec, LambdaProfile};
pub use operators::{
    assemble_nonlocal_operator, assemble_nonlocal_operator_adjoint, assemble_spatial_operator,
    nonlocal_boundary_column, nonlocal_matrix_unscaled, SystemCoefficients, Tridiagonal,
};
