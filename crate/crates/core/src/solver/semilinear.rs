//! Forward solver for the true semilinear system, used to validate controls
//! computed from the frozen linearization.

use crate::error::{Error, Result};
use crate::model::{CouplingSpec, FrozenCoefficients, Grid, KernelSpec, SystemCoefficients, TimeGrid};
use crate::solver::propagator::{Forcing, LinearSystem, Propagator};
use crate::solver::trajectory::StateTrajectory;
use nalgebra::DVector;
use ndarray::Array2;

/// The semilinear problem data (coupling kept as functions, not frozen).
#[derive(Debug, Clone)]
pub struct SemilinearSystem {
    pub grid: Grid,
    pub tgrid: TimeGrid,
    pub coeffs: SystemCoefficients,
    pub kernel1: KernelSpec,
    pub kernel2: KernelSpec,
    pub coupling: CouplingSpec,
}

impl SemilinearSystem {
    /// The linearization with coefficients frozen at a candidate trajectory.
    pub fn frozen_at(&self, ybar: &Array2<f64>, zbar: &Array2<f64>) -> Result<LinearSystem> {
        let frozen = crate::model::freeze_coefficients(&self.coupling, ybar, zbar)?;
        Ok(self.with_frozen(frozen))
    }

    /// The linearization with prescribed frozen coefficients.
    pub fn with_frozen(&self, frozen: FrozenCoefficients) -> LinearSystem {
        LinearSystem {
            grid: self.grid,
            tgrid: self.tgrid,
            coeffs: self.coeffs,
            kernel1: self.kernel1.clone(),
            kernel2: self.kernel2.clone(),
            frozen,
        }
    }

    /// The linear part alone (zero frozen coefficients).
    pub fn linear_part(&self) -> LinearSystem {
        self.with_frozen(FrozenCoefficients::zero(
            self.tgrid.n_nodes(),
            self.grid.n_interior(),
        ))
    }
}

/// Inner fixed-point iteration controls for the implicit nonlinearity.
#[derive(Debug, Clone, Copy)]
pub struct SemilinearOptions {
    pub max_inner_iterations: usize,
    /// Absolute L2 tolerance on the inner step increment.
    pub increment_tolerance: f64,
}

impl Default for SemilinearOptions {
    fn default() -> Self {
        Self { max_inner_iterations: 50, increment_tolerance: 1e-12 }
    }
}

/// Crank-Nicolson with the coupling terms `F, G` handled by per-step fixed
/// point iteration on the implicit slice.
pub fn solve_semilinear_forward(
    system: &SemilinearSystem,
    forcing: &Forcing,
    y0: &[f64],
    z0: &[f64],
    opts: &SemilinearOptions,
) -> Result<StateTrajectory> {
    let n = system.grid.n_interior();
    if y0.len() != n || z0.len() != n {
        return Err(Error::GridMismatch("initial data length mismatch".into()));
    }
    let linear = system.linear_part();
    let propagator = Propagator::new(&linear)?;
    let n_steps = system.tgrid.n_steps();
    let dt = system.tgrid.dt();
    let h = system.grid.h();

    let mut y = Array2::zeros((n_steps + 1, n));
    let mut z = Array2::zeros((n_steps + 1, n));
    let mut u = DVector::zeros(2 * n);
    for i in 0..n {
        u[i] = y0[i];
        u[n + i] = z0[i];
        y[[0, i]] = y0[i];
        z[[0, i]] = z0[i];
    }
    let coupling = &system.coupling;
    let eval_coupling = |state: &DVector<f64>, out: &mut DVector<f64>| {
        for i in 0..n {
            let (r, s) = (state[i], state[n + i]);
            out[i] = coupling.f(r, s);
            out[n + i] = coupling.g(r, s);
        }
    };

    let mut n_old = DVector::zeros(2 * n);
    let mut n_new = DVector::zeros(2 * n);
    for step in 0..n_steps {
        let (m_plus, lu) = propagator.step_parts(step);
        let mut rhs = m_plus * &u;
        if let Some(c) = forcing.control_y {
            for i in 0..n {
                rhs[i] += dt * c.values()[[step, i]];
            }
        }
        if let Some(c) = forcing.control_z {
            for i in 0..n {
                rhs[n + i] += dt * c.values()[[step, i]];
            }
        }
        if let Some(src) = forcing.source_y {
            for i in 0..n {
                rhs[i] += dt * src[[step, i]];
            }
        }
        if let Some(src) = forcing.source_z {
            for i in 0..n {
                rhs[n + i] += dt * src[[step, i]];
            }
        }

        if coupling.is_zero() {
            u = lu.solve(&rhs).ok_or(Error::FactorizationFailed { step })?;
        } else {
            // Fixed point on the implicit coupling slice.
            eval_coupling(&u, &mut n_old);
            let mut current = u.clone();
            let mut converged = false;
            let mut residual = f64::INFINITY;
            for _ in 0..opts.max_inner_iterations {
                eval_coupling(&current, &mut n_new);
                let mut full = rhs.clone();
                for i in 0..2 * n {
                    full[i] += 0.5 * dt * (n_old[i] + n_new[i]);
                }
                let next = lu.solve(&full).ok_or(Error::FactorizationFailed { step })?;
                residual = (h * (&next - &current).norm_squared()).sqrt();
                current = next;
                if residual <= opts.increment_tolerance {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::InnerIterationStalled { step, residual });
            }
            u = current;
        }
        for i in 0..n {
            y[[step + 1, i]] = u[i];
            z[[step + 1, i]] = u[n + i];
        }
    }
    Ok(StateTrajectory::from_parts(y, z, system.grid, system.tgrid))
}
