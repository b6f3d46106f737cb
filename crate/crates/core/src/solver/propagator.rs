//! Time stepping of the linearized system and of its exact discrete adjoint.
//!
//! One step of the theta = 1/2 scheme with the full generator (local stencil,
//! nonlocal kernel operator, frozen coupling) sampled at the step midpoint:
//!
//! ```text
//! (I - dt/2 A_mid) u^{n+1} = (I + dt/2 A_mid) u^n + dt f_mid
//! ```
//!
//! The adjoint runs the transposed step matrices backward, so the discrete
//! duality identity and the control gradients hold to machine precision; the
//! continuous adjoint system (transposed couplings, reflected kernels) is
//! recovered as the grid is refined.

use crate::error::{Error, Result};
use crate::model::{
    assemble_spatial_operator, nonlocal_matrix_unscaled, FrozenCoefficients, Grid, KernelSpec,
    SystemCoefficients, TimeGrid,
};
use crate::solver::trajectory::{AdjointTrajectory, ControlSignal, StateTrajectory};
use nalgebra::{DMatrix, DVector, Dyn};
use ndarray::Array2;

type Lu = nalgebra::LU<f64, Dyn, Dyn>;

/// The frozen-coefficient linear system: everything the propagator needs.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub grid: Grid,
    pub tgrid: TimeGrid,
    pub coeffs: SystemCoefficients,
    pub kernel1: KernelSpec,
    pub kernel2: KernelSpec,
    pub frozen: FrozenCoefficients,
}

impl LinearSystem {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_interior();
        if self.frozen.n_interior() != n || self.frozen.n_time_nodes() != self.tgrid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "frozen coefficients shaped ({}, {}) but grids need ({}, {})",
                self.frozen.n_time_nodes(),
                self.frozen.n_interior(),
                self.tgrid.n_nodes(),
                n
            )));
        }
        Ok(())
    }

    fn time_invariant(&self) -> bool {
        self.kernel1.lambda().is_constant()
            && self.kernel2.lambda().is_constant()
            && self.frozen.time_invariant()
    }
}

/// Per-step forcing: localized controls on each equation and optional
/// full-domain sources sampled at the step midpoints (rows = steps).
#[derive(Debug, Clone, Copy, Default)]
pub struct Forcing<'a> {
    pub control_y: Option<&'a ControlSignal>,
    pub control_z: Option<&'a ControlSignal>,
    pub source_y: Option<&'a Array2<f64>>,
    pub source_z: Option<&'a Array2<f64>>,
}

impl<'a> Forcing<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn control(nu: &'a ControlSignal) -> Self {
        Self { control_y: Some(nu), ..Self::default() }
    }

    pub fn two_controls(nu: &'a ControlSignal, mu: &'a ControlSignal) -> Self {
        Self { control_y: Some(nu), control_z: Some(mu), ..Self::default() }
    }

    fn validate(&self, grid: &Grid, tgrid: &TimeGrid) -> Result<()> {
        let shape = (tgrid.n_steps(), grid.n_interior());
        for c in [self.control_y, self.control_z].into_iter().flatten() {
            if c.values().dim() != shape {
                return Err(Error::GridMismatch("control shape mismatch".into()));
            }
        }
        for s in [self.source_y, self.source_z].into_iter().flatten() {
            if s.dim() != shape {
                return Err(Error::GridMismatch("source shape mismatch".into()));
            }
        }
        Ok(())
    }
}

struct StepMatrices {
    m_plus: DMatrix<f64>,
    lu: Lu,
    lu_transpose: Lu,
}

enum StepData {
    Shared(Box<StepMatrices>),
    PerStep(Vec<StepMatrices>),
}

/// Factored step matrices of the linearized system, reusable across solves.
pub struct Propagator {
    grid: Grid,
    tgrid: TimeGrid,
    data: StepData,
}

impl Propagator {
    pub fn new(system: &LinearSystem) -> Result<Self> {
        system.validate()?;
        let assembler = GeneratorAssembler::new(system)?;
        let data = if system.time_invariant() {
            StepData::Shared(Box::new(assembler.step_matrices(system, 0)?))
        } else {
            let mats: Result<Vec<_>> = (0..system.tgrid.n_steps())
                .map(|n| assembler.step_matrices(system, n))
                .collect();
            StepData::PerStep(mats?)
        };
        Ok(Self { grid: system.grid, tgrid: system.tgrid, data })
    }

    fn step(&self, n: usize) -> &StepMatrices {
        match &self.data {
            StepData::Shared(m) => m,
            StepData::PerStep(v) => &v[n],
        }
    }

    /// Explicit-side matrix and implicit-side factorization of step `n`,
    /// for steppers that add their own nonlinear terms.
    pub(crate) fn step_parts(&self, n: usize) -> (&DMatrix<f64>, &Lu) {
        let m = self.step(n);
        (&m.m_plus, &m.lu)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    /// The implicit-side step matrix `I - dt/2 A_mid` of step `n` (tests and
    /// diagnostics; reconstructed from the stored explicit side).
    pub fn implicit_matrix(&self, n: usize) -> DMatrix<f64> {
        let m_plus = &self.step(n).m_plus;
        let ident = DMatrix::identity(m_plus.nrows(), m_plus.ncols());
        ident * 2.0 - m_plus
    }

    /// Advances the state from `(y0, z0)` under the given forcing.
    pub fn forward(&self, y0: &[f64], z0: &[f64], forcing: &Forcing) -> Result<StateTrajectory> {
        let n = self.grid.n_interior();
        if y0.len() != n || z0.len() != n {
            return Err(Error::GridMismatch("initial data length mismatch".into()));
        }
        forcing.validate(&self.grid, &self.tgrid)?;
        let n_steps = self.tgrid.n_steps();
        let dt = self.tgrid.dt();
        let mut y = Array2::zeros((n_steps + 1, n));
        let mut z = Array2::zeros((n_steps + 1, n));
        let mut u = DVector::zeros(2 * n);
        for i in 0..n {
            u[i] = y0[i];
            u[n + i] = z0[i];
            y[[0, i]] = y0[i];
            z[[0, i]] = z0[i];
        }
        for step in 0..n_steps {
            let mats = self.step(step);
            let mut rhs = &mats.m_plus * &u;
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
            u = mats
                .lu
                .solve(&rhs)
                .ok_or(Error::FactorizationFailed { step })?;
            for i in 0..n {
                y[[step + 1, i]] = u[i];
                z[[step + 1, i]] = u[n + i];
            }
        }
        Ok(StateTrajectory::from_parts(y, z, self.grid, self.tgrid))
    }

    /// Runs the transposed step matrices backward from the final data.
    pub fn adjoint(&self, phi_t: &[f64], psi_t: &[f64]) -> Result<AdjointTrajectory> {
        let n = self.grid.n_interior();
        if phi_t.len() != n || psi_t.len() != n {
            return Err(Error::GridMismatch("final data length mismatch".into()));
        }
        let n_steps = self.tgrid.n_steps();
        let mut phi = Array2::zeros((n_steps + 1, n));
        let mut psi = Array2::zeros((n_steps + 1, n));
        let mut phi_mid = Array2::zeros((n_steps, n));
        let mut psi_mid = Array2::zeros((n_steps, n));
        let mut p = DVector::zeros(2 * n);
        for i in 0..n {
            p[i] = phi_t[i];
            p[n + i] = psi_t[i];
            phi[[n_steps, i]] = phi_t[i];
            psi[[n_steps, i]] = psi_t[i];
        }
        for step in (0..n_steps).rev() {
            let mats = self.step(step);
            let w = mats
                .lu_transpose
                .solve(&p)
                .ok_or(Error::FactorizationFailed { step })?;
            for i in 0..n {
                phi_mid[[step, i]] = w[i];
                psi_mid[[step, i]] = w[n + i];
            }
            p = mats.m_plus.tr_mul(&w);
            for i in 0..n {
                phi[[step, i]] = p[i];
                psi[[step, i]] = p[n + i];
            }
        }
        Ok(AdjointTrajectory::from_parts(phi, psi, phi_mid, psi_mid, self.grid, self.tgrid))
    }
}

/// Time-independent pieces of the generator, assembled once.
struct GeneratorAssembler {
    local1: DMatrix<f64>,
    local2: DMatrix<f64>,
    kernel1: DMatrix<f64>,
    kernel2: DMatrix<f64>,
}

impl GeneratorAssembler {
    fn new(system: &LinearSystem) -> Result<Self> {
        let c = &system.coeffs;
        let local1 = assemble_spatial_operator(c.a1, c.b1, c.c1, &system.grid)?.to_dense();
        let local2 = assemble_spatial_operator(c.a2, c.b2, c.c2, &system.grid)?.to_dense();
        let kernel1 = nonlocal_matrix_unscaled(&system.kernel1, &system.grid, false);
        let kernel2 = nonlocal_matrix_unscaled(&system.kernel2, &system.grid, false);
        Ok(Self { local1, local2, kernel1, kernel2 })
    }

    /// Builds and factors `I -+ dt/2 A` for step `n`, generator at the midpoint.
    fn step_matrices(&self, system: &LinearSystem, n: usize) -> Result<StepMatrices> {
        let nx = system.grid.n_interior();
        let t_mid = system.tgrid.midpoint(n);
        let horizon = system.tgrid.horizon();
        let lambda1 = system.kernel1.lambda().value(t_mid, horizon);
        let lambda2 = system.kernel2.lambda().value(t_mid, horizon);
        let frozen = &system.frozen;
        let mid = |f: &Array2<f64>, i: usize| 0.5 * (f[[n, i]] + f[[n + 1, i]]);

        let mut a = DMatrix::zeros(2 * nx, 2 * nx);
        for i in 0..nx {
            for j in 0..nx {
                a[(i, j)] = self.local1[(i, j)] + lambda1 * self.kernel1[(i, j)];
                a[(nx + i, nx + j)] = self.local2[(i, j)] + lambda2 * self.kernel2[(i, j)];
            }
            a[(i, i)] += mid(&frozen.a_tilde, i);
            a[(i, nx + i)] += mid(&frozen.b_tilde, i);
            a[(nx + i, i)] += mid(&frozen.c_tilde, i);
            a[(nx + i, nx + i)] += mid(&frozen.d_tilde, i);
        }
        let half_dt = 0.5 * system.tgrid.dt();
        let ident = DMatrix::identity(2 * nx, 2 * nx);
        let m_plus = &ident + &a * half_dt;
        let m_minus = &ident - &a * half_dt;
        let lu = m_minus.clone().lu();
        let lu_transpose = m_minus.transpose().lu();
        Ok(StepMatrices { m_plus, lu, lu_transpose })
    }
}

/// One-shot forward solve of the linearized system.
pub fn solve_forward(
    system: &LinearSystem,
    control: Option<&ControlSignal>,
    y0: &[f64],
    z0: &[f64],
) -> Result<StateTrajectory> {
    let propagator = Propagator::new(system)?;
    let forcing = match control {
        Some(c) => Forcing::control(c),
        None => Forcing::none(),
    };
    propagator.forward(y0, z0, &forcing)
}

/// One-shot adjoint solve (exact transpose of the discrete forward map).
pub fn solve_adjoint(
    system: &LinearSystem,
    phi_t: &[f64],
    psi_t: &[f64],
) -> Result<AdjointTrajectory> {
    Propagator::new(system)?.adjoint(phi_t, psi_t)
}
