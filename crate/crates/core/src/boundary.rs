//! Dirichlet boundary controls at `x = 1` by domain extension.
//!
//! The boundary-control problem on (0, 1) is solved indirectly: extend the
//! domain to (0, 1 + eps), place an internal control region inside the
//! extension, drive the extended system to zero, and read the boundary
//! controls off as the traces of the extended solution at `x = 1`. The
//! nonlocal integrals stay over the original (0, 1) throughout, with the node
//! at `zeta = 1` keeping its trapezoid half weight so that the extended and
//! restricted discretizations coincide on shared nodes.

use crate::error::{Error, Result};
use crate::fixedpoint::SemilinearControlProblem;
use crate::model::{nonlocal_boundary_column, ControlRegion, Grid, KernelSpec};
use crate::solver::{
    solve_semilinear_forward, Forcing, SemilinearOptions, SemilinearSystem, StateTrajectory,
};
use ndarray::Array2;

/// The extended problem with its control region inside the extension.
#[derive(Debug, Clone)]
pub struct ExtendedProblem {
    pub extension: f64,
    /// The control problem on the extended grid (data zero-extended).
    pub problem: SemilinearControlProblem,
    base_grid: Grid,
    /// Interior index of the node at `x = 1` in the extended grid.
    trace_index: usize,
}

impl ExtendedProblem {
    pub fn trace_index(&self) -> usize {
        self.trace_index
    }

    pub fn base_grid(&self) -> &Grid {
        &self.base_grid
    }

    /// Restriction of an extended trajectory to the unit interval.
    pub fn restrict(&self, traj: &StateTrajectory) -> Result<StateTrajectory> {
        let n_base = self.base_grid.n_interior();
        if traj.grid().n_interior() != self.problem.system.grid.n_interior() {
            return Err(Error::GridMismatch("trajectory is not on the extended grid".into()));
        }
        let nt = traj.time_grid().n_nodes();
        let mut y = Array2::zeros((nt, n_base));
        let mut z = Array2::zeros((nt, n_base));
        for m in 0..nt {
            for i in 0..n_base {
                y[[m, i]] = traj.y[[m, i]];
                z[[m, i]] = traj.z[[m, i]];
            }
        }
        Ok(StateTrajectory::from_parts(y, z, self.base_grid, *traj.time_grid()))
    }
}

/// Extends a unit-interval problem to (0, 1 + eps_ext) with the control
/// region inside the extension and zero-extended initial data.
pub fn extend_problem(
    system: &SemilinearSystem,
    y0: &[f64],
    z0: &[f64],
    eps_ext: f64,
    omega_bar: (f64, f64),
) -> Result<ExtendedProblem> {
    if !(eps_ext > 0.0) {
        return Err(Error::InvalidRegion(format!("extension must be positive, got {eps_ext}")));
    }
    if omega_bar.0 <= 1.0 || omega_bar.1 >= 1.0 + eps_ext {
        return Err(Error::InvalidRegion(format!(
            "control region ({}, {}) must sit strictly inside (1, {})",
            omega_bar.0,
            omega_bar.1,
            1.0 + eps_ext
        )));
    }
    let base_grid = system.grid;
    if !base_grid.is_unit() {
        return Err(Error::InvalidGrid("extension starts from a unit-interval problem".into()));
    }
    let h = base_grid.h();
    let m_ext = (eps_ext / h).round() as usize;
    if m_ext < 2 || (eps_ext - m_ext as f64 * h).abs() > 1e-9 {
        return Err(Error::InvalidGrid(format!(
            "extension {eps_ext} must be a multiple (>= 2) of the grid spacing {h}"
        )));
    }
    let n_base = base_grid.n_interior();
    let n_ext = n_base + m_ext;
    // Same spacing bit-for-bit: the node at x = 1 is interior index n_base.
    let grid = Grid::from_spacing(n_ext, h)?;
    let region = ControlRegion::new(omega_bar.0, omega_bar.1, &grid)?;

    let extend = |data: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n_ext];
        out[..n_base].copy_from_slice(data);
        out
    };
    let kernel_on = |k: &KernelSpec| {
        KernelSpec::new(k.shape().clone(), k.lambda().clone(), &grid)
    };
    let extended_system = SemilinearSystem {
        grid,
        tgrid: system.tgrid,
        coeffs: system.coeffs,
        kernel1: kernel_on(&system.kernel1)?,
        kernel2: kernel_on(&system.kernel2)?,
        coupling: system.coupling.clone(),
    };
    Ok(ExtendedProblem {
        extension: eps_ext,
        problem: SemilinearControlProblem {
            system: extended_system,
            region,
            y0: extend(y0),
            z0: extend(z0),
        },
        base_grid,
        trace_index: n_base,
    })
}

/// Dirichlet data at `x = 1`, one value per time node.
#[derive(Debug, Clone)]
pub struct BoundaryControls {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

/// Reads the boundary controls off as the traces of an extended solution.
pub fn derive_boundary_controls(
    extended: &ExtendedProblem,
    traj: &StateTrajectory,
) -> Result<BoundaryControls> {
    if traj.grid().n_interior() != extended.problem.system.grid.n_interior() {
        return Err(Error::GridMismatch("trajectory is not on the extended grid".into()));
    }
    let j = extended.trace_index;
    let h1 = traj.y.column(j).to_vec();
    let h2 = traj.z.column(j).to_vec();
    Ok(BoundaryControls { h1, h2 })
}

/// Forward solve on (0, 1) with inhomogeneous Dirichlet data at `x = 1`,
/// lifted into the right-hand side (last-row stencil neighbor plus the
/// half-weight kernel column at `zeta = 1`).
pub fn solve_with_boundary_controls(
    system: &SemilinearSystem,
    controls: &BoundaryControls,
    y0: &[f64],
    z0: &[f64],
    opts: &SemilinearOptions,
) -> Result<StateTrajectory> {
    let grid = system.grid;
    let tgrid = system.tgrid;
    if !grid.is_unit() {
        return Err(Error::InvalidGrid("boundary-control solve lives on the unit interval".into()));
    }
    let n_nodes = tgrid.n_nodes();
    if controls.h1.len() != n_nodes || controls.h2.len() != n_nodes {
        return Err(Error::GridMismatch(format!(
            "boundary controls need {n_nodes} time samples"
        )));
    }
    let n = grid.n_interior();
    let h = grid.h();
    let horizon = tgrid.horizon();
    // Local stencil contribution of the boundary neighbor to the last row.
    let edge1 = system.coeffs.a1 / (h * h) + system.coeffs.b1 / (2.0 * h);
    let edge2 = system.coeffs.a2 / (h * h) + system.coeffs.b2 / (2.0 * h);
    let column1 = nonlocal_boundary_column(&system.kernel1, &grid);
    let column2 = nonlocal_boundary_column(&system.kernel2, &grid);

    let mut source_y = Array2::zeros((tgrid.n_steps(), n));
    let mut source_z = Array2::zeros((tgrid.n_steps(), n));
    for step in 0..tgrid.n_steps() {
        let t_mid = tgrid.midpoint(step);
        let g1 = 0.5 * (controls.h1[step] + controls.h1[step + 1]);
        let g2 = 0.5 * (controls.h2[step] + controls.h2[step + 1]);
        let lambda1 = system.kernel1.lambda().value(t_mid, horizon);
        let lambda2 = system.kernel2.lambda().value(t_mid, horizon);
        for i in 0..n {
            source_y[[step, i]] = lambda1 * column1[i] * g1;
            source_z[[step, i]] = lambda2 * column2[i] * g2;
        }
        source_y[[step, n - 1]] += edge1 * g1;
        source_z[[step, n - 1]] += edge2 * g2;
    }
    let forcing = Forcing {
        source_y: Some(&source_y),
        source_z: Some(&source_z),
        ..Forcing::default()
    };
    solve_semilinear_forward(system, &forcing, y0, z0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CouplingKind, CouplingSpec, SystemCoefficients, TimeGrid};

    fn base_system(n: usize) -> SemilinearSystem {
        let grid = Grid::unit(n).unwrap();
        SemilinearSystem {
            grid,
            tgrid: TimeGrid::new(8, 0.5).unwrap(),
            coeffs: SystemCoefficients::heat(),
            kernel1: KernelSpec::zero(&grid),
            kernel2: KernelSpec::zero(&grid),
            coupling: CouplingSpec::new(CouplingKind::Zero).unwrap(),
        }
    }

    #[test]
    fn extension_aligns_the_unit_node() {
        let sys = base_system(39); // h = 1/40, eps = 10 h
        let y0 = vec![0.0; 39];
        let ext = extend_problem(&sys, &y0, &y0, 0.25, (1.05, 1.20)).unwrap();
        let grid = ext.problem.system.grid;
        assert_eq!(grid.n_interior(), 49);
        assert_eq!(ext.trace_index(), 39);
        assert!((grid.node(ext.trace_index()) - 1.0).abs() < 1e-12);
        assert!((grid.length() - 1.25).abs() < 1e-12);
        // Spacing is bit-identical to the base grid.
        assert_eq!(grid.h(), sys.grid.h());
    }

    #[test]
    fn extension_rejects_bad_regions_and_misalignment() {
        let sys = base_system(39);
        let y0 = vec![0.0; 39];
        assert!(extend_problem(&sys, &y0, &y0, 0.25, (0.9, 1.1)).is_err());
        assert!(extend_problem(&sys, &y0, &y0, 0.25, (1.05, 1.30)).is_err());
        assert!(extend_problem(&sys, &y0, &y0, -0.1, (1.05, 1.2)).is_err());
        // 0.23 is not a multiple of 1/40.
        assert!(extend_problem(&sys, &y0, &y0, 0.23, (1.05, 1.2)).is_err());
    }

    #[test]
    fn zero_extension_of_data_restricts_back_exactly() {
        let sys = base_system(39);
        let y0: Vec<f64> = (0..39).map(|i| (i as f64 * 0.21).sin()).collect();
        let z0: Vec<f64> = (0..39).map(|i| (i as f64 * 0.13).cos()).collect();
        let ext = extend_problem(&sys, &y0, &z0, 0.25, (1.05, 1.20)).unwrap();
        assert_eq!(&ext.problem.y0[..39], y0.as_slice());
        assert!(ext.problem.y0[39..].iter().all(|&v| v == 0.0));
        assert_eq!(&ext.problem.z0[..39], z0.as_slice());
    }

    #[test]
    fn zero_boundary_data_and_zero_state_stay_zero() {
        let sys = base_system(19);
        let controls = BoundaryControls { h1: vec![0.0; 9], h2: vec![0.0; 9] };
        let traj = solve_with_boundary_controls(
            &sys,
            &controls,
            &vec![0.0; 19],
            &vec![0.0; 19],
            &SemilinearOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.y.iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);
        assert_eq!(traj.z.iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);
    }
}
