//! Space-time fields: state and adjoint trajectories and localized controls.

use crate::error::{Error, Result};
use crate::model::{ControlRegion, Grid, TimeGrid};
use crate::numerics;
use ndarray::Array2;

/// Solution pair `(y, z)` indexed `(time node, interior node)`, with the
/// initial data in the first row and zero Dirichlet boundary implied.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub y: Array2<f64>,
    pub z: Array2<f64>,
    grid: Grid,
    tgrid: TimeGrid,
}

impl StateTrajectory {
    pub(crate) fn from_parts(y: Array2<f64>, z: Array2<f64>, grid: Grid, tgrid: TimeGrid) -> Self {
        debug_assert_eq!(y.dim(), (tgrid.n_nodes(), grid.n_interior()));
        debug_assert_eq!(y.dim(), z.dim());
        Self { y, z, grid, tgrid }
    }

    /// All-zero trajectory.
    pub fn zeros(grid: Grid, tgrid: TimeGrid) -> Self {
        let shape = (tgrid.n_nodes(), grid.n_interior());
        Self { y: Array2::zeros(shape), z: Array2::zeros(shape), grid, tgrid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn initial_y(&self) -> Vec<f64> {
        self.y.row(0).to_vec()
    }

    pub fn initial_z(&self) -> Vec<f64> {
        self.z.row(0).to_vec()
    }

    /// Spatial L2 norm of `y` at the final time.
    pub fn terminal_y_norm(&self) -> f64 {
        numerics::l2_space(self.y.row(self.tgrid.n_steps()).as_slice().unwrap(), self.grid.h())
    }

    pub fn terminal_z_norm(&self) -> f64 {
        numerics::l2_space(self.z.row(self.tgrid.n_steps()).as_slice().unwrap(), self.grid.h())
    }

    /// Spatial L2 norm of the pair at time node `m`.
    pub fn pair_norm_at(&self, m: usize) -> f64 {
        let h = self.grid.h();
        let ny = numerics::l2_space(self.y.row(m).as_slice().unwrap(), h);
        let nz = numerics::l2_space(self.z.row(m).as_slice().unwrap(), h);
        (ny * ny + nz * nz).sqrt()
    }

    /// L2(Q)^2 norm of the pair (trapezoid in time).
    pub fn l2q_norm(&self) -> f64 {
        let h = self.grid.h();
        let dt = self.tgrid.dt();
        (numerics::l2q_sq(&self.y, h, dt) + numerics::l2q_sq(&self.z, h, dt)).sqrt()
    }

    /// L2(Q)^2 distance to another trajectory on the same grids.
    pub fn l2q_distance(&self, other: &Self) -> Result<f64> {
        if self.y.dim() != other.y.dim() {
            return Err(Error::GridMismatch("trajectory shapes differ".into()));
        }
        let h = self.grid.h();
        let dt = self.tgrid.dt();
        let dy = &self.y - &other.y;
        let dz = &self.z - &other.z;
        Ok((numerics::l2q_sq(&dy, h, dt) + numerics::l2q_sq(&dz, h, dt)).sqrt())
    }
}

/// Adjoint pair `(phi, psi)` indexed `(time node, interior node)`, running
/// backward from the final data in the last row.
///
/// `phi_mid`/`psi_mid` hold the per-step midpoint solves (row `n` pairs with
/// the control on step `n`); they satisfy `mid = (node_n + node_{n+1}) / 2`
/// exactly for the theta = 1/2 scheme and make the discrete duality identity
/// hold to machine precision.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub phi: Array2<f64>,
    pub psi: Array2<f64>,
    pub phi_mid: Array2<f64>,
    pub psi_mid: Array2<f64>,
    grid: Grid,
    tgrid: TimeGrid,
}

impl AdjointTrajectory {
    pub(crate) fn from_parts(
        phi: Array2<f64>,
        psi: Array2<f64>,
        phi_mid: Array2<f64>,
        psi_mid: Array2<f64>,
        grid: Grid,
        tgrid: TimeGrid,
    ) -> Self {
        Self { phi, psi, phi_mid, psi_mid, grid, tgrid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn initial_phi(&self) -> Vec<f64> {
        self.phi.row(0).to_vec()
    }

    pub fn initial_psi(&self) -> Vec<f64> {
        self.psi.row(0).to_vec()
    }
}

/// Control supported on the control region, one value per time step (the
/// value on the slab `[t_n, t_{n+1})`). Entries outside the region are zero
/// by construction.
#[derive(Debug, Clone)]
pub struct ControlSignal {
    values: Array2<f64>,
    region: ControlRegion,
    grid: Grid,
    tgrid: TimeGrid,
}

impl ControlSignal {
    pub fn zeros(region: ControlRegion, grid: Grid, tgrid: TimeGrid) -> Self {
        let values = Array2::zeros((tgrid.n_steps(), grid.n_interior()));
        Self { values, region, grid, tgrid }
    }

    /// Builds a control from raw values, masking everything outside the region.
    pub fn from_values(
        mut values: Array2<f64>,
        region: ControlRegion,
        grid: Grid,
        tgrid: TimeGrid,
    ) -> Result<Self> {
        if values.dim() != (tgrid.n_steps(), grid.n_interior()) {
            return Err(Error::GridMismatch(format!(
                "control shape {:?} does not match ({}, {})",
                values.dim(),
                tgrid.n_steps(),
                grid.n_interior()
            )));
        }
        let indicator = region.indicator();
        for mut row in values.rows_mut() {
            for (v, ind) in row.iter_mut().zip(&indicator) {
                *v *= ind;
            }
        }
        Ok(Self { values, region, grid, tgrid })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn region(&self) -> &ControlRegion {
        &self.region
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn n_steps(&self) -> usize {
        self.tgrid.n_steps()
    }

    /// L2(omega x (0,T)) inner product (slab quadrature in time).
    pub fn dot(&self, other: &Self) -> f64 {
        let cell = self.tgrid.dt() * self.grid.h();
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * cell
    }

    /// L2(omega x (0,T)) norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self + alpha * other`, entrywise.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.values.zip_mut_with(&other.values, |a, b| *a += alpha * b);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.mapv_inplace(|v| v * alpha);
    }

    /// Restriction of a node-field row to the region (used to turn adjoint
    /// midpoint values into control updates).
    pub fn set_step_from_masked(&mut self, n: usize, values: &[f64]) {
        for &i in self.region.indices() {
            self.values[[n, i]] = values[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_masking_is_structural() {
        let grid = Grid::unit(9).unwrap();
        let tgrid = TimeGrid::new(4, 1.0).unwrap();
        let region = ControlRegion::new(0.3, 0.7, &grid).unwrap();
        let raw = Array2::from_elem((4, 9), 1.0);
        let c = ControlSignal::from_values(raw, region.clone(), grid, tgrid).unwrap();
        for n in 0..4 {
            for i in 0..9 {
                let inside = region.contains_index(i);
                assert_eq!(c.values()[[n, i]] != 0.0, inside);
            }
        }
        // Norm counts only the region: 3 nodes, h = dt = value = ...
        let expect = (4.0 * 0.25 * 3.0 * 0.1).sqrt();
        assert!((c.norm() - expect).abs() < 1e-14);
    }

    #[test]
    fn trajectory_norms() {
        let grid = Grid::unit(9).unwrap();
        let tgrid = TimeGrid::new(4, 1.0).unwrap();
        let mut traj = StateTrajectory::zeros(grid, tgrid);
        traj.y.row_mut(4).fill(2.0);
        let expect = (0.1f64 * 9.0 * 4.0).sqrt();
        assert!((traj.terminal_y_norm() - expect).abs() < 1e-14);
        assert_eq!(traj.terminal_z_norm(), 0.0);
    }
}
