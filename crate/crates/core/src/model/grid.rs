//! Uniform space and time grids and the control region indicator.

use crate::error::{Error, Result};

/// Uniform spatial grid with homogeneous Dirichlet ends.
///
/// Interior nodes are `x_i = (i+1) h` for `i = 0..n_interior`; the boundary
/// nodes `0` and `length` carry no unknowns. The standard problem lives on the
/// unit interval; `with_length` exists for the domain-extension construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n_interior: usize,
    h: f64,
    length: f64,
}

impl Grid {
    /// Grid on the unit interval (0, 1).
    pub fn unit(n_interior: usize) -> Result<Self> {
        Self::with_length(n_interior, 1.0)
    }

    /// Grid with a prescribed spacing (keeps `h` bit-identical to a reference
    /// grid so that restricted and extended problems share their stencils).
    pub fn from_spacing(n_interior: usize, h: f64) -> Result<Self> {
        if n_interior == 0 || !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("invalid spacing {h}")));
        }
        Ok(Self { n_interior, h, length: h * (n_interior as f64 + 1.0) })
    }

    /// Grid on (0, length).
    pub fn with_length(n_interior: usize, length: f64) -> Result<Self> {
        if n_interior == 0 {
            return Err(Error::InvalidGrid("need at least one interior node".into()));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("invalid length {length}")));
        }
        let h = length / (n_interior as f64 + 1.0);
        Ok(Self { n_interior, h, length })
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Coordinate of interior node `i` (0-based).
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_interior);
        (i as f64 + 1.0) * self.h
    }

    /// Interior node coordinates.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_interior).map(|i| self.node(i)).collect()
    }

    /// Coordinate of full-grid node `j = 0..=n_interior+1`, including ends.
    /// The last node is pinned to `length` so endpoint identities hold exactly.
    pub fn full_node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.n_interior + 1);
        if j == self.n_interior + 1 {
            self.length
        } else {
            j as f64 * self.h
        }
    }

    pub fn is_unit(&self) -> bool {
        (self.length - 1.0).abs() < 1e-12
    }
}

/// Uniform time grid on [0, T].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidGrid("need at least two time steps".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("invalid horizon {horizon}")));
        }
        let dt = horizon / n_steps as f64;
        Ok(Self { n_steps, dt, horizon })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of time nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time node `t_m = m dt`.
    pub fn node(&self, m: usize) -> f64 {
        debug_assert!(m <= self.n_steps);
        m as f64 * self.dt
    }

    /// Midpoint of step `n`, `t = (n + 1/2) dt`.
    pub fn midpoint(&self, n: usize) -> f64 {
        debug_assert!(n < self.n_steps);
        (n as f64 + 0.5) * self.dt
    }

    /// Interior time nodes `t_m`, `m = 1..n_steps`, where the Carleman
    /// weights are finite.
    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..self.n_steps).map(|m| self.node(m)).collect()
    }
}

/// Open control region `omega = (lo, hi)` with its node indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRegion {
    lo: f64,
    hi: f64,
    /// Interior node indices strictly inside omega.
    indices: Vec<usize>,
    /// Interior node indices in the closure [lo, hi].
    closure_indices: Vec<usize>,
    n_interior: usize,
}

impl ControlRegion {
    pub fn new(lo: f64, hi: f64, grid: &Grid) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi < grid.length()) {
            return Err(Error::InvalidRegion(format!(
                "need 0 < lo < hi < {}, got ({lo}, {hi})",
                grid.length()
            )));
        }
        let tol = 1e-12 * grid.length();
        let mut indices = Vec::new();
        let mut closure_indices = Vec::new();
        for i in 0..grid.n_interior() {
            let x = grid.node(i);
            if x > lo + tol && x < hi - tol {
                indices.push(i);
            }
            if x >= lo - tol && x <= hi + tol {
                closure_indices.push(i);
            }
        }
        if indices.is_empty() {
            return Err(Error::InvalidRegion(format!(
                "no interior grid node falls inside ({lo}, {hi}); refine the grid"
            )));
        }
        Ok(Self { lo, hi, indices, closure_indices, n_interior: grid.n_interior() })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Indices of interior nodes strictly inside omega.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Indices of interior nodes in the closed region.
    pub fn closure_indices(&self) -> &[usize] {
        &self.closure_indices
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// 1 inside omega, 0 outside, per interior node.
    pub fn indicator(&self) -> Vec<f64> {
        let mut ind = vec![0.0; self.n_interior];
        for &i in &self.indices {
            ind[i] = 1.0;
        }
        ind
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_grid_spacing_consistent() {
        let g = Grid::unit(99).unwrap();
        assert!((g.h() * 100.0 - 1.0).abs() < 1e-15);
        assert!(g.node(0) > 0.0 && g.node(98) < 1.0);
        assert_eq!(g.full_node(0), 0.0);
        assert!((g.full_node(100) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn time_grid_spacing_consistent() {
        let tg = TimeGrid::new(60, 1.5).unwrap();
        assert!((tg.dt() * 60.0 - 1.5).abs() < 1e-15);
        assert_eq!(tg.interior_nodes().len(), 59);
        assert!((tg.midpoint(0) - 0.0125) < 1e-15);
    }

    #[test]
    fn rejected_grids() {
        assert!(Grid::unit(0).is_err());
        assert!(Grid::with_length(10, -1.0).is_err());
        assert!(TimeGrid::new(1, 1.0).is_err());
        assert!(TimeGrid::new(10, 0.0).is_err());
    }

    #[test]
    fn region_indicator_matches_membership() {
        let g = Grid::unit(9).unwrap(); // h = 0.1
        let r = ControlRegion::new(0.3, 0.7, &g).unwrap();
        let ind = r.indicator();
        for i in 0..9 {
            let x = g.node(i);
            let inside = x > 0.3 + 1e-12 && x < 0.7 - 1e-12;
            assert_eq!(ind[i] == 1.0, inside, "node {x}");
        }
        // Closure picks up the nodes sitting exactly on the bounds.
        assert_eq!(r.closure_indices(), &[2, 3, 4, 5, 6]);
        assert_eq!(r.indices(), &[3, 4, 5]);
    }

    #[test]
    fn region_rejects_boundary_and_empty() {
        let g = Grid::unit(9).unwrap();
        assert!(ControlRegion::new(0.0, 0.5, &g).is_err());
        assert!(ControlRegion::new(0.5, 1.0, &g).is_err());
        assert!(ControlRegion::new(0.6, 0.4, &g).is_err());
        // Valid open set, but too narrow to contain a node of this grid.
        assert!(ControlRegion::new(0.31, 0.39, &g).is_err());
    }
}
