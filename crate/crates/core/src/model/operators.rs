//! Discrete spatial operators: local advection-diffusion-reaction stencils and
//! the dense nonlocal kernel operator.

use crate::error::{Error, Result};
use crate::model::grid::Grid;
use crate::model::kernel::KernelSpec;
use nalgebra::DMatrix;

/// Constant coefficients of the two equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemCoefficients {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl SystemCoefficients {
    pub fn new(a1: f64, b1: f64, c1: f64, a2: f64, b2: f64, c2: f64) -> Result<Self> {
        if !(a1 > 0.0 && a2 > 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "diffusion coefficients must be positive, got a1 = {a1}, a2 = {a2}"
            )));
        }
        Ok(Self { a1, b1, c1, a2, b2, c2 })
    }

    /// Pure heat pair with unit diffusion, no drift or reaction.
    pub fn heat() -> Self {
        Self { a1: 1.0, b1: 0.0, c1: 0.0, a2: 1.0, b2: 0.0, c2: 0.0 }
    }

    pub fn max_diffusion(&self) -> f64 {
        self.a1.max(self.a2)
    }
}

/// Tridiagonal matrix acting on interior node values (Dirichlet ends dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.sub[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * v[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i > 0 {
                m[(i, i - 1)] = self.sub[i - 1];
            }
            if i + 1 < n {
                m[(i, i + 1)] = self.sup[i];
            }
        }
        m
    }
}

/// Second-order stencil for `a u_xx + b u_x + c u` with Dirichlet ends.
pub fn assemble_spatial_operator(a: f64, b: f64, c: f64, grid: &Grid) -> Result<Tridiagonal> {
    if !(a > 0.0) {
        return Err(Error::InvalidCoefficients(format!(
            "diffusion coefficient must be positive, got {a}"
        )));
    }
    let n = grid.n_interior();
    let h = grid.h();
    let diff = a / (h * h);
    let drift = b / (2.0 * h);
    Ok(Tridiagonal {
        sub: vec![diff - drift; n - 1],
        diag: vec![-2.0 * diff + c; n],
        sup: vec![diff + drift; n - 1],
    })
}

/// Quadrature weight of node `j` (full-grid index) in the trapezoid rule for
/// `int_0^1 ... dzeta` on a grid that may extend beyond 1.
///
/// Nodes beyond the unit interval get weight zero; the node at `zeta = 1`
/// keeps its trapezoid half weight so that extended and restricted problems
/// share one quadrature.
fn unit_quadrature_weight(j_full: usize, grid: &Grid) -> f64 {
    let h = grid.h();
    let m_unit = (1.0 / h).round() as usize; // full-grid index of zeta = 1
    if j_full == 0 || j_full == m_unit {
        0.5 * h
    } else if j_full < m_unit {
        h
    } else {
        0.0
    }
}

/// Dense matrix of `u |-> lambda(t) int_0^1 J(zeta - x_i) u(zeta, t) dzeta`
/// on interior nodes, trapezoid quadrature.
pub fn assemble_nonlocal_operator(
    kernel: &KernelSpec,
    grid: &Grid,
    t: f64,
    horizon: f64,
) -> DMatrix<f64> {
    let lambda = kernel.lambda().value(t, horizon);
    let mut m = nonlocal_matrix_unscaled(kernel, grid, false);
    m *= lambda;
    m
}

/// Same operator with the reflected kernel `J(x_i - zeta)`, as it appears in
/// the adjoint system.
pub fn assemble_nonlocal_operator_adjoint(
    kernel: &KernelSpec,
    grid: &Grid,
    t: f64,
    horizon: f64,
) -> DMatrix<f64> {
    let lambda = kernel.lambda().value(t, horizon);
    let mut m = nonlocal_matrix_unscaled(kernel, grid, true);
    m *= lambda;
    m
}

/// Time-independent part of the nonlocal operator; entry `(i, j)` is
/// `w_j J(±(j - i) h)`. All kernel reads go through the shared offset table,
/// so the reflected assembly is the exact transpose on uniform weights.
pub fn nonlocal_matrix_unscaled(kernel: &KernelSpec, grid: &Grid, reflected: bool) -> DMatrix<f64> {
    let n = grid.n_interior();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let w = unit_quadrature_weight(j + 1, grid);
            if w == 0.0 {
                continue;
            }
            let offset = j as i64 - i as i64;
            let v = kernel.value_at_offset(if reflected { -offset } else { offset });
            m[(i, j)] = w * v;
        }
    }
    m
}

/// Column of nonlocal contributions from a prescribed value at the boundary
/// node `zeta = 1` (used when lifting inhomogeneous Dirichlet data).
pub fn nonlocal_boundary_column(kernel: &KernelSpec, grid: &Grid) -> Vec<f64> {
    let n = grid.n_interior();
    let h = grid.h();
    let m_unit = (1.0 / h).round() as i64;
    (0..n)
        .map(|i| 0.5 * h * kernel.value_at_offset(m_unit - (i as i64 + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::kernel::{KernelShape, LambdaProfile};

    #[test]
    fn interior_stencil_matches_hand_computation() {
        // h = 0.25 (n = 3): pure diffusion stencil is (16, -32, 16).
        let g = Grid::unit(3).unwrap();
        let op = assemble_spatial_operator(1.0, 0.0, 0.0, &g).unwrap();
        assert_eq!(op.sub, vec![16.0, 16.0]);
        assert_eq!(op.diag, vec![-32.0, -32.0, -32.0]);
        assert_eq!(op.sup, vec![16.0, 16.0]);
    }

    #[test]
    fn zero_diffusion_rejected() {
        let g = Grid::unit(3).unwrap();
        assert!(assemble_spatial_operator(0.0, 1.0, 1.0, &g).is_err());
    }

    #[test]
    fn symmetry_and_skew_parts() {
        let g = Grid::unit(8).unwrap();
        let h = g.h();
        let sym = assemble_spatial_operator(1.0, 0.0, 0.3, &g).unwrap().to_dense();
        assert_eq!(sym.transpose(), sym);
        let full = assemble_spatial_operator(1.0, 0.7, 0.3, &g).unwrap().to_dense();
        let skew = (&full - &full.transpose()) * 0.5;
        for i in 0..7 {
            assert!((skew[(i, i + 1)] - 0.7 / (2.0 * h)).abs() < 1e-12);
            assert!((skew[(i + 1, i)] + 0.7 / (2.0 * h)).abs() < 1e-12);
        }
        // Direct dense comparison of the full operator.
        let n = g.n_interior();
        let mut expect = DMatrix::zeros(n, n);
        for i in 0..n {
            expect[(i, i)] = -2.0 / (h * h) + 0.3;
            if i > 0 {
                expect[(i, i - 1)] = 1.0 / (h * h) - 0.7 / (2.0 * h);
            }
            if i + 1 < n {
                expect[(i, i + 1)] = 1.0 / (h * h) + 0.7 / (2.0 * h);
            }
        }
        assert!((&full - &expect).abs().max() < 1e-12);
    }

    #[test]
    fn spatial_operator_consistency_order() {
        // Applying to sin(pi x) approximates (-a pi^2 + c) sin + b pi cos with
        // observed order >= 1.9 under grid doubling.
        let pi = std::f64::consts::PI;
        let err = |n: usize| {
            let g = Grid::unit(n).unwrap();
            let op = assemble_spatial_operator(1.0, 0.5, 0.2, &g).unwrap();
            let v: Vec<f64> = (0..n).map(|i| (pi * g.node(i)).sin()).collect();
            let mut out = vec![0.0; n];
            op.apply(&v, &mut out);
            (0..n)
                .map(|i| {
                    let x = g.node(i);
                    let exact = (-pi * pi + 0.2) * (pi * x).sin() + 0.5 * pi * (pi * x).cos();
                    (out[i] - exact).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let e1 = err(40);
        let e2 = err(81); // halves h exactly
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn zero_kernel_gives_zero_matrix() {
        let g = Grid::unit(10).unwrap();
        let k = KernelSpec::zero(&g);
        let m = assemble_nonlocal_operator(&k, &g, 0.5, 1.0);
        assert_eq!(m.abs().max(), 0.0);
    }

    #[test]
    fn constant_kernel_row_sums_near_one() {
        let g = Grid::unit(20).unwrap();
        let k = KernelSpec::new(KernelShape::Constant(1.0), LambdaProfile::Constant(1.0), &g)
            .unwrap();
        let m = assemble_nonlocal_operator(&k, &g, 0.3, 1.0);
        for i in 0..g.n_interior() {
            let sum: f64 = m.row(i).iter().sum();
            // Interior trapezoid of 1 over (0,1): exactly 1 - h is captured on
            // interior columns (boundary values vanish).
            assert!((sum - (1.0 - g.h())).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_operator_applies_like_fine_quadrature() {
        // Row at x = 0.5 applied to sin(pi zeta) vs a 10^4-point reference
        // quadrature of the exact integral.
        let n = 19; // h = 0.05, x = 0.5 is interior node 9, zeta = 0.25 is node 4
        let g = Grid::unit(n).unwrap();
        let shape = KernelShape::Gaussian { height: 1.0, center: 0.0, width: 0.3, scale: 1.0 };
        let k = KernelSpec::new(shape, LambdaProfile::Constant(1.0), &g).unwrap();
        let m = assemble_nonlocal_operator(&k, &g, 0.5, 1.0);
        // Spot-check a single entry against the closed form.
        let expect_entry = g.h() * (-(0.25f64 - 0.5).powi(2) / (2.0 * 0.09)).exp();
        assert!((m[(9, 4)] - expect_entry).abs() < 1e-14);

        let pi = std::f64::consts::PI;
        let u: Vec<f64> = (0..n).map(|i| (pi * g.node(i)).sin()).collect();
        let applied: f64 = (0..n).map(|j| m[(9, j)] * u[j]).sum();
        let fine = {
            let steps = 10_000;
            let dz = 1.0 / steps as f64;
            let mut acc = 0.0;
            for q in 0..=steps {
                let z = q as f64 * dz;
                let w = if q == 0 || q == steps { 0.5 } else { 1.0 };
                acc += w * (-(z - 0.5f64).powi(2) / (2.0 * 0.09)).exp() * (pi * z).sin();
            }
            acc * dz
        };
        assert!((applied - fine).abs() < 5e-4 * fine.abs(), "{applied} vs {fine}");
    }

    #[test]
    fn reflected_assembly_is_bitwise_transpose() {
        let g = Grid::unit(17).unwrap();
        let shape = KernelShape::Gaussian { height: 1.3, center: 0.2, width: 0.25, scale: 0.7 };
        let k = KernelSpec::new(shape, LambdaProfile::Constant(0.9), &g).unwrap();
        let fwd = nonlocal_matrix_unscaled(&k, &g, false);
        let adj = nonlocal_matrix_unscaled(&k, &g, true);
        assert_eq!(fwd.transpose(), adj);
    }
}
