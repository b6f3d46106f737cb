//! Small numerical utilities: grid norms, quadrature rules, tridiagonal solves.

use ndarray::Array2;
use std::sync::OnceLock;

/// Discrete L2 norm on the spatial grid, `sqrt(h * sum v_i^2)`.
pub fn l2_space(values: &[f64], h: f64) -> f64 {
    (h * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Discrete L2 inner product on the spatial grid.
pub fn dot_space(a: &[f64], b: &[f64], h: f64) -> f64 {
    h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Squared L2(Q) norm of a node-indexed space-time field, trapezoid in time.
pub fn l2q_sq(field: &Array2<f64>, h: f64, dt: f64) -> f64 {
    let n_rows = field.nrows();
    let mut acc = 0.0;
    for (m, row) in field.rows().into_iter().enumerate() {
        let w = if m == 0 || m == n_rows - 1 { 0.5 } else { 1.0 };
        acc += w * row.iter().map(|v| v * v).sum::<f64>();
    }
    acc * h * dt
}

/// L2(Q) norm of a node-indexed space-time field.
pub fn l2q(field: &Array2<f64>, h: f64, dt: f64) -> f64 {
    l2q_sq(field, h, dt).sqrt()
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [0, 1].
///
/// Computed by Newton iteration on the Legendre polynomial; the 16-point rule
/// used for the coupling line integrals is cached.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    static GL16: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    if n == 16 {
        return GL16.get_or_init(|| compute_gauss_legendre_unit(16)).clone();
    }
    compute_gauss_legendre_unit(n)
}

fn compute_gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for k in 0..n {
        // Chebyshev-based initial guess for the k-th root of P_n on [-1, 1].
        let mut x = -(std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1].
        rule.push((0.5 * (x + 1.0), 0.5 * w));
    }
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Solves a tridiagonal system in place by the Thomas algorithm.
///
/// `sub` has length n-1 (below diagonal), `diag` length n, `sup` length n-1.
/// Returns `None` when a pivot vanishes.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert_eq!(sub.len(), n.saturating_sub(1));
    assert_eq!(sup.len(), n.saturating_sub(1));
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return None;
    }
    c[0] = if n > 1 { sup[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i - 1] * c[i - 1];
        if denom == 0.0 {
            return None;
        }
        if i < n - 1 {
            c[i] = sup[i] / denom;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Observed convergence order from errors at two resolutions (fine = half step).
pub fn observed_order(err_coarse: f64, err_fine: f64) -> f64 {
    (err_coarse / err_fine).log2()
}

/// Relative difference |a - b| / max(|b|, floor).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
