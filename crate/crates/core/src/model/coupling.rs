//! Coupling nonlinearities F, G and their frozen-coefficient decomposition.
//!
//! With `F(0,0) = G(0,0) = 0` the couplings split as
//! `F(r,s) = a(r,s) r + b(r,s) s` and `G(r,s) = c(r,s) r + d(r,s) s`, where
//! each coefficient is the line integral of the matching partial derivative
//! along `kappa -> (kappa r, kappa s)`. Freezing the coefficients at a fixed
//! trajectory turns the semilinear system into a linear one with bounded
//! space-time coefficients.

use crate::error::{Error, Result};
use crate::model::grid::ControlRegion;
use crate::numerics::gauss_legendre_unit;
use ndarray::Array2;

/// Built-in coupling registry. Arbitrary user code is out of scope; every
/// entry has closed-form partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingKind {
    Zero,
    /// `F = q11 r + q12 s`, `G = q21 r + q22 s` (regime-switching form).
    Linear { q11: f64, q12: f64, q21: f64, q22: f64 },
    /// `F = m11 tanh(r) + m12 tanh(s)`, `G = m21 tanh(r) + m22 tanh(s)`.
    Tanh { m11: f64, m12: f64, m21: f64, m22: f64 },
    /// `F = scale sin(r)`, `G = scale sin(s)`.
    SinScaled { scale: f64 },
}

/// A coupling pair with its global derivative bound `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    kind: CouplingKind,
    bound_m: f64,
}

impl CouplingSpec {
    pub fn new(kind: CouplingKind) -> Result<Self> {
        let bound_m = match &kind {
            CouplingKind::Zero => 0.0,
            CouplingKind::Linear { q11, q12, q21, q22 }
            | CouplingKind::Tanh { m11: q11, m12: q12, m21: q21, m22: q22 } => {
                [q11, q12, q21, q22].into_iter().fold(0.0f64, |m, q| m.max(q.abs()))
            }
            CouplingKind::SinScaled { scale } => scale.abs(),
        };
        if !bound_m.is_finite() {
            return Err(Error::InvalidCoupling("coefficients must be finite".into()));
        }
        let spec = Self { kind, bound_m };
        spec.validate()?;
        Ok(spec)
    }

    /// Linear entry with the regime-switching transition constraints
    /// `q12, q21 >= 0` and `q11 + q12 = q21 + q22 = 0` enforced.
    pub fn linear_transition(q11: f64, q12: f64, q21: f64, q22: f64) -> Result<Self> {
        if q12 < 0.0 || q21 < 0.0 {
            return Err(Error::InvalidCoupling(
                "transition rates q12, q21 must be nonnegative".into(),
            ));
        }
        if (q11 + q12).abs() > 1e-12 || (q21 + q22).abs() > 1e-12 {
            return Err(Error::InvalidCoupling("transition rows must sum to zero".into()));
        }
        Self::new(CouplingKind::Linear { q11, q12, q21, q22 })
    }

    fn validate(&self) -> Result<()> {
        if self.f(0.0, 0.0) != 0.0 || self.g(0.0, 0.0) != 0.0 {
            return Err(Error::InvalidCoupling("F(0,0) and G(0,0) must vanish".into()));
        }
        // Spot-check the derivative bound on a coarse box.
        let m = self.bound_m + 1e-12;
        for i in 0..=10 {
            for j in 0..=10 {
                let r = -3.0 + 0.6 * i as f64;
                let s = -3.0 + 0.6 * j as f64;
                for d in [self.df_dr(r, s), self.df_ds(r, s), self.dg_dr(r, s), self.dg_ds(r, s)] {
                    if d.abs() > m {
                        return Err(Error::InvalidCoupling(format!(
                            "derivative bound violated at ({r}, {s})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &CouplingKind {
        &self.kind
    }

    /// Global bound on all four partial derivatives.
    pub fn bound(&self) -> f64 {
        self.bound_m
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, CouplingKind::Zero)
            || (self.bound_m == 0.0)
    }

    /// True when the frozen coefficients do not depend on the trajectory.
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, CouplingKind::Zero | CouplingKind::Linear { .. })
    }

    pub fn f(&self, r: f64, s: f64) -> f64 {
        match &self.kind {
            CouplingKind::Zero => 0.0,
            CouplingKind::Linear { q11, q12, .. } => q11 * r + q12 * s,
            CouplingKind::Tanh { m11, m12, .. } => m11 * r.tanh() + m12 * s.tanh(),
            CouplingKind::SinScaled { scale } => scale * r.sin(),
        }
    }

    pub fn g(&self, r: f64, s: f64) -> f64 {
        match &self.kind {
            CouplingKind::Zero => 0.0,
            CouplingKind::Linear { q21, q22, .. } => q21 * r + q22 * s,
            CouplingKind::Tanh { m21, m22, .. } => m21 * r.tanh() + m22 * s.tanh(),
            CouplingKind::SinScaled { scale } => scale * s.sin(),
        }
    }

    pub fn df_dr(&self, r: f64, _s: f64) -> f64 {
        match &self.kind {
            CouplingKind::Zero => 0.0,
            CouplingKind::Linear { q11, .. } => *q11,
            CouplingKind::Tanh { m11, .. } => m11 * sech_sq(r),
            CouplingKind::SinScaled { scale } => scale * r.cos(),
        }
    }

    pub fn df_ds(&self, _r: f64, s: f64) -> f64 {
        match &self.kind {
            CouplingKind::Zero => 0.0,
            CouplingKind::Linear { q12, .. } => *q12,
            CouplingKind::Tanh { m12, .. } => m12 * sech_sq(s),
            CouplingKind::SinScaled { .. } => 0.0,
        }
    }

    pub fn dg_dr(&self, r: f64, _s: f64) -> f64 {
        match &self.kind {
            CouplingKind::Zero => 0.0,
            CouplingKind::Linear { q21, .. } => *q21,
            CouplingKind::Tanh { m21, .. } => m21 * sech_sq(r),
            CouplingKind::SinScaled { .. } => 0.0,
        }
    }

    pub fn dg_ds(&self, _r: f64, s: f64) -> f64 {
        match &self.kind {
            CouplingKind::Zero => 0.0,
            CouplingKind::Linear { q22, .. } => *q22,
            CouplingKind::Tanh { m22, .. } => m22 * sech_sq(s),
            CouplingKind::SinScaled { scale } => scale * s.cos(),
        }
    }
}

fn sech_sq(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

/// Line-integral coefficients `(a, b, c, d)` of the decomposition at `(r, s)`,
/// by 16-node Gauss-Legendre quadrature on the segment.
pub fn decompose_coupling(coupling: &CouplingSpec, r: f64, s: f64) -> (f64, f64, f64, f64) {
    // Closed forms for the linear registry entries keep freezing exact.
    if let CouplingKind::Linear { q11, q12, q21, q22 } = coupling.kind {
        return (q11, q12, q21, q22);
    }
    if coupling.is_zero() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let rule = gauss_legendre_unit(16);
    let mut out = (0.0, 0.0, 0.0, 0.0);
    for &(kappa, w) in &rule {
        let (rk, sk) = (kappa * r, kappa * s);
        out.0 += w * coupling.df_dr(rk, sk);
        out.1 += w * coupling.df_ds(rk, sk);
        out.2 += w * coupling.dg_dr(rk, sk);
        out.3 += w * coupling.dg_ds(rk, sk);
    }
    out
}

/// Space-time coefficient fields of the linearization frozen at a candidate
/// trajectory, each bounded by the coupling's `M`.
#[derive(Debug, Clone)]
pub struct FrozenCoefficients {
    pub a_tilde: Array2<f64>,
    pub b_tilde: Array2<f64>,
    pub c_tilde: Array2<f64>,
    pub d_tilde: Array2<f64>,
    time_invariant: bool,
}

impl FrozenCoefficients {
    /// Identically-zero coefficients (uncoupled linearization).
    pub fn zero(n_time_nodes: usize, n_interior: usize) -> Self {
        let z = Array2::zeros((n_time_nodes, n_interior));
        Self {
            a_tilde: z.clone(),
            b_tilde: z.clone(),
            c_tilde: z.clone(),
            d_tilde: z,
            time_invariant: true,
        }
    }

    /// Constant coefficient fields.
    pub fn constant(a: f64, b: f64, c: f64, d: f64, n_time_nodes: usize, n_interior: usize) -> Self {
        let fill = |v: f64| Array2::from_elem((n_time_nodes, n_interior), v);
        Self {
            a_tilde: fill(a),
            b_tilde: fill(b),
            c_tilde: fill(c),
            d_tilde: fill(d),
            time_invariant: true,
        }
    }

    pub fn n_time_nodes(&self) -> usize {
        self.a_tilde.nrows()
    }

    pub fn n_interior(&self) -> usize {
        self.a_tilde.ncols()
    }

    pub fn time_invariant(&self) -> bool {
        self.time_invariant
    }

    /// Largest absolute value over all four fields.
    pub fn max_abs(&self) -> f64 {
        [&self.a_tilde, &self.b_tilde, &self.c_tilde, &self.d_tilde]
            .into_iter()
            .flat_map(|f| f.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Minimum of |c~| over the closed control region and all time nodes.
    pub fn min_abs_c_on_region(&self, region: &ControlRegion) -> f64 {
        let mut min = f64::INFINITY;
        for row in self.c_tilde.rows() {
            for &i in region.closure_indices() {
                min = min.min(row[i].abs());
            }
        }
        min
    }

    fn detect_time_invariance(&mut self) {
        let same = |f: &Array2<f64>| {
            let first = f.row(0);
            f.rows().into_iter().all(|r| r == first)
        };
        self.time_invariant = same(&self.a_tilde)
            && same(&self.b_tilde)
            && same(&self.c_tilde)
            && same(&self.d_tilde);
    }
}

/// Freezes the coupling coefficients at the trajectory `(ybar, zbar)`,
/// both indexed `(time node, interior node)`.
pub fn freeze_coefficients(
    coupling: &CouplingSpec,
    ybar: &Array2<f64>,
    zbar: &Array2<f64>,
) -> Result<FrozenCoefficients> {
    if ybar.dim() != zbar.dim() {
        return Err(Error::GridMismatch(format!(
            "trajectory shapes differ: {:?} vs {:?}",
            ybar.dim(),
            zbar.dim()
        )));
    }
    let (nt, nx) = ybar.dim();
    let mut frozen = FrozenCoefficients::zero(nt, nx);
    if !coupling.is_zero() {
        for m in 0..nt {
            for i in 0..nx {
                let (a, b, c, d) = decompose_coupling(coupling, ybar[[m, i]], zbar[[m, i]]);
                frozen.a_tilde[[m, i]] = a;
                frozen.b_tilde[[m, i]] = b;
                frozen.c_tilde[[m, i]] = c;
                frozen.d_tilde[[m, i]] = d;
            }
        }
    }
    frozen.detect_time_invariance();
    let m = coupling.bound() + 1e-9;
    if frozen.max_abs() > m {
        return Err(Error::InvalidCoupling(format!(
            "frozen coefficient exceeds the bound M = {}",
            coupling.bound()
        )));
    }
    Ok(frozen)
}
