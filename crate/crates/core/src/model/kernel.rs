//! Nonlocal kernels `J` on [-1, 1] and their time profiles `lambda(t)`.
//!
//! A kernel contributes the term `lambda(t) * int_0^1 J(zeta - x) u(zeta, t) dzeta`
//! to its equation. `J` is extended by zero outside [-1, 1]. The toolkit
//! tabulates `J` at the offsets `m h` reachable on a given grid so that every
//! matrix assembly reads the same sample values.

use crate::error::{Error, Result};
use crate::model::grid::Grid;

/// Closed-form kernel shapes plus imported sample tables.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelShape {
    Zero,
    Constant(f64),
    /// Finance-style Gaussian `scale * height * exp(-(z - center)^2 / (2 width^2))`.
    Gaussian { height: f64, center: f64, width: f64, scale: f64 },
    /// Piecewise-linear interpolation of `(z, J(z))` samples, zero outside
    /// the sampled range.
    Samples(Vec<(f64, f64)>),
}

impl KernelShape {
    fn value(&self, z: f64) -> f64 {
        if z.abs() > 1.0 + 1e-12 {
            return 0.0;
        }
        match self {
            KernelShape::Zero => 0.0,
            KernelShape::Constant(v) => *v,
            KernelShape::Gaussian { height, center, width, scale } => {
                let d = z - center;
                scale * height * (-d * d / (2.0 * width * width)).exp()
            }
            KernelShape::Samples(points) => interp_linear(points, z),
        }
    }
}

fn interp_linear(points: &[(f64, f64)], z: f64) -> f64 {
    if points.is_empty() || z < points[0].0 || z > points[points.len() - 1].0 {
        return 0.0;
    }
    let k = points.partition_point(|&(x, _)| x <= z);
    if k == 0 {
        return points[0].1;
    }
    if k == points.len() {
        return points[points.len() - 1].1;
    }
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (z - x0) / (x1 - x0)
}

/// Time profile multiplying the kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaProfile {
    Zero,
    Constant(f64),
    /// `exp(-rate / (t (T - t)))`: vanishes fast at both ends of [0, T].
    ExpDecay { rate: f64 },
    /// Piecewise constant: value `values[k]` on `[breaks[k], breaks[k+1])`,
    /// with implicit final break at `T`.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl LambdaProfile {
    pub fn value(&self, t: f64, horizon: f64) -> f64 {
        match self {
            LambdaProfile::Zero => 0.0,
            LambdaProfile::Constant(v) => *v,
            LambdaProfile::ExpDecay { rate } => {
                let q = t * (horizon - t);
                if q <= 0.0 {
                    0.0
                } else {
                    (-rate / q).exp()
                }
            }
            LambdaProfile::Piecewise { breaks, values } => {
                let k = breaks.partition_point(|&b| b <= t);
                if k == 0 {
                    0.0
                } else {
                    values[k - 1]
                }
            }
        }
    }

    /// `ln(lambda(t)^2)`, computed without underflow; `-inf` when lambda = 0.
    pub fn log_sq(&self, t: f64, horizon: f64) -> f64 {
        match self {
            LambdaProfile::ExpDecay { rate } => {
                let q = t * (horizon - t);
                if q <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -2.0 * rate / q
                }
            }
            _ => {
                let v = self.value(t, horizon).abs();
                if v == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    2.0 * v.ln()
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, LambdaProfile::Zero | LambdaProfile::Constant(_))
    }

    fn validate(&self) -> Result<()> {
        if let LambdaProfile::Piecewise { breaks, values } = self {
            if breaks.len() != values.len() {
                return Err(Error::InvalidKernel(
                    "piecewise profile needs one value per break".into(),
                ));
            }
            if breaks.is_empty() || breaks[0] != 0.0 {
                return Err(Error::InvalidKernel("piecewise breaks must start at 0".into()));
            }
            if breaks.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidKernel("piecewise breaks must increase".into()));
            }
        }
        Ok(())
    }
}

/// A kernel tabulated on the offset lattice of a grid, with its time profile.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    shape: KernelShape,
    lambda: LambdaProfile,
    /// `J(m h)` for `m = -m_max ..= m_max` where `m_max h = 1`.
    table: Vec<f64>,
    m_max: i64,
    h: f64,
}

impl KernelSpec {
    /// Tabulates the kernel on the offset lattice of `grid`.
    ///
    /// The lattice spacing must divide the unit interval exactly so that every
    /// difference `zeta_j - x_i` lands on a sample and the table spans [-1, 1].
    pub fn new(shape: KernelShape, lambda: LambdaProfile, grid: &Grid) -> Result<Self> {
        lambda.validate()?;
        let h = grid.h();
        let m_real = 1.0 / h;
        let m_max = m_real.round() as i64;
        if (m_real - m_max as f64).abs() > 1e-9 {
            return Err(Error::InvalidKernel(format!(
                "grid spacing {h} does not divide the unit kernel support"
            )));
        }
        let mut table = Vec::with_capacity((2 * m_max + 1) as usize);
        for m in -m_max..=m_max {
            let v = shape.value(m as f64 * h);
            if !v.is_finite() {
                return Err(Error::InvalidKernel(format!(
                    "kernel value not finite at z = {}",
                    m as f64 * h
                )));
            }
            table.push(v);
        }
        Ok(Self { shape, lambda, table, m_max, h })
    }

    /// Zero kernel with zero profile on `grid`.
    pub fn zero(grid: &Grid) -> Self {
        Self::new(KernelShape::Zero, LambdaProfile::Zero, grid).expect("zero kernel")
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn lambda(&self) -> &LambdaProfile {
        &self.lambda
    }

    /// Kernel value at offset `m h`; zero beyond the support.
    pub fn value_at_offset(&self, m: i64) -> f64 {
        if m.abs() > self.m_max {
            0.0
        } else {
            self.table[(m + self.m_max) as usize]
        }
    }

    /// Sampled `(z, J(z))` pairs spanning [-1, 1].
    pub fn table(&self) -> Vec<(f64, f64)> {
        (-self.m_max..=self.m_max)
            .map(|m| (m as f64 * self.h, self.value_at_offset(m)))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, KernelShape::Zero)
            || matches!(self.lambda, LambdaProfile::Zero)
            || self.table.iter().all(|&v| v == 0.0)
    }

    /// Trapezoid-rule `int_{-1}^{1} J(z)^2 dz` over the table.
    pub fn j_sq_integral(&self) -> f64 {
        let n = self.table.len();
        let mut acc = 0.0;
        for (k, v) in self.table.iter().enumerate() {
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            acc += w * v * v;
        }
        acc * self.h
    }

    /// Trapezoid-rule `int_0^1 J(x_i - z)^2 dz` for interior node `i`,
    /// quadrature nodes on the full unit grid.
    pub fn j_sq_integral_shifted(&self, i: usize) -> f64 {
        // x_i = (i+1) h, z_j = j h, offsets (i + 1 - j) for j = 0..=m_max.
        let mut acc = 0.0;
        for j in 0..=self.m_max {
            let w = if j == 0 || j == self.m_max { 0.5 } else { 1.0 };
            let v = self.value_at_offset(i as i64 + 1 - j);
            acc += w * v * v;
        }
        acc * self.h
    }
}
