//! Penalized-HUM control of the frozen-coefficient linear system.
//!
//! For a penalty `epsilon > 0` the functional
//!
//! ```text
//! J_eps(nu) = ||nu||^2_{L2(omega x (0,T))} + (1/eps) (||y_nu(T)||^2 + ||z_nu(T)||^2)
//! ```
//!
//! is strictly convex, continuous and coercive, so it has a unique minimizer.
//! Its gradient is `2 nu - 2 phi 1_omega`, where `(phi, psi)` solves the
//! adjoint system from the final data `-(1/eps) (y_nu(T), z_nu(T))`; at the
//! minimizer the control is the restriction of the adjoint to the control
//! region. Because the adjoint here is the exact transpose of the discrete
//! forward map, that gradient is exact for the discrete functional and the
//! minimization is a plain conjugate-gradient iteration in control space.

use crate::error::{Error, Result};
use crate::model::ControlRegion;
use crate::numerics;
use crate::solver::{
    AdjointTrajectory, ControlSignal, Forcing, LinearSystem, Propagator, StateTrajectory,
};
use serde::Serialize;

/// One localized control on the y-equation, or one on each equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ControlMode {
    Single,
    Two,
}

/// Policy for the `c~ != 0 on closure(omega)` hypothesis in single-control mode.
///
/// `Auto` enforces the check whenever the frozen coupling is not identically
/// zero (an identically-zero coupling leaves the z-equation uncontrolled but
/// still defines a valid penalized problem).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisPolicy {
    Auto,
    Enforce,
    Skip,
}

/// Conjugate-gradient controls.
#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Relative residual (= relative gradient norm) tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 2000 }
    }
}

/// The penalized control problem for one frozen linear system.
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    pub system: LinearSystem,
    pub region: ControlRegion,
    pub mode: ControlMode,
    pub epsilon: f64,
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
    pub cg: CgOptions,
    pub hypothesis: HypothesisPolicy,
    /// Margin for the coupling hypothesis check.
    pub coupling_margin: f64,
}

impl PenalizedProblem {
    pub fn new(
        system: LinearSystem,
        region: ControlRegion,
        epsilon: f64,
        y0: Vec<f64>,
        z0: Vec<f64>,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("penalty must be positive, got {epsilon}")));
        }
        if y0.len() != system.grid.n_interior() || z0.len() != system.grid.n_interior() {
            return Err(Error::GridMismatch("initial data length mismatch".into()));
        }
        system.validate()?;
        Ok(Self {
            system,
            region,
            mode: ControlMode::Single,
            epsilon,
            y0,
            z0,
            cg: CgOptions::default(),
            hypothesis: HypothesisPolicy::Auto,
            coupling_margin: 1e-6,
        })
    }

    pub fn with_mode(mut self, mode: ControlMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn data_norm_sq(&self) -> f64 {
        let h = self.system.grid.h();
        let ny = numerics::l2_space(&self.y0, h);
        let nz = numerics::l2_space(&self.z0, h);
        ny * ny + nz * nz
    }

    /// Runs the coupling-hypothesis check according to the policy.
    pub fn check_coupling_hypothesis(&self) -> Result<()> {
        if self.mode == ControlMode::Two {
            return Ok(());
        }
        let enforce = match self.hypothesis {
            HypothesisPolicy::Skip => false,
            HypothesisPolicy::Enforce => true,
            HypothesisPolicy::Auto => {
                self.system.frozen.c_tilde.iter().any(|v| v.abs() > 1e-14)
            }
        };
        if enforce {
            let min_abs = self.system.frozen.min_abs_c_on_region(&self.region);
            if min_abs < self.coupling_margin {
                return Err(Error::CouplingVanishesOnOmega {
                    min_abs,
                    margin: self.coupling_margin,
                });
            }
        }
        Ok(())
    }
}

/// Control iterate: a signal on the y-equation and, in two-control mode, a
/// second one on the z-equation. A vector in `L2(omega x (0,T))^k`.
#[derive(Debug, Clone)]
pub struct ControlVariable {
    pub nu: ControlSignal,
    pub mu: Option<ControlSignal>,
}

impl ControlVariable {
    pub fn zeros(problem: &PenalizedProblem) -> Self {
        let make = || {
            ControlSignal::zeros(problem.region.clone(), problem.system.grid, problem.system.tgrid)
        };
        Self {
            nu: make(),
            mu: match problem.mode {
                ControlMode::Single => None,
                ControlMode::Two => Some(make()),
            },
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let mut acc = self.nu.dot(&other.nu);
        if let (Some(a), Some(b)) = (&self.mu, &other.mu) {
            acc += a.dot(b);
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.nu.add_scaled(alpha, &other.nu);
        if let (Some(a), Some(b)) = (&mut self.mu, &other.mu) {
            a.add_scaled(alpha, b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.nu.scale(alpha);
        if let Some(m) = &mut self.mu {
            m.scale(alpha);
        }
    }

    fn forcing(&self) -> Forcing<'_> {
        match &self.mu {
            Some(mu) => Forcing::two_controls(&self.nu, mu),
            None => Forcing::control(&self.nu),
        }
    }

    /// The adjoint midpoint values restricted to the control region, as a
    /// control-space element (the `phi 1_omega` of the optimality system).
    fn from_adjoint_mids(problem: &PenalizedProblem, adjoint: &AdjointTrajectory) -> Self {
        let mut out = Self::zeros(problem);
        let n_steps = problem.system.tgrid.n_steps();
        for step in 0..n_steps {
            out.nu
                .set_step_from_masked(step, adjoint.phi_mid.row(step).as_slice().unwrap());
            if let Some(mu) = &mut out.mu {
                mu.set_step_from_masked(step, adjoint.psi_mid.row(step).as_slice().unwrap());
            }
        }
        out
    }
}

/// Penalized-HUM outcome.
#[derive(Debug, Clone)]
pub struct HumResult {
    pub control: ControlVariable,
    pub terminal_y_norm: f64,
    pub terminal_z_norm: f64,
    pub control_norm: f64,
    pub j_value: f64,
    pub cg_iterations: usize,
    /// `||nu - phi 1_omega|| / ||nu||` at the returned control.
    pub optimality_residual: f64,
    /// False when the iteration cap was exhausted (partial result).
    pub converged: bool,
    /// Relative residual per CG iteration.
    pub residual_history: Vec<f64>,
    pub epsilon: f64,
}

impl HumResult {
    pub fn terminal_norm_sq(&self) -> f64 {
        self.terminal_y_norm * self.terminal_y_norm + self.terminal_z_norm * self.terminal_z_norm
    }

    /// Empirical constant of the penalty bound
    /// `(1/2)||nu||^2 + (1/eps)||(y,z)(T)||^2 <= (C/2) (||y0||^2 + ||z0||^2)`.
    pub fn empirical_constant(&self, data_norm_sq: f64) -> f64 {
        if data_norm_sq == 0.0 {
            return 0.0;
        }
        (self.control_norm * self.control_norm + 2.0 / self.epsilon * self.terminal_norm_sq())
            / data_norm_sq
    }
}

/// Shared propagator plus the problem it serves; one instance drives an
/// entire CG run (and a whole epsilon sweep).
pub struct HumSolver<'p> {
    problem: &'p PenalizedProblem,
    propagator: Propagator,
}

impl<'p> HumSolver<'p> {
    pub fn new(problem: &'p PenalizedProblem) -> Result<Self> {
        Ok(Self { problem, propagator: Propagator::new(&problem.system)? })
    }

    /// Forward solve with the problem's initial data under a given control.
    pub fn controlled_trajectory(&self, control: &ControlVariable) -> Result<StateTrajectory> {
        self.forward(Some(control), true)
    }

    fn forward(&self, control: Option<&ControlVariable>, with_data: bool) -> Result<StateTrajectory> {
        let n = self.problem.system.grid.n_interior();
        let zero = vec![0.0; n];
        let (y0, z0): (&[f64], &[f64]) = if with_data {
            (&self.problem.y0, &self.problem.z0)
        } else {
            (&zero, &zero)
        };
        match control {
            Some(c) => self.propagator.forward(y0, z0, &c.forcing()),
            None => self.propagator.forward(y0, z0, &Forcing::none()),
        }
    }

    /// Adjoint pairing from the terminal state of `traj`, with the optimality
    /// final data `-(1/eps) (y(T), z(T))`.
    fn pairing(&self, traj: &StateTrajectory, epsilon: f64) -> Result<ControlVariable> {
        let n_steps = self.problem.system.tgrid.n_steps();
        let scale = -1.0 / epsilon;
        let phi_t: Vec<f64> = traj.y.row(n_steps).iter().map(|v| scale * v).collect();
        let psi_t: Vec<f64> = traj.z.row(n_steps).iter().map(|v| scale * v).collect();
        let adjoint = self.propagator.adjoint(&phi_t, &psi_t)?;
        Ok(ControlVariable::from_adjoint_mids(self.problem, &adjoint))
    }

    fn evaluate(&self, control: &ControlVariable, epsilon: f64) -> Result<f64> {
        let traj = self.forward(Some(control), true)?;
        let ty = traj.terminal_y_norm();
        let tz = traj.terminal_z_norm();
        Ok(control.dot(control) + (ty * ty + tz * tz) / epsilon)
    }

    fn gradient(&self, control: &ControlVariable, epsilon: f64) -> Result<ControlVariable> {
        let traj = self.forward(Some(control), true)?;
        let mut grad = self.pairing(&traj, epsilon)?;
        grad.scale(-2.0);
        grad.add_scaled(2.0, control);
        Ok(grad)
    }

    /// `H v = v - pairing(S v)`: the positive-definite CG operator (half the
    /// gradient of the quadratic part, zero data).
    fn apply_h(&self, v: &ControlVariable, epsilon: f64) -> Result<ControlVariable> {
        let traj = self.forward(Some(v), false)?;
        let mut out = self.pairing(&traj, epsilon)?;
        out.scale(-1.0);
        out.add_scaled(1.0, v);
        Ok(out)
    }

    /// Right-hand side `b = pairing(m)` from the uncontrolled run with data.
    fn rhs(&self, epsilon: f64) -> Result<ControlVariable> {
        let traj = self.forward(None, true)?;
        self.pairing(&traj, epsilon)
    }

    /// Minimizes the penalized functional at the given epsilon.
    pub fn minimize(&self, epsilon: f64) -> Result<HumResult> {
        self.problem.check_coupling_hypothesis()?;
        let b = self.rhs(epsilon)?;
        let b_norm = b.norm();
        let mut x = ControlVariable::zeros(self.problem);
        let mut history = Vec::new();
        let mut iterations = 0;
        let mut converged = true;
        if b_norm > 0.0 {
            let mut r = b.clone();
            let mut p = r.clone();
            let mut rr = r.dot(&r);
            converged = false;
            while iterations < self.problem.cg.max_iterations {
                if rr.sqrt() <= self.problem.cg.tolerance * b_norm {
                    converged = true;
                    break;
                }
                let hp = self.apply_h(&p, epsilon)?;
                let php = p.dot(&hp);
                if php <= 0.0 {
                    // Quadratic form lost positivity to roundoff: stop here.
                    break;
                }
                let alpha = rr / php;
                x.add_scaled(alpha, &p);
                r.add_scaled(-alpha, &hp);
                let rr_next = r.dot(&r);
                history.push(rr_next.sqrt() / b_norm);
                let beta = rr_next / rr;
                rr = rr_next;
                p.scale(beta);
                p.add_scaled(1.0, &r);
                iterations += 1;
            }
            converged = converged || rr.sqrt() <= self.problem.cg.tolerance * b_norm;
        }
        let traj = self.forward(Some(&x), true)?;
        let terminal_y_norm = traj.terminal_y_norm();
        let terminal_z_norm = traj.terminal_z_norm();
        let control_norm = x.norm();
        let j_value =
            control_norm * control_norm
                + (terminal_y_norm * terminal_y_norm + terminal_z_norm * terminal_z_norm) / epsilon;
        let optimality_residual = if control_norm > 0.0 {
            let mut diff = self.pairing(&traj, epsilon)?;
            diff.scale(-1.0);
            diff.add_scaled(1.0, &x);
            diff.norm() / control_norm
        } else {
            0.0
        };
        Ok(HumResult {
            control: x,
            terminal_y_norm,
            terminal_z_norm,
            control_norm,
            j_value,
            cg_iterations: iterations,
            optimality_residual,
            converged,
            residual_history: history,
            epsilon,
        })
    }
}

/// Value of the penalized functional at a control.
pub fn evaluate_j(problem: &PenalizedProblem, control: &ControlVariable) -> Result<f64> {
    HumSolver::new(problem)?.evaluate(control, problem.epsilon)
}

/// Exact gradient of the discrete functional, `2 nu - 2 phi 1_omega`.
pub fn gradient_j(problem: &PenalizedProblem, control: &ControlVariable) -> Result<ControlVariable> {
    HumSolver::new(problem)?.gradient(control, problem.epsilon)
}

/// Unique minimizer of the penalized functional by conjugate gradients.
pub fn minimize_j(problem: &PenalizedProblem) -> Result<HumResult> {
    HumSolver::new(problem)?.minimize(problem.epsilon)
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub control_norm: f64,
    pub terminal_norm_sq: f64,
    pub empirical_c: f64,
    pub cg_iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Sweep outcome with the single fitted penalty-bound constant.
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Max of the per-row empirical constants (one C for the whole sweep).
    pub fitted_c: f64,
    pub data_norm_sq: f64,
}

/// Runs the minimization for each penalty in a decreasing list. Per-epsilon
/// failures are recorded and the sweep continues; members are independent
/// (cold starts), matching their definition as separate minimizations.
pub fn epsilon_sweep(problem: &PenalizedProblem, epsilons: &[f64]) -> Result<SweepTable> {
    if epsilons.is_empty() {
        return Err(Error::InvalidConfig("empty epsilon list".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidConfig("epsilons must be positive".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig("epsilons must decrease".into()));
    }
    let solver = HumSolver::new(problem)?;
    let data_norm_sq = problem.data_norm_sq();
    let mut rows = Vec::with_capacity(epsilons.len());
    let mut fitted_c = 0.0f64;
    for &eps in epsilons {
        match solver.minimize(eps) {
            Ok(result) => {
                let c = result.empirical_constant(data_norm_sq);
                fitted_c = fitted_c.max(c);
                rows.push(SweepRow {
                    epsilon: eps,
                    control_norm: result.control_norm,
                    terminal_norm_sq: result.terminal_norm_sq(),
                    empirical_c: c,
                    cg_iterations: result.cg_iterations,
                    converged: result.converged,
                    error: None,
                });
            }
            Err(err) => rows.push(SweepRow {
                epsilon: eps,
                control_norm: f64::NAN,
                terminal_norm_sq: f64::NAN,
                empirical_c: f64::NAN,
                cg_iterations: 0,
                converged: false,
                error: Some(err.to_string()),
            }),
        }
    }
    Ok(SweepTable { rows, fitted_c, data_norm_sq })
}
