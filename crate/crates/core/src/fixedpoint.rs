//! Picard outer loop for the semilinear null control.
//!
//! Each sweep freezes the coupling coefficients at the current candidate
//! trajectory, solves the penalized-HUM problem for the resulting linear
//! system, and takes the controlled trajectory as the next candidate (the
//! unique minimizer serves as the selection from the multivalued map). The
//! candidate control is then validated on the true semilinear dynamics.
//! Convergence of the outer loop is an observed outcome, not a theorem; a
//! diverging iteration is reported with its history rather than retried.

use crate::error::{Error, Result};
use crate::hum::{CgOptions, HumResult, HumSolver, HypothesisPolicy, PenalizedProblem};
use crate::model::ControlRegion;
use crate::numerics::{self, solve_tridiagonal};
use crate::solver::{
    solve_semilinear_forward, ControlSignal, Forcing, SemilinearOptions, SemilinearSystem,
    StateTrajectory,
};
use ndarray::Array2;
use serde::Serialize;

/// Starting candidate for the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialIterate {
    /// Uncontrolled solve of the true semilinear system (default).
    UncontrolledSemilinear,
    Zero,
}

/// Penalty used inside the outer loop.
#[derive(Debug, Clone)]
pub enum EpsilonSchedule {
    Fixed(f64),
    /// Per-iterate penalties; the last entry repeats once exhausted.
    PerIterate(Vec<f64>),
}

impl EpsilonSchedule {
    fn at(&self, iterate: usize) -> f64 {
        match self {
            EpsilonSchedule::Fixed(e) => *e,
            EpsilonSchedule::PerIterate(v) => v[iterate.min(v.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            EpsilonSchedule::Fixed(e) => *e > 0.0,
            EpsilonSchedule::PerIterate(v) => !v.is_empty() && v.iter().all(|&e| e > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("epsilon schedule must be positive".into()))
        }
    }
}

/// Outer-loop configuration.
#[derive(Debug, Clone)]
pub struct FixedPointConfig {
    /// Initial-data smallness gate on `||y0|| + ||z0||`.
    pub delta_smallness: f64,
    /// Proceed with a warning instead of failing the gate.
    pub allow_large_data: bool,
    pub max_outer_iterations: usize,
    /// Relative successive-iterate distance in L2(Q)^2 at which to stop.
    pub outer_tolerance: f64,
    pub epsilon: EpsilonSchedule,
    pub initial_iterate: InitialIterate,
    /// Validation gate: true terminal norm at most this factor times the
    /// frozen-linear terminal norm.
    pub validation_gate_factor: f64,
    pub cg: CgOptions,
    pub hypothesis: HypothesisPolicy,
    /// Consecutive increases of the successive distance (or of the iterate
    /// radius) that count as divergence.
    pub divergence_window: usize,
    pub semilinear: SemilinearOptions,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            delta_smallness: 1e-2,
            allow_large_data: false,
            max_outer_iterations: 30,
            outer_tolerance: 1e-8,
            epsilon: EpsilonSchedule::Fixed(1e-6),
            initial_iterate: InitialIterate::UncontrolledSemilinear,
            validation_gate_factor: 10.0,
            cg: CgOptions::default(),
            hypothesis: HypothesisPolicy::Auto,
            divergence_window: 5,
            semilinear: SemilinearOptions::default(),
        }
    }
}

/// The semilinear control problem: system, control region, initial data.
#[derive(Debug, Clone)]
pub struct SemilinearControlProblem {
    pub system: SemilinearSystem,
    pub region: ControlRegion,
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
}

impl SemilinearControlProblem {
    pub fn data_norm(&self) -> f64 {
        let h = self.system.grid.h();
        numerics::l2_space(&self.y0, h) + numerics::l2_space(&self.z0, h)
    }
}

/// Per-iterate diagnostics (one JSON line each in the run log).
#[derive(Debug, Clone, Serialize)]
pub struct IterateRecord {
    pub iterate: usize,
    pub successive_distance: f64,
    pub control_norm: f64,
    /// W'-type norm of the iterate (L2-H1 plus a discrete dual norm of the
    /// time increments); approximate, diagnostic only.
    pub radius: f64,
    /// `||nu_k|| / (||y0|| + ||z0||)`, monitored for uniformity.
    pub empirical_c: f64,
    pub epsilon: f64,
    pub cg_iterations: usize,
}

/// Terminal norms of the control validated on the true dynamics.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub terminal_y_norm: f64,
    pub terminal_z_norm: f64,
    /// Relative L2(Q)^2 distance between the last frozen trajectory and the
    /// semilinear validation trajectory.
    pub reference_residual: Option<f64>,
}

impl ValidationReport {
    pub fn terminal_norm(&self) -> f64 {
        (self.terminal_y_norm.powi(2) + self.terminal_z_norm.powi(2)).sqrt()
    }
}

/// Outcome of the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FixedPointStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub control: ControlSignal,
    pub status: FixedPointStatus,
    /// Iteration convergence AND validation gate both satisfied.
    pub validated: bool,
    pub iterations: usize,
    pub history: Vec<IterateRecord>,
    pub validation: ValidationReport,
    /// Terminal norm of the last frozen-linear HUM run (the validation gate
    /// reference).
    pub linear_terminal_norm: f64,
    /// One constant per run: `max_k ||nu_k|| / (||y0|| + ||z0||)`.
    pub uniform_constant: f64,
    pub warnings: Vec<String>,
    /// Last Picard trajectory (the frozen-linear controlled solution).
    pub trajectory: StateTrajectory,
}

impl FixedPointResult {
    pub fn converged(&self) -> bool {
        self.status == FixedPointStatus::Converged
    }
}

/// One application of the fixed-point map: freeze at the candidate, solve the
/// penalized problem, return the controlled linear trajectory and HUM data.
pub fn apply_phi(
    problem: &SemilinearControlProblem,
    ybar: &Array2<f64>,
    zbar: &Array2<f64>,
    epsilon: f64,
    cg: &CgOptions,
    hypothesis: HypothesisPolicy,
) -> Result<(StateTrajectory, HumResult)> {
    let linear = problem.system.frozen_at(ybar, zbar)?;
    let mut penalized = PenalizedProblem::new(
        linear,
        problem.region.clone(),
        epsilon,
        problem.y0.clone(),
        problem.z0.clone(),
    )?;
    penalized.cg = *cg;
    penalized.hypothesis = hypothesis;
    let solver = HumSolver::new(&penalized)?;
    let result = solver.minimize(epsilon)?;
    let trajectory = solver.controlled_trajectory(&result.control)?;
    Ok((trajectory, result))
}

/// Validates a candidate control on the true semilinear dynamics.
pub fn verify_candidate(
    problem: &SemilinearControlProblem,
    control: &ControlSignal,
    reference: Option<&StateTrajectory>,
    opts: &SemilinearOptions,
) -> Result<ValidationReport> {
    let traj = solve_semilinear_forward(
        &problem.system,
        &Forcing::control(control),
        &problem.y0,
        &problem.z0,
        opts,
    )?;
    let reference_residual = match reference {
        Some(r) => {
            let denom = traj.l2q_norm().max(1e-300);
            Some(traj.l2q_distance(r)? / denom)
        }
        None => None,
    };
    Ok(ValidationReport {
        terminal_y_norm: traj.terminal_y_norm(),
        terminal_z_norm: traj.terminal_z_norm(),
        reference_residual,
    })
}

/// Runs the Picard iteration and validates the final control.
pub fn solve_semilinear_null_control(
    problem: &SemilinearControlProblem,
    config: &FixedPointConfig,
) -> Result<FixedPointResult> {
    config.epsilon.validate()?;
    let mut warnings = Vec::new();
    let data_norm = problem.data_norm();
    if data_norm >= config.delta_smallness {
        if config.allow_large_data {
            warnings.push(format!(
                "initial data norm {data_norm:.3e} exceeds the smallness gate {:.3e}",
                config.delta_smallness
            ));
        } else {
            return Err(Error::SmallnessGate { norm: data_norm, delta: config.delta_smallness });
        }
    }

    let grid = problem.system.grid;
    let tgrid = problem.system.tgrid;
    let mut current = match config.initial_iterate {
        InitialIterate::Zero => StateTrajectory::zeros(grid, tgrid),
        InitialIterate::UncontrolledSemilinear => solve_semilinear_forward(
            &problem.system,
            &Forcing::none(),
            &problem.y0,
            &problem.z0,
            &config.semilinear,
        )?,
    };

    let mut history: Vec<IterateRecord> = Vec::new();
    let mut status = FixedPointStatus::MaxIterations;
    let mut last_hum: Option<HumResult> = None;
    let mut iterations = 0;
    for k in 1..=config.max_outer_iterations {
        let epsilon = config.epsilon.at(k - 1);
        let (next, hum) =
            apply_phi(problem, &current.y, &current.z, epsilon, &config.cg, config.hypothesis)?;
        let distance = next.l2q_distance(&current)?;
        let rel_distance = distance / next.l2q_norm().max(1e-300);
        let radius = w_prime_norm(&next);
        history.push(IterateRecord {
            iterate: k,
            successive_distance: rel_distance,
            control_norm: hum.control_norm,
            radius,
            empirical_c: if data_norm > 0.0 { hum.control_norm / data_norm } else { 0.0 },
            epsilon,
            cg_iterations: hum.cg_iterations,
        });
        iterations = k;
        current = next;
        last_hum = Some(hum);
        if rel_distance <= config.outer_tolerance {
            status = FixedPointStatus::Converged;
            break;
        }
        if diverging(&history, config.divergence_window) {
            status = FixedPointStatus::Diverged;
            warnings.push(format!(
                "successive distances or radii increased for {} consecutive iterates",
                config.divergence_window
            ));
            break;
        }
    }

    let hum = last_hum.expect("at least one outer iteration");
    let control = hum.control.nu.clone();
    let validation =
        verify_candidate(problem, &control, Some(&current), &config.semilinear)?;
    let linear_terminal_norm = hum.terminal_norm_sq().sqrt();
    let validated = status == FixedPointStatus::Converged
        && validation.terminal_norm()
            <= config.validation_gate_factor * linear_terminal_norm + 1e-300;
    let uniform_constant =
        history.iter().map(|r| r.empirical_c).fold(0.0f64, f64::max);
    Ok(FixedPointResult {
        control,
        status,
        validated,
        iterations,
        history,
        validation,
        linear_terminal_norm,
        uniform_constant,
        warnings,
        trajectory: current,
    })
}

/// True when the last `window` successive distances (or radii) are each
/// strictly larger than their predecessor.
fn diverging(history: &[IterateRecord], window: usize) -> bool {
    if window == 0 || history.len() <= window {
        return false;
    }
    let tail = &history[history.len() - window - 1..];
    let distances_up = tail.windows(2).all(|w| w[1].successive_distance > w[0].successive_distance);
    let radii_up = tail.windows(2).all(|w| w[1].radius > w[0].radius);
    distances_up || radii_up
}

/// Diagnostic W'-type norm: `L2(0,T; H1_0)` plus a discrete `H^{-1}` norm of
/// the slab time increments (the dual norm is approximated through the
/// inverse Dirichlet Laplacian).
pub fn w_prime_norm(traj: &StateTrajectory) -> f64 {
    let grid = traj.grid();
    let tgrid = traj.time_grid();
    let h = grid.h();
    let dt = tgrid.dt();
    let n = grid.n_interior();
    let mut total = 0.0;
    for field in [&traj.y, &traj.z] {
        // L2-H1 part, trapezoid in time; gradient by forward differences with
        // the zero boundary rows included.
        for (m, row) in field.rows().into_iter().enumerate() {
            let w = if m == 0 || m == tgrid.n_steps() { 0.5 } else { 1.0 };
            let mut h1 = 0.0;
            let mut prev = 0.0;
            for i in 0..n {
                let v = row[i];
                h1 += v * v * h + (v - prev) * (v - prev) / h;
                prev = v;
            }
            h1 += prev * prev / h;
            total += w * dt * h1;
        }
        // Dual-norm part on the difference quotients.
        let sub = vec![-1.0 / (h * h); n - 1];
        let diag = vec![2.0 / (h * h); n];
        for m in 0..tgrid.n_steps() {
            let v: Vec<f64> =
                (0..n).map(|i| (field[[m + 1, i]] - field[[m, i]]) / dt).collect();
            if let Some(w) = solve_tridiagonal(&sub, &diag, &sub, &v) {
                total += dt * numerics::dot_space(&v, &w, h).max(0.0);
            }
        }
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(distance: f64, radius: f64) -> IterateRecord {
        IterateRecord {
            iterate: 0,
            successive_distance: distance,
            control_norm: 0.0,
            radius,
            empirical_c: 0.0,
            epsilon: 1e-6,
            cg_iterations: 0,
        }
    }

    #[test]
    fn divergence_detector_needs_strict_increases() {
        let shrinking: Vec<_> = (0..8).map(|k| record(1.0 / (k + 1) as f64, 1.0)).collect();
        assert!(!diverging(&shrinking, 5));
        let growing: Vec<_> = (0..8).map(|k| record(k as f64, 1.0)).collect();
        assert!(diverging(&growing, 5));
        // A single dip resets the window.
        let mut mixed: Vec<_> = (0..5).map(|k| record(k as f64, 1.0)).collect();
        mixed.push(record(0.5, 1.0));
        assert!(!diverging(&mixed, 5));
        // Radius growth alone also triggers.
        let radii: Vec<_> = (0..8).map(|k| record(0.1, k as f64)).collect();
        assert!(diverging(&radii, 5));
    }

    #[test]
    fn epsilon_schedule_lookup() {
        let fixed = EpsilonSchedule::Fixed(1e-6);
        assert_eq!(fixed.at(0), 1e-6);
        assert_eq!(fixed.at(99), 1e-6);
        let per = EpsilonSchedule::PerIterate(vec![1e-2, 1e-4]);
        assert_eq!(per.at(0), 1e-2);
        assert_eq!(per.at(1), 1e-4);
        assert_eq!(per.at(7), 1e-4);
        assert!(EpsilonSchedule::PerIterate(vec![]).validate().is_err());
        assert!(EpsilonSchedule::Fixed(-1.0).validate().is_err());
    }
}
