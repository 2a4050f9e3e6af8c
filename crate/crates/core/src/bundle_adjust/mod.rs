//! Levenberg-Marquardt bundle adjustment over camera poses and track points.
//!
//! The objective is the plain sum of squared reprojection errors; there is no
//! robust loss, so gross outliers pull the solution until a human removes them.
//! The first camera can be held fixed to remove the rigid gauge freedom;
//! scale stays free and is left to damping. Accuracy against ground truth is
//! therefore measured through [`align_similarity`].

mod align;
mod problem;
mod schur;

pub use align::{align_similarity, Similarity};
pub use problem::{BundleProblem, BundleState, Jacobian, JacobianBlock, Step};
pub use schur::solve_normal_equations;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::dataset::Dataset;
use crate::geometry::{residual_records, GeometryError, Pose, ResidualKind, ResidualRecord};

/// Damping above which a singular system is reported as a numerical failure.
pub const MAX_LAMBDA: f64 = 1e12;

/// Mean squared residual (px²) treated as exactly zero: a residual of 1e-9 px is
/// below what double-precision projection can resolve, so the gradient there is
/// rounding noise. Reported as gradient convergence.
pub const COST_FLOOR_PER_OBSERVATION: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaError {
    #[error("normal equations unsolvable even at maximum damping: {0}")]
    NumericalFailure(String),
    #[error("problem has no observations")]
    EmptyProblem,
    #[error("reduced camera system is not positive definite")]
    SingularSystem,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("bundle adjustment was cancelled")]
    Cancelled,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T, E = BaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BAConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub gradient_tol: f64,
    pub relative_cost_tol: f64,
    pub fix_first_camera: bool,
}

impl Default for BAConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            gradient_tol: 1e-10,
            relative_cost_tol: 1e-12,
            fix_first_camera: true,
        }
    }
}

impl BAConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BaError::InvalidConfig(m));
        if !(self.lambda_up > 1.0 && self.lambda_down > 1.0) {
            return bad("lambda_up and lambda_down must be > 1".into());
        }
        if !(self.gradient_tol > 0.0 && self.relative_cost_tol > 0.0) {
            return bad("tolerances must be > 0".into());
        }
        if !(self.initial_lambda > 0.0 && self.initial_lambda.is_finite()) {
            return bad(format!(
                "initial_lambda must be finite and > 0, got {}",
                self.initial_lambda
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Gradient,
    RelativeCost,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BAResult {
    /// One per camera, in dataset order.
    pub poses_final: Vec<Pose>,
    /// One per track, in dataset order.
    pub points_final: Vec<Vector3<f64>>,
    /// Total reprojection error before the first iteration and after every accepted step.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub termination_reason: TerminationReason,
    pub iterations: usize,
    pub residuals_initial: Vec<ResidualRecord>,
    pub residuals_final: Vec<ResidualRecord>,
}

impl BAResult {
    pub fn initial_cost(&self) -> f64 {
        self.cost_trace[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("cost trace is never empty")
    }

    /// Root-mean-square final residual length.
    pub fn final_rms(&self) -> f64 {
        rms(&self.residuals_final)
    }

    pub fn initial_rms(&self) -> f64 {
        rms(&self.residuals_initial)
    }

    /// Copy of `dataset` carrying this result as its final state.
    pub fn apply_to(&self, dataset: &Dataset) -> Dataset {
        let mut out = dataset.clone();
        for (c, p) in out.cameras.iter_mut().zip(&self.poses_final) {
            c.pose_final = Some(*p);
        }
        for (t, p) in out.tracks.iter_mut().zip(&self.points_final) {
            t.point_final = Some(*p);
        }
        out
    }
}

/// Root-mean-square of residual lengths (0 for an empty slice).
pub fn rms(residuals: &[ResidualRecord]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r.length * r.length).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Snapshot passed to progress observers after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
}

pub fn run_ba(dataset: &Dataset, config: &BAConfig) -> Result<BAResult> {
    run_ba_with_progress(dataset, config, |_| true)
}

/// Like [`run_ba`], reporting progress after every iteration. Returning
/// `false` from `observer` cancels the run with [`BaError::Cancelled`].
pub fn run_ba_with_progress(
    dataset: &Dataset,
    config: &BAConfig,
    mut observer: impl FnMut(&Progress) -> bool,
) -> Result<BAResult> {
    config.validate()?;
    let problem = BundleProblem::new(dataset, config.fix_first_camera)?;
    let mut state = BundleProblem::initial_state(dataset);
    let mut residuals = problem.residuals(&state)?;
    let mut cost: f64 = residuals.iter().map(|r| r.norm_squared()).sum();
    let mut cost_trace = vec![cost];
    let mut lambda = config.initial_lambda;
    let mut termination = TerminationReason::MaxIterations;
    let mut iterations = 0;
    let cost_floor = COST_FLOOR_PER_OBSERVATION * problem.n_observations() as f64;

    if !observer(&Progress {
        iteration: 0,
        cost,
        lambda,
    }) {
        return Err(BaError::Cancelled);
    }

    'outer: while iterations < config.max_iterations {
        iterations += 1;
        let jac = problem.jacobian(&state)?;
        let normal = schur::NormalEquations::build(&jac, &residuals);
        if normal.gradient_max() <= config.gradient_tol || cost <= cost_floor {
            termination = TerminationReason::Gradient;
            break;
        }
        let mut solved_once = false;
        loop {
            match normal.solve(lambda) {
                Ok(step) => {
                    solved_once = true;
                    let candidate = problem.apply_step(&state, &step);
                    // a step that moves a point behind a camera is simply rejected
                    if let Ok(r) = problem.residuals(&candidate) {
                        let new_cost: f64 = r.iter().map(|v| v.norm_squared()).sum();
                        if new_cost < cost {
                            let relative = (cost - new_cost) / cost;
                            state = candidate;
                            residuals = r;
                            cost = new_cost;
                            cost_trace.push(cost);
                            lambda = (lambda / config.lambda_down).max(1e-15);
                            debug!(iterations, cost, lambda, "accepted LM step");
                            if !observer(&Progress {
                                iteration: iterations,
                                cost,
                                lambda,
                            }) {
                                return Err(BaError::Cancelled);
                            }
                            if relative < config.relative_cost_tol {
                                termination = TerminationReason::RelativeCost;
                                break 'outer;
                            }
                            continue 'outer;
                        }
                    }
                }
                Err(BaError::SingularSystem) => {}
                Err(e) => return Err(e),
            }
            lambda *= config.lambda_up;
            if lambda > MAX_LAMBDA {
                if !solved_once {
                    return Err(BaError::NumericalFailure(format!(
                        "no damping up to {MAX_LAMBDA:e} gave a positive definite system"
                    )));
                }
                // no descent direction left at any damping: a (local) minimum
                termination = TerminationReason::RelativeCost;
                break 'outer;
            }
        }
    }

    let converged = termination != TerminationReason::MaxIterations;
    let result_dataset = {
        let mut d = dataset.clone();
        for (c, p) in d.cameras.iter_mut().zip(&state.poses) {
            c.pose_final = Some(*p);
        }
        for (t, p) in d.tracks.iter_mut().zip(&state.points) {
            t.point_final = Some(*p);
        }
        d
    };
    let residuals_initial =
        residual_records(&dataset.cameras, &dataset.tracks, ResidualKind::Initial)?;
    let residuals_final = residual_records(
        &result_dataset.cameras,
        &result_dataset.tracks,
        ResidualKind::Final,
    )?;
    Ok(BAResult {
        poses_final: state.poses,
        points_final: state.points,
        cost_trace,
        converged,
        termination_reason: termination,
        iterations,
        residuals_initial,
        residuals_final,
    })
}
