//! Ground-truth solvers.
//!
//! * ODE families: embedded Dormand-Prince 5(4) with dense output.
//! * Periodic PDE families: Fourier pseudo-spectral method of lines, ETDRK4 for
//!   stiff semilinear problems and classical RK4 for the rest.
//! * Conservation laws: MUSCL / local Lax-Friedrichs finite volumes with SSP-RK2.

pub mod fv;
pub mod ode;
pub mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Dynamics, EquationSpec, InitialCondition, ParameterSet};

pub use fv::{evolve_conservation, solve_conservation_fv, FvSettings};
pub use ode::{integrate_ode, integrate_ode_fixed_rk4, OdeTolerance};
pub use spectral::{alias_fraction, solve_pde_spectral, spectral_derivative, SpectralGrid};

/// Number of stored frames per trajectory.
pub const SNAPSHOTS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("step size underflow at t = {t}")]
    StiffnessFailure { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("time step underflow at t = {t}")]
    CflViolation { t: f64 },
    #[error("family {family} is not handled by the {solver} solver")]
    WrongSolver { family: usize, solver: &'static str },
    #[error("bad input: {0}")]
    BadInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMethod {
    Dopri5,
    Rk4Fixed,
    /// Closed-form Fourier propagator for linear constant-coefficient problems.
    ExactFourier,
    Etdrk4Spectral,
    Rk4Spectral,
    MusclLlfSspRk2,
    /// Flux-form central differences with RK4.
    ConservativeRk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub method: SolverMethod,
    /// Fixed step, or the relative tolerance for adaptive integration.
    pub step: f64,
    pub cfl: Option<f64>,
    pub steps_taken: usize,
    /// Set when the top third of the final spectrum carries more than 1e-6 of
    /// the energy.
    pub alias_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub family_index: usize,
    pub params: ParameterSet,
    pub ic: InitialCondition,
    pub times: Vec<f64>,
    /// Values per frame: state dimension for ODEs, grid size for PDEs.
    pub width: usize,
    /// Row-major `[times.len() x width]`.
    pub values: Vec<f64>,
    pub solver_meta: SolverMeta,
}

impl TrajectoryRecord {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn last_frame(&self) -> &[f64] {
        self.frame(self.times.len() - 1)
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.width)
    }
}

/// `n` uniform frames on `[0, horizon]`, both ends included.
pub fn uniform_times(horizon: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
}

/// Solves one sample with the solver appropriate for its family on the
/// standard snapshot grid.
pub fn solve(
    spec: &EquationSpec,
    params: &ParameterSet,
    ic: &InitialCondition,
) -> Result<TrajectoryRecord, SolverError> {
    let times = uniform_times(spec.time_horizon, SNAPSHOTS);
    solve_at(spec, params, ic, &times)
}

pub fn solve_at(
    spec: &EquationSpec,
    params: &ParameterSet,
    ic: &InitialCondition,
    times: &[f64],
) -> Result<TrajectoryRecord, SolverError> {
    match spec.dynamics {
        Dynamics::Ode(_) => integrate_ode(spec, params, ic, times, OdeTolerance::default()),
        Dynamics::Pde(_) => solve_pde_spectral(spec, params, &ic.values, times).map(|mut r| {
            r.ic = ic.clone();
            r
        }),
        Dynamics::Conservation { .. } => solve_conservation_fv(spec, params, &ic.values, times).map(|mut r| {
            r.ic = ic.clone();
            r
        }),
    }
}

pub(crate) fn check_finite(values: &[f64], t: f64) -> Result<(), SolverError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::NonFinite { t })
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<(), SolverError> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(SolverError::BadInput("output times must start at 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::BadInput("output times must increase strictly".into()));
    }
    Ok(())
}
