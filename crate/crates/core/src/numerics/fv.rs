//! Finite-volume solver for `u_t + a f(u)_x = nu u_xx` on a periodic grid.
//!
//! Advection uses MUSCL reconstruction with the monotonized-central limiter,
//! local Lax-Friedrichs fluxes and SSP-RK2. Diffusion is Strang-split and
//! applied exactly for the three-point Laplacian in Fourier space.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::spectral::SpectralGrid;
use super::{check_finite, check_times, SolverError, SolverMeta, SolverMethod, TrajectoryRecord};
use crate::catalog::{Dynamics, EquationSpec, FluxForm, InitialCondition, ParameterSet, Viscosity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvSettings {
    pub cfl: f64,
    /// Upper bound on a step as a fraction of the output interval.
    pub max_step_fraction: f64,
}

impl Default for FvSettings {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            max_step_fraction: 1.0 / 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvOutput {
    pub values: Vec<f64>,
    pub steps: usize,
    /// Largest Courant number actually used.
    pub max_cfl: f64,
}

fn mc_limiter(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else {
        let s = a.signum();
        s * (2.0 * a.abs()).min(2.0 * b.abs()).min(0.5 * (a + b).abs())
    }
}

struct Hyperbolic {
    flux: FluxForm,
    a: f64,
    dx: f64,
    slope: Vec<f64>,
    face: Vec<f64>,
}

impl Hyperbolic {
    /// Writes `-(F_{i+1/2} - F_{i-1/2}) / dx` into `du`.
    fn rhs(&mut self, u: &[f64], du: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            let l = u[(i + n - 1) % n];
            let r = u[(i + 1) % n];
            self.slope[i] = mc_limiter(u[i] - l, r - u[i]);
        }
        for i in 0..n {
            let ip = (i + 1) % n;
            let ul = u[i] + 0.5 * self.slope[i];
            let ur = u[ip] - 0.5 * self.slope[ip];
            let alpha = (self.a * self.flux.speed(ul)).abs().max((self.a * self.flux.speed(ur)).abs());
            self.face[i] = 0.5 * self.a * (self.flux.flux(ul) + self.flux.flux(ur)) - 0.5 * alpha * (ur - ul);
        }
        for i in 0..n {
            du[i] = -(self.face[i] - self.face[(i + n - 1) % n]) / self.dx;
        }
    }

    fn max_speed(&self, u: &[f64]) -> f64 {
        u.iter().map(|&v| (self.a * self.flux.speed(v)).abs()).fold(0.0, f64::max)
    }
}

/// Exact solution operator of `u_t = nu D2 u` with the periodic three-point
/// Laplacian `D2`.
fn diffuse(grid: &SpectralGrid, u: &mut [f64], nu: f64, dt: f64, dx: f64) {
    if nu == 0.0 {
        return;
    }
    let n = u.len();
    let mut c = grid.forward(u);
    for (j, z) in c.iter_mut().enumerate() {
        let m = if j <= n / 2 { j } else { n - j } as f64;
        let s = (PI * m / n as f64).sin();
        let lambda = 4.0 * s * s / (dx * dx);
        *z *= Complex64::new((-nu * lambda * dt).exp(), 0.0);
    }
    let out = grid.inverse(&c);
    u.copy_from_slice(&out);
}

/// Evolves cell averages `u0` of width `dx` through the output `times`.
pub fn evolve_conservation(
    u0: &[f64],
    dx: f64,
    flux: FluxForm,
    a: f64,
    nu: f64,
    times: &[f64],
    settings: FvSettings,
) -> Result<FvOutput, SolverError> {
    check_times(times)?;
    check_finite(u0, 0.0)?;
    let n = u0.len();
    if n < 4 || n % 2 == 1 {
        return Err(SolverError::BadInput(format!("grid of {n} points is not supported")));
    }
    let grid = SpectralGrid::new(n, n as f64 * dx);
    let mut hyp = Hyperbolic {
        flux,
        a,
        dx,
        slope: vec![0.0; n],
        face: vec![0.0; n],
    };
    let mut u = u0.to_vec();
    let mut u1 = vec![0.0; n];
    let mut k = vec![0.0; n];
    let mut values = u0.to_vec();
    let mut t = 0.0;
    let mut steps = 0;
    let mut max_cfl: f64 = 0.0;

    for w in times.windows(2) {
        let target = w[1];
        let cap = (w[1] - w[0]) * settings.max_step_fraction;
        while t < target {
            let speed = hyp.max_speed(&u);
            let mut dt = if speed > 0.0 { settings.cfl * dx / speed } else { cap };
            dt = dt.min(cap);
            if target - t <= dt * (1.0 + 1e-9) {
                dt = target - t;
            }
            if dt < 1e-14 * target.max(1.0) {
                return Err(SolverError::CflViolation { t });
            }
            max_cfl = max_cfl.max(speed * dt / dx);

            diffuse(&grid, &mut u, nu, 0.5 * dt, dx);
            hyp.rhs(&u, &mut k);
            for i in 0..n {
                u1[i] = u[i] + dt * k[i];
            }
            hyp.rhs(&u1, &mut k);
            for i in 0..n {
                u[i] = 0.5 * u[i] + 0.5 * (u1[i] + dt * k[i]);
            }
            diffuse(&grid, &mut u, nu, 0.5 * dt, dx);

            t = if dt == target - t { target } else { t + dt };
            steps += 1;
        }
        check_finite(&u, target)?;
        values.extend_from_slice(&u);
    }
    Ok(FvOutput {
        values,
        steps,
        max_cfl,
    })
}

/// Advection speed `a` and viscosity `nu` of a conservation-law family.
pub fn law_coefficients(spec: &EquationSpec, params: &ParameterSet) -> Result<(FluxForm, f64, f64), SolverError> {
    let missing = |s: &str| SolverError::BadInput(format!("family {} needs parameter {s}", spec.index));
    match spec.dynamics {
        Dynamics::Conservation { flux, viscosity } => {
            let (a, nu) = match viscosity {
                Viscosity::ScaledByPi => (
                    params.get("q_1").ok_or_else(|| missing("q_1"))?,
                    params.get("q_2").ok_or_else(|| missing("q_2"))? / PI,
                ),
                Viscosity::Unit => (params.get("k").ok_or_else(|| missing("k"))?, 1.0),
                Viscosity::None => (params.get("k").ok_or_else(|| missing("k"))?, 0.0),
            };
            Ok((flux, a, nu))
        }
        _ => Err(SolverError::WrongSolver {
            family: spec.index,
            solver: "finite-volume",
        }),
    }
}

pub fn solve_conservation_fv(
    spec: &EquationSpec,
    params: &ParameterSet,
    u0: &[f64],
    times: &[f64],
) -> Result<TrajectoryRecord, SolverError> {
    let (flux, a, nu) = law_coefficients(spec, params)?;
    let dx = spec.domain_length / u0.len() as f64;
    let settings = FvSettings::default();
    let out = evolve_conservation(u0, dx, flux, a, nu, times, settings)?;
    Ok(TrajectoryRecord {
        family_index: spec.index,
        params: params.clone(),
        ic: InitialCondition::from_values(spec.ic_family, u0.to_vec()),
        times: times.to_vec(),
        width: u0.len(),
        values: out.values,
        solver_meta: SolverMeta {
            method: SolverMethod::MusclLlfSspRk2,
            step: settings.cfl,
            cfl: Some(out.max_cfl),
            steps_taken: out.steps,
            alias_warning: false,
        },
    })
}
