//! Dormand-Prince 5(4) with Hairer's continuous extension, plus a fixed-step
//! RK4 reference integrator.

use super::{check_finite, check_times, SolverError, SolverMeta, SolverMethod, TrajectoryRecord};
use crate::catalog::{Dynamics, EquationSpec, InitialCondition, OdeKind, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeTolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

/// Right-hand side of an ODE family.
pub fn ode_rhs(kind: OdeKind, p: &[f64], t: f64, y: &[f64], dy: &mut [f64]) {
    use std::f64::consts::PI;
    use OdeKind::*;
    match kind {
        PeriodicGrowth => dy[0] = p[0] * (2.0 * PI * t).sin() * y[0],
        DecayingForcing => dy[0] = p[0] * (-t).exp() + p[1],
        QuadraticCosine => dy[0] = p[0] * t * t * y[0].cos() + p[1] * y[0],
        DampedSineForcing => dy[0] = p[0] * ((-0.5 * t).exp() * (3.0 * t).sin()).sin() + p[1] * y[0],
        LinearSine => dy[0] = p[0] * t * y[0].sin(),
        Sir => {
            let (beta, gamma) = (p[0], p[1]);
            let infection = beta * y[0] * y[1];
            dy[0] = -infection;
            dy[1] = infection - gamma * y[1];
            dy[2] = gamma * y[1];
        }
        NeuralDynamics => {
            let (alpha, beta, gamma, delta) = (p[0], p[1], p[2], p[3]);
            let (e, i, h) = (y[0], y[1], y[2]);
            dy[0] = alpha * e - beta * e * i - gamma * e + 0.01 * t.sin();
            dy[1] = delta * e - 0.2 * i;
            dy[2] = 0.3 * i - 0.1 * h;
        }
        VanDerPol => {
            dy[0] = y[1];
            dy[1] = p[0] * (1.0 - y[0] * y[0]) * y[1] - y[0];
        }
        LotkaVolterra => {
            let (alpha, beta, gamma, delta) = (p[0], p[1], p[2], p[3]);
            dy[0] = alpha * y[0] - beta * y[0] * y[1];
            dy[1] = delta * y[0] * y[1] - gamma * y[1];
        }
        FitzHughNagumo => {
            let (current, a, b, tau) = (p[0], p[1], p[2], p[3]);
            dy[0] = y[0] - y[0].powi(3) / 3.0 - y[1] + current;
            dy[1] = (y[0] + a - b * y[1]) / tau;
        }
        Brusselator => {
            let (a, b) = (p[0], p[1]);
            let x2y = y[0] * y[0] * y[1];
            dy[0] = a + x2y - (b + 1.0) * y[0];
            dy[1] = b * y[0] - x2y;
        }
        Duffing => {
            let (alpha, beta, delta) = (p[0], p[1], p[2]);
            dy[0] = y[1];
            dy[1] = -delta * y[1] - alpha * y[0] - beta * y[0].powi(3);
        }
    }
}

fn ode_kind(spec: &EquationSpec) -> Result<OdeKind, SolverError> {
    match spec.dynamics {
        Dynamics::Ode(k) => Ok(k),
        _ => Err(SolverError::WrongSolver {
            family: spec.index,
            solver: "ODE",
        }),
    }
}

// Dormand-Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Adaptive Dormand-Prince integration of `f` with dense output at `times`.
/// Returns the row-major samples and the number of accepted steps.
pub fn dopri5<F>(
    mut f: F,
    y0: &[f64],
    times: &[f64],
    tol: OdeTolerance,
) -> Result<(Vec<f64>, usize), SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    check_times(times)?;
    let n = y0.len();
    let t_end = *times.last().unwrap();
    let mut out = Vec::with_capacity(times.len() * n);
    out.extend_from_slice(y0);
    let mut next_out = 1;

    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    f(t, &y, &mut k1);

    let mut h = initial_step(&y, &k1, t_end, tol);
    let mut accepted = 0;
    let h_min = 1e-14 * t_end.max(1.0);

    while next_out < times.len() {
        if h < h_min {
            return Err(SolverError::StiffnessFailure { t });
        }
        h = h.min(t_end - t);
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &tmp, &mut k6);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &y1, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            if y1.iter().any(|v| !v.is_finite()) && h <= h_min * 10.0 {
                return Err(SolverError::NonFinite { t });
            }
            h *= 0.2;
            continue;
        }

        if err <= 1.0 {
            let t_new = t + h;
            // Dense output for every requested time inside (t, t_new].
            while next_out < times.len() && times[next_out] <= t_new + 1e-12 * t_end {
                let theta = ((times[next_out] - t) / h).clamp(0.0, 1.0);
                let theta1 = 1.0 - theta;
                for i in 0..n {
                    let r2 = y1[i] - y[i];
                    let r3 = h * k1[i] - r2;
                    let r4 = r2 - h * k7[i] - r3;
                    let r5 = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    out.push(y[i] + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5))));
                }
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;
            check_finite(&y, t)?;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok((out, accepted))
}

fn initial_step(y: &[f64], f0: &[f64], t_end: f64, tol: OdeTolerance) -> f64 {
    let n = y.len() as f64;
    let d0 = (y.iter().map(|v| (v / (tol.atol + tol.rtol * v.abs())).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y
        .iter()
        .zip(f0)
        .map(|(v, d)| (d / (tol.atol + tol.rtol * v.abs())).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(t_end * 0.1).max(1e-10)
}

/// Classical RK4 with fixed step `dt`; every output time must be a multiple of `dt`.
pub fn rk4_fixed<F>(mut f: F, y0: &[f64], times: &[f64], dt: f64) -> Result<Vec<f64>, SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    check_times(times)?;
    let n = y0.len();
    let mut out = y0.to_vec();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for w in times.windows(2) {
        let steps = ((w[1] - w[0]) / dt).round().max(1.0) as usize;
        let h = (w[1] - w[0]) / steps as f64;
        for _ in 0..steps {
            f(t, &y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            f(t + 0.5 * h, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            f(t + 0.5 * h, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            f(t + h, &tmp, &mut k4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        t = w[1];
        check_finite(&y, t)?;
        out.extend_from_slice(&y);
    }
    Ok(out)
}

pub fn integrate_ode(
    spec: &EquationSpec,
    params: &ParameterSet,
    ic: &InitialCondition,
    times: &[f64],
    tol: OdeTolerance,
) -> Result<TrajectoryRecord, SolverError> {
    let kind = ode_kind(spec)?;
    if ic.values.len() != spec.state_dim {
        return Err(SolverError::BadInput(format!(
            "state has {} entries, expected {}",
            ic.values.len(),
            spec.state_dim
        )));
    }
    let p = params.raw();
    let (values, steps) = dopri5(|t, y, dy| ode_rhs(kind, &p, t, y, dy), &ic.values, times, tol)?;
    Ok(TrajectoryRecord {
        family_index: spec.index,
        params: params.clone(),
        ic: ic.clone(),
        times: times.to_vec(),
        width: spec.state_dim,
        values,
        solver_meta: SolverMeta {
            method: SolverMethod::Dopri5,
            step: tol.rtol,
            cfl: None,
            steps_taken: steps,
            alias_warning: false,
        },
    })
}

pub fn integrate_ode_fixed_rk4(
    spec: &EquationSpec,
    params: &ParameterSet,
    ic: &InitialCondition,
    times: &[f64],
    dt: f64,
) -> Result<TrajectoryRecord, SolverError> {
    let kind = ode_kind(spec)?;
    let p = params.raw();
    let values = rk4_fixed(|t, y, dy| ode_rhs(kind, &p, t, y, dy), &ic.values, times, dt)?;
    let steps = (times.last().unwrap() / dt).round() as usize;
    Ok(TrajectoryRecord {
        family_index: spec.index,
        params: params.clone(),
        ic: ic.clone(),
        times: times.to_vec(),
        width: spec.state_dim,
        values,
        solver_meta: SolverMeta {
            method: SolverMethod::Rk4Fixed,
            step: dt,
            cfl: None,
            steps_taken: steps,
            alias_warning: false,
        },
    })
}
