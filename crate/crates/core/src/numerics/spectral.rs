//! Fourier pseudo-spectral solvers on a periodic grid.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{check_finite, check_times, SolverError, SolverMeta, SolverMethod, TrajectoryRecord};
use crate::catalog::{Dynamics, EquationSpec, InitialCondition, ParameterSet, PdeKind};

/// Stabilizing diffusion moved from the explicit to the implicit side of the
/// Cahn-Hilliard split.
const CH_STABILIZATION: f64 = 2.0;
/// Fraction of spectral energy above two thirds of the Nyquist index that
/// raises an alias warning.
const ALIAS_THRESHOLD: f64 = 1e-6;

// Constants for the nondimensional Fokker-Planck problem.
const BOLTZMANN: f64 = 1.380649e-23;
const TEMPERATURE: f64 = 300.0;
const PARTICLE_RADIUS: f64 = 1e-7;
const POTENTIAL_DEPTH: f64 = 5e-21;
const POTENTIAL_PERIOD: f64 = 1e-7;

pub struct SpectralGrid {
    pub n: usize,
    pub length: f64,
    /// Wavenumbers with the Nyquist mode zeroed, for odd derivatives.
    k_odd: Vec<f64>,
    /// Wavenumbers including the Nyquist mode, for even derivatives.
    k_even: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize, length: f64) -> Self {
        assert!(n >= 4 && n % 2 == 0, "grid size must be even");
        let mut planner = FftPlanner::new();
        let base = 2.0 * PI / length;
        let k_even: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                base * m
            })
            .collect();
        let mut k_odd = k_even.clone();
        k_odd[n / 2] = 0.0;
        Self {
            n,
            length,
            k_odd,
            k_even,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut c);
        c
    }

    pub fn inverse(&self, c: &[Complex64]) -> Vec<f64> {
        let mut buf = c.to_vec();
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|z| z.re * s).collect()
    }

    /// Multiplier of the `order`-th derivative for mode `j`.
    fn symbol(&self, j: usize, order: u32) -> Complex64 {
        let k = if order % 2 == 1 { self.k_odd[j] } else { self.k_even[j] };
        Complex64::new(0.0, k).powu(order)
    }

    pub fn derivative(&self, u: &[f64], order: u32) -> Vec<f64> {
        let mut c = self.forward(u);
        for (j, z) in c.iter_mut().enumerate() {
            *z *= self.symbol(j, order);
        }
        self.inverse(&c)
    }

    /// Zeroes modes above two thirds of the Nyquist index.
    fn dealias(&self, c: &mut [Complex64]) {
        let cut = self.n / 3;
        for (j, z) in c.iter_mut().enumerate() {
            let m = if j <= self.n / 2 { j } else { self.n - j };
            if m > cut {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn k2(&self, j: usize) -> f64 {
        self.k_even[j] * self.k_even[j]
    }
}

/// `order`-th derivative of a periodic sample on `[0, length)`.
pub fn spectral_derivative(u: &[f64], length: f64, order: u32) -> Vec<f64> {
    SpectralGrid::new(u.len(), length).derivative(u, order)
}

/// Share of spectral energy (mean removed) in modes above two thirds of the
/// Nyquist index.
pub fn alias_fraction(u: &[f64]) -> f64 {
    let n = u.len();
    let grid = SpectralGrid::new(n, 1.0);
    let c = grid.forward(u);
    let (mut total, mut high) = (0.0, 0.0);
    for (j, z) in c.iter().enumerate().skip(1) {
        let e = z.norm_sqr();
        total += e;
        let m = if j <= n / 2 { j } else { n - j };
        if m > n / 3 {
            high += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

/// ETDRK4 coefficients for a diagonal linear operator.
struct Etdrk4 {
    h: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl Etdrk4 {
    /// Contour-integral evaluation of the phi functions (M points on a unit
    /// circle around each h L).
    fn new(l: &[Complex64], h: f64) -> Self {
        const M: usize = 64;
        let roots: Vec<Complex64> = (0..M)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.5) / M as f64))
            .collect();
        let n = l.len();
        let mut out = Self {
            h,
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for &lj in l {
            let hl = lj * h;
            out.e.push(hl.exp());
            out.e2.push((hl * 0.5).exp());
            let (mut q, mut f1, mut f2, mut f3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for r in &roots {
                let z = hl + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z * 0.5).exp() - 1.0) / z;
                f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                f2 += (2.0 + z + ez * (z - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            let s = h / M as f64;
            out.q.push(q * s);
            out.f1.push(f1 * s);
            out.f2.push(f2 * s);
            out.f3.push(f3 * s);
        }
        out
    }

    fn step<N>(&self, v: &mut [Complex64], mut nonlinear: N)
    where
        N: FnMut(&[Complex64]) -> Vec<Complex64>,
    {
        let nv = nonlinear(v);
        let a: Vec<Complex64> = (0..v.len()).map(|j| self.e2[j] * v[j] + self.q[j] * nv[j]).collect();
        let na = nonlinear(&a);
        let b: Vec<Complex64> = (0..v.len()).map(|j| self.e2[j] * v[j] + self.q[j] * na[j]).collect();
        let nb = nonlinear(&b);
        let c: Vec<Complex64> = (0..v.len())
            .map(|j| self.e2[j] * a[j] + self.q[j] * (nb[j] * 2.0 - nv[j]))
            .collect();
        let nc = nonlinear(&c);
        for j in 0..v.len() {
            v[j] = self.e[j] * v[j] + nv[j] * self.f1[j] + (na[j] + nb[j]) * 2.0 * self.f2[j] + nc[j] * self.f3[j];
        }
    }
}

fn param(spec: &EquationSpec, params: &ParameterSet, symbol: &str) -> Result<f64, SolverError> {
    params
        .get(symbol)
        .ok_or_else(|| SolverError::BadInput(format!("family {} needs parameter {symbol}", spec.index)))
}

/// Number of sub-steps of size at most `h_max` covering each output interval.
fn substeps(dt: f64, h_max: f64) -> usize {
    ((dt / h_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Integrates `u_t = L u + N(u)` with ETDRK4 in Fourier space.
fn run_etdrk4<N>(
    grid: &SpectralGrid,
    l: &[Complex64],
    u0: &[f64],
    times: &[f64],
    h_max: f64,
    mut nonlinear: N,
) -> Result<(Vec<f64>, f64, usize), SolverError>
where
    N: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let mut v = grid.forward(u0);
    let mut out = u0.to_vec();
    let mut coeffs: Option<Etdrk4> = None;
    let mut steps = 0;
    let mut h_used = h_max;
    for w in times.windows(2) {
        let k = substeps(w[1] - w[0], h_max);
        let h = (w[1] - w[0]) / k as f64;
        if coeffs.as_ref().map_or(true, |c| ((c.h - h) / h).abs() > 1e-9) {
            coeffs = Some(Etdrk4::new(l, h));
        }
        let c = coeffs.as_ref().unwrap();
        for _ in 0..k {
            c.step(&mut v, &mut nonlinear);
        }
        steps += k;
        h_used = h;
        let u = grid.inverse(&v);
        check_finite(&u, w[1])?;
        out.extend_from_slice(&u);
    }
    Ok((out, h_used, steps))
}

/// Classical RK4 for a method-of-lines system in physical space.
fn run_rk4<F>(y0: &[f64], times: &[f64], h_max: f64, keep: usize, mut f: F) -> Result<(Vec<f64>, f64, usize), SolverError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut out = y0[..keep].to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut steps = 0;
    let mut h_used = h_max;
    for w in times.windows(2) {
        let m = substeps(w[1] - w[0], h_max);
        let h = (w[1] - w[0]) / m as f64;
        for _ in 0..m {
            f(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            f(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            f(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            f(&tmp, &mut k4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        steps += m;
        h_used = h;
        check_finite(&y, w[1])?;
        out.extend_from_slice(&y[..keep]);
    }
    Ok((out, h_used, steps))
}

/// Closed-form evolution `u_hat(t) = g_k(t) u_hat(0)`.
fn run_exact<G>(grid: &SpectralGrid, u0: &[f64], times: &[f64], propagator: G) -> Vec<f64>
where
    G: Fn(usize, f64) -> Complex64,
{
    let c0 = grid.forward(u0);
    let mut out = u0.to_vec();
    for &t in &times[1..] {
        let c: Vec<Complex64> = c0.iter().enumerate().map(|(j, z)| z * propagator(j, t)).collect();
        out.extend_from_slice(&grid.inverse(&c));
    }
    out
}

/// Coefficients of the nondimensional Fokker-Planck problem
/// `u_t = d u_xx + c (sin(w x) u)_x` on `[0, 1]` for viscosity `eta`.
pub fn fokker_planck_coefficients(eta: f64, domain_length: f64, horizon: f64) -> (f64, f64, f64) {
    let kt = BOLTZMANN * TEMPERATURE;
    let diffusivity = kt / (6.0 * PI * eta * PARTICLE_RADIUS);
    let d = diffusivity * horizon / (domain_length * domain_length);
    let c = diffusivity * horizon * POTENTIAL_DEPTH / (kt * POTENTIAL_PERIOD * domain_length);
    let w = domain_length / POTENTIAL_PERIOD;
    (d, c, w)
}

/// Solves one PDE family on its periodic grid. `u0` holds grid values.
pub fn solve_pde_spectral(
    spec: &EquationSpec,
    params: &ParameterSet,
    u0: &[f64],
    times: &[f64],
) -> Result<TrajectoryRecord, SolverError> {
    let kind = match spec.dynamics {
        Dynamics::Pde(k) => k,
        _ => {
            return Err(SolverError::WrongSolver {
                family: spec.index,
                solver: "spectral",
            })
        }
    };
    check_times(times)?;
    let n = u0.len();
    if n < 4 || n % 2 == 1 {
        return Err(SolverError::BadInput(format!("grid of {n} points is not supported")));
    }
    check_finite(u0, 0.0)?;
    let grid = SpectralGrid::new(n, spec.domain_length);

    let (values, method, step, steps) = match kind {
        PdeKind::Heat => {
            let c = param(spec, params, "c")?;
            let v = run_exact(&grid, u0, times, |j, t| Complex64::new((-c * grid.k2(j) * t).exp(), 0.0));
            (v, SolverMethod::ExactFourier, 0.0, 0)
        }
        PdeKind::Advection => {
            let q = param(spec, params, "q")?;
            let v = run_exact(&grid, u0, times, |j, t| {
                if j == n / 2 {
                    Complex64::new((q * grid.k_even[j] * t).cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, -q * grid.k_even[j] * t)
                }
            });
            (v, SolverMethod::ExactFourier, 0.0, 0)
        }
        PdeKind::Wave => {
            // Zero initial velocity.
            let q = param(spec, params, "q")?;
            let v = run_exact(&grid, u0, times, |j, t| {
                Complex64::new((q.sqrt() * grid.k_even[j].abs() * t).cos(), 0.0)
            });
            (v, SolverMethod::ExactFourier, 0.0, 0)
        }
        PdeKind::KleinGordon => {
            let q1 = param(spec, params, "q_1")?;
            let q2 = param(spec, params, "q_2")?;
            let v = run_exact(&grid, u0, times, |j, t| {
                let omega = (q1 * q1 * grid.k2(j) + q2 * q2 * q1.powi(4)).sqrt();
                Complex64::new((omega * t).cos(), 0.0)
            });
            (v, SolverMethod::ExactFourier, 0.0, 0)
        }
        PdeKind::ReactionDiffusion(reaction) => {
            let q1 = param(spec, params, "q_1")?;
            let q2 = param(spec, params, "q_2")?;
            let l: Vec<Complex64> = (0..n).map(|j| Complex64::new(-q1 * grid.k2(j), 0.0)).collect();
            let (v, h, s) = run_etdrk4(&grid, &l, u0, times, 0.01, |c| {
                let u = grid.inverse(c);
                let r: Vec<f64> = u.iter().map(|&x| q2 * reaction.eval(x)).collect();
                grid.forward(&r)
            })?;
            (v, SolverMethod::Etdrk4Spectral, h, s)
        }
        PdeKind::Kdv => {
            let q = param(spec, params, "q")?;
            // u_t = -q^2 u_xxx - (u^2 / 2)_x
            let l: Vec<Complex64> = (0..n).map(|j| -grid.symbol(j, 3) * (q * q)).collect();
            let (v, h, s) = run_etdrk4(&grid, &l, u0, times, 1e-3, |c| {
                let u = grid.inverse(c);
                let sq: Vec<f64> = u.iter().map(|x| 0.5 * x * x).collect();
                let mut f = grid.forward(&sq);
                for (j, z) in f.iter_mut().enumerate() {
                    *z *= -grid.symbol(j, 1);
                }
                grid.dealias(&mut f);
                f
            })?;
            (v, SolverMethod::Etdrk4Spectral, h, s)
        }
        PdeKind::CahnHilliard => {
            let q = param(spec, params, "q")?;
            let s_ = CH_STABILIZATION;
            // u_t = -q^2 u_xxxx + S u_xx + (u^3 - u - S u)_xx
            let l: Vec<Complex64> = (0..n)
                .map(|j| Complex64::new(-q * q * grid.k2(j) * grid.k2(j) - s_ * grid.k2(j), 0.0))
                .collect();
            let (v, h, s) = run_etdrk4(&grid, &l, u0, times, 2e-5, |c| {
                let u = grid.inverse(c);
                let w: Vec<f64> = u.iter().map(|x| x * x * x - (1.0 + s_) * x).collect();
                let mut f = grid.forward(&w);
                for (j, z) in f.iter_mut().enumerate() {
                    *z *= -grid.k2(j);
                }
                grid.dealias(&mut f);
                f
            })?;
            (v, SolverMethod::Etdrk4Spectral, h, s)
        }
        PdeKind::SineGordon => {
            let q = param(spec, params, "q")?;
            let mut y0 = u0.to_vec();
            y0.extend(std::iter::repeat(0.0).take(n));
            let (v, h, s) = run_rk4(&y0, times, 2e-3, n, |y, dy| {
                let (u, vel) = y.split_at(n);
                let uxx = grid.derivative(u, 2);
                dy[..n].copy_from_slice(vel);
                for i in 0..n {
                    dy[n + i] = uxx[i] - q * u[i].sin();
                }
            })?;
            (v, SolverMethod::Rk4Spectral, h, s)
        }
        PdeKind::PorousMedium => {
            let m = param(spec, params, "m")?;
            if u0.iter().any(|&x| x < 0.0) {
                return Err(SolverError::BadInput("porous medium data must be non-negative".into()));
            }
            let umax = u0.iter().cloned().fold(0.0, f64::max);
            let kmax2 = grid.k2(n / 2);
            let dmax = (m * umax.powf(m - 1.0)).max(1e-12);
            // RK4 reaches 2.78 on the negative real axis; keep a margin.
            let h_max = 2.0 / (dmax * kmax2);
            let (v, h, s) = run_rk4(u0, times, h_max, n, |u, du| {
                let w: Vec<f64> = u.iter().map(|x| x.max(0.0).powf(m)).collect();
                du.copy_from_slice(&grid.derivative(&w, 2));
            })?;
            (v, SolverMethod::Rk4Spectral, h, s)
        }
        PdeKind::FokkerPlanck => {
            let eta = param(spec, params, "eta")?;
            let horizon = *times.last().unwrap();
            let (d, c, w) = fokker_planck_coefficients(eta, spec.domain_length, spec.time_horizon.max(horizon));
            let scale_t = spec.time_horizon.max(horizon);
            let nd_times: Vec<f64> = times.iter().map(|t| t / scale_t).collect();
            let dx = 1.0 / n as f64;
            // Drift coefficient sampled at cell faces x_{i+1/2}.
            let face: Vec<f64> = (0..n).map(|i| (w * (i as f64 + 0.5) * dx).sin()).collect();
            let h_max = (0.25 * dx * dx / d).min(0.5 * dx / c.abs().max(1e-12));
            let (v, h, s) = run_rk4(u0, &nd_times, h_max, n, |u, du| {
                // Flux F = -d u_x - c sin(w x) u, u_t = -F_x.
                let mut flux = vec![0.0; n];
                for i in 0..n {
                    let ip = (i + 1) % n;
                    flux[i] = -d * (u[ip] - u[i]) / dx - c * face[i] * 0.5 * (u[i] + u[ip]);
                }
                for i in 0..n {
                    let im = (i + n - 1) % n;
                    du[i] = -(flux[i] - flux[im]) / dx;
                }
            })?;
            (v, SolverMethod::ConservativeRk4, h * scale_t, s)
        }
    };

    let last = &values[values.len() - n..];
    let alias_warning = method != SolverMethod::ConservativeRk4 && alias_fraction(last) > ALIAS_THRESHOLD;
    Ok(TrajectoryRecord {
        family_index: spec.index,
        params: params.clone(),
        ic: InitialCondition::from_values(spec.ic_family, u0.to_vec()),
        times: times.to_vec(),
        width: n,
        values,
        solver_meta: SolverMeta {
            method,
            step,
            cfl: None,
            steps_taken: steps,
            alias_warning,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{get_equation, sample_initial_condition, spatial_grid};
    use crate::numerics::uniform_times;
    use crate::rng::stream;

    fn with(spec: &EquationSpec, v: &[f64]) -> ParameterSet {
        let mut p = spec.nominal_parameters();
        for (slot, x) in p.values.iter_mut().zip(v) {
            slot.1 = *x;
        }
        p
    }

    fn sine_ic(l: f64, k: f64) -> Vec<f64> {
        spatial_grid(l, 128).iter().map(|x| (k * PI * x).sin()).collect()
    }

    #[test]
    fn derivative_of_sine_is_exact() {
        let l = 2.0;
        let u = sine_ic(l, 3.0);
        let du = spectral_derivative(&u, l, 1);
        for (x, d) in spatial_grid(l, 128).iter().zip(&du) {
            assert!((d - 3.0 * PI * (3.0 * PI * x).cos()).abs() < 1e-10);
        }
        let d2 = spectral_derivative(&u, l, 2);
        for (x, d) in spatial_grid(l, 128).iter().zip(&d2) {
            assert!((d + 9.0 * PI * PI * (3.0 * PI * x).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        for order in 1..=4 {
            assert!(spectral_derivative(&[2.5; 128], 2.0, order).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        for index in [13, 15, 16, 17, 18, 19, 20, 22] {
            let spec = get_equation(index).unwrap();
            let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &[0.0; 128], &uniform_times(spec.time_horizon, 32)).unwrap();
            assert!(r.values.iter().all(|&v| v == 0.0), "family {index}");
        }
    }

    #[test]
    fn heat_respects_maximum_principle() {
        let spec = get_equation(13).unwrap();
        let ic = sample_initial_condition(spec, &mut stream(5, &[13]));
        let (lo, hi) = ic.values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &ic.values, &uniform_times(5.0, 32)).unwrap();
        assert!(r.values.iter().all(|&v| v >= lo - 1e-6 && v <= hi + 1e-6));
    }

    #[test]
    fn etdrk4_reaction_converges_with_step() {
        // Logistic growth of a constant state, closed form.
        let grid = SpectralGrid::new(8, 1.0);
        let l = vec![Complex64::new(0.0, 0.0); 8];
        let u0 = vec![0.3; 8];
        let f = |c: &[Complex64]| {
            let u = grid.inverse(c);
            grid.forward(&u.iter().map(|x| x * (1.0 - x)).collect::<Vec<_>>())
        };
        let times = [0.0, 2.0];
        let exact = 1.0 / (1.0 + (1.0 / 0.3 - 1.0) * (-2.0f64).exp());
        let e1 = (run_etdrk4(&grid, &l, &u0, &times, 0.2, f).unwrap().0[8] - exact).abs();
        let e2 = (run_etdrk4(&grid, &l, &u0, &times, 0.1, f).unwrap().0[8] - exact).abs();
        assert!(e1 < 1e-5 && e2 < e1 / 10.0, "{e1} {e2}");
    }

    #[test]
    fn heat_decays_single_mode() {
        let spec = get_equation(13).unwrap();
        let u0 = sine_ic(2.0, 1.0);
        let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &u0, &uniform_times(5.0, 32)).unwrap();
        let factor = (-0.003 * PI * PI * 5.0).exp();
        for (a, b) in r.last_frame().iter().zip(&u0) {
            assert!((a - factor * b).abs() < 1e-4);
        }
        assert!((factor - 0.86240).abs() < 1e-4);
    }

    #[test]
    fn advection_shifts_profile() {
        let spec = get_equation(19).unwrap();
        let u0 = sine_ic(2.0, 1.0);
        let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &u0, &uniform_times(5.0, 32)).unwrap();
        for (i, &t) in r.times.iter().enumerate() {
            for (x, v) in spatial_grid(2.0, 128).iter().zip(r.frame(i)) {
                assert!((v - (PI * (x - 0.5 * t)).sin()).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn wave_standing_mode() {
        let spec = get_equation(20).unwrap();
        let u0 = sine_ic(2.0, 2.0);
        let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &u0, &uniform_times(1.0, 32)).unwrap();
        let omega = 0.5f64.sqrt() * 2.0 * PI;
        for (a, b) in r.last_frame().iter().zip(&u0) {
            assert!((a - omega.cos() * b).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_reaction_diffusion_matches_exponential() {
        let spec = get_equation(22).unwrap();
        let p = with(spec, &[3e-3, 0.1]);
        let u0 = sine_ic(2.0, 1.0);
        let r = solve_pde_spectral(spec, &p, &u0, &uniform_times(5.0, 32)).unwrap();
        let factor = ((0.1 - 3e-3 * PI * PI) * 5.0).exp();
        for (a, b) in r.last_frame().iter().zip(&u0) {
            assert!((a - factor * b).abs() < 1e-8);
        }
    }

    #[test]
    fn logistic_constant_state_approaches_one() {
        let spec = get_equation(21).unwrap();
        let u0 = vec![0.5; 128];
        let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &u0, &uniform_times(5.0, 32)).unwrap();
        let exact = 1.0 / (1.0 + (-5.0f64).exp());
        for v in r.last_frame() {
            assert!((v - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn kdv_conserves_mass_and_stays_bounded() {
        let spec = get_equation(18).unwrap();
        let ic = sample_initial_condition(spec, &mut stream(3, &[18]));
        let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &ic.values, &uniform_times(1.0, 32)).unwrap();
        let m0: f64 = ic.values.iter().sum();
        let m1: f64 = r.last_frame().iter().sum();
        assert!((m0 - m1).abs() < 1e-9 * 128.0);
        assert!(r.last_frame().iter().all(|v| v.abs() < 3.0));
    }

    #[test]
    fn every_pde_family_solves_sampled_data() {
        for index in (13..=24).chain([34]) {
            let spec = get_equation(index).unwrap();
            let ic = sample_initial_condition(spec, &mut stream(11, &[index as u64]));
            let p = crate::catalog::with_porous_exponent(spec, spec.nominal_parameters(), 2);
            let r = solve_pde_spectral(spec, &p, &ic.values, &uniform_times(spec.time_horizon, 32))
                .unwrap_or_else(|e| panic!("family {index}: {e}"));
            assert_eq!(r.values.len(), 32 * 128);
            assert!(r.values.iter().all(|v| v.is_finite() && v.abs() < 10.0), "family {index}");
        }
    }

    #[test]
    fn fokker_planck_coefficients_are_moderate() {
        let (d, c, w) = fokker_planck_coefficients(1e-3, 2e-6, 0.1);
        assert!((d - 0.0549).abs() < 1e-3, "{d}");
        assert!((c - 1.326).abs() < 1e-2, "{c}");
        assert!((w - 20.0).abs() < 1e-12);
    }

    #[test]
    fn fokker_planck_conserves_mass() {
        let spec = get_equation(34).unwrap();
        let ic = sample_initial_condition(spec, &mut stream(2, &[34]));
        let r = solve_pde_spectral(spec, &spec.nominal_parameters(), &ic.values, &uniform_times(0.1, 32)).unwrap();
        let m0: f64 = ic.values.iter().sum();
        let m1: f64 = r.last_frame().iter().sum();
        assert!((m0 - m1).abs() < 1e-10 * m0);
        assert!(r.last_frame().iter().all(|&v| v > -1e-9));
    }

    #[test]
    fn alias_fraction_flags_steps() {
        let smooth = sine_ic(2.0, 1.0);
        assert!(alias_fraction(&smooth) < 1e-20);
        let step: Vec<f64> = (0..128).map(|i| if i < 64 { 1.0 } else { 0.0 }).collect();
        assert!(alias_fraction(&step) > 1e-3);
    }
}
