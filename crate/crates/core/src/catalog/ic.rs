//! Initial-condition generators.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EquationSpec, FluxForm, IcFamily, IcGenerator, GRID_POINTS};
use crate::rng::RandomStream;

/// Sine-mixture amplitudes are drawn from `[-MODE_AMPLITUDE, MODE_AMPLITUDE]`.
pub const MODE_AMPLITUDE: f64 = 0.5;
pub const SINE_MODES: usize = 3;
/// Step states are drawn from `[0, STEP_STATE_MAX]`.
pub const STEP_STATE_MAX: f64 = 1.5;
pub const MIN_STEP_JUMP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOrientation {
    /// Characteristics converge on the jump: a shock forms.
    Compressive,
    /// Characteristics diverge from the jump: a rarefaction fan forms.
    Expansive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub kind: IcFamily,
    /// State vector (ODEs) or grid values (PDEs).
    pub values: Vec<f64>,
    /// Generator parameters: amplitudes then phases for sine mixtures,
    /// `[u_left, u_right, x_jump]` for steps, `[height, center, width]` for bumps.
    pub descriptor: Vec<f64>,
}

impl InitialCondition {
    /// Wraps an arbitrary state (for example a predicted final frame).
    pub fn from_values(kind: IcFamily, values: Vec<f64>) -> Self {
        Self {
            kind,
            values,
            descriptor: Vec::new(),
        }
    }
}

/// Periodic grid `x_j = j L / N`, endpoint excluded.
pub fn spatial_grid(domain_length: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 * domain_length / n as f64).collect()
}

/// Whether a jump from `left` to `right` has the requested orientation under
/// `flux`, judged by characteristic speeds against the Rankine-Hugoniot speed.
pub fn step_has_orientation(flux: FluxForm, orientation: StepOrientation, left: f64, right: f64) -> bool {
    if left == right {
        return false;
    }
    if flux == FluxForm::Linear {
        // Contact discontinuity: all speeds coincide, so orientation is the jump sign.
        return match orientation {
            StepOrientation::Compressive => left > right,
            StepOrientation::Expansive => left < right,
        };
    }
    let s = (flux.flux(right) - flux.flux(left)) / (right - left);
    let (al, ar) = (flux.speed(left), flux.speed(right));
    match orientation {
        StepOrientation::Compressive => al > s && s > ar,
        StepOrientation::Expansive => al < ar,
    }
}

pub fn sample_initial_condition(spec: &EquationSpec, rng: &mut RandomStream) -> InitialCondition {
    match &spec.ic {
        IcGenerator::UniformState { lo, hi } => {
            let values = lo.iter().zip(hi).map(|(&a, &b)| rng.gen_range(a..=b)).collect();
            InitialCondition {
                kind: IcFamily::UniformState,
                values,
                descriptor: Vec::new(),
            }
        }
        IcGenerator::SineMixture { offset, scale } => {
            let amps: Vec<f64> = (0..SINE_MODES)
                .map(|_| rng.gen_range(-MODE_AMPLITUDE..=MODE_AMPLITUDE))
                .collect();
            let phases: Vec<f64> = (0..SINE_MODES).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let l = spec.domain_length;
            let values = spatial_grid(l, GRID_POINTS)
                .into_iter()
                .map(|x| {
                    let s: f64 = amps
                        .iter()
                        .zip(&phases)
                        .enumerate()
                        .map(|(k, (a, p))| a * (2.0 * PI * (k + 1) as f64 * x / l + p).sin())
                        .sum();
                    offset + scale * s
                })
                .collect();
            let mut descriptor = amps;
            descriptor.extend(phases);
            InitialCondition {
                kind: IcFamily::SineMixture,
                values,
                descriptor,
            }
        }
        IcGenerator::StepFunction { orientation } => {
            let flux = spec.flux_form.expect("step data only for conservation laws");
            let (left, right) = loop {
                let a = rng.gen_range(0.0..=STEP_STATE_MAX);
                let b = rng.gen_range(0.0..=STEP_STATE_MAX);
                if (a - b).abs() >= MIN_STEP_JUMP && step_has_orientation(flux, *orientation, a, b) {
                    break (a, b);
                }
            };
            let l = spec.domain_length;
            let jump = rng.gen_range(0.25 * l..=0.75 * l);
            InitialCondition {
                kind: IcFamily::StepFunction,
                values: step_profile(l, GRID_POINTS, left, right, jump),
                descriptor: vec![left, right, jump],
            }
        }
        IcGenerator::GaussianBump => {
            let l = spec.domain_length;
            let height = rng.gen_range(0.5..=1.5);
            let center = rng.gen_range(0.35 * l..=0.65 * l);
            let width = rng.gen_range(0.05 * l..=0.1 * l);
            InitialCondition {
                kind: IcFamily::GaussianBump,
                values: gaussian_profile(l, GRID_POINTS, height, center, width),
                descriptor: vec![height, center, width],
            }
        }
    }
}

pub fn step_profile(l: f64, n: usize, left: f64, right: f64, jump: f64) -> Vec<f64> {
    spatial_grid(l, n)
        .into_iter()
        .map(|x| if x < jump { left } else { right })
        .collect()
}

/// Periodized Gaussian (nearest three images).
pub fn gaussian_profile(l: f64, n: usize, height: f64, center: f64, width: f64) -> Vec<f64> {
    spatial_grid(l, n)
        .into_iter()
        .map(|x| {
            (-1..=1)
                .map(|k| {
                    let d = x - center + k as f64 * l;
                    height * (-d * d / (2.0 * width * width)).exp()
                })
                .sum()
        })
        .collect()
}
