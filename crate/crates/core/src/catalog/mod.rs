//! The 52 parametric equation families.
//!
//! Each family is a declarative [`EquationSpec`]: its dynamics (right-hand side,
//! PDE operator or conservation flux), nominal parameter values, domain,
//! class label and initial-condition generator. The catalog is built once and
//! shared immutably.

mod ic;
mod sentence;
mod table;

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomStream;

pub use ic::{sample_initial_condition, spatial_grid, InitialCondition, StepOrientation};
pub use sentence::{render_input_sentence, NumericSlot, SentenceWithSlots, SlotRole, NUM_PLACEHOLDER};

/// Number of spatial grid points for every PDE and conservation law family.
pub const GRID_POINTS: usize = 128;
/// Number of catalogued families.
pub const FAMILY_COUNT: usize = 52;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("family index {0} is outside 1..=52")]
    IndexOutOfRange(usize),
    #[error("template for family {family} expects {expected} coefficient slots, got {got}")]
    SlotMismatch {
        family: usize,
        expected: usize,
        got: usize,
    },
    #[error("initial condition has {got} values, family {family} expects {expected}")]
    IcShape {
        family: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquationClass {
    #[serde(rename = "ODE1D")]
    Ode1d,
    #[serde(rename = "ODE2D")]
    Ode2d,
    #[serde(rename = "ODE3D")]
    Ode3d,
    #[serde(rename = "PDE")]
    Pde,
    ConservationLaw,
}

impl EquationClass {
    pub const ALL: [EquationClass; 5] = [
        EquationClass::Ode1d,
        EquationClass::Ode2d,
        EquationClass::Ode3d,
        EquationClass::Pde,
        EquationClass::ConservationLaw,
    ];

    /// Row label used in evaluation reports.
    pub fn label(self) -> &'static str {
        match self {
            EquationClass::Ode1d => "1D ODE",
            EquationClass::Ode2d => "2D ODE",
            EquationClass::Ode3d => "3D ODE",
            EquationClass::Pde => "PDE",
            EquationClass::ConservationLaw => "Conservation Laws",
        }
    }

    pub fn is_ode(self) -> bool {
        matches!(self, EquationClass::Ode1d | EquationClass::Ode2d | EquationClass::Ode3d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RhsKind {
    OdeRhs,
    PdeOperator,
    ConservationFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FluxForm {
    #[serde(rename = "Half_u2")]
    HalfSquare,
    Linear,
    #[serde(rename = "Cubic_third")]
    CubicThird,
    Sine,
    Cosine,
}

impl FluxForm {
    pub fn flux(self, u: f64) -> f64 {
        match self {
            FluxForm::HalfSquare => 0.5 * u * u,
            FluxForm::Linear => u,
            FluxForm::CubicThird => u * u * u / 3.0,
            FluxForm::Sine => u.sin(),
            FluxForm::Cosine => u.cos(),
        }
    }

    /// Characteristic speed f'(u).
    pub fn speed(self, u: f64) -> f64 {
        match self {
            FluxForm::HalfSquare => u,
            FluxForm::Linear => 1.0,
            FluxForm::CubicThird => u * u,
            FluxForm::Sine => u.cos(),
            FluxForm::Cosine => -u.sin(),
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            FluxForm::HalfSquare => "1/2 u^2",
            FluxForm::Linear => "u",
            FluxForm::CubicThird => "1/3 u^3",
            FluxForm::Sine => "sin(u)",
            FluxForm::Cosine => "cos(u)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IcFamily {
    /// Uniform box for ODE state vectors.
    UniformState,
    SineMixture,
    StepFunction,
    GaussianBump,
}

/// Qualitative solution feature stated by the descriptions of conservation-law
/// families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveFeature {
    NoShocks,
    /// Smooth data that steepens into shocks (inviscid Burgers with sine data).
    ShockFormation,
    OneShock,
    Rarefaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OdeKind {
    PeriodicGrowth,
    DecayingForcing,
    QuadraticCosine,
    DampedSineForcing,
    LinearSine,
    Sir,
    NeuralDynamics,
    VanDerPol,
    LotkaVolterra,
    FitzHughNagumo,
    Brusselator,
    Duffing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reaction {
    Logistic,
    Linear,
    Bistable,
    SquareLogistic,
}

impl Reaction {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Reaction::Logistic => u * (1.0 - u),
            Reaction::Linear => u,
            Reaction::Bistable => u * u * (1.0 - u),
            Reaction::SquareLogistic => u * u * (1.0 - u) * (1.0 - u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PdeKind {
    Heat,
    PorousMedium,
    KleinGordon,
    SineGordon,
    CahnHilliard,
    Kdv,
    Advection,
    Wave,
    ReactionDiffusion(Reaction),
    FokkerPlanck,
}

/// Coefficient in front of u_xx for conservation laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Viscosity {
    /// (q2 / pi) u_xx with sampled q2.
    ScaledByPi,
    /// Unit coefficient.
    Unit,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Dynamics {
    Ode(OdeKind),
    Pde(PdeKind),
    Conservation { flux: FluxForm, viscosity: Viscosity },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParamKind {
    /// Perturbed by the relative range and fed to the model as a numeric slot.
    Continuous,
    /// Integer-valued variant selector, written into the equation text.
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub symbol: &'static str,
    pub nominal: f64,
    pub kind: ParamKind,
}

/// Initial-condition generator settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum IcGenerator {
    UniformState { lo: Vec<f64>, hi: Vec<f64> },
    /// offset + scale * sum_k a_k sin(2 pi k x / L + phi_k)
    SineMixture { offset: f64, scale: f64 },
    StepFunction { orientation: StepOrientation },
    GaussianBump,
}

impl IcGenerator {
    pub fn family(&self) -> IcFamily {
        match self {
            IcGenerator::UniformState { .. } => IcFamily::UniformState,
            IcGenerator::SineMixture { .. } => IcFamily::SineMixture,
            IcGenerator::StepFunction { .. } => IcFamily::StepFunction,
            IcGenerator::GaussianBump => IcFamily::GaussianBump,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SentenceStyle {
    ScalarOde,
    OdeSystem,
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquationSpec {
    pub index: usize,
    pub class: EquationClass,
    pub name: &'static str,
    pub state_dim: usize,
    pub params: Vec<ParamSpec>,
    pub dynamics: Dynamics,
    pub rhs_kind: RhsKind,
    pub flux_form: Option<FluxForm>,
    /// Nominal coefficient of u_xx for conservation laws.
    pub viscosity_coeff: Option<f64>,
    pub time_horizon: f64,
    /// Periodic spatial extent; zero for ODEs.
    pub domain_length: f64,
    pub ic_family: IcFamily,
    pub ic: IcGenerator,
    pub text_template_group: &'static str,
    /// Symbolic equation, with `{m}`-style holes for discrete parameters.
    pub equation_text: &'static str,
    pub state_names: &'static [&'static str],
    pub sentence_style: SentenceStyle,
    pub feature: Option<WaveFeature>,
    /// For the step-data variants 35..=52, the smooth-data family they extend.
    pub base_index: Option<usize>,
}

impl EquationSpec {
    pub fn is_ode(&self) -> bool {
        self.class.is_ode()
    }

    /// Width of one stored frame: state dimension for ODEs, grid size otherwise.
    pub fn frame_width(&self) -> usize {
        if self.is_ode() {
            self.state_dim
        } else {
            GRID_POINTS
        }
    }

    pub fn continuous_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| p.kind == ParamKind::Continuous)
    }

    pub fn nominal_parameters(&self) -> ParameterSet {
        ParameterSet {
            values: self
                .params
                .iter()
                .map(|p| (p.symbol.to_string(), p.nominal))
                .collect(),
            relative_range: 0.0,
            seed_path: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub values: Vec<(String, f64)>,
    pub relative_range: f64,
    pub seed_path: Vec<u64>,
}

impl ParameterSet {
    pub fn get(&self, symbol: &str) -> Option<f64> {
        self.values.iter().find(|(s, _)| s == symbol).map(|(_, v)| *v)
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i].1
    }

    pub fn raw(&self) -> Vec<f64> {
        self.values.iter().map(|(_, v)| *v).collect()
    }
}

static CATALOG: OnceLock<Vec<EquationSpec>> = OnceLock::new();

/// All 52 families, ordered by index.
pub fn catalog() -> &'static [EquationSpec] {
    CATALOG.get_or_init(table::build)
}

pub fn get_equation(index: usize) -> Result<&'static EquationSpec, CatalogError> {
    if !(1..=FAMILY_COUNT).contains(&index) {
        return Err(CatalogError::IndexOutOfRange(index));
    }
    Ok(&catalog()[index - 1])
}

/// Draws every continuous parameter uniformly from `[Q(1-r), Q(1+r)]`.
///
/// Discrete parameters keep their nominal value; see [`with_porous_exponent`].
pub fn sample_parameters(
    spec: &EquationSpec,
    relative_range: f64,
    rng: &mut RandomStream,
) -> ParameterSet {
    assert!(
        relative_range > 0.0 && relative_range <= 0.5,
        "relative range must lie in (0, 0.5]"
    );
    let xi: Vec<f64> = spec
        .continuous_params()
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    parameters_from_unit(spec, relative_range, &xi)
}

/// Maps unit draws `xi` in [-1, 1] (one per continuous parameter) to
/// `Q (1 + r xi)`. Test splits share `xi` across relative ranges.
pub fn parameters_from_unit(spec: &EquationSpec, relative_range: f64, xi: &[f64]) -> ParameterSet {
    let mut it = xi.iter();
    let values = spec
        .params
        .iter()
        .map(|p| {
            let v = match p.kind {
                ParamKind::Continuous => {
                    let x = *it.next().expect("one unit draw per continuous parameter");
                    p.nominal * (1.0 + relative_range * x)
                }
                ParamKind::Discrete => p.nominal,
            };
            (p.symbol.to_string(), v)
        })
        .collect();
    ParameterSet {
        values,
        relative_range,
        seed_path: Vec::new(),
    }
}

/// Porous-medium exponent for a given parameter draw: m cycles through 2, 3, 4.
pub fn porous_exponent(sample_index: usize) -> f64 {
    [2.0, 3.0, 4.0][sample_index % 3]
}

/// Applies the round-robin exponent to a porous-medium parameter set. Other
/// families are returned unchanged.
pub fn with_porous_exponent(spec: &EquationSpec, mut params: ParameterSet, sample_index: usize) -> ParameterSet {
    if matches!(spec.dynamics, Dynamics::Pde(PdeKind::PorousMedium)) {
        for (s, v) in params.values.iter_mut() {
            if s == "m" {
                *v = porous_exponent(sample_index);
            }
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn heat_entry() {
        let s = get_equation(13).unwrap();
        assert_eq!(s.class, EquationClass::Pde);
        assert_eq!(s.params[0].nominal, 3e-3);
        assert_eq!(s.time_horizon, 5.0);
        assert_eq!(s.domain_length, 2.0);
    }

    #[test]
    fn lotka_volterra_entry() {
        let s = get_equation(9).unwrap();
        assert_eq!(s.class, EquationClass::Ode2d);
        let nominal: Vec<f64> = s.params.iter().map(|p| p.nominal).collect();
        assert_eq!(nominal, vec![1.5, 1.0, 3.0, 1.0]);
    }

    #[test]
    fn out_of_range() {
        assert_eq!(get_equation(53), Err(CatalogError::IndexOutOfRange(53)));
        assert_eq!(get_equation(0), Err(CatalogError::IndexOutOfRange(0)));
    }

    #[test]
    fn indices_are_dense_and_unique() {
        for (i, s) in catalog().iter().enumerate() {
            assert_eq!(s.index, i + 1);
        }
        assert_eq!(catalog().len(), FAMILY_COUNT);
    }

    #[test]
    fn class_counts_match_table() {
        let count = |c| catalog().iter().filter(|s| s.class == c).count();
        assert_eq!(count(EquationClass::Ode1d), 5);
        assert_eq!(count(EquationClass::Ode2d), 5);
        assert_eq!(count(EquationClass::Ode3d), 2);
        assert_eq!(count(EquationClass::Pde), 13);
        assert_eq!(count(EquationClass::ConservationLaw), 27);
    }

    #[test]
    fn horizon_overrides() {
        let h = |i| get_equation(i).unwrap().time_horizon;
        assert_eq!(h(14), 0.1);
        assert_eq!(h(15), 1.0);
        assert_eq!(h(16), 1.0);
        assert_eq!(h(17), 0.5);
        assert_eq!(h(18), 1.0);
        assert_eq!(h(20), 1.0);
        assert_eq!(h(34), 0.1);
        assert_eq!(h(30), 5.0);
    }

    #[test]
    fn step_families_are_labelled() {
        for i in 35..=52 {
            let s = get_equation(i).unwrap();
            assert_eq!(s.ic_family, IcFamily::StepFunction);
            let want = if i <= 43 { WaveFeature::OneShock } else { WaveFeature::Rarefaction };
            assert_eq!(s.feature, Some(want));
            assert_eq!(s.base_index, Some(25 + (i - 35) % 9));
        }
    }

    #[test]
    fn parameter_interval() {
        let s = get_equation(1).unwrap();
        let mut rng = stream(1, &[1]);
        for _ in 0..200 {
            let p = sample_parameters(s, 0.1, &mut rng);
            let a = p.value(0);
            assert!((0.9..=1.1).contains(&a));
        }
        let s = get_equation(11).unwrap(); // A = 2
        let p = sample_parameters(s, 0.3, &mut rng);
        assert!((1.4..=2.6).contains(&p.value(0)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = get_equation(9).unwrap();
        let a = sample_parameters(s, 0.1, &mut stream(5, &[9]));
        let b = sample_parameters(s, 0.1, &mut stream(5, &[9]));
        assert_eq!(a, b);
    }

    #[test]
    fn porous_round_robin() {
        let s = get_equation(14).unwrap();
        let ms: Vec<f64> = (0..6)
            .map(|i| with_porous_exponent(s, s.nominal_parameters(), i).get("m").unwrap())
            .collect();
        assert_eq!(ms, vec![2.0, 3.0, 4.0, 2.0, 3.0, 4.0]);
    }
}
