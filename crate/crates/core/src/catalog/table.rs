use super::*;

fn cont(symbol: &'static str, nominal: f64) -> ParamSpec {
    ParamSpec {
        symbol,
        nominal,
        kind: ParamKind::Continuous,
    }
}

fn discrete(symbol: &'static str, nominal: f64) -> ParamSpec {
    ParamSpec {
        symbol,
        nominal,
        kind: ParamKind::Discrete,
    }
}

struct Ode {
    index: usize,
    name: &'static str,
    kind: OdeKind,
    eq: &'static str,
    states: &'static [&'static str],
    params: Vec<ParamSpec>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn ode(o: Ode) -> EquationSpec {
    let dim = o.states.len();
    let class = match dim {
        1 => EquationClass::Ode1d,
        2 => EquationClass::Ode2d,
        _ => EquationClass::Ode3d,
    };
    EquationSpec {
        index: o.index,
        class,
        name: o.name,
        state_dim: dim,
        params: o.params,
        dynamics: Dynamics::Ode(o.kind),
        rhs_kind: RhsKind::OdeRhs,
        flux_form: None,
        viscosity_coeff: None,
        time_horizon: 5.0,
        domain_length: 0.0,
        ic_family: IcFamily::UniformState,
        ic: IcGenerator::UniformState { lo: o.lo, hi: o.hi },
        text_template_group: if dim == 1 { "scalar_ode" } else { "ode_system" },
        equation_text: o.eq,
        state_names: o.states,
        sentence_style: if dim == 1 {
            SentenceStyle::ScalarOde
        } else {
            SentenceStyle::OdeSystem
        },
        feature: None,
        base_index: None,
    }
}

struct Pde {
    index: usize,
    name: &'static str,
    kind: PdeKind,
    eq: &'static str,
    params: Vec<ParamSpec>,
    horizon: f64,
    ic: IcGenerator,
}

fn pde(p: Pde) -> EquationSpec {
    let domain_length = if p.kind == PdeKind::FokkerPlanck { 2e-6 } else { 2.0 };
    EquationSpec {
        index: p.index,
        class: EquationClass::Pde,
        name: p.name,
        state_dim: 1,
        params: p.params,
        dynamics: Dynamics::Pde(p.kind),
        rhs_kind: RhsKind::PdeOperator,
        flux_form: None,
        viscosity_coeff: None,
        time_horizon: p.horizon,
        domain_length,
        ic_family: p.ic.family(),
        ic: p.ic,
        text_template_group: "field",
        equation_text: p.eq,
        state_names: &["u"],
        sentence_style: SentenceStyle::Field,
        feature: None,
        base_index: None,
    }
}

fn sine(offset: f64, scale: f64) -> IcGenerator {
    IcGenerator::SineMixture { offset, scale }
}

const RAW: (f64, f64) = (0.0, 1.0);
/// Maps the raw mixture range [-1.5, 1.5] to [0, 1].
const UNIT_INTERVAL: (f64, f64) = (0.5, 1.0 / 3.0);
/// Maps the raw mixture range to [0.5, 1.5].
const POSITIVE: (f64, f64) = (1.0, 1.0 / 3.0);
/// Maps the raw mixture range to [-0.5, 0.5].
const GENTLE: (f64, f64) = (0.0, 1.0 / 3.0);

struct Law {
    name: &'static str,
    flux: FluxForm,
    viscosity: Viscosity,
    eq: &'static str,
}

fn conservation_laws() -> [Law; 9] {
    use FluxForm::*;
    use Viscosity::*;
    [
        Law {
            name: "Burgers' Equation",
            flux: HalfSquare,
            viscosity: ScaledByPi,
            eq: "u_t = -q_1 (f(u))_x + q_2 / pi u_{xx} , f(u) = 1/2 u^2",
        },
        Law {
            name: "Inviscid Burgers",
            flux: HalfSquare,
            viscosity: None,
            eq: "u_t = -k (f(u))_x , f(u) = 1/2 u^2",
        },
        Law {
            name: "Conservation law Linear Flux",
            flux: Linear,
            viscosity: ScaledByPi,
            eq: "u_t = -q_1 (f(u))_x + q_2 / pi u_{xx} , f(u) = u",
        },
        Law {
            name: "Conservation law Cubic Flux",
            flux: CubicThird,
            viscosity: ScaledByPi,
            eq: "u_t = -q_1 (f(u))_x + q_2 / pi u_{xx} , f(u) = 1/3 u^3",
        },
        Law {
            name: "Inviscid Conservation law Cubic Flux",
            flux: CubicThird,
            viscosity: Unit,
            eq: "u_t = -k (f(u))_x + u_{xx} , f(u) = 1/3 u^3",
        },
        Law {
            name: "Conservation law Sine Flux",
            flux: Sine,
            viscosity: ScaledByPi,
            eq: "u_t = -q_1 (f(u))_x + q_2 / pi u_{xx} , f(u) = sin(u)",
        },
        Law {
            name: "Inviscid Conservation law Sine Flux",
            flux: Sine,
            viscosity: Unit,
            eq: "u_t = -k (f(u))_x + u_{xx} , f(u) = sin(u)",
        },
        Law {
            name: "Conservation law Cosine Flux",
            flux: Cosine,
            viscosity: ScaledByPi,
            eq: "u_t = -q_1 (f(u))_x + q_2 / pi u_{xx} , f(u) = cos(u)",
        },
        Law {
            name: "Inviscid Conservation law Cosine Flux",
            flux: Cosine,
            viscosity: Unit,
            eq: "u_t = -k (f(u))_x + u_{xx} , f(u) = cos(u)",
        },
    ]
}

const SHOCK_NAMES: [&str; 9] = [
    "Burgers' Equation with one shock",
    "Inviscid Burgers with one shock",
    "Conservation law Linear Flux with one shock",
    "Conservation law Cubic Flux with one shock",
    "Inviscid Conservation law Cubic Flux with one shock",
    "Conservation law Sine Flux with one shock",
    "Inviscid Conservation law Sine Flux with one shock",
    "Conservation law Cosine Flux with one shock",
    "Inviscid Conservation law Cosine Flux with one shock",
];

const RAREFACTION_NAMES: [&str; 9] = [
    "Burgers' Equation with rarefaction",
    "Inviscid Burgers with rarefaction",
    "Conservation law Linear Flux with rarefaction",
    "Conservation law Cubic Flux with rarefaction",
    "Inviscid Conservation law Cubic Flux with rarefaction",
    "Conservation law Sine Flux with rarefaction",
    "Inviscid Conservation law Sine Flux with rarefaction",
    "Conservation law Cosine Flux with rarefaction",
    "Inviscid Conservation law Cosine Flux with rarefaction",
];

fn law(
    index: usize,
    name: &'static str,
    l: &Law,
    ic: IcGenerator,
    feature: WaveFeature,
    base_index: Option<usize>,
) -> EquationSpec {
    let params = match l.viscosity {
        Viscosity::ScaledByPi => vec![cont("q_1", 1.0), cont("q_2", 0.01)],
        Viscosity::Unit | Viscosity::None => vec![cont("k", 1.0)],
    };
    let viscosity_coeff = match l.viscosity {
        Viscosity::ScaledByPi => Some(0.01 / std::f64::consts::PI),
        Viscosity::Unit => Some(1.0),
        Viscosity::None => None,
    };
    EquationSpec {
        index,
        class: EquationClass::ConservationLaw,
        name,
        state_dim: 1,
        params,
        dynamics: Dynamics::Conservation {
            flux: l.flux,
            viscosity: l.viscosity,
        },
        rhs_kind: RhsKind::ConservationFlux,
        flux_form: Some(l.flux),
        viscosity_coeff,
        time_horizon: 5.0,
        domain_length: 2.0,
        ic_family: ic.family(),
        ic,
        text_template_group: "field",
        equation_text: l.eq,
        state_names: &["u"],
        sentence_style: SentenceStyle::Field,
        feature: Some(feature),
        base_index,
    }
}

pub(super) fn build() -> Vec<EquationSpec> {
    use OdeKind::*;
    let mut out = vec![
        ode(Ode {
            index: 1,
            name: "ODE 1",
            kind: PeriodicGrowth,
            eq: "u_t = a sin(2 pi t) u",
            states: &["u"],
            params: vec![cont("a", 1.0)],
            lo: vec![0.5],
            hi: vec![2.0],
        }),
        ode(Ode {
            index: 2,
            name: "ODE 2",
            kind: DecayingForcing,
            eq: "u_t = a exp(-t) + b",
            states: &["u"],
            params: vec![cont("a", 1.0), cont("b", 2.0)],
            lo: vec![-1.0],
            hi: vec![1.0],
        }),
        ode(Ode {
            index: 3,
            name: "ODE 3",
            kind: QuadraticCosine,
            eq: "u_t = a t^2 cos(u) + b u",
            states: &["u"],
            params: vec![cont("a", 1.0), cont("b", 0.3)],
            lo: vec![-1.0],
            hi: vec![1.0],
        }),
        ode(Ode {
            index: 4,
            name: "ODE 4",
            kind: DampedSineForcing,
            eq: "u_t = a sin(exp(-0.5 t) sin(3 t)) + b u",
            states: &["u"],
            params: vec![cont("a", 2.0), cont("b", 0.5)],
            lo: vec![-1.0],
            hi: vec![1.0],
        }),
        ode(Ode {
            index: 5,
            name: "ODE 5",
            kind: LinearSine,
            eq: "u_t = a t sin(u)",
            states: &["u"],
            params: vec![cont("a", 1.5)],
            lo: vec![0.5],
            hi: vec![2.5],
        }),
        ode(Ode {
            index: 6,
            name: "SIR",
            kind: Sir,
            eq: "S_t = -beta S I , I_t = beta S I - gamma I , R_t = gamma I",
            states: &["S", "I", "R"],
            params: vec![cont("beta", 0.3), cont("gamma", 0.1)],
            lo: vec![0.6, 0.05, 0.0],
            hi: vec![0.95, 0.3, 0.1],
        }),
        ode(Ode {
            index: 7,
            name: "Neural Dynamics",
            kind: NeuralDynamics,
            eq: "E_t = alpha E - beta E I - gamma E + 0.01 sin(t) , I_t = delta E - 0.2 I , H_t = 0.3 I - 0.1 H",
            states: &["E", "I", "H"],
            params: vec![
                cont("alpha", 0.2),
                cont("beta", 0.1),
                cont("gamma", 0.05),
                cont("delta", 0.5),
            ],
            lo: vec![0.1, 0.1, 0.1],
            hi: vec![1.0, 1.0, 1.0],
        }),
        ode(Ode {
            index: 8,
            name: "Van der Pol",
            kind: VanDerPol,
            eq: "x_t = y , y_t = mu (1 - x^2) y - x",
            states: &["x", "y"],
            params: vec![cont("mu", 2.0)],
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0],
        }),
        ode(Ode {
            index: 9,
            name: "Lotka-Volterra",
            kind: LotkaVolterra,
            eq: "x_t = alpha x - beta x y , y_t = delta x y - gamma y",
            states: &["x", "y"],
            params: vec![
                cont("alpha", 1.5),
                cont("beta", 1.0),
                cont("gamma", 3.0),
                cont("delta", 1.0),
            ],
            lo: vec![1.0, 0.5],
            hi: vec![4.0, 3.0],
        }),
        ode(Ode {
            index: 10,
            name: "FitzHugh-Nagumo",
            kind: FitzHughNagumo,
            eq: "v_t = v - v^3 / 3 - w + I , w_t = (v + a - b w) / tau",
            states: &["v", "w"],
            params: vec![cont("I", 0.0), cont("a", 0.7), cont("b", 0.8), cont("tau", 0.8)],
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0],
        }),
        ode(Ode {
            index: 11,
            name: "Brusselator",
            kind: Brusselator,
            eq: "x_t = A + x^2 y - (B + 1) x , y_t = B x - x^2 y",
            states: &["x", "y"],
            params: vec![cont("A", 2.0), cont("B", 4.0)],
            lo: vec![0.5, 0.5],
            hi: vec![3.0, 3.0],
        }),
        ode(Ode {
            index: 12,
            name: "Duffing",
            kind: Duffing,
            eq: "x_t = y , y_t = -delta y - alpha x - beta x^3",
            states: &["x", "y"],
            params: vec![cont("alpha", 1.0), cont("beta", 0.2), cont("delta", 0.3)],
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0],
        }),
    ];

    use PdeKind::*;
    let rd = |index, name, reaction, eq, q2| {
        pde(Pde {
            index,
            name,
            kind: ReactionDiffusion(reaction),
            eq,
            params: vec![cont("q_1", 3e-3), cont("q_2", q2)],
            horizon: 5.0,
            ic: sine(UNIT_INTERVAL.0, UNIT_INTERVAL.1),
        })
    };
    out.extend([
        pde(Pde {
            index: 13,
            name: "Heat Equation",
            kind: Heat,
            eq: "u_t = c u_{xx}",
            params: vec![cont("c", 3e-3)],
            horizon: 5.0,
            ic: sine(RAW.0, RAW.1),
        }),
        pde(Pde {
            index: 14,
            name: "Porous Medium Equation",
            kind: PorousMedium,
            eq: "u_t = (u^{m})_{xx}",
            params: vec![discrete("m", 2.0)],
            horizon: 0.1,
            ic: sine(POSITIVE.0, POSITIVE.1),
        }),
        pde(Pde {
            index: 15,
            name: "Klein-Gordon Equation",
            kind: KleinGordon,
            eq: "u_{tt} + q_2^2 q_1^4 u = q_1^2 u_{xx}",
            params: vec![cont("q_1", 1.0), cont("q_2", 0.1)],
            horizon: 1.0,
            ic: sine(RAW.0, RAW.1),
        }),
        pde(Pde {
            index: 16,
            name: "Sine-Gordon Equation",
            kind: SineGordon,
            eq: "u_{tt} + q sin(u) = u_{xx}",
            params: vec![cont("q", 1.0)],
            horizon: 1.0,
            ic: sine(RAW.0, RAW.1),
        }),
        pde(Pde {
            index: 17,
            name: "Cahn-Hilliard Equation",
            kind: CahnHilliard,
            eq: "u_t = -q^2 u_{xxxx} + (u^3 - u)_{xx}",
            params: vec![cont("q", 0.01)],
            horizon: 0.5,
            ic: sine(RAW.0, RAW.1),
        }),
        pde(Pde {
            index: 18,
            name: "Korteweg-De Vries Equation",
            kind: Kdv,
            eq: "u_t + q^2 u_{xxx} + u u_x = 0",
            params: vec![cont("q", 0.022)],
            horizon: 1.0,
            ic: sine(GENTLE.0, GENTLE.1),
        }),
        pde(Pde {
            index: 19,
            name: "Advection Equation",
            kind: Advection,
            eq: "u_t + q u_x = 0",
            params: vec![cont("q", 0.5)],
            horizon: 5.0,
            ic: sine(RAW.0, RAW.1),
        }),
        pde(Pde {
            index: 20,
            name: "Wave Equation",
            kind: Wave,
            eq: "u_{tt} = q u_{xx}",
            params: vec![cont("q", 0.5)],
            horizon: 1.0,
            ic: sine(RAW.0, RAW.1),
        }),
        rd(
            21,
            "Reaction-Diffusion Equation Logistic",
            Reaction::Logistic,
            "u_t = q_1 u_{xx} + q_2 u (1 - u)",
            1.0,
        ),
        rd(
            22,
            "Reaction-Diffusion Equation Linear",
            Reaction::Linear,
            "u_t = q_1 u_{xx} + q_2 u",
            0.1,
        ),
        rd(
            23,
            "Reaction-Diffusion Equation Bistable",
            Reaction::Bistable,
            "u_t = q_1 u_{xx} + q_2 u^2 (1 - u)",
            1.0,
        ),
        rd(
            24,
            "Reaction-Diffusion Equation Square Logistic",
            Reaction::SquareLogistic,
            "u_t = q_1 u_{xx} + q_2 u^2 (1 - u)^2",
            1.0,
        ),
    ]);

    let laws = conservation_laws();
    for (j, l) in laws.iter().enumerate() {
        let feature = match l.viscosity {
            Viscosity::None => WaveFeature::ShockFormation,
            _ => WaveFeature::NoShocks,
        };
        out.push(law(25 + j, l.name, l, sine(RAW.0, RAW.1), feature, None));
    }

    out.push(pde(Pde {
        index: 34,
        name: "Fokker-Planck Equation",
        kind: FokkerPlanck,
        eq: "u_t = D u_{xx} - D / (k_B T) (U'(x) u)_x , D = k_B T / (6 pi eta r) , U(x) = 5e-21 cos(x / 1e-7)",
        params: vec![cont("eta", 1e-3)],
        horizon: 0.1,
        ic: IcGenerator::GaussianBump,
    }));

    for (j, l) in laws.iter().enumerate() {
        out.push(law(
            35 + j,
            SHOCK_NAMES[j],
            l,
            IcGenerator::StepFunction {
                orientation: StepOrientation::Compressive,
            },
            WaveFeature::OneShock,
            Some(25 + j),
        ));
    }
    for (j, l) in laws.iter().enumerate() {
        out.push(law(
            44 + j,
            RAREFACTION_NAMES[j],
            l,
            IcGenerator::StepFunction {
                orientation: StepOrientation::Expansive,
            },
            WaveFeature::Rarefaction,
            Some(25 + j),
        ));
    }
    out
}
