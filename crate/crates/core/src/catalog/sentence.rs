//! Multimodal input sentences: equation text with numeric slots.

use serde::{Deserialize, Serialize};

use super::{CatalogError, EquationSpec, InitialCondition, ParamKind, ParameterSet, SentenceStyle};
use crate::tokenizer::PATCH_WIDTH;

/// Marker standing in for one numeric token inside sentence text.
pub const NUM_PLACEHOLDER: &str = "<num>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SlotRole {
    Coefficient(String),
    /// Whole ODE state vector.
    InitialState,
    /// One chunk of a gridded initial profile.
    InitialProfile { chunk: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSlot {
    pub role: SlotRole,
    /// At most `PATCH_WIDTH` values; the tokenizer zero-pads.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceWithSlots {
    /// Text with one `<num>` marker per slot, in slot order.
    pub text: String,
    pub slots: Vec<NumericSlot>,
}

impl SentenceWithSlots {
    pub fn placeholder_count(&self) -> usize {
        self.text
            .split_whitespace()
            .filter(|w| *w == NUM_PLACEHOLDER)
            .count()
    }
}

fn fmt_discrete(v: f64) -> String {
    format!("{}", v.round() as i64)
}

fn fill_discrete(eq: &str, spec: &EquationSpec, params: &ParameterSet) -> String {
    let mut out = eq.to_string();
    for (p, (_, v)) in spec.params.iter().zip(&params.values) {
        if p.kind == ParamKind::Discrete {
            out = out.replace(&format!("{{{}}}", p.symbol), &fmt_discrete(*v));
        }
    }
    out
}

fn repeat_marker(n: usize) -> String {
    vec![NUM_PLACEHOLDER; n].join(" ")
}

fn coefficient_clause(symbols: &[&str], label_one: &str, label_many: &str) -> String {
    match symbols.len() {
        0 => String::new(),
        1 => format!("{label_one} {} = {}", symbols[0], NUM_PLACEHOLDER),
        n => format!(
            "{label_many} [{}] = {}",
            symbols.join(" , "),
            repeat_marker(n)
        ),
    }
}

/// Renders the input sentence for one sample. Deterministic.
pub fn render_input_sentence(
    spec: &EquationSpec,
    params: &ParameterSet,
    ic: &InitialCondition,
) -> Result<SentenceWithSlots, CatalogError> {
    if params.values.len() != spec.params.len()
        || spec
            .params
            .iter()
            .zip(&params.values)
            .any(|(p, (s, _))| p.symbol != s)
    {
        return Err(CatalogError::SlotMismatch {
            family: spec.index,
            expected: spec.continuous_params().count(),
            got: params.values.len(),
        });
    }
    let width = spec.frame_width();
    if ic.values.len() != width {
        return Err(CatalogError::IcShape {
            family: spec.index,
            expected: width,
            got: ic.values.len(),
        });
    }

    let eq = fill_discrete(spec.equation_text, spec, params);
    let coeffs: Vec<(&str, f64)> = spec
        .params
        .iter()
        .zip(&params.values)
        .filter(|(p, _)| p.kind == ParamKind::Continuous)
        .map(|(p, (_, v))| (p.symbol, *v))
        .collect();
    let symbols: Vec<&str> = coeffs.iter().map(|(s, _)| *s).collect();

    let mut slots = Vec::new();
    let text = match spec.sentence_style {
        SentenceStyle::ScalarOde => {
            slots.push(NumericSlot {
                role: SlotRole::InitialState,
                values: ic.values.clone(),
            });
            format!(
                "The ODE is {eq} . We have initial data u = {NUM_PLACEHOLDER} and {} .",
                coefficient_clause(&symbols, "coefficient", "coefficients")
            )
        }
        SentenceStyle::OdeSystem => {
            slots.push(NumericSlot {
                role: SlotRole::InitialState,
                values: ic.values.clone(),
            });
            format!(
                "The {} system is {eq} . The initial data is [{}] = {NUM_PLACEHOLDER} , and the {} .",
                spec.name,
                spec.state_names.join(" , "),
                coefficient_clause(&symbols, "parameter is", "parameters are")
            )
        }
        SentenceStyle::Field => {
            let chunks = ic.values.chunks(PATCH_WIDTH);
            let n = chunks.len();
            for (chunk, values) in chunks.enumerate() {
                slots.push(NumericSlot {
                    role: SlotRole::InitialProfile { chunk },
                    values: values.to_vec(),
                });
            }
            let coeff = coefficient_clause(&symbols, "coefficient", "coefficients");
            if coeff.is_empty() {
                format!("The equation is {eq} with observed initial data u = {} .", repeat_marker(n))
            } else {
                format!(
                    "The equation is {eq} with observed initial data u = {} and {coeff} .",
                    repeat_marker(n)
                )
            }
        }
    };
    for (s, v) in coeffs {
        slots.push(NumericSlot {
            role: SlotRole::Coefficient(s.to_string()),
            values: vec![v],
        });
    }
    Ok(SentenceWithSlots { text, slots })
}
