//! Template engine for the per-family text descriptions.
//!
//! Each description is `subject + clause + closing`, drawn from wording pools
//! for four facets. The pools live in `data/descriptions.json`.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::catalog::{Dynamics, EquationSpec, PdeKind, WaveFeature};

pub const DESCRIPTIONS_PER_FAMILY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Facet {
    EquationProperties,
    NumericalMethod,
    PhysicalInterpretation,
    SolutionFeature,
}

impl Facet {
    pub const ALL: [Facet; 4] = [
        Facet::EquationProperties,
        Facet::NumericalMethod,
        Facet::PhysicalInterpretation,
        Facet::SolutionFeature,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextDescriptionSet {
    pub family_index: usize,
    pub descriptions: Vec<String>,
    pub facets: Vec<Facet>,
}

#[derive(Deserialize)]
struct FeaturePool {
    closings: Vec<String>,
    clauses: Vec<String>,
}

#[derive(Deserialize)]
struct FamilyText {
    noun: String,
    properties: Vec<String>,
    physics: Vec<String>,
    #[serde(default)]
    feature: Vec<String>,
}

#[derive(Deserialize)]
struct Templates {
    subjects: Vec<String>,
    method: BTreeMap<String, Vec<String>>,
    closings: BTreeMap<String, Vec<String>>,
    wave_features: BTreeMap<String, FeaturePool>,
    families: BTreeMap<String, FamilyText>,
}

fn templates() -> &'static Templates {
    static T: OnceLock<Templates> = OnceLock::new();
    T.get_or_init(|| {
        serde_json::from_str(include_str!("../../data/descriptions.json")).expect("bundled description templates parse")
    })
}

fn feature_key(f: WaveFeature) -> &'static str {
    match f {
        WaveFeature::NoShocks => "NoShocks",
        WaveFeature::ShockFormation => "ShockFormation",
        WaveFeature::OneShock => "OneShock",
        WaveFeature::Rarefaction => "Rarefaction",
    }
}

fn facet_key(f: Facet) -> &'static str {
    match f {
        Facet::EquationProperties => "EquationProperties",
        Facet::NumericalMethod => "NumericalMethod",
        Facet::PhysicalInterpretation => "PhysicalInterpretation",
        Facet::SolutionFeature => "SolutionFeature",
    }
}

fn method_key(spec: &EquationSpec) -> &'static str {
    match spec.dynamics {
        Dynamics::Ode(_) => "ode",
        Dynamics::Pde(PdeKind::FokkerPlanck) => "rescaled",
        Dynamics::Pde(_) => "spectral",
        Dynamics::Conservation { .. } => "finite_volume",
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Subject x clause x closing combinations of one facet, in a fixed order.
fn expand(subjects: &[String], noun: &str, clauses: &[String], closings: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for closing in closings {
        for clause in clauses {
            for subject in subjects {
                let subject = capitalize(&subject.replace("{noun}", noun));
                out.push(format!("{subject} {clause}. {closing}"));
            }
        }
    }
    out
}

/// Expands the templates of one family into exactly
/// [`DESCRIPTIONS_PER_FAMILY`] distinct descriptions, taken round-robin over
/// the four facets.
pub fn generate_descriptions(spec: &EquationSpec) -> Result<TextDescriptionSet, DatasetError> {
    let t = templates();
    let text_index = spec.base_index.unwrap_or(spec.index);
    let fam = t
        .families
        .get(&text_index.to_string())
        .ok_or(DatasetError::TemplateExhausted {
            family: spec.index,
            got: 0,
        })?;
    let noun = match (spec.base_index, spec.feature) {
        (Some(_), Some(WaveFeature::OneShock)) => format!("{} with a shock-forming step", fam.noun),
        (Some(_), Some(WaveFeature::Rarefaction)) => format!("{} with a rarefaction step", fam.noun),
        _ => fam.noun.clone(),
    };
    let wave = spec.feature.map(|f| &t.wave_features[feature_key(f)]);

    let pools: Vec<Vec<String>> = Facet::ALL
        .iter()
        .map(|&facet| {
            let clauses: &[String] = match facet {
                Facet::EquationProperties => &fam.properties,
                Facet::NumericalMethod => &t.method[method_key(spec)],
                Facet::PhysicalInterpretation => &fam.physics,
                Facet::SolutionFeature => match wave {
                    Some(w) => &w.clauses,
                    None => &fam.feature,
                },
            };
            // Conservation-law descriptions always state the wave feature.
            let closings = match wave {
                Some(w) => &w.closings,
                None => &t.closings[facet_key(facet)],
            };
            expand(&t.subjects, &noun, clauses, closings)
        })
        .collect();

    let mut seen = HashSet::new();
    let mut descriptions = Vec::with_capacity(DESCRIPTIONS_PER_FAMILY);
    let mut facets = Vec::with_capacity(DESCRIPTIONS_PER_FAMILY);
    let longest = pools.iter().map(Vec::len).max().unwrap_or(0);
    'outer: for i in 0..longest {
        for (facet, pool) in Facet::ALL.iter().zip(&pools) {
            if let Some(d) = pool.get(i) {
                if seen.insert(d.clone()) {
                    descriptions.push(d.clone());
                    facets.push(*facet);
                    if descriptions.len() == DESCRIPTIONS_PER_FAMILY {
                        break 'outer;
                    }
                }
            }
        }
    }
    if descriptions.len() < DESCRIPTIONS_PER_FAMILY {
        return Err(DatasetError::TemplateExhausted {
            family: spec.index,
            got: descriptions.len(),
        });
    }
    Ok(TextDescriptionSet {
        family_index: spec.index,
        descriptions,
        facets,
    })
}

/// Keyword the descriptions of a conservation-law family must contain.
pub fn feature_keyword(feature: WaveFeature) -> &'static str {
    match feature {
        WaveFeature::NoShocks => "no shocks",
        WaveFeature::ShockFormation => "shocks form",
        WaveFeature::OneShock => "one shock",
        WaveFeature::Rarefaction => "rarefaction",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{catalog, get_equation};

    #[test]
    fn every_family_has_fifty_distinct() {
        for spec in catalog() {
            let set = generate_descriptions(spec).unwrap();
            assert_eq!(set.descriptions.len(), DESCRIPTIONS_PER_FAMILY);
            let unique: HashSet<_> = set.descriptions.iter().collect();
            assert_eq!(unique.len(), DESCRIPTIONS_PER_FAMILY, "family {}", spec.index);
            for f in Facet::ALL {
                assert!(set.facets.contains(&f));
            }
        }
    }

    #[test]
    fn duffing_mentions_nonlinear_oscillations() {
        let set = generate_descriptions(get_equation(12).unwrap()).unwrap();
        assert!(set
            .descriptions
            .iter()
            .any(|d| d.contains("cubic stiffness and damping lead to non-linear oscillations")));
    }

    #[test]
    fn step_families_state_their_feature() {
        for spec in catalog().iter().filter(|s| s.index >= 25 && s.index != 34) {
            let set = generate_descriptions(spec).unwrap();
            let key = feature_keyword(spec.feature.unwrap());
            assert!(set.descriptions.iter().all(|d| d.to_lowercase().contains(key)), "family {}", spec.index);
        }
        let set = generate_descriptions(get_equation(43).unwrap()).unwrap();
        assert!(set
            .descriptions
            .iter()
            .any(|d| d.contains("The solution develops one shock.")));
    }

    #[test]
    fn expansion_is_deterministic() {
        let a = generate_descriptions(get_equation(30).unwrap()).unwrap();
        let b = generate_descriptions(get_equation(30).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
