//! Browser bindings: browse the catalog, simulate one sample and list the
//! text descriptions of a family. Every export returns a JSON string so the
//! page needs no generated glue beyond `wasm-bindgen`'s own.

use molforge::catalog::{catalog, get_equation, render_input_sentence, sample_initial_condition, sample_parameters};
use molforge::dataset::generate_descriptions;
use molforge::evaluation::{shock_feature_check, DetectedFeature, FeatureCheck};
use molforge::numerics::solve;
use molforge::rng::{purpose_stream, StreamPurpose};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Entry {
    index: usize,
    name: &'static str,
    class: &'static str,
    equation: &'static str,
    params: Vec<(&'static str, f64)>,
}

#[derive(Serialize)]
struct Simulation {
    index: usize,
    sentence: String,
    params: Vec<f64>,
    times: Vec<f64>,
    width: usize,
    values: Vec<f64>,
    ode: bool,
    feature: Option<String>,
}

fn to_js<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// All families as `[{index, name, class, equation, params}]`.
#[wasm_bindgen]
pub fn catalog_json() -> Result<String, JsError> {
    to_js(&catalog_entries())
}

fn catalog_entries() -> Vec<Entry> {
    catalog()
        .iter()
        .map(|s| Entry {
            index: s.index,
            name: s.name,
            class: s.class.label(),
            equation: s.equation_text,
            params: s.params.iter().map(|p| (p.symbol, p.nominal)).collect(),
        })
        .collect()
}

/// Draws parameters within `relative_range` of nominal and an initial
/// condition from `seed`, solves, and returns the trajectory.
#[wasm_bindgen]
pub fn simulate(index: usize, seed: u64, relative_range: f64) -> Result<String, JsError> {
    to_js(&run(index, seed, relative_range)?)
}

fn run(index: usize, seed: u64, relative_range: f64) -> Result<Simulation, JsError> {
    let spec = get_equation(index).map_err(err)?;
    let mut prng = purpose_stream(seed, index, StreamPurpose::TrainParams, 0, 0);
    let mut irng = purpose_stream(seed, index, StreamPurpose::TrainIc, 0, 0);
    let params = sample_parameters(spec, relative_range.clamp(1e-3, 0.5), &mut prng);
    let ic = sample_initial_condition(spec, &mut irng);
    let sentence = render_input_sentence(spec, &params, &ic).map_err(err)?;
    let traj = solve(spec, &params, &ic).map_err(err)?;
    let feature = (!spec.is_ode()).then(|| {
        let check = FeatureCheck::for_grid(traj.width, traj.times.len());
        let v = shock_feature_check(&traj.values, traj.width, &traj.times, spec.domain_length, "", check);
        match v.detected {
            DetectedFeature::None => "smooth".to_string(),
            DetectedFeature::Shock { speed, .. } => format!("shock moving at {speed:.3}"),
            DetectedFeature::Rarefaction { .. } => "rarefaction fan".to_string(),
            DetectedFeature::Unclear => "unclear".to_string(),
        }
    });
    Ok(Simulation {
        index,
        sentence: sentence.text,
        params: params.raw(),
        times: traj.times,
        width: traj.width,
        values: traj.values,
        ode: spec.is_ode(),
        feature,
    })
}

/// The fixed description set of a family, as a JSON array of strings.
#[wasm_bindgen]
pub fn descriptions(index: usize) -> Result<String, JsError> {
    let spec = get_equation(index).map_err(err)?;
    let set = generate_descriptions(spec).map_err(err)?;
    to_js(&set.descriptions)
}
