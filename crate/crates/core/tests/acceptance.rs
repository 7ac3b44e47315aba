//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and a
//! summary count.
//!
//! Environment:
//! * `MOLFORGE_ACCEPT_ONLY=1,4,8` runs a subset.
//! * `MOLFORGE_ACCEPT_STRICT=1` exits non-zero when any criterion fails.
//! * `MOLFORGE_ACCEPT_FULL=1` trains the generalization model for the full
//!   one-hour budget instead of the bounded default.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use molforge::catalog::{
    catalog, get_equation, sample_initial_condition, sample_parameters, spatial_grid, FluxForm, IcFamily,
    InitialCondition, ParameterSet, WaveFeature,
};
use molforge::dataset::{
    build_dataset, build_vocab, feature_keyword, generate_descriptions, load_records, plan, BuildConfig,
    DatasetManifest, MultimodalSample, Split, D_MAX,
};
use molforge::evaluation::{
    bert_style_score, evaluate_extrapolation, evaluate_split, relative_error, score_embeddings, EvalContext,
    OracleModel, TokenEmbedder, EXTRAPOLATION_FAMILIES,
};
use molforge::model::{Model, ModelConfig, TextOperatorModel};
use molforge::nn::{Attention, CrossLayer, Gradients, Graph, Mask, Mlp, ParamStore, Tensor, TransformerLayer, Var};
use molforge::numerics::fv::law_coefficients;
use molforge::numerics::{evolve_conservation, solve, solve_at, uniform_times, FvSettings};
use molforge::tokenizer::{encode_multimodal, TokenSequence, Vocab};
use molforge::training::{load_train_items, numeric_loss, text_loss, TrainItem, Trainer, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, t0: Instant) -> Result<(), String> {
    ensure(t0.elapsed() <= limit, || format!("took {:.0}s, limit {:.0}s", t0.elapsed().as_secs_f64(), limit.as_secs_f64()))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- solvers

/// Naive DFT coefficients `(a_k, b_k)` with `u_j = sum a_k cos(k w x_j) + b_k sin(k w x_j)`.
fn fourier_modes(u: &[f64], length: f64) -> Vec<(usize, f64, f64)> {
    let n = u.len();
    let x = spatial_grid(length, n);
    let w = 2.0 * PI / length;
    (0..=n / 2)
        .map(|k| {
            let (mut a, mut b) = (0.0, 0.0);
            for (xj, uj) in x.iter().zip(u) {
                a += uj * (k as f64 * w * xj).cos();
                b += uj * (k as f64 * w * xj).sin();
            }
            let s = if k == 0 || 2 * k == n { 1.0 } else { 2.0 } / n as f64;
            (k, a * s, b * s)
        })
        .collect()
}

/// Evaluates a mode sum with per-mode decay and shift at time `t`.
fn propagate(modes: &[(usize, f64, f64)], length: f64, n: usize, decay: impl Fn(f64) -> f64, shift: f64) -> Vec<f64> {
    let w = 2.0 * PI / length;
    spatial_grid(length, n)
        .iter()
        .map(|x| {
            modes
                .iter()
                .map(|&(k, a, b)| {
                    let kk = k as f64 * w;
                    decay(kk) * (a * (kk * (x - shift)).cos() + b * (kk * (x - shift)).sin())
                })
                .sum()
        })
        .collect()
}

fn criterion_1() -> Check {
    let t0 = Instant::now();
    let mut worst = [0.0f64; 3];
    for seed in 0..8 {
        // Heat: each mode decays as exp(-c k^2 t).
        let spec = get_equation(13).unwrap();
        let params = sample_parameters(spec, 0.1, &mut rng(seed));
        let ic = sample_initial_condition(spec, &mut rng(100 + seed));
        let c = params.get("c").unwrap();
        let traj = solve(spec, &params, &ic).map_err(|e| e.to_string())?;
        let modes = fourier_modes(&ic.values, spec.domain_length);
        for (i, &t) in traj.times.iter().enumerate() {
            let exact = propagate(&modes, spec.domain_length, 128, |k| (-c * k * k * t).exp(), 0.0);
            for (a, b) in traj.frame(i).iter().zip(&exact) {
                worst[0] = worst[0].max((a - b).abs());
            }
        }

        // Advection: a rigid shift by q t.
        let spec = get_equation(19).unwrap();
        let params = sample_parameters(spec, 0.1, &mut rng(seed));
        let ic = sample_initial_condition(spec, &mut rng(200 + seed));
        let q = params.get("q").unwrap();
        let traj = solve(spec, &params, &ic).map_err(|e| e.to_string())?;
        let modes = fourier_modes(&ic.values, spec.domain_length);
        for (i, &t) in traj.times.iter().enumerate() {
            let exact = propagate(&modes, spec.domain_length, 128, |_| 1.0, q * t);
            for (a, b) in traj.frame(i).iter().zip(&exact) {
                worst[1] = worst[1].max((a - b).abs());
            }
        }

        // u' = a exp(-t) + b integrates to u0 + a (1 - exp(-t)) + b t.
        let spec = get_equation(2).unwrap();
        let params = sample_parameters(spec, 0.1, &mut rng(seed));
        let ic = sample_initial_condition(spec, &mut rng(300 + seed));
        let (a, b, u0) = (params.get("a").unwrap(), params.get("b").unwrap(), ic.values[0]);
        let traj = solve(spec, &params, &ic).map_err(|e| e.to_string())?;
        for (i, &t) in traj.times.iter().enumerate() {
            let exact = u0 + a * (1.0 - (-t).exp()) + b * t;
            worst[2] = worst[2].max((traj.frame(i)[0] - exact).abs());
        }
    }
    ensure(worst[0] <= 1e-4, || format!("heat error {:.2e}", worst[0]))?;
    ensure(worst[1] <= 1e-3, || format!("advection error {:.2e}", worst[1]))?;
    ensure(worst[2] <= 1e-6, || format!("ODE error {:.2e}", worst[2]))?;

    // Inviscid Burgers from a single step on a domain wide enough that the
    // fan from the periodic wrap cannot reach the shock before t = 5.
    let mut shock_cells = 0.0f64;
    for (ul, ur) in [(1.0, 0.0), (1.2, 0.2), (0.8, 0.3)] {
        let n = 512;
        let dx = 8.0 / n as f64;
        let x0 = 4.0;
        let u0: Vec<f64> = (0..n).map(|j| if (j as f64 + 0.5) * dx < x0 { ul } else { ur }).collect();
        let times = uniform_times(5.0, 32);
        let out = evolve_conservation(&u0, dx, FluxForm::HalfSquare, 1.0, 0.0, &times, FvSettings::default())
            .map_err(|e| e.to_string())?;
        let last = &out.values[31 * n..];
        let mid = 0.5 * (ul + ur);
        let j = (n / 4..n - 1)
            .find(|&j| last[j] >= mid && last[j + 1] < mid)
            .ok_or("no shock found")?;
        let pos = (j as f64 + 1.0) * dx;
        let expected = x0 + 0.5 * (ul + ur) * 5.0;
        shock_cells = shock_cells.max((pos - expected).abs() / dx);
    }
    ensure(shock_cells <= 2.0, || format!("shock off by {shock_cells:.1} cells"))?;
    within(Duration::from_secs(60), t0)?;
    Ok(format!(
        "heat {:.1e}, advection {:.1e}, ODE {:.1e}, shock within {:.1} cells",
        worst[0], worst[1], worst[2], shock_cells
    ))
}

// ----------------------------------------------------------- conservation

fn desk_conservation_build(dir: &Path) -> Result<DatasetManifest, String> {
    let cfg = BuildConfig {
        families: (25..=52).collect(),
        ..BuildConfig::desk()
    };
    build_dataset(&cfg, dir).map_err(|e| e.to_string())
}

fn criterion_2(dir: &Path) -> Check {
    let t0 = Instant::now();
    let manifest = desk_conservation_build(dir)?;
    let mut worst = 0.0f64;
    let mut mismatch = 0.0f64;
    let mut count = 0;
    for split in Split::ALL {
        for rec in load_records(dir, &manifest, split, None).map_err(|e| e.to_string())? {
            let spec = get_equation(rec.family as usize).unwrap();
            let s = MultimodalSample::from_record(rec.clone()).map_err(|e| e.to_string())?;
            // The stored record is f32; re-solve its inputs in f64.
            let traj = solve(spec, &s.params, &s.ic).map_err(|e| e.to_string())?;
            let scale: f64 = traj.frame(0).iter().map(|v| v.abs()).sum();
            let m0: f64 = traj.frame(0).iter().sum();
            for f in traj.frames() {
                worst = worst.max((f.iter().sum::<f64>() - m0).abs() / scale);
            }
            let peak = traj.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in traj.values.iter().zip(&rec.values) {
                mismatch = mismatch.max((a - *b as f64).abs() / peak);
            }
            count += 1;
        }
    }
    ensure(mismatch < 1e-4, || format!("stored trajectories differ from re-solve by {mismatch:.1e}"))?;
    ensure(worst <= 1e-10, || format!("mass drift {worst:.2e}"))?;
    within(Duration::from_secs(120), t0)?;
    Ok(format!("{count} trajectories, max relative mass drift {worst:.1e}"))
}

// -------------------------------------------------------------- dataset

/// Lax entropy condition with speeds from central differences of the flux.
fn lax_label(flux: FluxForm, a: f64, ul: f64, ur: f64) -> WaveFeature {
    if flux == FluxForm::Linear {
        // Contact discontinuity; labelled by the sign of the jump.
        return if ul > ur { WaveFeature::OneShock } else { WaveFeature::Rarefaction };
    }
    let h = 1e-6;
    let speed = |u: f64| a * (flux.flux(u + h) - flux.flux(u - h)) / (2.0 * h);
    let sigma = a * (flux.flux(ur) - flux.flux(ul)) / (ur - ul);
    if speed(ul) > sigma && sigma > speed(ur) {
        WaveFeature::OneShock
    } else if speed(ul) < speed(ur) {
        WaveFeature::Rarefaction
    } else {
        WaveFeature::NoShocks
    }
}

fn criterion_3(conservation_dir: &Path) -> Check {
    let planned = plan(&BuildConfig::paper()).map_err(|e| e.to_string())?.parameterized_equations();
    ensure(planned == 5200, || format!("{planned} parameterized equations planned"))?;

    let cfg = BuildConfig {
        master_seed: 5,
        train_params: 1,
        train_ics_ode: 1,
        train_ics_pde: 1,
        test_params: 1,
        test_ics: 1,
        ..BuildConfig::desk()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    build_dataset(&cfg, a.path()).map_err(|e| e.to_string())?;
    build_dataset(&cfg, b.path()).map_err(|e| e.to_string())?;
    let mut files = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        let same = fs::read(a.path().join(&name)).unwrap() == fs::read(b.path().join(&name)).unwrap_or_default();
        ensure(same, || format!("{name:?} differs between builds"))?;
        files += 1;
    }

    let mut fewest = usize::MAX;
    for spec in catalog() {
        let set = generate_descriptions(spec).map_err(|e| e.to_string())?;
        let distinct: HashSet<&String> = set.descriptions.iter().collect();
        fewest = fewest.min(distinct.len());
    }
    ensure(fewest >= 50, || format!("a family has only {fewest} descriptions"))?;

    let manifest = DatasetManifest::read(conservation_dir).map_err(|e| e.to_string())?;
    let mut labelled = 0;
    for split in Split::ALL {
        for rec in load_records(conservation_dir, &manifest, split, None).map_err(|e| e.to_string())? {
            let spec = get_equation(rec.family as usize).unwrap();
            if spec.base_index.is_none() {
                continue;
            }
            let s = MultimodalSample::from_record(rec).map_err(|e| e.to_string())?;
            let (flux, a, _) = law_coefficients(spec, &s.params).map_err(|e| e.to_string())?;
            let (ul, ur) = (s.ic.values[0], s.ic.values[s.ic.values.len() - 1]);
            let claimed = spec.feature.unwrap();
            let oracle = lax_label(flux, a, ul, ur);
            ensure(oracle == claimed, || {
                format!("family {} sample {}: labelled {claimed:?}, oracle {oracle:?}", s.family, s.sample)
            })?;
            ensure(s.description.to_lowercase().contains(feature_keyword(claimed)), || {
                format!("family {} description lacks its feature", s.family)
            })?;
            labelled += 1;
        }
    }
    Ok(format!(
        "5200 planned, {files} files byte-identical, >= {fewest} descriptions per family, {labelled} step samples match the oracle"
    ))
}

// ------------------------------------------------------------- gradients

/// Central-difference check of every parameter and input gradient. Large
/// tensors are sampled. Returns the largest relative error.
fn gradcheck<S>(
    state: &mut S,
    store_of: fn(&mut S) -> &mut ParamStore<f64>,
    inputs: &mut [Tensor<f64>],
    loss: impl for<'p> Fn(&mut Graph<'p, f64>, &'p S, &[Var]) -> Var,
) -> f64 {
    let eval = |state: &S, inputs: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let l = loss(&mut g, state, &vars);
        g.value(l).data[0]
    };
    let mut param_grads = Gradients::zeros_like(store_of(state));
    let input_grads: Vec<Tensor<f64>> = {
        let st: &S = state;
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input_with_grad(t.clone())).collect();
        let l = loss(&mut g, st, &vars);
        g.backward(l).unwrap();
        g.accumulate_param_grads(&mut param_grads);
        vars.iter()
            .zip(inputs.iter())
            .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows, t.cols)))
            .collect()
    };
    let mut pick = rng(99);
    let mut worst = 0.0f64;
    let mut compare = |a: f64, n: f64| {
        let diff = (a - n).abs();
        // Below 1e-10 the difference is at the stencil's rounding level, and
        // exactly vanishing gradients (a key bias under softmax) would
        // otherwise score 1.
        let rel = if diff <= 1e-10 { 0.0 } else { diff / a.abs().max(n.abs()) };
        worst = worst.max(rel);
    };
    let ids: Vec<_> = store_of(state).ids().collect();
    for id in ids {
        let len = store_of(state).get(id).data.len();
        let coords: Vec<usize> = if len <= 24 { (0..len).collect() } else { (0..24).map(|_| pick.gen_range(0..len)).collect() };
        for k in coords {
            let orig = store_of(state).get(id).data[k];
            let mut at = |dx: f64| {
                store_of(state).get_mut(id).data[k] = orig + dx;
                let v = eval(state, inputs);
                store_of(state).get_mut(id).data[k] = orig;
                v
            };
            let n = stencil(&mut at);
            let a = param_grads.get(id).data[k];
            compare(a, n);
        }
    }
    for i in 0..inputs.len() {
        let len = inputs[i].data.len();
        let coords: Vec<usize> = if len <= 24 { (0..len).collect() } else { (0..24).map(|_| pick.gen_range(0..len)).collect() };
        for k in coords {
            let orig = inputs[i].data[k];
            let mut at = |dx: f64| {
                inputs[i].data[k] = orig + dx;
                let v = eval(state, inputs);
                inputs[i].data[k] = orig;
                v
            };
            let n = stencil(&mut at);
            let a = input_grads[i].data[k];
            compare(a, n);
        }
    }
    worst
}

/// Fourth-order central difference, `f(x + dx)` given as `at(dx)`.
fn stencil(at: &mut impl FnMut(f64) -> f64) -> f64 {
    let h = 1e-3;
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

fn store_itself(s: &mut ParamStore<f64>) -> &mut ParamStore<f64> {
    s
}

fn model_store(m: &mut Model<f64>) -> &mut ParamStore<f64> {
    &mut m.params
}

fn random_tensor(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| r.gen_range(-scale..scale))
}

/// `sum(out * w)` for a fixed random `w`, so every output entry matters.
fn project(g: &mut Graph<'_, f64>, out: Var, seed: u64) -> Var {
    let (rows, cols) = g.shape(out);
    let w = g.input(random_tensor(&mut rng(seed), rows, cols, 1.0));
    let m = g.mul(out, w).unwrap();
    g.sum(m)
}

fn live_model(vocab: &Vocab, d: usize, seed: u64) -> Model<f64> {
    let cfg = ModelConfig {
        d_model: d,
        heads: 2,
        layers: 1,
        decoder_layers: 1,
        ..ModelConfig::small(vocab.len())
    };
    let mut m = Model::<f64>::new(cfg, seed).unwrap();
    let head = m.output_head();
    let mut r = rng(seed + 1);
    for id in [head.w, head.b] {
        for v in &mut m.params.get_mut(id).data {
            *v = r.gen_range(-0.5..0.5);
        }
    }
    m
}

fn sequence(family: usize, vocab: &Vocab, text: Option<&str>, seed: u64) -> TokenSequence {
    let spec = get_equation(family).unwrap();
    let params = sample_parameters(spec, 0.1, &mut rng(seed));
    let ic = sample_initial_condition(spec, &mut rng(seed + 1));
    let sentence = molforge::catalog::render_input_sentence(spec, &params, &ic).unwrap();
    encode_multimodal(&sentence, text, vocab).unwrap()
}

fn criterion_4() -> Check {
    let t0 = Instant::now();
    let mut r = rng(4);
    let mut results: Vec<(&str, f64)> = Vec::new();

    let mut store = ParamStore::<f64>::new();
    let mlp = Mlp::fan_in(&mut store, "mlp", (8, 16, 12), &mut r);
    let mut x = [random_tensor(&mut r, 5, 8, 1.0)];
    let e = gradcheck(&mut store, store_itself, &mut x, |g, s, v| {
        let y = mlp.forward(g, s, v[0]).unwrap();
        project(g, y, 1)
    });
    results.push(("numeric MLP", e));

    let mut store = ParamStore::<f64>::new();
    let attn = Attention::new(&mut store, "attn", 16, 4, 0.3, &mut r);
    let layer = TransformerLayer::new(&mut store, "layer", 16, 4, 32, 0.3, &mut r);
    let mut x = [random_tensor(&mut r, 6, 16, 1.0)];
    let e = gradcheck(&mut store, store_itself, &mut x, |g, s, v| {
        let a = attn.forward(g, s, v[0], v[0], v[0], &Mask::Causal).unwrap();
        let y = layer.forward(g, s, a, &Mask::Causal).unwrap();
        project(g, y, 2)
    });
    results.push(("self-attention", e));

    let mut store = ParamStore::<f64>::new();
    let cross = CrossLayer::new(&mut store, "cross", 16, 4, 32, 0.3, &mut r);
    let mut x = [random_tensor(&mut r, 5, 16, 1.0), random_tensor(&mut r, 7, 16, 1.0)];
    let e = gradcheck(&mut store, store_itself, &mut x, |g, s, v| {
        let y = cross.forward(g, s, v[0], v[1]).unwrap();
        project(g, y, 3)
    });
    results.push(("cross-attention decoder layer", e));

    let vocab = build_vocab().unwrap();
    let mut model = live_model(&vocab, 16, 7);
    let targets: Vec<usize> = (0..5).map(|_| r.gen_range(0..vocab.len())).collect();
    let mut x = [random_tensor(&mut r, 5, 16, 1.0)];
    let e = gradcheck(&mut model, model_store, &mut x, |g, m, v| {
        let logits = m.text_logits(g, v[0]).unwrap();
        text_loss(g, logits, &targets).unwrap()
    });
    results.push(("text head", e));

    let mut empty = ParamStore::<f64>::new();
    let truth: Vec<[f64; D_MAX]> = (0..6).map(|_| [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 0.0]).collect();
    let mask = [true, true, false];
    let mut x = [random_tensor(&mut r, 6, 4, 1.0)];
    let e = gradcheck(&mut empty, store_itself, &mut x, |g, _, v| numeric_loss(g, v[0], &truth, &mask).unwrap());
    results.push(("numeric loss", e));

    let targets: Vec<usize> = (0..4).map(|_| r.gen_range(0..9)).collect();
    let mut x = [random_tensor(&mut r, 4, 9, 3.0)];
    let e = gradcheck(&mut empty, store_itself, &mut x, |g, _, v| text_loss(g, v[0], &targets).unwrap());
    results.push(("text loss", e));

    // Whole training loss through the model, sampled coordinates.
    let seq = sequence(13, &vocab, Some("the solution decays smoothly"), 3);
    let queries = [[0.0, 0.25], [0.5, 0.5], [1.0, 0.875]];
    let truth: Vec<[f64; D_MAX]> = queries.iter().map(|q| [(PI * q[1]).sin() + 0.1, 0.0, 0.0]).collect();
    let mut model = live_model(&vocab, 16, 8);
    let e = gradcheck(&mut model, model_store, &mut [], |g, m, _| {
        let out = m.forward_train(g, &seq, &queries).unwrap();
        let n = numeric_loss(g, out.numeric, &truth, &[true, false, false]).unwrap();
        let t = text_loss(g, out.logits, &out.targets).unwrap();
        molforge::training::total_loss(g, n, t, 1.0, 0.5).unwrap()
    });
    results.push(("full model", e));

    let worst = results.iter().fold(0.0f64, |m, (_, e)| m.max(*e));
    let detail = results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(worst <= 1e-4, || detail.clone())?;
    within(Duration::from_secs(60), t0)?;
    Ok(detail)
}

// ---------------------------------------------------------- architecture

fn criterion_5() -> Check {
    let vocab = build_vocab().unwrap();
    let m = live_model(&vocab, 32, 11).cast::<f32>();
    let mut r = rng(5);

    for family in [2, 13, 27, 40] {
        let prompt = sequence(family, &vocab, None, family as u64);
        let qs: Vec<[f64; 2]> = (0..9).map(|_| [r.gen::<f64>(), r.gen::<f64>()]).collect();
        let all = m.predict(&prompt, &qs).map_err(|e| e.to_string())?;
        for (i, q) in qs.iter().enumerate() {
            let one = m.predict(&prompt, &[*q]).map_err(|e| e.to_string())?;
            ensure(one.row(0) == all.row(i), || format!("family {family}: query {i} depends on the batch"))?;
        }
        let rev: Vec<_> = qs.iter().rev().copied().collect();
        let back = m.predict(&prompt, &rev).map_err(|e| e.to_string())?;
        for i in 0..qs.len() {
            ensure(back.row(i) == all.row(qs.len() - 1 - i), || "query order changes outputs".into())?;
        }
    }

    let a = sequence(13, &vocab, Some("the solution decays smoothly"), 1);
    for k in [1, a.prompt_len - 1, a.prompt_len + 2] {
        let mut b = a.clone();
        b.ids[k] = if b.ids[k] == 10 { 11 } else { 10 };
        b.payloads.retain(|(p, _)| *p != k);
        let mut g = Graph::new();
        let ha = m.encode(&mut g, &a).map_err(|e| e.to_string())?;
        let hb = m.encode(&mut g, &b).map_err(|e| e.to_string())?;
        for i in 0..k {
            ensure(g.value(ha).row(i) == g.value(hb).row(i), || format!("changing token {k} moved row {i}"))?;
        }
        ensure(g.value(ha).row(k) != g.value(hb).row(k), || format!("token {k} has no effect"))?;
    }

    let qs = [[0.25, 0.5], [1.0, 0.125], [0.0, 0.0]];
    let run = |text: &str| -> Result<Tensor<f32>, String> {
        let s = sequence(20, &vocab, Some(text), 2);
        let mut g = Graph::new();
        let out = m.forward_train(&mut g, &s, &qs).map_err(|e| e.to_string())?;
        Ok(g.value(out.numeric).clone())
    };
    let na = run("the solution decays smoothly")?;
    let nb = run("a shock forms in the wave")?;
    ensure(na == nb, || "text target changes the numeric output".into())?;
    let direct = m.predict(&sequence(20, &vocab, None, 2), &qs).map_err(|e| e.to_string())?;
    ensure(na == direct, || "training and inference numeric paths differ".into())?;

    let mut worst = 0.0f64;
    for (rows, cols, mask) in [
        (7, 7, Mask::Causal),
        (5, 9, Mask::Causal),
        (6, 6, Mask::None),
        (3, 4, Mask::Allowed(vec![true, false, true, false, false, true, true, true, true, false, false, false])),
    ] {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::from_fn(rows, cols, |_, _| r.gen_range(-40.0f32..40.0)));
        let p = g.softmax(x, &mask).map_err(|e| e.to_string())?;
        let p = g.value(p);
        for i in 0..rows {
            let row = p.row(i);
            if row.iter().all(|v| *v == 0.0) {
                continue; // fully masked row
            }
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("softmax row sum off by {worst:.1e}"))?;
    Ok(format!("queries bit-equal, causal rows bit-equal, text isolated, softmax rows within {worst:.1e}"))
}

// --------------------------------------------------------------- overfit

fn one_per_family(dir: &Path) -> Result<(DatasetManifest, Vocab, Vec<TrainItem>), String> {
    let cfg = BuildConfig {
        master_seed: 6,
        train_params: 1,
        train_ics_ode: 1,
        train_ics_pde: 1,
        test_params: 0,
        test_ics: 0,
        ..BuildConfig::desk()
    };
    let manifest = build_dataset(&cfg, dir).map_err(|e| e.to_string())?;
    let vocab = manifest.vocab(dir).map_err(|e| e.to_string())?;
    let (items, _) = load_train_items(dir, &manifest, Split::Train, &vocab).map_err(|e| e.to_string())?;
    Ok((manifest, vocab, items))
}

/// Relative error over the full query grid of each item, averaged.
fn full_grid_error(model: &Model<f32>, items: &[TrainItem]) -> Result<f64, String> {
    let mut total = 0.0;
    for it in items {
        let (queries, targets) = it.subsample(usize::MAX, &mut rng(0));
        let pred = model.predict(&it.seq.prompt(), &queries).map_err(|e| e.to_string())?;
        let mut truth = Vec::new();
        let mut p = Vec::new();
        for (q, y) in targets.iter().enumerate() {
            for c in 0..D_MAX {
                if it.mask[c] {
                    truth.push(y[c]);
                    p.push(pred.row(q)[c] as f64);
                }
            }
        }
        total += relative_error(&truth, &p).map_err(|e| e.to_string())?;
    }
    Ok(total / items.len() as f64)
}

fn criterion_6() -> Check {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (_, vocab, items) = one_per_family(dir.path())?;
    let picked: Vec<TrainItem> = (0..32).map(|i| items[i * items.len() / 32].clone()).collect();
    let classes: HashSet<_> = picked.iter().map(|it| get_equation(it.family).unwrap().class).collect();
    ensure(classes.len() >= 4, || "subset does not mix classes".into())?;

    let model = Model::<f32>::new(ModelConfig::small(vocab.len()), 1).map_err(|e| e.to_string())?;
    let config = TrainingConfig {
        max_steps: Some(2000),
        epochs: usize::MAX,
        eval_every: 0,
        ..TrainingConfig::desk()
    };
    let mut trainer = Trainer::new(model, config);
    trainer.fit(&picked, &[], None, |_, _| {}).map_err(|e| e.to_string())?;
    let err = full_grid_error(&trainer.model, &picked)?;
    let mut exact = 0;
    for it in &picked {
        let g = trainer.model.generate(&it.seq.prompt(), 96).map_err(|e| e.to_string())?;
        let target = it.seq.target_ids();
        if g.ids == target[..target.len() - 1] {
            exact += 1;
        }
    }
    let rate = exact as f64 / picked.len() as f64;
    let detail = format!(
        "train relative error {:.1}%, exact decode {exact}/{}, {:.0}s",
        100.0 * err,
        picked.len(),
        t0.elapsed().as_secs_f64()
    );
    ensure(err < 0.05 && rate >= 0.95, || detail.clone())?;
    within(Duration::from_secs(600), t0)?;
    Ok(detail)
}

// ------------------------------------------------------- generalization

fn criterion_7() -> Check {
    let full = std::env::var("MOLFORGE_ACCEPT_FULL").is_ok_and(|v| v == "1");
    let dir = tempfile::tempdir().unwrap();
    let manifest = build_dataset(&BuildConfig::desk(), dir.path()).map_err(|e| e.to_string())?;
    let vocab = manifest.vocab(dir.path()).map_err(|e| e.to_string())?;
    let (items, _) = load_train_items(dir.path(), &manifest, Split::Train, &vocab).map_err(|e| e.to_string())?;
    let model = Model::<f32>::new(ModelConfig::small(vocab.len()), 1).map_err(|e| e.to_string())?;
    let steps = if full { 20_000 } else { 1_500 };
    let config = TrainingConfig {
        max_steps: Some(steps),
        epochs: usize::MAX,
        eval_every: 0,
        ..TrainingConfig::desk()
    };
    let mut trainer = Trainer::new(model, config);
    let t_train = Instant::now();
    trainer.fit(&items, &[], None, |_, _| {}).map_err(|e| e.to_string())?;
    let train_secs = t_train.elapsed().as_secs_f64();
    let op = TextOperatorModel::new(trainer.model, vocab);
    let ctx = EvalContext {
        dir: dir.path(),
        manifest: &manifest,
        embedder: None,
        model_hash: "acceptance".into(),
        families: Vec::new(),
    };
    let mut errs = Vec::new();
    for split in [Split::TestId, Split::Ood20, Split::Ood30] {
        errs.push(evaluate_split(&op, &ctx, split).map_err(|e| e.to_string())?.total_average);
    }
    let detail = format!(
        "{steps} steps in {train_secs:.0}s{}: ID {:.4}, OOD20 {:.4}, OOD30 {:.4}",
        if full { "" } else { " (bounded run)" },
        errs[0],
        errs[1],
        errs[2]
    );
    ensure(errs[0] < errs[1] && errs[1] < errs[2], || detail.clone())?;
    ensure(train_secs <= 3600.0, || format!("training took {train_secs:.0}s"))?;
    Ok(detail)
}

// --------------------------------------------------------------- metrics

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn brute_force(x: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, f64, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut r = 0.0;
    for xi in x {
        let mut best = f64::NEG_INFINITY;
        for yj in y {
            best = best.max(dot(xi, yj));
        }
        r += best;
    }
    r /= x.len() as f64;
    let mut p = 0.0;
    for yj in y {
        let mut best = f64::NEG_INFINITY;
        for xi in x {
            best = best.max(dot(xi, yj));
        }
        p += best;
    }
    p /= y.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

struct Table(BTreeMap<String, Vec<f64>>);

impl TokenEmbedder for Table {
    fn embed(&self, token: &str) -> Vec<f64> {
        self.0[token].clone()
    }
}

fn criterion_8() -> Check {
    let mut r = rng(8);
    for i in 0..1000 {
        let n = r.gen_range(1..64);
        let u: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let c: f64 = r.gen_range(0.01..100.0) * if r.gen() { 1.0 } else { -1.0 };
        let e = relative_error(&u, &p).map_err(|e| e.to_string())?;
        let cu: Vec<f64> = u.iter().map(|v| c * v).collect();
        let cp: Vec<f64> = p.iter().map(|v| c * v).collect();
        let ec = relative_error(&cu, &cp).map_err(|e| e.to_string())?;
        ensure((ec - e).abs() <= 1e-12 * e.max(1.0), || format!("pair {i}: not scale invariant"))?;
        ensure(e > 0.0, || format!("pair {i}: distinct vectors score zero"))?;
        ensure(relative_error(&u, &u).unwrap() == 0.0, || format!("pair {i}: equal vectors score non-zero"))?;
    }

    let words: Vec<&str> = "the solution forms one shock moving to the right".split(' ').collect();
    let table = Table(
        words
            .iter()
            .map(|w| (w.to_string(), unit((0..8).map(|_| r.gen_range(-1.0..1.0)).collect())))
            .collect(),
    );
    let s = bert_style_score(&words, &words, &table).map_err(|e| e.to_string())?;
    ensure(
        (s.precision - 1.0).abs() < 1e-12 && (s.recall - 1.0).abs() < 1e-12 && (s.f1 - 1.0).abs() < 1e-12,
        || format!("identical sentences score {s:?}"),
    )?;

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let set = |r: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            let n = r.gen_range(1..12);
            (0..n).map(|_| unit((0..6).map(|_| r.gen_range(-1.0..1.0)).collect())).collect()
        };
        let (x, y) = (set(&mut r), set(&mut r));
        let s = score_embeddings(&x, &y).map_err(|e| e.to_string())?;
        let (p, rc, f) = brute_force(&x, &y);
        worst = worst.max((s.precision - p).abs()).max((s.recall - rc).abs()).max((s.f1 - f).abs());
        if s.precision > 0.0 && s.recall > 0.0 {
            ensure(
                s.f1 <= s.precision.max(s.recall) + 1e-12 && s.f1 >= s.precision.min(s.recall) - 1e-12,
                || "F1 outside [min(P,R), max(P,R)]".into(),
            )?;
        }
    }
    ensure(worst <= 1e-12, || format!("brute-force mismatch {worst:.1e}"))?;
    Ok(format!("1000 pairs, identical sentences (1,1,1), oracle agreement {worst:.1e}"))
}

// --------------------------------------------------------- extrapolation

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BuildConfig {
        master_seed: 9,
        train_params: 1,
        train_ics_ode: 1,
        train_ics_pde: 1,
        test_params: 2,
        test_ics: 2,
        families: EXTRAPOLATION_FAMILIES.to_vec(),
        ..BuildConfig::desk()
    };
    let manifest = build_dataset(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let ctx = EvalContext {
        dir: dir.path(),
        manifest: &manifest,
        embedder: None,
        model_hash: "oracle".into(),
        families: Vec::new(),
    };
    let rep = evaluate_extrapolation(&OracleModel, &ctx, Split::TestId).map_err(|e| e.to_string())?;
    let worst = rep.per_sample.iter().fold(0.0f64, |m, s| m.max(s.rel_err));
    ensure(rep.samples == 20, || format!("{} samples evaluated", rep.samples))?;
    ensure(worst < 1e-6, || format!("stage-2 error {worst:.1e}"))?;

    // The stage-2 truth is a restart from the state at T; check it against a
    // single solve over [0, 2T] where the dynamics are autonomous.
    let spec = get_equation(13).unwrap();
    let params: ParameterSet = spec.nominal_parameters();
    let ic = sample_initial_condition(spec, &mut rng(9));
    let t = spec.time_horizon;
    let long = solve_at(spec, &params, &ic, &[0.0, 2.0 * t]).map_err(|e| e.to_string())?;
    let mid = solve_at(spec, &params, &ic, &[0.0, t]).map_err(|e| e.to_string())?;
    let restart = InitialCondition::from_values(IcFamily::SineMixture, mid.last_frame().to_vec());
    let two = solve_at(spec, &params, &restart, &[0.0, t]).map_err(|e| e.to_string())?;
    let gap = relative_error(long.last_frame(), two.last_frame()).map_err(|e| e.to_string())?;
    ensure(gap < 1e-8, || format!("restart differs from a long solve by {gap:.1e}"))?;
    Ok(format!("{} samples over {:?}, max stage-2 error {worst:.1e}", rep.samples, EXTRAPOLATION_FAMILIES))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("MOLFORGE_ACCEPT_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let run = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    // Criteria 2 and 3 share the conservation-law desk build.
    let conservation = tempfile::tempdir().unwrap();

    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Check + '_>)> = vec![
        (1, "solver oracles", Box::new(criterion_1)),
        (2, "conservation in a desk build", Box::new(|| criterion_2(conservation.path()))),
        (
            3,
            "dataset integrity",
            Box::new(|| {
                if !conservation.path().join("manifest.json").exists() {
                    desk_conservation_build(conservation.path())?;
                }
                criterion_3(conservation.path())
            }),
        ),
        (4, "gradient checks", Box::new(criterion_4)),
        (5, "architectural invariants", Box::new(criterion_5)),
        (6, "overfit 32 samples", Box::new(criterion_6)),
        (7, "ID < OOD20 < OOD30 after desk training", Box::new(criterion_7)),
        (8, "metric properties", Box::new(criterion_8)),
        (9, "extrapolation with the oracle", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (n, name, f) in &criteria {
        if !run(*n) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {n} ({name}): {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {d} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {failed} criterion(s) failed");
    // Failing criteria are reported above; the exit status only reflects
    // them on request so the rest of the workspace tests still run.
    if failed > 0 && std::env::var("MOLFORGE_ACCEPT_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
