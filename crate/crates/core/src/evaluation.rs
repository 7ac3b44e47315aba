//! Metrics and evaluation protocols.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{get_equation, CatalogError, EquationClass, EquationSpec, InitialCondition, ParameterSet};
use crate::dataset::{
    feature_keyword, generate_descriptions, load_records, DatasetError, DatasetManifest, MultimodalSample, Split, D_MAX,
};
use crate::model::{ModelError, OperatorModel};
use crate::numerics::{solve_at, uniform_times, SolverError, SNAPSHOTS};
use crate::ordered_map;
use crate::rng::{purpose_stream, StreamPurpose};
use crate::tokenizer::{split_words, Vocab};
use crate::catalog::WaveFeature;
use rand::Rng;

/// Families with a time-extrapolation protocol.
pub const EXTRAPOLATION_FAMILIES: [usize; 5] = [13, 19, 24, 29, 30];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference has zero norm")]
    ZeroNormTarget,
    #[error("prediction has {pred} values, reference {truth}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("cannot score an empty sentence")]
    EmptySentence,
    #[error("family {0} has no extrapolation protocol")]
    UnsupportedFamily(usize),
    #[error("no samples evaluated")]
    NothingEvaluated,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `|pred - truth| / |truth|` over the flattened values.
pub fn relative_error(truth: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(EvalError::ZeroNormTarget);
    }
    let num: f64 = truth.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Maps a token to a unit vector. Unknown tokens may return zeros.
pub trait TokenEmbedder: Sync {
    fn embed(&self, token: &str) -> Vec<f64>;
}

/// Greedy-alignment precision/recall/F1 over token embeddings. Recall
/// averages, over reference tokens, the best dot product with any candidate
/// token; precision does the same over candidate tokens.
pub fn score_embeddings(reference: &[Vec<f64>], candidate: &[Vec<f64>]) -> Result<TextScores, EvalError> {
    if reference.is_empty() || candidate.is_empty() {
        return Err(EvalError::EmptySentence);
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let best = |x: &[f64], ys: &[Vec<f64>]| ys.iter().map(|y| dot(x, y)).fold(f64::NEG_INFINITY, f64::max);
    let recall = reference.iter().map(|x| best(x, candidate)).sum::<f64>() / reference.len() as f64;
    let precision = candidate.iter().map(|y| best(y, reference)).sum::<f64>() / candidate.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(TextScores { precision, recall, f1 })
}

pub fn bert_style_score<E: TokenEmbedder + ?Sized>(
    reference: &[&str],
    candidate: &[&str],
    embedder: &E,
) -> Result<TextScores, EvalError> {
    let r: Vec<_> = reference.iter().map(|t| embedder.embed(t)).collect();
    let c: Vec<_> = candidate.iter().map(|t| embedder.embed(t)).collect();
    score_embeddings(&r, &c)
}

/// Unit-normalized rows of a token embedding table.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    rows: HashMap<String, Vec<f64>>,
    dim: usize,
}

impl TableEmbedder {
    /// `table` is `[vocab x d]`, row-major.
    pub fn new(vocab: &Vocab, table: &[f32], d: usize) -> Self {
        let mut rows = HashMap::new();
        for id in 0..vocab.len() as u32 {
            let Ok(tok) = vocab.token(id) else { continue };
            let start = id as usize * d;
            let Some(row) = table.get(start..start + d) else { continue };
            let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            let unit = if norm > 0.0 {
                row.iter().map(|&v| v as f64 / norm).collect()
            } else {
                vec![0.0; d]
            };
            rows.insert(tok.to_string(), unit);
        }
        Self { rows, dim: d }
    }
}

impl TokenEmbedder for TableEmbedder {
    fn embed(&self, token: &str) -> Vec<f64> {
        self.rows.get(token).cloned().unwrap_or_else(|| vec![0.0; self.dim])
    }
}

/// Flattened valid channels of a `[n x D_MAX]` prediction list.
fn flatten(rows: &[[f64; D_MAX]], mask: &[bool; D_MAX]) -> Vec<f64> {
    rows.iter()
        .flat_map(|r| r.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub family: usize,
    pub sample: u32,
    pub class: EquationClass,
    pub rel_err: f64,
    pub text: Option<TextScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: EquationClass,
    pub samples: usize,
    pub mean_rel_err: f64,
    pub text: Option<TextScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub classes: Vec<ClassRow>,
    /// Mean of the per-class means.
    pub total_average: f64,
    pub samples: usize,
    /// Samples dropped because a prediction was not finite.
    pub excluded_nonfinite: usize,
    pub model_hash: String,
    pub dataset_seed: u64,
    pub per_sample: Vec<SampleResult>,
}

impl EvalReport {
    /// Per-sample means within a class, then the mean over classes.
    pub fn aggregate(protocol: &str, per_sample: Vec<SampleResult>, excluded: usize, model_hash: &str, seed: u64) -> Self {
        let mut classes = Vec::new();
        for class in EquationClass::ALL {
            let rows: Vec<&SampleResult> = per_sample.iter().filter(|r| r.class == class).collect();
            if rows.is_empty() {
                continue;
            }
            let n = rows.len() as f64;
            let scored: Vec<TextScores> = rows.iter().filter_map(|r| r.text).collect();
            let text = (!scored.is_empty()).then(|| {
                let m = scored.len() as f64;
                TextScores {
                    precision: scored.iter().map(|s| s.precision).sum::<f64>() / m,
                    recall: scored.iter().map(|s| s.recall).sum::<f64>() / m,
                    f1: scored.iter().map(|s| s.f1).sum::<f64>() / m,
                }
            });
            classes.push(ClassRow {
                class,
                samples: rows.len(),
                mean_rel_err: rows.iter().map(|r| r.rel_err).sum::<f64>() / n,
                text,
            });
        }
        let total_average = if classes.is_empty() {
            f64::NAN
        } else {
            classes.iter().map(|c| c.mean_rel_err).sum::<f64>() / classes.len() as f64
        };
        Self {
            protocol: protocol.to_string(),
            total_average,
            samples: per_sample.len(),
            excluded_nonfinite: excluded,
            model_hash: model_hash.to_string(),
            dataset_seed: seed,
            classes,
            per_sample,
        }
    }

    /// One row per class plus the total; `#` header lines carry provenance.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# protocol={} model={} dataset_seed={}", self.protocol, self.model_hash, self.dataset_seed);
        let _ = writeln!(s, "# class means average per-sample errors; total is the mean of class means");
        let _ = writeln!(s, "# excluded_nonfinite={}", self.excluded_nonfinite);
        let _ = writeln!(s, "class,samples,rel_err,precision,recall,f1");
        let fmt = |t: Option<TextScores>| match t {
            Some(t) => format!("{:.6},{:.6},{:.6}", t.precision, t.recall, t.f1),
            None => ",,".to_string(),
        };
        for c in &self.classes {
            let _ = writeln!(s, "{},{},{:.6e},{}", c.class.label(), c.samples, c.mean_rel_err, fmt(c.text));
        }
        let _ = writeln!(s, "Total Average,{},{:.6e},,,", self.samples, self.total_average);
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_csv()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Model predictions for one sample on its full query grid.
pub struct Prediction {
    pub sample: MultimodalSample,
    pub values: Vec<[f64; D_MAX]>,
    pub description: Option<String>,
}

fn predict_sample(model: &dyn OperatorModel, s: MultimodalSample, text: bool) -> Result<Prediction, EvalError> {
    let spec = get_equation(s.family)?;
    let values = model.predict(spec, &s.params, &s.ic, &s.queries)?;
    let description = if text { model.describe(spec, &s.params, &s.ic)? } else { None };
    Ok(Prediction {
        sample: s,
        values,
        description,
    })
}

/// Seeded choice among the family's descriptions.
pub fn reference_description(spec: &EquationSpec, seed: u64, split: Split, sample: u32) -> Result<String, EvalError> {
    let set = generate_descriptions(spec)?;
    let mut rng = purpose_stream(seed, spec.index, StreamPurpose::Reference, ((split.code() as u64) << 32) | sample as u64, 0);
    let k = rng.gen_range(0..set.descriptions.len());
    Ok(set.descriptions[k].clone())
}

/// Everything a protocol run needs besides the model.
pub struct EvalContext<'a> {
    pub dir: &'a Path,
    pub manifest: &'a DatasetManifest,
    /// Scores generated text when present.
    pub embedder: Option<&'a dyn TokenEmbedder>,
    pub model_hash: String,
    /// Restricts evaluation to these families; empty means all.
    pub families: Vec<usize>,
}

impl EvalContext<'_> {
    fn families(&self) -> Vec<usize> {
        self.manifest
            .families
            .iter()
            .map(|f| f.index)
            .filter(|i| self.families.is_empty() || self.families.contains(i))
            .collect()
    }

    fn load(&self, split: Split, family: usize) -> Result<Vec<MultimodalSample>, EvalError> {
        match load_records(self.dir, self.manifest, split, Some(family)) {
            Ok(recs) => recs
                .into_iter()
                .map(|r| MultimodalSample::from_record(r).map_err(EvalError::from))
                .collect(),
            Err(DatasetError::MissingSplit(_)) => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }
}

fn finite(v: &[[f64; D_MAX]]) -> bool {
    v.iter().flatten().all(|x| x.is_finite())
}

/// In-distribution or OOD protocol on one split.
pub fn evaluate_split(model: &dyn OperatorModel, ctx: &EvalContext<'_>, split: Split) -> Result<EvalReport, EvalError> {
    let seed = ctx.manifest.master_seed;
    let mut results = Vec::new();
    let mut excluded = 0;
    for family in ctx.families() {
        let spec = get_equation(family)?;
        let samples = ctx.load(split, family)?;
        let text = ctx.embedder.is_some();
        let rows = ordered_map(&samples, |s| -> Result<Option<SampleResult>, EvalError> {
            let p = predict_sample(model, s.clone(), text)?;
            if !finite(&p.values) {
                return Ok(None);
            }
            let rel_err = relative_error(&flatten(&s.targets, &s.mask), &flatten(&p.values, &s.mask))?;
            let text = match (ctx.embedder, &p.description) {
                (Some(emb), Some(generated)) => {
                    let reference = reference_description(spec, seed, split, s.sample)?;
                    let (r, c) = (split_words(&reference), split_words(generated));
                    if c.is_empty() {
                        Some(TextScores {
                            precision: 0.0,
                            recall: 0.0,
                            f1: 0.0,
                        })
                    } else {
                        Some(bert_style_score(&r, &c, emb)?)
                    }
                }
                _ => None,
            };
            Ok(Some(SampleResult {
                family,
                sample: s.sample,
                class: spec.class,
                rel_err,
                text,
            }))
        });
        for r in rows {
            match r? {
                Some(r) => results.push(r),
                None => excluded += 1,
            }
        }
    }
    if results.is_empty() {
        return Err(EvalError::NothingEvaluated);
    }
    Ok(EvalReport::aggregate(split.name(), results, excluded, &ctx.model_hash, seed))
}

/// Both stages of a time-extrapolation run for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    /// Stage-1 prediction on `[0, T]`, `[times x width]`.
    pub stage1: Vec<f64>,
    /// Stage-2 prediction on `[T, 2T]`.
    pub stage2: Vec<f64>,
    /// Reference on `[T, 2T]`.
    pub truth: Vec<f64>,
}

/// Runs the two-stage protocol for one PDE sample. Stage 2 restarts the
/// model from its own state at `T` and queries it at `t - T`.
pub fn extrapolate_sample(
    model: &dyn OperatorModel,
    spec: &EquationSpec,
    params: &ParameterSet,
    ic: &InitialCondition,
) -> Result<Extrapolation, EvalError> {
    if !EXTRAPOLATION_FAMILIES.contains(&spec.index) {
        return Err(EvalError::UnsupportedFamily(spec.index));
    }
    let horizon = spec.time_horizon;
    let times = uniform_times(horizon, SNAPSHOTS);
    let width = spec.frame_width();
    let queries: Vec<[f64; 2]> = times
        .iter()
        .flat_map(|&t| (0..width).map(move |j| [t / horizon, j as f64 / width as f64]))
        .collect();
    let stage1: Vec<f64> = model.predict(spec, params, ic, &queries)?.iter().map(|y| y[0]).collect();
    let last = &stage1[(times.len() - 1) * width..];
    let restart = InitialCondition::from_values(ic.kind, last.to_vec());
    let stage2: Vec<f64> = model.predict(spec, params, &restart, &queries)?.iter().map(|y| y[0]).collect();

    // Reference: solve to T, then restart the solver from the true state.
    let first = solve_at(spec, params, ic, &times)?;
    let at_t = InitialCondition::from_values(ic.kind, first.values[(times.len() - 1) * width..].to_vec());
    let truth = solve_at(spec, params, &at_t, &times)?.values;
    Ok(Extrapolation { stage1, stage2, truth })
}

pub fn evaluate_extrapolation(model: &dyn OperatorModel, ctx: &EvalContext<'_>, split: Split) -> Result<EvalReport, EvalError> {
    if let Some(&bad) = ctx.families.iter().find(|f| !EXTRAPOLATION_FAMILIES.contains(f)) {
        return Err(EvalError::UnsupportedFamily(bad));
    }
    let scoped = EvalContext {
        dir: ctx.dir,
        manifest: ctx.manifest,
        embedder: None,
        model_hash: ctx.model_hash.clone(),
        families: if ctx.families.is_empty() {
            EXTRAPOLATION_FAMILIES.to_vec()
        } else {
            ctx.families.clone()
        },
    };
    let mut results = Vec::new();
    let mut excluded = 0;
    for family in scoped.families() {
        let spec = get_equation(family)?;
        let samples = scoped.load(split, family)?;
        let rows = ordered_map(&samples, |s| -> Result<Option<SampleResult>, EvalError> {
            let x = extrapolate_sample(model, spec, &s.params, &s.ic)?;
            if !x.stage2.iter().all(|v| v.is_finite()) {
                return Ok(None);
            }
            Ok(Some(SampleResult {
                family,
                sample: s.sample,
                class: spec.class,
                rel_err: relative_error(&x.truth, &x.stage2)?,
                text: None,
            }))
        });
        for r in rows {
            match r? {
                Some(r) => results.push(r),
                None => excluded += 1,
            }
        }
    }
    if results.is_empty() {
        return Err(EvalError::NothingEvaluated);
    }
    Ok(EvalReport::aggregate("extrap", results, excluded, &ctx.model_hash, ctx.manifest.master_seed))
}

/// Ground truth by solving the catalog equation; exact on stored grids.
pub struct OracleModel;

impl OperatorModel for OracleModel {
    fn predict(
        &self,
        spec: &EquationSpec,
        params: &ParameterSet,
        ic: &InitialCondition,
        queries: &[[f64; 2]],
    ) -> Result<Vec<[f64; D_MAX]>, ModelError> {
        let horizon = spec.time_horizon;
        let times = uniform_times(horizon, SNAPSHOTS);
        let traj = solve_at(spec, params, ic, &times).map_err(|e| ModelError::Config(format!("oracle solve: {e}")))?;
        let width = traj.width;
        let nt = times.len();
        Ok(queries
            .iter()
            .map(|&[t, x]| {
                let k = ((t * (nt - 1) as f64).round() as usize).min(nt - 1);
                let mut y = [0.0; D_MAX];
                if spec.is_ode() {
                    y[..width].copy_from_slice(&traj.values[k * width..(k + 1) * width]);
                } else {
                    let j = ((x * width as f64).round() as usize) % width;
                    y[0] = traj.values[k * width + j];
                }
                y
            })
            .collect())
    }

    fn describe(&self, _: &EquationSpec, _: &ParameterSet, _: &InitialCondition) -> Result<Option<String>, ModelError> {
        Ok(None)
    }
}

/// Predicts zeros everywhere.
pub struct ZeroModel;

impl OperatorModel for ZeroModel {
    fn predict(
        &self,
        _: &EquationSpec,
        _: &ParameterSet,
        _: &InitialCondition,
        queries: &[[f64; 2]],
    ) -> Result<Vec<[f64; D_MAX]>, ModelError> {
        Ok(vec![[0.0; D_MAX]; queries.len()])
    }

    fn describe(&self, _: &EquationSpec, _: &ParameterSet, _: &InitialCondition) -> Result<Option<String>, ModelError> {
        Ok(None)
    }
}

/// What the detector saw around the interior jump of a step profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DetectedFeature {
    /// No jump stands out from the median.
    None,
    /// A sharp interface that persists; `speed` in domain units per time.
    Shock { speed: f64, positions: Vec<f64> },
    /// A monotone transition whose width (in cells) grows.
    Rarefaction { widths: Vec<usize> },
    /// A jump is present but neither pattern holds.
    Unclear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVerdict {
    pub detected: DetectedFeature,
    /// Feature named in the description, if any.
    pub claimed: Option<WaveFeature>,
    pub consistent: bool,
}

/// Keyword lookup; the more specific phrases are tried first.
pub fn claimed_feature(description: &str) -> Option<WaveFeature> {
    let d = description.to_lowercase();
    [
        WaveFeature::NoShocks,
        WaveFeature::ShockFormation,
        WaveFeature::Rarefaction,
        WaveFeature::OneShock,
    ]
    .into_iter()
    .find(|&f| d.contains(feature_keyword(f)))
    .or_else(|| d.contains("shock").then_some(WaveFeature::OneShock))
}

/// Settings for [`shock_feature_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureCheck {
    /// Frames after the first to analyse. The domain is periodic, so a step
    /// also has a jump of opposite sign at the wrap; only early frames, before
    /// the two waves meet, isolate the interior one.
    pub frames: usize,
    /// Half-width, in cells, of the tracking window.
    pub window: usize,
}

impl FeatureCheck {
    pub fn for_grid(width: usize, n_times: usize) -> Self {
        Self {
            frames: (n_times / 8).max(2).min(n_times.saturating_sub(1)),
            window: (width / 8).max(4),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Looks for a shock or rarefaction emanating from the interior jump of the
/// first frame and compares it with the description's keywords.
///
/// `values` is `[times x width]` on a periodic grid of `domain_length`.
pub fn shock_feature_check(
    values: &[f64],
    width: usize,
    times: &[f64],
    domain_length: f64,
    description: &str,
    check: FeatureCheck,
) -> FeatureVerdict {
    let detected = detect_feature(values, width, times, domain_length, check);
    let claimed = claimed_feature(description);
    let consistent = match (&detected, claimed) {
        (DetectedFeature::Shock { .. }, Some(WaveFeature::OneShock | WaveFeature::ShockFormation)) => true,
        (DetectedFeature::Rarefaction { .. }, Some(WaveFeature::Rarefaction)) => true,
        (DetectedFeature::None, None | Some(WaveFeature::NoShocks)) => true,
        _ => false,
    };
    FeatureVerdict {
        detected,
        claimed,
        consistent,
    }
}

fn detect_feature(values: &[f64], width: usize, times: &[f64], domain_length: f64, check: FeatureCheck) -> DetectedFeature {
    let n = width;
    if n < 4 || times.len() < 2 || values.len() < times.len() * n {
        return DetectedFeature::None;
    }
    let frame = |k: usize| &values[k * n..(k + 1) * n];
    let jumps = |k: usize| -> Vec<f64> { (0..n).map(|j| frame(k)[(j + 1) % n] - frame(k)[j]).collect() };

    // Interior edge with the largest jump; edge n-1 is the periodic wrap.
    let d0 = jumps(0);
    let (j0, &jump) = d0[..n - 1]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("n >= 4");
    let scale = frame(0).iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let med0 = median(d0.iter().map(|v| v.abs()).collect());
    if jump.abs() <= 5.0 * med0 || jump.abs() < 1e-3 * scale {
        return DetectedFeature::None;
    }
    let (ul, ur) = (frame(0)[j0], frame(0)[(j0 + 1) % n]);
    let (lo, hi) = (ul.min(ur), ul.max(ur));
    let margin = 0.1 * (hi - lo);
    let dx = domain_length / n as f64;
    let w = check.window as isize;

    let mut pos = j0 as f64;
    let mut positions = vec![(j0 as f64 + 1.0) * dx];
    let mut widths = Vec::new();
    let mut sharp = true;
    let last = check.frames.min(times.len() - 1);
    for k in 1..=last {
        let d = jumps(k);
        let med = median(d.iter().map(|v| v.abs()).collect());
        let centre = pos.round() as isize;
        let mut best = (centre, 0.0f64);
        let mut inside = 0;
        for o in -w..=w {
            let e = (centre + o).rem_euclid(n as isize);
            let v = d[e as usize];
            if v.signum() == jump.signum() && v.abs() > best.1 {
                best = (centre + o, v.abs());
            }
            let u = frame(k)[e as usize];
            if u > lo + margin && u < hi - margin {
                inside += 1;
            }
        }
        widths.push(inside);
        if best.1 < 0.3 * jump.abs() || best.1 <= 5.0 * med {
            sharp = false;
        }
        pos = best.0 as f64;
        positions.push((pos + 1.0) * dx);
    }
    if sharp {
        // Least-squares slope of position against time.
        let ts = &times[..positions.len()];
        let tm = ts.iter().sum::<f64>() / ts.len() as f64;
        let pm = positions.iter().sum::<f64>() / positions.len() as f64;
        let num: f64 = ts.iter().zip(&positions).map(|(t, p)| (t - tm) * (p - pm)).sum();
        let den: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
        return DetectedFeature::Shock {
            speed: num / den,
            positions,
        };
    }
    let growing = widths.windows(2).all(|p| p[1] >= p[0]) && widths.last().copied().unwrap_or(0) >= widths[0] + 2;
    if growing {
        DetectedFeature::Rarefaction { widths }
    } else {
        DetectedFeature::Unclear
    }
}
