//! Losses and the training loop.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::get_equation;
use crate::dataset::{load_records, DatasetError, DatasetManifest, MultimodalSample, Split, D_MAX};
use crate::model::{Model, ModelError};
use crate::nn::{Adam, AdamConfig, Gradients, Graph, NnError, Scalar, Tensor, Var};
use crate::ordered_map;
use crate::rng::{purpose_stream, StreamPurpose};
use crate::tokenizer::{encode_multimodal, TokenSequence, TokenizerError, Vocab};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("numeric target has (near) zero norm")]
    DegenerateTarget,
    #[error("non-finite loss or gradient at step {step}; batch (family, sample): {batch:?}")]
    NonFiniteLoss { step: usize, batch: Vec<(usize, u32)> },
    #[error("no training samples")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io(path: &Path, source: std::io::Error) -> TrainingError {
    TrainingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Weight of the numeric loss.
    pub alpha: f64,
    /// Weight of the text loss.
    pub beta: f64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps, across epochs.
    pub max_steps: Option<usize>,
    /// Linear warmup length; zero disables it.
    pub warmup_steps: usize,
    /// With `max_steps` set, decay the rate along a cosine to this fraction
    /// of the peak. `None` keeps it constant after warmup.
    pub cosine_floor: Option<f64>,
    pub seed: u64,
    /// Query points drawn per sample per step.
    pub query_subsample: usize,
    /// Zero disables intermediate checkpoints.
    pub checkpoint_every: usize,
    /// Zero disables intermediate held-out evaluation.
    pub eval_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            batch_size: 32,
            epochs: 20,
            max_steps: None,
            warmup_steps: 0,
            cosine_floor: None,
            seed: 0,
            query_subsample: 256,
            checkpoint_every: 0,
            eval_every: 200,
        }
    }
}

impl TrainingConfig {
    /// Settings sized for a single-core machine.
    pub fn desk() -> Self {
        Self {
            batch_size: 8,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            warmup_steps: 100,
            cosine_floor: Some(0.05),
            ..Self::default()
        }
    }
}

/// `sum (pred - u)^2 / sum u^2` over the valid channels.
pub fn numeric_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    pred: Var,
    targets: &[[f64; D_MAX]],
    mask: &[bool; D_MAX],
) -> Result<Var, TrainingError> {
    let (rows, cols) = g.shape(pred);
    let norm: f64 = targets
        .iter()
        .flat_map(|y| y.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| v * v))
        .sum();
    if norm < 1e-12 {
        return Err(TrainingError::DegenerateTarget);
    }
    let target = Tensor::from_fn(rows, cols, |i, j| T::lit(if j < D_MAX { targets[i][j] } else { 0.0 }));
    let mut channels = vec![false; cols];
    channels[..D_MAX].copy_from_slice(mask);
    Ok(g.relative_squared_error(pred, &target, &channels)?)
}

/// Mean token cross-entropy.
pub fn text_loss<T: Scalar>(g: &mut Graph<'_, T>, logits: Var, targets: &[usize]) -> Result<Var, TrainingError> {
    Ok(g.cross_entropy(logits, targets)?)
}

pub fn total_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    numeric: Var,
    text: Var,
    alpha: f64,
    beta: f64,
) -> Result<Var, TrainingError> {
    let a = g.scale(numeric, T::lit(alpha));
    let b = g.scale(text, T::lit(beta));
    Ok(g.add(a, b)?)
}

/// A sample held compactly for training: the token sequence with its text
/// target and the trajectory in `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub family: usize,
    pub sample: u32,
    pub seq: TokenSequence,
    pub mask: [bool; D_MAX],
    ode: bool,
    width: usize,
    times: Vec<f64>,
    channels: usize,
    values: Vec<f32>,
}

impl TrainItem {
    /// `s` must hold its full query grid.
    pub fn from_sample(s: &MultimodalSample, vocab: &Vocab) -> Result<Self, TrainingError> {
        let spec = get_equation(s.family).map_err(DatasetError::from)?;
        let seq = encode_multimodal(&s.sentence, Some(&s.description), vocab)?;
        let channels = s.channels();
        let values = s.targets.iter().flat_map(|y| y[..channels].iter().map(|&v| v as f32)).collect();
        Ok(Self {
            family: s.family,
            sample: s.sample,
            seq,
            mask: s.mask,
            ode: spec.is_ode(),
            width: s.width,
            times: s.times.iter().map(|t| t / spec.time_horizon).collect(),
            channels,
            values,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn query(&self, q: usize) -> [f64; 2] {
        if self.ode {
            [self.times[q], 0.0]
        } else {
            [self.times[q / self.width], (q % self.width) as f64 / self.width as f64]
        }
    }

    pub fn target(&self, q: usize) -> [f64; D_MAX] {
        let mut y = [0.0; D_MAX];
        for (c, v) in y.iter_mut().take(self.channels).enumerate() {
            *v = self.values[q * self.channels + c] as f64;
        }
        y
    }

    /// Sorted random subset of at most `count` queries with their targets.
    pub fn subsample<R: rand::Rng>(&self, count: usize, rng: &mut R) -> (Vec<[f64; 2]>, Vec<[f64; D_MAX]>) {
        let n = self.n_queries();
        let keep: Vec<usize> = if count >= n {
            (0..n).collect()
        } else {
            let mut k = index::sample(rng, n, count).into_vec();
            k.sort_unstable();
            k
        };
        (keep.iter().map(|&q| self.query(q)).collect(), keep.iter().map(|&q| self.target(q)).collect())
    }
}

/// Loads one split as training items, family by family to bound memory.
/// Samples whose numeric target is degenerate are skipped and counted.
pub fn load_train_items(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    vocab: &Vocab,
) -> Result<(Vec<TrainItem>, usize), TrainingError> {
    let mut items = Vec::new();
    let mut skipped = 0;
    for fam in &manifest.families {
        if !fam.splits.iter().any(|s| s.split == split) {
            continue;
        }
        for rec in load_records(dir, manifest, split, Some(fam.index))? {
            let s = MultimodalSample::from_record(rec)?;
            let item = TrainItem::from_sample(&s, vocab)?;
            let norm: f64 = item.values.iter().map(|&v| (v as f64).powi(2)).sum();
            if norm < 1e-12 {
                skipped += 1;
                continue;
            }
            items.push(item);
        }
    }
    if items.is_empty() {
        return Err(DatasetError::MissingSplit(split).into());
    }
    Ok((items, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub numeric: f64,
    pub text: f64,
    pub total: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub last: Option<StepStats>,
    pub heldout_rel_err: Option<f64>,
    pub seconds: f64,
}

pub struct Trainer {
    pub model: Model<f32>,
    pub config: TrainingConfig,
    adam: Adam<f32>,
    step: usize,
    vocab: Option<Vocab>,
}

struct SampleGrad {
    grads: Gradients<f32>,
    numeric: f64,
    text: f64,
}

impl Trainer {
    pub fn new(model: Model<f32>, config: TrainingConfig) -> Self {
        let adam = Adam::new(&model.params, config.adam);
        Self {
            model,
            config,
            adam,
            step: 0,
            vocab: None,
        }
    }

    /// Embeds `vocab` in every checkpoint so it loads as a text model.
    pub fn with_vocab(mut self, vocab: Vocab) -> Self {
        self.vocab = Some(vocab);
        self
    }

    fn save(&self, stem: &Path) -> Result<(), TrainingError> {
        match &self.vocab {
            Some(v) => self.model.save_with(stem, serde_json::json!({ "vocab": v.to_json() }))?,
            None => self.model.save(stem)?,
        }
        Ok(())
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn lr_at(&self, step: usize) -> f64 {
        let (w, peak) = (self.config.warmup_steps, self.config.adam.lr);
        if step < w {
            return peak * (step + 1) as f64 / w as f64;
        }
        match (self.config.cosine_floor, self.config.max_steps) {
            (Some(floor), Some(total)) if total > w => {
                let p = ((step - w) as f64 / (total - w) as f64).min(1.0);
                peak * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
            }
            _ => peak,
        }
    }

    fn sample_grad(&self, item: &TrainItem) -> Result<SampleGrad, TrainingError> {
        let cfg = &self.config;
        let mut rng = purpose_stream(
            cfg.seed,
            item.family,
            StreamPurpose::QuerySubsample,
            ((self.step as u64) << 32) | item.sample as u64,
            0,
        );
        let (queries, targets) = item.subsample(cfg.query_subsample, &mut rng);
        let mut g = Graph::new();
        let out = self.model.forward_train(&mut g, &item.seq, &queries)?;
        let ln = numeric_loss(&mut g, out.numeric, &targets, &item.mask)?;
        let lt = text_loss(&mut g, out.logits, &out.targets)?;
        let total = total_loss(&mut g, ln, lt, cfg.alpha, cfg.beta)?;
        g.backward(total)?;
        let mut grads = Gradients::zeros_like(&self.model.params);
        g.accumulate_param_grads(&mut grads);
        Ok(SampleGrad {
            grads,
            numeric: g.value(ln).item() as f64,
            text: g.value(lt).item() as f64,
        })
    }

    /// One optimizer step on `batch`. Per-sample graphs run in parallel and
    /// are reduced in batch order, so results do not depend on thread count.
    pub fn train_step(&mut self, batch: &[&TrainItem]) -> Result<StepStats, TrainingError> {
        if batch.is_empty() {
            return Err(TrainingError::EmptyDataset);
        }
        let parts = ordered_map(batch, |item| self.sample_grad(item));
        let mut grads = Gradients::zeros_like(&self.model.params);
        let (mut numeric, mut text) = (0.0, 0.0);
        for p in parts {
            let p = p?;
            grads.merge(&p.grads);
            numeric += p.numeric;
            text += p.text;
        }
        let n = batch.len() as f64;
        let (numeric, text) = (numeric / n, text / n);
        let total = self.config.alpha * numeric + self.config.beta * text;
        grads.scale(1.0 / n as f32);
        let norm = grads.clip(self.config.clip_norm as f32) as f64;
        if !total.is_finite() || !norm.is_finite() || !grads.all_finite() {
            return Err(TrainingError::NonFiniteLoss {
                step: self.step,
                batch: batch.iter().map(|i| (i.family, i.sample)).collect(),
            });
        }
        let lr = self.lr_at(self.step);
        self.adam.step_with_lr(&mut self.model.params, &grads, lr);
        self.step += 1;
        Ok(StepStats {
            step: self.step,
            numeric,
            text,
            total,
            grad_norm: norm,
            lr,
        })
    }

    /// Mean relative L2 error on a fixed query subset of each item.
    pub fn heldout_error(&self, items: &[TrainItem]) -> Result<f64, TrainingError> {
        if items.is_empty() {
            return Err(TrainingError::EmptyDataset);
        }
        let errs = ordered_map(items, |item| -> Result<f64, TrainingError> {
            let mut rng = purpose_stream(self.config.seed, item.family, StreamPurpose::QuerySubsample, u64::MAX - item.sample as u64, 0);
            let (queries, targets) = item.subsample(self.config.query_subsample, &mut rng);
            let pred = self.model.predict(&item.seq.prompt(), &queries)?;
            let (mut num, mut den) = (0.0, 0.0);
            for (i, y) in targets.iter().enumerate() {
                for c in (0..D_MAX).filter(|&c| item.mask[c]) {
                    num += (pred.get(i, c) as f64 - y[c]).powi(2);
                    den += y[c] * y[c];
                }
            }
            Ok((num / den).sqrt())
        });
        let mut sum = 0.0;
        for e in errs {
            sum += e?;
        }
        Ok(sum / items.len() as f64)
    }

    /// Runs epochs until done or `max_steps`. With `out`, writes
    /// `metrics.csv`, periodic checkpoints and the final `model` checkpoint.
    pub fn fit(
        &mut self,
        train: &[TrainItem],
        heldout: &[TrainItem],
        out: Option<&Path>,
        mut on_step: impl FnMut(&StepStats, Option<f64>),
    ) -> Result<TrainSummary, TrainingError> {
        if train.is_empty() {
            return Err(TrainingError::EmptyDataset);
        }
        let start = Instant::now();
        let mut csv = match out {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
                let path = dir.join("metrics.csv");
                let mut w = BufWriter::new(File::create(&path).map_err(|e| io(&path, e))?);
                writeln!(w, "step,numeric_loss,text_loss,total_loss,heldout_rel_err").map_err(|e| io(&path, e))?;
                let cfg_path = dir.join("training.json");
                let json = serde_json::to_string_pretty(&self.config).expect("config serializes");
                fs::write(&cfg_path, json).map_err(|e| io(&cfg_path, e))?;
                Some((w, path))
            }
            None => None,
        };
        let limit = self.config.max_steps.unwrap_or(usize::MAX);
        let bs = self.config.batch_size.max(1);
        let mut last = None;
        let mut heldout_err = None;
        'epochs: for epoch in 0..self.config.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut purpose_stream(self.config.seed, 0, StreamPurpose::Shuffle, epoch as u64, 0));
            for chunk in order.chunks(bs) {
                if self.step >= limit {
                    break 'epochs;
                }
                let batch: Vec<&TrainItem> = chunk.iter().map(|&i| &train[i]).collect();
                let stats = self.train_step(&batch)?;
                let due = |every: usize| every > 0 && stats.step % every == 0;
                let eval = if !heldout.is_empty() && due(self.config.eval_every) {
                    Some(self.heldout_error(heldout)?)
                } else {
                    None
                };
                if let Some((w, path)) = csv.as_mut() {
                    let e = eval.map_or(String::new(), |v| format!("{v:.6e}"));
                    writeln!(w, "{},{:.6e},{:.6e},{:.6e},{e}", stats.step, stats.numeric, stats.text, stats.total)
                        .map_err(|e| io(path, e))?;
                }
                if let (Some(dir), true) = (out, due(self.config.checkpoint_every)) {
                    self.save(&dir.join(format!("checkpoint_{:06}", stats.step)))?;
                }
                on_step(&stats, eval);
                heldout_err = eval.or(heldout_err);
                last = Some(stats);
            }
        }
        if !heldout.is_empty() {
            heldout_err = Some(self.heldout_error(heldout)?);
        }
        if let Some((mut w, path)) = csv {
            w.flush().map_err(|e| io(&path, e))?;
        }
        if let Some(dir) = out {
            self.save(&dir.join("model"))?;
        }
        Ok(TrainSummary {
            steps: self.step,
            last,
            heldout_rel_err: heldout_err,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}
