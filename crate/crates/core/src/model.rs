//! The multimodal operator network.
//!
//! A causal transformer backbone reads the tokenized sentence, in which
//! `<num>` positions are embedded by a small MLP from their numeric patch.
//! Two heads read the backbone states:
//!
//! * the data decoder embeds each query point `(t, x)` with an MLP and lets
//!   it cross-attend to the prompt states, then maps to `D_MAX` channels;
//! * the text head projects onto the (tied) token embedding and is decoded
//!   greedily.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{render_input_sentence, CatalogError, EquationSpec, InitialCondition, ParameterSet};
use crate::dataset::D_MAX;
use crate::nn::{
    load_checkpoint, save_checkpoint, CrossLayer, Graph, LayerNorm, Linear, Mask, Mlp, NnError, ParamId, ParamStore,
    Scalar, Tensor, TransformerLayer, Var,
};
use crate::rng::{purpose_stream, StreamPurpose};
use crate::tokenizer::{encode_multimodal, TokenSequence, TokenizerError, Vocab, EOS, MAX_SEQUENCE, PATCH_WIDTH};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("checkpoint was written for config {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid model config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub decoder_layers: usize,
    pub ffn_ratio: usize,
    pub vocab_size: usize,
    pub patch_width: usize,
    pub query_dim: usize,
    /// Periodic harmonics `sin/cos(2 pi k x)` added to each query, `k = 1..=n`.
    pub query_harmonics_x: usize,
    /// Harmonics `sin/cos(pi k t)` of the normalized time.
    pub query_harmonics_t: usize,
    pub out_channels: usize,
    pub max_len: usize,
    pub init_std: f64,
}

impl ModelConfig {
    pub fn standard(vocab_size: usize) -> Self {
        Self {
            d_model: 128,
            heads: 4,
            layers: 4,
            decoder_layers: 2,
            ffn_ratio: 4,
            vocab_size,
            patch_width: PATCH_WIDTH,
            query_dim: 2,
            query_harmonics_x: 16,
            query_harmonics_t: 8,
            out_channels: D_MAX,
            max_len: MAX_SEQUENCE,
            init_std: 0.02,
        }
    }

    /// Narrower and shallower; what the desk-scale runs use.
    pub fn small(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            layers: 2,
            ..Self::standard(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("d_model must be divisible by heads");
        }
        if self.out_channels < D_MAX {
            return bad("out_channels must cover the largest ODE state");
        }
        if self.vocab_size == 0 || self.max_len == 0 || self.patch_width == 0 {
            return bad("vocab_size, max_len and patch_width must be positive");
        }
        if self.query_dim != 2 {
            return bad("queries are (t, x) pairs");
        }
        Ok(())
    }

    /// Width of the query feature vector fed to the query MLP.
    pub fn query_features(&self) -> usize {
        self.query_dim + 2 * (self.query_harmonics_x + self.query_harmonics_t)
    }

    /// Short stable hash of the config, stored in checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:08x}", crc32fast::hash(json.as_bytes()))
    }
}

/// Longest run of consecutive numeric tokens with its own index embedding.
pub const MAX_RUN: usize = 64;

/// Index of each payload inside its run of consecutive `<num>` tokens, so
/// patch `k` of an initial condition is recognizable wherever the run starts.
pub fn run_indices(seq: &TokenSequence) -> Vec<usize> {
    let mut out = Vec::with_capacity(seq.payloads.len());
    let mut prev: Option<(usize, usize)> = None;
    for (pos, _) in &seq.payloads {
        let k = match prev {
            Some((p, k)) if p + 1 == *pos => k + 1,
            _ => 0,
        };
        out.push(k.min(MAX_RUN - 1));
        prev = Some((*pos, k));
    }
    out
}

/// Parameter handles, laid out deterministically from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    tok_emb: ParamId,
    pos_emb: ParamId,
    num_mlp: Mlp,
    run_emb: ParamId,
    layers: Vec<TransformerLayer>,
    ln_f: LayerNorm,
    query_mlp: Mlp,
    decoder: Vec<CrossLayer>,
    ln_out: LayerNorm,
    head: Linear,
}

fn layout<T: Scalar>(cfg: &ModelConfig, store: &mut ParamStore<T>, seed: u64) -> Layout {
    let mut rng = purpose_stream(seed, 0, StreamPurpose::Init, 0, 0);
    let (d, s) = (cfg.d_model, cfg.init_std);
    let ffn = cfg.ffn_ratio * d;
    Layout {
        tok_emb: store.add_normal("tok_emb", cfg.vocab_size, d, s, &mut rng),
        pos_emb: store.add_normal("pos_emb", cfg.max_len, d, s, &mut rng),
        num_mlp: Mlp::fan_in(store, "num_mlp", (cfg.patch_width, d, d), &mut rng),
        run_emb: store.add_normal("run_emb", MAX_RUN, d, s, &mut rng),
        layers: (0..cfg.layers)
            .map(|i| TransformerLayer::new(store, &format!("layer{i}"), d, cfg.heads, ffn, s, &mut rng))
            .collect(),
        ln_f: LayerNorm::new(store, "ln_f", d),
        query_mlp: Mlp::fan_in(store, "query_mlp", (cfg.query_features(), d, d), &mut rng),
        decoder: (0..cfg.decoder_layers)
            .map(|i| CrossLayer::new(store, &format!("decoder{i}"), d, cfg.heads, ffn, s, &mut rng))
            .collect(),
        ln_out: LayerNorm::new(store, "ln_out", d),
        head: Linear::zeros(store, "head", d, cfg.out_channels),
    }
}

/// Greedy decoding result.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// Generated ids, without the final EOS.
    pub ids: Vec<u32>,
    /// True when decoding stopped at the length limit instead of EOS.
    pub truncated: bool,
}

/// Graph handles of one training forward pass.
pub struct TrainOutputs {
    /// `[n_queries x out_channels]`.
    pub numeric: Var,
    /// `[n_text x V]`, row `i` predicting target token `i`.
    pub logits: Var,
    /// Target ids matching the logit rows.
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let layout = layout(&config, &mut params, seed);
        Ok(Self { config, params, layout })
    }

    /// Same architecture and weights in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    pub fn text_head_table(&self) -> &Tensor<T> {
        self.params.get(self.layout.tok_emb)
    }

    pub fn numeric_encoder(&self) -> &Mlp {
        &self.layout.num_mlp
    }

    pub fn backbone_layers(&self) -> &[TransformerLayer] {
        &self.layout.layers
    }

    pub fn decoder_layers(&self) -> &[CrossLayer] {
        &self.layout.decoder
    }

    pub fn output_head(&self) -> Linear {
        self.layout.head
    }

    pub fn token_embedding(&self) -> ParamId {
        self.layout.tok_emb
    }

    /// Backbone states `[n x d]` (after the final layer norm) for all
    /// positions of `seq`.
    pub fn encode<'p>(&'p self, g: &mut Graph<'p, T>, seq: &TokenSequence) -> Result<Var, ModelError> {
        let n = seq.ids.len();
        if n > self.config.max_len {
            return Err(ModelError::SequenceTooLong {
                len: n,
                max: self.config.max_len,
            });
        }
        let p = &self.params;
        let l = &self.layout;
        let ids: Vec<usize> = seq.ids.iter().map(|&i| i as usize).collect();
        let table = g.param(p, l.tok_emb);
        let mut x = g.gather_rows(table, &ids)?;
        if !seq.payloads.is_empty() {
            let pw = self.config.patch_width;
            let mut patches = Vec::with_capacity(seq.payloads.len() * pw);
            for (_, patch) in &seq.payloads {
                patches.extend(patch.iter().take(pw).map(|&v| T::lit(v)));
            }
            let inp = g.input(Tensor::from_vec(seq.payloads.len(), pw, patches)?);
            let emb = l.num_mlp.forward(g, p, inp)?;
            let run_table = g.param(p, l.run_emb);
            let run = g.gather_rows(run_table, &run_indices(seq))?;
            let emb = g.add(emb, run)?;
            let rows: Vec<usize> = seq.payloads.iter().map(|(pos, _)| *pos).collect();
            x = g.scatter_rows(x, emb, &rows)?;
        }
        let pos_table = g.param(p, l.pos_emb);
        let positions: Vec<usize> = (0..n).collect();
        let pos = g.gather_rows(pos_table, &positions)?;
        x = g.add(x, pos)?;
        for layer in &l.layers {
            x = layer.forward(g, p, x, &Mask::Causal)?;
        }
        Ok(l.ln_f.forward(g, p, x)?)
    }

    /// Operator evaluation: `[n_queries x out_channels]` from prompt states.
    /// Queries never attend to each other.
    pub fn evaluate_operator<'p>(
        &'p self,
        g: &mut Graph<'p, T>,
        memory: Var,
        queries: &[[f64; 2]],
    ) -> Result<Var, ModelError> {
        let p = &self.params;
        let l = &self.layout;
        let inp = g.input(self.query_tensor(queries));
        let mut h = l.query_mlp.forward(g, p, inp)?;
        for layer in &l.decoder {
            h = layer.forward(g, p, h, memory)?;
        }
        let h = l.ln_out.forward(g, p, h)?;
        Ok(l.head.forward(g, p, h)?)
    }

    /// Query features: `t, x`, then the `x` and `t` harmonics.
    pub fn query_tensor(&self, queries: &[[f64; 2]]) -> Tensor<T> {
        let (kx, kt) = (self.config.query_harmonics_x, self.config.query_harmonics_t);
        let width = self.config.query_features();
        let mut data = Vec::with_capacity(queries.len() * width);
        for &[t, x] in queries {
            data.push(T::lit(t));
            data.push(T::lit(x));
            for k in 1..=kx {
                let a = std::f64::consts::TAU * k as f64 * x;
                data.push(T::lit(a.sin()));
                data.push(T::lit(a.cos()));
            }
            for k in 1..=kt {
                let a = std::f64::consts::PI * k as f64 * t;
                data.push(T::lit(a.sin()));
                data.push(T::lit(a.cos()));
            }
        }
        Tensor {
            rows: queries.len(),
            cols: width,
            data,
        }
    }

    /// Logits over the vocabulary for each row of `hidden`.
    pub fn text_logits<'p>(&'p self, g: &mut Graph<'p, T>, hidden: Var) -> Result<Var, ModelError> {
        let table = g.param(&self.params, self.layout.tok_emb);
        Ok(g.matmul_t(hidden, false, table, true)?)
    }

    /// One causal pass over prompt and target text. The data decoder only
    /// sees prompt positions, so target text cannot affect numeric output.
    pub fn forward_train<'p>(
        &'p self,
        g: &mut Graph<'p, T>,
        seq: &TokenSequence,
        queries: &[[f64; 2]],
    ) -> Result<TrainOutputs, ModelError> {
        let hidden = self.encode(g, seq)?;
        let pl = seq.prompt_len;
        let memory = g.slice_rows(hidden, 0, pl)?;
        let numeric = self.evaluate_operator(g, memory, queries)?;
        let n_text = seq.ids.len() - pl;
        let rows = g.slice_rows(hidden, pl - 1, n_text)?;
        let logits = self.text_logits(g, rows)?;
        let targets = seq.ids[pl..].iter().map(|&i| i as usize).collect();
        Ok(TrainOutputs {
            numeric,
            logits,
            targets,
        })
    }

    /// Numeric prediction from a prompt-only sequence.
    pub fn predict(&self, prompt: &TokenSequence, queries: &[[f64; 2]]) -> Result<Tensor<T>, ModelError> {
        let mut g = Graph::new();
        let hidden = self.encode(&mut g, prompt)?;
        let memory = g.slice_rows(hidden, 0, prompt.prompt_len)?;
        let out = self.evaluate_operator(&mut g, memory, queries)?;
        Ok(g.value(out).clone())
    }

    /// Greedy decoding after the prompt; ties go to the lowest id.
    pub fn generate(&self, prompt: &TokenSequence, max_new: usize) -> Result<Generated, ModelError> {
        let mut seq = prompt.prompt();
        let mut ids = Vec::new();
        for _ in 0..max_new {
            if seq.ids.len() >= self.config.max_len {
                return Ok(Generated { ids, truncated: true });
            }
            let mut g = Graph::new();
            let hidden = self.encode(&mut g, &seq)?;
            let last = g.slice_rows(hidden, seq.ids.len() - 1, 1)?;
            let logits = self.text_logits(&mut g, last)?;
            let row = &g.value(logits).data;
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            let next = best as u32;
            if next == EOS {
                return Ok(Generated { ids, truncated: false });
            }
            ids.push(next);
            seq.ids.push(next);
            seq.segments.push(crate::tokenizer::Segment::TextTarget);
        }
        Ok(Generated { ids, truncated: true })
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "model_config": self.config,
            "config_hash": self.config.hash(),
        })
    }

    pub fn save(&self, stem: &Path) -> Result<(), ModelError> {
        self.save_with(stem, serde_json::Value::Null)
    }

    /// Saves with `extra` stored under the `extra` metadata key.
    pub fn save_with(&self, stem: &Path, extra: serde_json::Value) -> Result<(), ModelError> {
        let mut meta = self.meta();
        meta["extra"] = extra;
        Ok(save_checkpoint(&self.params, stem, meta)?)
    }
}

impl Model<f32> {
    /// Loads a checkpoint written by [`Model::save`]. When `expected` is
    /// given, its hash must match the stored one.
    pub fn load(stem: &Path, expected: Option<&ModelConfig>) -> Result<Self, ModelError> {
        Ok(Self::load_with(stem, expected)?.0)
    }

    /// Like [`Model::load`], also returning the `extra` metadata.
    pub fn load_with(stem: &Path, expected: Option<&ModelConfig>) -> Result<(Self, serde_json::Value), ModelError> {
        let ck = load_checkpoint(stem)?;
        let config: ModelConfig = serde_json::from_value(ck.meta["model_config"].clone())
            .map_err(|e| NnError::Checkpoint(format!("model config: {e}")))?;
        let found = ck.meta["config_hash"].as_str().unwrap_or_default().to_string();
        if found != config.hash() {
            return Err(ModelError::ConfigMismatch {
                expected: config.hash(),
                found,
            });
        }
        if let Some(exp) = expected {
            if exp.hash() != found {
                return Err(ModelError::ConfigMismatch {
                    expected: exp.hash(),
                    found,
                });
            }
        }
        let mut model = Model::new(config, 0)?;
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let src = ck
                .store
                .id(&name)
                .map(|i| ck.store.get(i))
                .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))?;
            let dst = model.params.get_mut(id);
            if src.shape() != dst.shape() {
                return Err(NnError::Checkpoint(format!("tensor {name} has shape {:?}", src.shape())).into());
            }
            *dst = src.clone();
        }
        Ok((model, ck.meta["extra"].clone()))
    }
}

/// Anything that maps an equation prompt to numeric predictions and,
/// optionally, a description. Implemented by [`TextOperatorModel`] and by the
/// reference stubs in the evaluation module.
pub trait OperatorModel: Sync {
    /// Predictions at normalized queries `(t / T, x / L)`.
    fn predict(
        &self,
        spec: &EquationSpec,
        params: &ParameterSet,
        ic: &InitialCondition,
        queries: &[[f64; 2]],
    ) -> Result<Vec<[f64; D_MAX]>, ModelError>;

    /// Generated description, if the model has a text pathway.
    fn describe(
        &self,
        spec: &EquationSpec,
        params: &ParameterSet,
        ic: &InitialCondition,
    ) -> Result<Option<String>, ModelError>;
}

/// Trained network plus the vocabulary it was trained with.
#[derive(Debug, Clone)]
pub struct TextOperatorModel {
    pub model: Model<f32>,
    pub vocab: Vocab,
    pub max_new_tokens: usize,
}

impl TextOperatorModel {
    pub fn new(model: Model<f32>, vocab: Vocab) -> Self {
        Self {
            model,
            vocab,
            max_new_tokens: 96,
        }
    }

    /// Checkpoint with the vocabulary embedded in its metadata.
    pub fn save(&self, stem: &Path) -> Result<(), ModelError> {
        self.model.save_with(stem, serde_json::json!({ "vocab": self.vocab.to_json() }))
    }

    pub fn load(stem: &Path) -> Result<Self, ModelError> {
        let (model, extra) = Model::load_with(stem, None)?;
        let text = extra["vocab"]
            .as_str()
            .ok_or_else(|| NnError::Checkpoint("checkpoint carries no vocabulary".into()))?;
        let vocab = Vocab::from_json(text)?;
        if vocab.len() != model.config.vocab_size {
            return Err(NnError::Checkpoint(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                model.config.vocab_size
            ))
            .into());
        }
        Ok(Self::new(model, vocab))
    }

    pub fn prompt(&self, spec: &EquationSpec, params: &ParameterSet, ic: &InitialCondition) -> Result<TokenSequence, ModelError> {
        let sentence = render_input_sentence(spec, params, ic)?;
        Ok(encode_multimodal(&sentence, None, &self.vocab)?)
    }
}

impl OperatorModel for TextOperatorModel {
    fn predict(
        &self,
        spec: &EquationSpec,
        params: &ParameterSet,
        ic: &InitialCondition,
        queries: &[[f64; 2]],
    ) -> Result<Vec<[f64; D_MAX]>, ModelError> {
        let prompt = self.prompt(spec, params, ic)?;
        let out = self.model.predict(&prompt, queries)?;
        Ok((0..out.rows)
            .map(|i| {
                let mut y = [0.0; D_MAX];
                for (c, v) in y.iter_mut().enumerate() {
                    *v = out.get(i, c) as f64;
                }
                y
            })
            .collect())
    }

    fn describe(
        &self,
        spec: &EquationSpec,
        params: &ParameterSet,
        ic: &InitialCondition,
    ) -> Result<Option<String>, ModelError> {
        let prompt = self.prompt(spec, params, ic)?;
        let gen = self.model.generate(&prompt, self.max_new_tokens)?;
        Ok(Some(crate::tokenizer::decode_text(&gen.ids, &self.vocab)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            heads: 2,
            layers: 1,
            decoder_layers: 1,
            ffn_ratio: 2,
            max_len: 32,
            ..ModelConfig::standard(vocab)
        }
    }

    fn seq(ids: &[u32], prompt_len: usize) -> TokenSequence {
        TokenSequence {
            ids: ids.to_vec(),
            payloads: vec![(1, [0.5, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])],
            segments: (0..ids.len())
                .map(|i| {
                    if i < prompt_len {
                        crate::tokenizer::Segment::Prompt
                    } else {
                        crate::tokenizer::Segment::TextTarget
                    }
                })
                .collect(),
            prompt_len,
        }
    }

    #[test]
    fn output_shapes() {
        let m = Model::<f64>::new(tiny(10), 1).unwrap();
        let s = seq(&[1, 3, 5, 4, 6, 7, 2], 4);
        let mut g = Graph::new();
        let out = m.forward_train(&mut g, &s, &[[0.0, 0.0], [0.5, 0.5], [1.0, 0.25]]).unwrap();
        assert_eq!(g.shape(out.numeric), (3, D_MAX));
        assert_eq!(g.shape(out.logits), (3, 10));
        assert_eq!(out.targets, vec![6, 7, 2]);
        assert!(g.value(out.numeric).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_long_sequences_are_rejected() {
        let m = Model::<f32>::new(tiny(10), 1).unwrap();
        let ids = vec![5u32; 40];
        let mut s = seq(&ids, 40);
        s.payloads.clear();
        let mut g = Graph::new();
        assert!(matches!(m.encode(&mut g, &s), Err(ModelError::SequenceTooLong { len: 40, max: 32 })));
    }

    #[test]
    fn config_hash_detects_changes() {
        let a = ModelConfig::small(50);
        let mut b = a.clone();
        b.layers += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ModelConfig::small(50).hash());
        assert!(ModelConfig {
            heads: 3,
            ..a
        }
        .validate()
        .is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        let m = Model::<f32>::new(tiny(12), 3).unwrap();
        m.save(&stem).unwrap();
        let back = Model::load(&stem, Some(&m.config)).unwrap();
        assert_eq!(back.params, m.params);
        let other = tiny(13);
        assert!(matches!(
            Model::load(&stem, Some(&other)),
            Err(ModelError::ConfigMismatch { .. })
        ));
    }
}
