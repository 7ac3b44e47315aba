//! Parameter storage, gradient buffers, Adam and checkpoint files.
//!
//! A checkpoint is a JSON manifest (`<stem>.json`: tensor name, shape and
//! offset, plus free-form metadata) next to a little-endian `f32` blob
//! (`<stem>.bin`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NnError, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    trainable: bool,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            trainable: true,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        assert!(!self.names.iter().any(|n| n == name), "duplicate parameter {name}");
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Normal(0, std) truncated to two standard deviations.
    pub fn add_normal<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, std: f64, rng: &mut R) -> ParamId {
        let normal = Normal::new(0.0, std).expect("positive std");
        let t = Tensor::from_fn(rows, cols, |_, _| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break T::lit(v);
            }
        });
        self.add(name, t)
    }

    pub fn add_const(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> ParamId {
        self.add(name, Tensor::from_fn(rows, cols, |_, _| T::lit(v)))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|t| t.data.len()).sum()
    }

    /// Whether graphs built on this store record gradients for it.
    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, on: bool) {
        self.trainable = on;
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            trainable: self.trainable,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// One gradient buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            grads: store.values.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn add(&mut self, id: ParamId, g: &Tensor<T>) {
        let d = &mut self.grads[id.0];
        d.data.iter_mut().zip(&g.data).for_each(|(d, &v)| *d = *d + v);
    }

    pub fn merge(&mut self, other: &Gradients<T>) {
        for (d, g) in self.grads.iter_mut().zip(&other.grads) {
            d.data.iter_mut().zip(&g.data).for_each(|(d, &v)| *d = *d + v);
        }
    }

    pub fn scale(&mut self, s: T) {
        for d in &mut self.grads {
            d.data.iter_mut().for_each(|v| *v = *v * s);
        }
    }

    pub fn global_norm(&self) -> T {
        self.grads.iter().map(Tensor::sum_squares).sum::<T>().sqrt()
    }

    /// Rescales to at most `max_norm`; returns the norm before clipping.
    pub fn clip(&mut self, max_norm: T) -> T {
        let n = self.global_norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || store.values.iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) {
        self.step_with_lr(store, grads, self.config.lr);
    }

    pub fn step_with_lr(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64) {
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps, one) = (T::lit(lr), T::lit(c.eps), T::one());
        for (k, p) in store.values.iter_mut().enumerate() {
            let g = &grads.grads[k].data;
            for (j, w) in p.data.iter_mut().enumerate() {
                let m = b1 * self.m[k][j] + (one - b1) * g[j];
                let v = b2 * self.v[k][j] + (one - b2) * g[j] * g[j];
                self.m[k][j] = m;
                self.v[k][j] = v;
                *w = *w - lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointManifest {
    format: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint: parameters plus the metadata stored with them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub store: ParamStore<f32>,
    pub meta: serde_json::Value,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), NnError> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes `<stem>.bin` then `<stem>.json`; values are stored as `f32`.
pub fn save_checkpoint<T: Scalar>(
    store: &ParamStore<T>,
    stem: &Path,
    meta: serde_json::Value,
) -> Result<(), NnError> {
    let (json, bin) = paths(stem);
    let mut blob = Vec::with_capacity(store.scalar_count() * 4);
    let mut tensors = Vec::with_capacity(store.len());
    for (name, t) in store.names.iter().zip(&store.values) {
        tensors.push(TensorEntry {
            name: name.clone(),
            rows: t.rows,
            cols: t.cols,
            offset: blob.len() / 4,
        });
        for v in &t.data {
            blob.extend_from_slice(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
        }
    }
    write_atomic(&bin, &blob)?;
    let manifest = CheckpointManifest {
        format: 1,
        meta,
        tensors,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    write_atomic(&json, text.as_bytes())
}

pub fn load_checkpoint(stem: &Path) -> Result<Checkpoint, NnError> {
    let (json, bin) = paths(stem);
    let text = fs::read_to_string(&json).map_err(io_err(&json))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if manifest.format != 1 {
        return Err(NnError::Checkpoint(format!("unsupported format {}", manifest.format)));
    }
    let blob = fs::read(&bin).map_err(io_err(&bin))?;
    let mut store = ParamStore::new();
    for e in manifest.tensors {
        let n = e.rows * e.cols;
        let bytes = blob
            .get(e.offset * 4..(e.offset + n) * 4)
            .ok_or_else(|| NnError::Checkpoint(format!("tensor {} lies outside the blob", e.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.add(&e.name, Tensor::from_vec(e.rows, e.cols, data)?);
    }
    Ok(Checkpoint {
        store,
        meta: manifest.meta,
    })
}
