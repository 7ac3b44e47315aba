//! Multimodal operator learning for parametric differential equations.
//!
//! The crate covers the full pipeline: an equation catalog, reference
//! solvers, dataset generation, a word tokenizer with numeric payload tokens,
//! a small reverse-mode autodiff engine, the transformer model with a
//! cross-attention operator decoder and a text head, training and evaluation.

pub mod catalog;
pub mod dataset;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod rng;
pub mod tokenizer;
pub mod training;

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn ordered_map<I: Sync, R: Send>(items: &[I], f: impl Fn(&I) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn ordered_map<I: Sync, R: Send>(items: &[I], f: impl Fn(&I) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}
