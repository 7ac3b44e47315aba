//! Linear maps, MLPs, layer norm, multi-head attention and the two layer
//! types of the model: causal self-attention and per-query cross-attention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Mask, Var};
use super::params::{ParamId, ParamStore};
use super::{shape_err, NnError, Scalar};

/// `x W + b` with `W: [in x out]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            w: store.add_normal(&format!("{name}.w"), fan_in, fan_out, std, rng),
            b: store.add_const(&format!("{name}.b"), 1, fan_out, 0.0),
        }
    }

    pub fn zeros<T: Scalar>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: store.add_const(&format!("{name}.w"), fan_in, fan_out, 0.0),
            b: store.add_const(&format!("{name}.b"), 1, fan_out, 0.0),
        }
    }

    pub fn forward<'p, T: Scalar>(&self, g: &mut Graph<'p, T>, store: &'p ParamStore<T>, x: Var) -> Result<Var, NnError> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// Two-layer perceptron with a GELU in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        dims: (usize, usize, usize),
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.fc1"), dims.0, dims.1, std, rng),
            l2: Linear::new(store, &format!("{name}.fc2"), dims.1, dims.2, std, rng),
        }
    }

    /// Weights drawn with std `1 / sqrt(fan_in)` per layer, which keeps
    /// unit-scale inputs at unit scale.
    pub fn fan_in<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, dims: (usize, usize, usize), rng: &mut R) -> Self {
        let s1 = 1.0 / (dims.0 as f64).sqrt();
        let s2 = 1.0 / (dims.1 as f64).sqrt();
        Self {
            l1: Linear::new(store, &format!("{name}.fc1"), dims.0, dims.1, s1, rng),
            l2: Linear::new(store, &format!("{name}.fc2"), dims.1, dims.2, s2, rng),
        }
    }

    pub fn forward<'p, T: Scalar>(&self, g: &mut Graph<'p, T>, store: &'p ParamStore<T>, x: Var) -> Result<Var, NnError> {
        let h = self.l1.forward(g, store, x)?;
        let h = g.gelu(h);
        self.l2.forward(g, store, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        Self {
            gamma: store.add_const(&format!("{name}.gamma"), 1, d, 1.0),
            beta: store.add_const(&format!("{name}.beta"), 1, d, 0.0),
        }
    }

    pub fn forward<'p, T: Scalar>(&self, g: &mut Graph<'p, T>, store: &'p ParamStore<T>, x: Var) -> Result<Var, NnError> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// `softmax(Q K^T / sqrt(d_k) + mask) V`.
pub fn attention<T: Scalar>(g: &mut Graph<'_, T>, q: Var, k: Var, v: Var, mask: &Mask) -> Result<Var, NnError> {
    let (dq, dk, (nk, _)) = (g.shape(q).1, g.shape(k).1, g.shape(v));
    if dq != dk || g.shape(k).0 != nk {
        return Err(shape_err(
            "attention",
            format!("Q {:?}, K {:?}, V {:?}", g.shape(q), g.shape(k), g.shape(v)),
        ));
    }
    let s = g.matmul_t(q, false, k, true)?;
    let s = g.scale(s, T::lit(1.0 / (dk as f64).sqrt()));
    let p = g.softmax(s, mask)?;
    g.matmul(p, v)
}

/// Multi-head attention. Head `i` uses columns `i*d/h .. (i+1)*d/h` of the
/// query, key and value projections, which is the same as separate
/// `[d x d/h]` matrices per head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub d: usize,
}

impl Attention {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && d % heads == 0, "d must be divisible by the head count");
        Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, std, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, std, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, std, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, std, rng),
            heads,
            d,
        }
    }

    pub fn forward<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        xq: Var,
        xk: Var,
        xv: Var,
        mask: &Mask,
    ) -> Result<Var, NnError> {
        let q = self.q.forward(g, store, xq)?;
        let (k, v) = self.project_kv(g, store, xk, xv)?;
        self.attend(g, store, q, k, v, mask)
    }

    /// Key and value projections, reusable across query batches.
    pub fn project_kv<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        xk: Var,
        xv: Var,
    ) -> Result<(Var, Var), NnError> {
        Ok((self.k.forward(g, store, xk)?, self.v.forward(g, store, xv)?))
    }

    /// Heads and output projection on already projected `q`, `k`, `v`.
    pub fn attend<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        q: Var,
        k: Var,
        v: Var,
        mask: &Mask,
    ) -> Result<Var, NnError> {
        let dh = self.d / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            outs.push(attention(g, qh, kh, vh, mask)?);
        }
        let cat = if self.heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
        self.o.forward(g, store, cat)
    }
}

pub fn multihead_attention<'p, T: Scalar>(
    g: &mut Graph<'p, T>,
    store: &'p ParamStore<T>,
    params: &Attention,
    q: Var,
    k: Var,
    v: Var,
    mask: &Mask,
) -> Result<Var, NnError> {
    params.forward(g, store, q, k, v, mask)
}

/// Pre-norm self-attention layer:
/// `Y = X + MHA(LN(X))`, `out = Y + FFN(LN(Y))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerLayer {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub ffn: Mlp,
}

impl TransformerLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        ffn: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            attn: Attention::new(store, &format!("{name}.attn"), d, heads, std, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            ffn: Mlp::new(store, &format!("{name}.ffn"), (d, ffn, d), std, rng),
        }
    }

    pub fn forward<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        x: Var,
        mask: &Mask,
    ) -> Result<Var, NnError> {
        let xn = self.ln1.forward(g, store, x)?;
        let a = self.attn.forward(g, store, xn, xn, xn, mask)?;
        let y = g.add(x, a)?;
        let yn = self.ln2.forward(g, store, y)?;
        let f = self.ffn.forward(g, store, yn)?;
        g.add(y, f)
    }
}

/// Pre-norm cross-attention layer without query self-attention: every query
/// row is processed independently of the others.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossLayer {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub ffn: Mlp,
}

impl CrossLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        ffn: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            attn: Attention::new(store, &format!("{name}.attn"), d, heads, std, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            ffn: Mlp::new(store, &format!("{name}.ffn"), (d, ffn, d), std, rng),
        }
    }

    /// `memory` is the key/value source, typically the prompt hidden states.
    pub fn forward<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        queries: Var,
        memory: Var,
    ) -> Result<Var, NnError> {
        let qn = self.ln1.forward(g, store, queries)?;
        let a = self.attn.forward(g, store, qn, memory, memory, &Mask::None)?;
        let y = g.add(queries, a)?;
        let yn = self.ln2.forward(g, store, y)?;
        let f = self.ffn.forward(g, store, yn)?;
        g.add(y, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use rand::SeedableRng;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn single_key_attention_returns_value() {
        let mut g = Graph::<f64>::new();
        let q = g.input(t(1, 1, &[1.0]));
        let out = attention(&mut g, q, q, q, &Mask::None).unwrap();
        assert_eq!(g.value(out).data, vec![1.0]);
    }

    #[test]
    fn two_key_attention_matches_formula() {
        let mut g = Graph::<f64>::new();
        let q = g.input(t(1, 2, &[1.0, 0.0]));
        let k = g.input(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let v = g.input(t(2, 2, &[2.0, 0.0, 0.0, 4.0]));
        let out = attention(&mut g, q, k, v, &Mask::None).unwrap();
        let s0 = 1.0 / 2f64.sqrt();
        let (e0, e1) = (s0.exp(), 1.0);
        let w0 = e0 / (e0 + e1);
        let expect = [2.0 * w0, 4.0 * (1.0 - w0)];
        for (a, b) in g.value(out).data.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn self_only_mask_returns_own_value_row() {
        let mut g = Graph::<f64>::new();
        let x = g.input(t(3, 2, &[0.1, 0.2, -0.5, 0.7, 1.0, 3.0]));
        let v = g.input(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let allowed = (0..9).map(|k| k / 3 == k % 3).collect();
        let out = attention(&mut g, x, x, v, &Mask::Allowed(allowed)).unwrap();
        assert_eq!(g.value(out).data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut g = Graph::<f64>::new();
        let q = g.input(t(1, 2, &[1.0, 0.0]));
        let k = g.input(t(2, 3, &[0.0; 6]));
        assert!(matches!(
            attention(&mut g, q, k, k, &Mask::None),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_sublayers_give_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let layer = TransformerLayer::new(&mut store, "l", 4, 2, 8, 0.02, &mut rng);
        for id in [layer.attn.o.w, layer.attn.o.b, layer.ffn.l2.w, layer.ffn.l2.b] {
            store.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let xt = Tensor::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1 - 0.3);
        let x = g.input(xt.clone());
        let y = layer.forward(&mut g, &store, x, &Mask::Causal).unwrap();
        assert_eq!(g.value(y), &xt);
    }

    #[test]
    fn permuting_keys_and_values_together() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::<f64>::new();
        let mha = Attention::new(&mut store, "a", 4, 2, 0.5, &mut rng);
        let q = Tensor::from_fn(2, 4, |i, j| (i + 2 * j) as f64 * 0.1);
        let kv = Tensor::from_fn(3, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4);
        let perm = [2, 0, 1];
        let kv_p = Tensor::from_fn(3, 4, |i, j| kv.get(perm[i], j));
        let mut g = Graph::new();
        let (qv, a, b) = (g.input(q), g.input(kv), g.input(kv_p));
        let o1 = mha.forward(&mut g, &store, qv, a, a, &Mask::None).unwrap();
        let o2 = mha.forward(&mut g, &store, qv, b, b, &Mask::None).unwrap();
        for (x, y) in g.value(o1).data.iter().zip(&g.value(o2).data) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
