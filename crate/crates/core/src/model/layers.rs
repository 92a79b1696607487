//! Parameterized layers: linear maps, layer norm, multi-head attention and
//! pre-norm transformer blocks.

use eae_autograd::{Graph, Mat, ParamId, ParamStore, Var};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::attention::{attend_with_prefix, Attended};
use super::ModelError;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

/// Source of named parameters. A fresh builder initializes them from a
/// seeded generator; a binding builder looks up tensors that already exist
/// (after loading a checkpoint) and checks their shapes.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: Option<ChaCha8Rng>,
}

impl<'a> Builder<'a> {
    pub fn init(store: &'a mut ParamStore, seed: u64) -> Self {
        Self { store, rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn bind(store: &'a mut ParamStore) -> Self {
        Self { store, rng: None }
    }

    pub fn param(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<ParamId, ModelError> {
        match &mut self.rng {
            Some(rng) => {
                let value = match init {
                    Init::Normal(std) => {
                        let n = Normal::new(0.0, std).expect("finite std");
                        Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
                    }
                    Init::Zeros => Array2::zeros((rows, cols)),
                    Init::Ones => Array2::ones((rows, cols)),
                };
                self.store.add(name, value).map_err(|e| ModelError::Params(e.to_string()))
            }
            None => {
                let id = self
                    .store
                    .id(name)
                    .ok_or_else(|| ModelError::Params(format!("missing tensor `{name}`")))?;
                let dim = self.store.get(id).dim();
                if dim != (rows, cols) {
                    return Err(ModelError::Params(format!(
                        "tensor `{name}` is {dim:?}, expected ({rows}, {cols})"
                    )));
                }
                Ok(id)
            }
        }
    }
}

fn leaf(g: &mut Graph, id: ParamId, trainable: bool) -> Var {
    g.param_leaf(id, trainable)
}

/// `x · W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(b: &mut Builder, name: &str, d_in: usize, d_out: usize) -> Result<Self, ModelError> {
        let w = b.param(&format!("{name}.w"), d_in, d_out, Init::Normal((1.0 / d_in as f64).sqrt()))?;
        let bias = b.param(&format!("{name}.b"), 1, d_out, Init::Zeros)?;
        Ok(Self { w, b: bias, d_in, d_out })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, trainable: bool) -> Var {
        let w = leaf(g, self.w, trainable);
        let b = leaf(g, self.b, trainable);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct Norm {
    gain: ParamId,
    bias: ParamId,
}

impl Norm {
    pub fn new(b: &mut Builder, name: &str, d: usize) -> Result<Self, ModelError> {
        Ok(Self {
            gain: b.param(&format!("{name}.gain"), 1, d, Init::Ones)?,
            bias: b.param(&format!("{name}.bias"), 1, d, Init::Zeros)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, trainable: bool) -> Var {
        let n = g.layer_norm(x, 1e-5);
        let gain = leaf(g, self.gain, trainable);
        let bias = leaf(g, self.bias, trainable);
        let n = g.mul_row(n, gain);
        g.add_row(n, bias)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(b: &mut Builder, name: &str, d: usize, heads: usize) -> Result<Self, ModelError> {
        Ok(Self {
            q: Linear::new(b, &format!("{name}.q"), d, d)?,
            k: Linear::new(b, &format!("{name}.k"), d, d)?,
            v: Linear::new(b, &format!("{name}.v"), d, d)?,
            o: Linear::new(b, &format!("{name}.o"), d, d)?,
            heads,
        })
    }

    /// Projects `queries_in` and `memory`, attends (with the optional
    /// prefix prepended to the projected keys and values) and applies the
    /// output projection.
    pub fn forward(
        &self,
        g: &mut Graph,
        queries_in: Var,
        memory: Var,
        prefix: Option<(Var, Var)>,
        mask: Option<&Mat>,
        trainable: bool,
    ) -> Result<Attended, ModelError> {
        let q = self.q.forward(g, queries_in, trainable);
        let k = self.k.forward(g, memory, trainable);
        let v = self.v.forward(g, memory, trainable);
        let mut att = attend_with_prefix(g, q, k, v, prefix, mask, self.heads)?;
        att.output = self.o.forward(g, att.output, trainable);
        Ok(att)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(b: &mut Builder, name: &str, d: usize, d_ff: usize) -> Result<Self, ModelError> {
        Ok(Self { up: Linear::new(b, &format!("{name}.up"), d, d_ff)?, down: Linear::new(b, &format!("{name}.down"), d_ff, d)? })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, trainable: bool) -> Var {
        let h = self.up.forward(g, x, trainable);
        let h = g.gelu(h);
        self.down.forward(g, h, trainable)
    }
}

/// Pre-norm self-attention block.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    ln_attn: Norm,
    attn: MultiHeadAttention,
    ln_ff: Norm,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(b: &mut Builder, name: &str, d: usize, heads: usize, d_ff: usize) -> Result<Self, ModelError> {
        Ok(Self {
            ln_attn: Norm::new(b, &format!("{name}.ln_attn"), d)?,
            attn: MultiHeadAttention::new(b, &format!("{name}.attn"), d, heads)?,
            ln_ff: Norm::new(b, &format!("{name}.ln_ff"), d)?,
            ff: FeedForward::new(b, &format!("{name}.ff"), d, d_ff)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, prefix: Option<(Var, Var)>, trainable: bool) -> Result<Var, ModelError> {
        let h = self.ln_attn.forward(g, x, trainable);
        let a = self.attn.forward(g, h, h, prefix, None, trainable)?;
        let x = g.add(x, a.output);
        let h = self.ln_ff.forward(g, x, trainable);
        let f = self.ff.forward(g, h, trainable);
        Ok(g.add(x, f))
    }
}

/// Pre-norm causal self-attention, cross-attention and feed-forward.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    ln_self: Norm,
    self_attn: MultiHeadAttention,
    ln_cross: Norm,
    cross_attn: MultiHeadAttention,
    ln_ff: Norm,
    ff: FeedForward,
}

/// Output of one decoder layer; `cross_weights` holds one matrix per head.
pub struct DecoderStep {
    pub output: Var,
    pub cross_weights: Vec<Var>,
}

impl DecoderLayer {
    pub fn new(b: &mut Builder, name: &str, d: usize, heads: usize, d_ff: usize) -> Result<Self, ModelError> {
        Ok(Self {
            ln_self: Norm::new(b, &format!("{name}.ln_self"), d)?,
            self_attn: MultiHeadAttention::new(b, &format!("{name}.self"), d, heads)?,
            ln_cross: Norm::new(b, &format!("{name}.ln_cross"), d)?,
            cross_attn: MultiHeadAttention::new(b, &format!("{name}.cross"), d, heads)?,
            ln_ff: Norm::new(b, &format!("{name}.ln_ff"), d)?,
            ff: FeedForward::new(b, &format!("{name}.ff"), d, d_ff)?,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        memory: Var,
        causal: &Mat,
        self_prefix: Option<(Var, Var)>,
        cross_prefix: Option<(Var, Var)>,
    ) -> Result<DecoderStep, ModelError> {
        let h = self.ln_self.forward(g, x, true);
        let a = self.self_attn.forward(g, h, h, self_prefix, Some(causal), true)?;
        let x = g.add(x, a.output);
        let h = self.ln_cross.forward(g, x, true);
        let c = self.cross_attn.forward(g, h, memory, cross_prefix, None, true)?;
        let x = g.add(x, c.output);
        let h = self.ln_ff.forward(g, x, true);
        let f = self.ff.forward(g, h, true);
        Ok(DecoderStep { output: g.add(x, f), cross_weights: c.weights })
    }
}
