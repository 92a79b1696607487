//! Copy-augmented output distribution and its training loss.
//!
//! At step `i` the output distribution mixes generation and pointing:
//! `P(t) = w·P_gen(t) + (1 − w)·Σ_j P_copy(j)·1(x_j = t)`, where `w` comes
//! from a gate on the last decoder state and `P_copy` from the last decoder
//! layer's cross-attention over the source positions.

use std::ops::Range;

use eae_autograd::{Graph, ParamId, ParamStore, Var};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::layers::{Builder, Init};
use crate::model::ModelError;

#[derive(Debug, Error, PartialEq)]
pub enum CopyError {
    #[error("step {step}: no cross-attention mass on source positions")]
    DegenerateMass { step: usize },
    #[error("step {step}: gold token {token} has probability zero")]
    ZeroProbabilityGold { step: usize, token: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopyMode {
    /// Learned gate, loss `NLL + λ·Σ w`.
    Adjusted,
    /// Learned gate, loss `NLL`.
    Plain,
    /// Gate fixed at 0: output words must come from the source.
    Pure,
    /// Gate fixed at 1: plain generation.
    Off,
}

/// Which encoder positions may be copied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopySource {
    /// The whole text input: passage, description and template.
    FullInput,
    /// Passage tokens only.
    PassageOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CopyConfig {
    pub mode: CopyMode,
    pub lambda: f64,
    pub source: CopySource,
}

impl Default for CopyConfig {
    fn default() -> Self {
        Self { mode: CopyMode::Adjusted, lambda: 1.0, source: CopySource::FullInput }
    }
}

impl CopyConfig {
    /// Weight of the gate penalty actually applied.
    pub fn effective_lambda(&self) -> f64 {
        if self.mode == CopyMode::Adjusted {
            self.lambda
        } else {
            0.0
        }
    }
}

/// Distributions at one decoding step. `p_gen` and `mixed` are over the
/// extended vocabulary (model vocabulary followed by source-only words).
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub p_gen: Vec<f64>,
    pub p_copy: Vec<f64>,
    pub w_gen: f64,
    pub mixed: Vec<f64>,
}

impl StepDistribution {
    pub fn new(p_gen: Vec<f64>, p_copy: Vec<f64>, w_gen: f64, source: &[usize]) -> Self {
        let mixed = mix(&p_gen, &p_copy, w_gen, source);
        Self { p_gen, p_copy, w_gen, mixed }
    }
}

/// Gate network: one affine map of the decoder state squashed by a
/// sigmoid.
#[derive(Debug, Clone)]
pub struct GenGate {
    pub w: ParamId,
    pub b: ParamId,
}

impl GenGate {
    pub fn init(d_model: usize, store: &mut ParamStore, seed: u64) -> Result<Self, ModelError> {
        let mut b = Builder::init(store, seed);
        Ok(Self {
            w: b.param("gate.w", d_model, 1, Init::Normal((1.0 / d_model as f64).sqrt()))?,
            b: b.param("gate.b", 1, 1, Init::Zeros)?,
        })
    }

    pub fn bind(d_model: usize, store: &mut ParamStore) -> Result<Self, ModelError> {
        let mut b = Builder::bind(store);
        Ok(Self { w: b.param("gate.w", d_model, 1, Init::Zeros)?, b: b.param("gate.b", 1, 1, Init::Zeros)? })
    }

    /// `w_gen` per step as a column, `steps × 1`. Pure and off modes give
    /// constant 0 and 1.
    pub fn forward(&self, g: &mut Graph, hidden: Var, mode: CopyMode) -> Var {
        let steps = g.shape(hidden).0;
        match mode {
            CopyMode::Pure => g.constant(Array2::zeros((steps, 1))),
            CopyMode::Off => g.constant(Array2::ones((steps, 1))),
            CopyMode::Adjusted | CopyMode::Plain => {
                let w = g.param(self.w);
                let b = g.param(self.b);
                let z = g.matmul(hidden, w);
                let z = g.add_row(z, b);
                g.sigmoid(z)
            }
        }
    }
}

/// Gate value for a single state vector (no graph).
pub fn gen_gate(store: &ParamStore, gate: &GenGate, hidden: &[f64], mode: CopyMode) -> f64 {
    match mode {
        CopyMode::Pure => 0.0,
        CopyMode::Off => 1.0,
        CopyMode::Adjusted | CopyMode::Plain => {
            let w = store.get(gate.w);
            let z: f64 = hidden.iter().zip(w.column(0)).map(|(h, w)| h * w).sum::<f64>() + store.get(gate.b)[[0, 0]];
            1.0 / (1.0 + (-z).exp())
        }
    }
}

/// Copy distribution for one step from per-head attention rows over
/// `prefix + memory` positions: heads averaged, restricted to `source`
/// positions, renormalized.
pub fn copy_distribution(heads: &[Vec<f64>], source: Range<usize>) -> Result<Vec<f64>, CopyError> {
    let Some(first) = heads.first() else {
        return Err(CopyError::Shape("no attention heads".into()));
    };
    if source.end > first.len() || heads.iter().any(|h| h.len() != first.len()) {
        return Err(CopyError::Shape(format!("source {source:?} outside rows of {}", first.len())));
    }
    let n = heads.len() as f64;
    let mut p: Vec<f64> = source.clone().map(|j| heads.iter().map(|h| h[j]).sum::<f64>() / n).collect();
    let total: f64 = p.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(CopyError::DegenerateMass { step: 0 });
    }
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// Mixture over the extended vocabulary; its length covers both `p_gen`
/// and every id in `source`.
pub fn mix(p_gen: &[f64], p_copy: &[f64], w_gen: f64, source: &[usize]) -> Vec<f64> {
    let len = source.iter().map(|&s| s + 1).max().unwrap_or(0).max(p_gen.len());
    let mut out = vec![0.0; len];
    for (o, p) in out.iter_mut().zip(p_gen) {
        *o = w_gen * p;
    }
    for (&tok, &p) in source.iter().zip(p_copy) {
        out[tok] += (1.0 - w_gen) * p;
    }
    out
}

/// `−Σ ln p_i`.
pub fn nll(gold_probs: &[f64]) -> f64 {
    -gold_probs.iter().map(|p| p.ln()).sum::<f64>()
}

/// Training loss over one sequence: NLL of the gold tokens under the mixed
/// distributions, plus `λ·Σ w_gen` in adjusted mode.
pub fn adjusted_loss(steps: &[StepDistribution], gold: &[usize], config: &CopyConfig) -> Result<f64, CopyError> {
    if steps.len() != gold.len() {
        return Err(CopyError::Shape(format!("{} steps for {} gold tokens", steps.len(), gold.len())));
    }
    let mut probs = Vec::with_capacity(gold.len());
    for (i, (s, &t)) in steps.iter().zip(gold).enumerate() {
        let p = s.mixed.get(t).copied().unwrap_or(0.0);
        if p <= 0.0 {
            return Err(CopyError::ZeroProbabilityGold { step: i, token: t });
        }
        probs.push(p);
    }
    let base = nll(&probs);
    let lambda = config.effective_lambda();
    if lambda == 0.0 {
        return Ok(base);
    }
    Ok(base + lambda * steps.iter().map(|s| s.w_gen).sum::<f64>())
}

/// Inputs to [`sequence_loss`] describing one target sequence.
pub struct CopyTarget<'a> {
    /// Extended-vocabulary id of every encoder text position.
    pub source_ids: &'a [usize],
    /// Encoder positions (within the memory) that may be copied.
    pub source_range: Range<usize>,
    /// Extended-vocabulary gold id per decoder step.
    pub gold: &'a [usize],
}

/// Recorded loss pieces.
pub struct LossParts {
    pub loss: Var,
    pub nll: Var,
    pub w_gen: Var,
}

/// Graph version of [`adjusted_loss`] computed from model outputs.
///
/// `logits` is `steps × V`, `w_gen` `steps × 1`, and `cross` holds the
/// last layer's per-head attention (`steps × (prefix + memory)`);
/// `prefix_len` prefix columns precede the memory columns.
pub fn sequence_loss(
    g: &mut Graph,
    logits: Var,
    w_gen: Var,
    cross: &[Var],
    prefix_len: usize,
    target: &CopyTarget,
    config: &CopyConfig,
) -> Result<LossParts, CopyError> {
    let (steps, vocab) = g.shape(logits);
    if target.gold.len() != steps || g.shape(w_gen) != (steps, 1) {
        return Err(CopyError::Shape(format!("{steps} decoder steps for {} gold tokens", target.gold.len())));
    }
    let src = &target.source_ids[target.source_range.clone()];
    let in_source: Vec<Vec<f64>> = target
        .gold
        .iter()
        .map(|&t| src.iter().map(|&s| if s == t { 1.0 } else { 0.0 }).collect())
        .collect();
    let copyable: Vec<bool> = in_source.iter().map(|r| r.iter().any(|&x| x > 0.0)).collect();

    let at: Vec<(usize, usize)> = target.gold.iter().enumerate().map(|(i, &t)| (i, t.min(vocab - 1))).collect();
    let log_mixed = match config.mode {
        CopyMode::Off => {
            if let Some(i) = target.gold.iter().position(|&t| t >= vocab) {
                return Err(CopyError::ZeroProbabilityGold { step: i, token: target.gold[i] });
            }
            let log_p = g.log_softmax(logits);
            g.pick(log_p, &at)
        }
        mode => {
            if mode == CopyMode::Pure {
                if let Some(i) = copyable.iter().position(|c| !c) {
                    return Err(CopyError::ZeroProbabilityGold { step: i, token: target.gold[i] });
                }
            }
            let copy_mass = copy_mass(g, cross, prefix_len, &target.source_range, &in_source)?;
            let mixed = if mode == CopyMode::Pure {
                copy_mass
            } else {
                let p = g.softmax(logits);
                let p_gold = g.pick(p, &at);
                let valid = Array2::from_shape_fn((steps, 1), |(i, _)| if target.gold[i] < vocab { 1.0 } else { 0.0 });
                let valid = g.constant(valid);
                let p_gold = g.mul(p_gold, valid);
                let gen_part = g.mul(w_gen, p_gold);
                let keep = g.affine(w_gen, -1.0, 1.0);
                let copy_part = g.mul(keep, copy_mass);
                g.add(gen_part, copy_part)
            };
            g.log(mixed)
        }
    };
    let total = g.sum_all(log_mixed);
    let nll = g.scale(total, -1.0);
    let lambda = config.effective_lambda();
    let loss = if lambda != 0.0 {
        let s = g.sum_all(w_gen);
        let reg = g.scale(s, lambda);
        g.add(nll, reg)
    } else {
        nll
    };
    Ok(LossParts { loss, nll, w_gen })
}

/// `Σ_j P_copy(j)·1(x_j = gold_i)` per step as a column.
fn copy_mass(
    g: &mut Graph,
    cross: &[Var],
    prefix_len: usize,
    source: &Range<usize>,
    in_source: &[Vec<f64>],
) -> Result<Var, CopyError> {
    if cross.is_empty() {
        return Err(CopyError::Shape("no attention heads".into()));
    }
    let (steps, cols) = g.shape(cross[0]);
    let (start, end) = (prefix_len + source.start, prefix_len + source.end);
    if end > cols {
        return Err(CopyError::Shape(format!("source columns {start}..{end} outside {cols}")));
    }
    let slices: Vec<Var> = cross.iter().map(|&h| g.slice_cols(h, start, end)).collect();
    let mut sum = slices[0];
    for &s in &slices[1..] {
        sum = g.add(sum, s);
    }
    let mean = g.scale(sum, 1.0 / cross.len() as f64);
    let totals = g.sum_cols(mean);
    if let Some(step) = g.value(totals).iter().position(|&t| t.is_nan() || t <= 0.0) {
        return Err(CopyError::DegenerateMass { step });
    }
    let inv = g.recip(totals);
    let p_copy = g.mul_col(mean, inv);
    let indicator = Array2::from_shape_fn((steps, end - start), |(i, j)| in_source[i][j]);
    let indicator = g.constant(indicator);
    let hits = g.mul(p_copy, indicator);
    Ok(g.sum_cols(hits))
}
