//! Encoder-decoder transformer with key/value prefix slots in its attention
//! blocks, plus the alternative ways of feeding AMR information to it.

pub mod attention;
pub mod layers;

use eae_autograd::{Graph, Mat, ParamStore, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{BOS_ID, EOS_ID, UNK_ID};
pub use attention::{attend_with_prefix, causal_mask, Attended};
use layers::{Builder, DecoderLayer, EncoderLayer, Init, Norm};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("parameters: {0}")]
    Params(String),
}

/// Attention block family that can receive a prefix. The declaration order
/// is the order in which prefix pieces are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    EncoderSelf,
    DecoderCross,
    DecoderSelf,
}

impl Site {
    pub const DEFAULT: [Site; 2] = [Site::EncoderSelf, Site::DecoderCross];
}

/// How AMR information reaches the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmrMode {
    /// Compressed AMR prefixes in the attention blocks.
    Prefix,
    /// Linearized AMR tokens appended to the encoder input.
    AmrPromptConcat,
    /// AMR encoder states appended to the encoder output.
    EncodingConcat,
    None,
}

/// `vocab_size` is filled in from the training vocabulary when a run is
/// assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub injection_sites: Vec<Site>,
    pub amr_mode: AmrMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::tiny(0, AmrMode::Prefix)
    }
}

impl ModelConfig {
    /// Small configuration used for desk-scale runs.
    pub fn tiny(vocab_size: usize, amr_mode: AmrMode) -> Self {
        let injection_sites = if amr_mode == AmrMode::Prefix { Site::DEFAULT.to_vec() } else { Vec::new() };
        Self {
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_ff: 128,
            vocab_size,
            max_len: 256,
            injection_sites,
            amr_mode,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab_size <= EOS_ID.max(UNK_ID) {
            return bad(format!("vocabulary of {} tokens lacks the special tokens", self.vocab_size));
        }
        if self.max_len == 0 || self.d_ff == 0 {
            return bad("max_len and d_ff must be positive".into());
        }
        let has_sites = !self.injection_sites.is_empty();
        if has_sites != (self.amr_mode == AmrMode::Prefix) {
            return bad("injection sites must be given exactly when amr_mode is prefix".into());
        }
        Ok(())
    }

    /// Injected blocks in prefix layout order: by site, then layer.
    pub fn blocks(&self) -> Vec<(Site, usize)> {
        let mut sites = self.injection_sites.clone();
        sites.sort();
        sites.dedup();
        let mut out = Vec::new();
        for site in sites {
            let layers = match site {
                Site::EncoderSelf => self.n_enc_layers,
                Site::DecoderCross | Site::DecoderSelf => self.n_dec_layers,
            };
            out.extend((0..layers).map(|i| (site, i)));
        }
        out
    }
}

/// One injected block's prefix keys and values (`l × d_model` each).
#[derive(Debug, Clone, Copy)]
pub struct PrefixBlock {
    pub site: Site,
    pub layer: usize,
    pub k: Var,
    pub v: Var,
}

/// Per-block prefixes recorded on a graph.
#[derive(Debug, Clone, Default)]
pub struct PrefixSet {
    pub len: usize,
    pub blocks: Vec<PrefixBlock>,
}

impl PrefixSet {
    pub fn get(&self, site: Site, layer: usize) -> Option<(Var, Var)> {
        self.blocks.iter().find(|b| b.site == site && b.layer == layer).map(|b| (b.k, b.v))
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn scalar_count(&self, g: &Graph) -> usize {
        self.blocks.iter().map(|b| g.value(b.k).len() + g.value(b.v).len()).sum()
    }
}

/// AMR-side input accompanying the encoder tokens.
#[derive(Debug, Clone, Copy)]
pub enum AmrSide<'p> {
    Absent,
    Prefix(&'p PrefixSet),
    /// AMR encoder states, `n × d_model`.
    Encodings(Var),
}

/// Encoder output plus whatever the decoder needs to attend to it.
#[derive(Debug, Clone)]
pub struct Memory {
    pub states: Var,
    /// Rows of `states` that come from encoder input tokens.
    pub input_len: usize,
    prefixes: Option<PrefixSet>,
}

impl Memory {
    pub fn prefix_len(&self) -> usize {
        self.prefixes.as_ref().map_or(0, |p| p.len)
    }

    fn prefix(&self, site: Site, layer: usize) -> Option<(Var, Var)> {
        self.prefixes.as_ref().and_then(|p| p.get(site, layer))
    }
}

pub struct ForwardOutput {
    /// Final decoder states, one row per decoder step.
    pub hidden: Var,
    /// Unnormalized generation scores, steps × vocabulary.
    pub logits: Var,
    /// Last decoder layer's cross-attention, one matrix per head, each
    /// steps × (prefix length + memory length).
    pub cross_attention: Vec<Var>,
    pub prefix_len: usize,
    pub memory_len: usize,
}

#[derive(Debug, Clone)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    embed: eae_autograd::ParamId,
    pos: eae_autograd::ParamId,
    encoder: Vec<EncoderLayer>,
    enc_norm: Norm,
    decoder: Vec<DecoderLayer>,
    dec_norm: Norm,
}

impl Seq2Seq {
    /// Adds freshly initialized weights under `model.` to `store`.
    pub fn init(config: ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self, ModelError> {
        Self::build(config, &mut Builder::init(store, seed))
    }

    /// Binds to weights already present in `store`.
    pub fn bind(config: ModelConfig, store: &mut ParamStore) -> Result<Self, ModelError> {
        Self::build(config, &mut Builder::bind(store))
    }

    fn build(config: ModelConfig, b: &mut Builder) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.d_model;
        let embed = b.param("model.embed", config.vocab_size, d, Init::Normal((1.0 / d as f64).sqrt()))?;
        let pos = b.param("model.pos", config.max_len, d, Init::Normal(0.5))?;
        let encoder = (0..config.n_enc_layers)
            .map(|i| EncoderLayer::new(b, &format!("model.enc.{i}"), d, config.n_heads, config.d_ff))
            .collect::<Result<_, _>>()?;
        let enc_norm = Norm::new(b, "model.enc.norm", d)?;
        let decoder = (0..config.n_dec_layers)
            .map(|i| DecoderLayer::new(b, &format!("model.dec.{i}"), d, config.n_heads, config.d_ff))
            .collect::<Result<_, _>>()?;
        let dec_norm = Norm::new(b, "model.dec.norm", d)?;
        Ok(Self { config, embed, pos, encoder, enc_norm, decoder, dec_norm })
    }

    fn embed(&self, g: &mut Graph, ids: &[usize]) -> Result<Var, ModelError> {
        let c = &self.config;
        if ids.len() > c.max_len {
            return Err(ModelError::ShapeMismatch(format!("sequence of {} exceeds max_len {}", ids.len(), c.max_len)));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= c.vocab_size) {
            return Err(ModelError::ShapeMismatch(format!("token id {bad} outside vocabulary of {}", c.vocab_size)));
        }
        let table = g.param(self.embed);
        let tok = g.gather(table, ids);
        let tok = g.scale(tok, (c.d_model as f64).sqrt());
        let pos_table = g.param(self.pos);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = g.gather(pos_table, &positions);
        Ok(g.add(tok, pos))
    }

    fn check_amr(&self, g: &Graph, amr: &AmrSide) -> Result<(), ModelError> {
        let c = &self.config;
        let mismatch = |m: &str| Err(ModelError::ConfigMismatch(format!("amr_mode {:?}: {m}", c.amr_mode)));
        match (c.amr_mode, amr) {
            (AmrMode::Prefix, AmrSide::Prefix(p)) => {
                let expected = c.blocks();
                let got: Vec<_> = p.blocks.iter().map(|b| (b.site, b.layer)).collect();
                if got != expected {
                    return mismatch(&format!("prefix blocks {got:?}, expected {expected:?}"));
                }
                for b in &p.blocks {
                    if g.shape(b.k) != (p.len, c.d_model) || g.shape(b.v) != (p.len, c.d_model) {
                        return Err(ModelError::ShapeMismatch(format!(
                            "prefix for {:?} layer {} is {:?}/{:?}, expected ({}, {})",
                            b.site,
                            b.layer,
                            g.shape(b.k),
                            g.shape(b.v),
                            p.len,
                            c.d_model
                        )));
                    }
                }
                Ok(())
            }
            (AmrMode::Prefix, _) => mismatch("requires a prefix set"),
            (AmrMode::EncodingConcat, AmrSide::Encodings(e)) => {
                if g.shape(*e).1 != c.d_model {
                    return mismatch(&format!("AMR encodings have width {}, model {}", g.shape(*e).1, c.d_model));
                }
                Ok(())
            }
            (AmrMode::EncodingConcat, _) => mismatch("requires AMR encodings"),
            (AmrMode::None | AmrMode::AmrPromptConcat, AmrSide::Absent) => Ok(()),
            (AmrMode::None | AmrMode::AmrPromptConcat, _) => mismatch("takes no AMR side input"),
        }
    }

    /// Runs the encoder over `input` and assembles the decoder's memory.
    pub fn encode(&self, g: &mut Graph, input: &[usize], amr: AmrSide) -> Result<Memory, ModelError> {
        if input.is_empty() {
            return Err(ModelError::ShapeMismatch("empty encoder input".into()));
        }
        self.check_amr(g, &amr)?;
        let prefixes = match amr {
            AmrSide::Prefix(p) => Some(p.clone()),
            _ => None,
        };
        let mut x = self.embed(g, input)?;
        for (i, layer) in self.encoder.iter().enumerate() {
            let prefix = prefixes.as_ref().and_then(|p| p.get(Site::EncoderSelf, i));
            x = layer.forward(g, x, prefix, true)?;
        }
        let mut states = self.enc_norm.forward(g, x, true);
        if let AmrSide::Encodings(e) = amr {
            states = g.concat_rows(&[states, e]);
        }
        Ok(Memory { states, input_len: input.len(), prefixes })
    }

    /// Teacher-forced decoder pass over `decoder_input`.
    pub fn decode(&self, g: &mut Graph, memory: &Memory, decoder_input: &[usize]) -> Result<ForwardOutput, ModelError> {
        if decoder_input.is_empty() {
            return Err(ModelError::ShapeMismatch("empty decoder input".into()));
        }
        let mut x = self.embed(g, decoder_input)?;
        let causal: Mat = causal_mask(decoder_input.len());
        let mut cross = Vec::new();
        for (i, layer) in self.decoder.iter().enumerate() {
            let step = layer.forward(
                g,
                x,
                memory.states,
                &causal,
                memory.prefix(Site::DecoderSelf, i),
                memory.prefix(Site::DecoderCross, i),
            )?;
            x = step.output;
            cross = step.cross_weights;
        }
        let hidden = self.dec_norm.forward(g, x, true);
        let table = g.param(self.embed);
        let logits = g.matmul_nt(hidden, table);
        Ok(ForwardOutput {
            hidden,
            logits,
            cross_attention: cross,
            prefix_len: memory.prefix_len(),
            memory_len: g.shape(memory.states).0,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        input: &[usize],
        amr: AmrSide,
        decoder_input: &[usize],
    ) -> Result<ForwardOutput, ModelError> {
        let memory = self.encode(g, input, amr)?;
        self.decode(g, &memory, decoder_input)
    }

    /// Greedy decoding. `choose` receives the forward output for the
    /// current prefix of the output and returns the next token id; ids at
    /// or beyond the vocabulary (copied source words) are fed back as
    /// `<unk>`. Stops after the end token (not included) or `max_len` steps.
    pub fn greedy_decode<E: From<ModelError>>(
        &self,
        g: &mut Graph,
        memory: &Memory,
        max_len: usize,
        mut choose: impl FnMut(&mut Graph, &ForwardOutput) -> Result<usize, E>,
    ) -> Result<Vec<usize>, E> {
        let mut fed = vec![BOS_ID];
        let mut out = Vec::new();
        while out.len() < max_len && fed.len() <= self.config.max_len {
            let fwd = self.decode(g, memory, &fed)?;
            let next = choose(g, &fwd)?;
            if next == EOS_ID {
                break;
            }
            out.push(next);
            fed.push(if next < self.config.vocab_size { next } else { UNK_ID });
        }
        Ok(out)
    }
}

/// Index of the largest entry in the last row of `m`; ties go to the
/// lowest index.
pub fn argmax_last_row(m: &Mat) -> usize {
    let row = m.row(m.nrows() - 1);
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
