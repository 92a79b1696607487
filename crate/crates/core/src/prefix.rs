//! AMR-conditioned prefixes: encode a linearized graph, compress it through
//! learnable queries into one dense matrix `P`, and slice `P` into
//! per-block key/value prefixes.

use eae_autograd::{Graph, ParamId, ParamStore, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{build_vocab, AmrGraph, AmrVocab, LinearizedAmr, VocabMode, STANDARD_RELATIONS, STRUCTURE_TOKENS};
use crate::model::layers::{Builder, EncoderLayer, Init, Linear, MultiHeadAttention, Norm};
use crate::model::{ModelConfig, ModelError};
use crate::text::Vocab;

pub use crate::model::{PrefixBlock, PrefixSet};

#[derive(Debug, Error)]
pub enum PrefixError {
    #[error("relation `{0}` is not in the AMR vocabulary")]
    OovStructureToken(String),
    #[error("cannot compress an empty sequence of representations")]
    EmptyRepresentations,
    #[error("P holds {found} values per query, the injected blocks need {expected}")]
    CapacityMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which vocabulary the AMR encoder reads with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    /// Relations and concepts are atomic tokens.
    ConceptAware,
    /// Only relations are atomic; concepts are split into word pieces.
    Surface,
}

impl EncoderVariant {
    pub fn vocab_mode(self) -> VocabMode {
        match self {
            EncoderVariant::ConceptAware => VocabMode::RelationsAndConcepts,
            EncoderVariant::Surface => VocabMode::RelationsOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmrEncoderSpec {
    pub variant: EncoderVariant,
    pub frozen: bool,
    /// Width of the encoder's output representations.
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
}

impl Default for AmrEncoderSpec {
    fn default() -> Self {
        Self { variant: EncoderVariant::ConceptAware, frozen: false, dim: 64, layers: 1, heads: 4, max_len: 512 }
    }
}

/// Maps linearized AMR tokens to encoder ids under one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmrTokenizer {
    pub variant: EncoderVariant,
    pub vocab: AmrVocab,
    pub table: Vocab,
}

/// Splits a non-relation token the way a word-piece encoder would see it:
/// surrounding quotes dropped, a trailing sense number split off
/// (`appeal-01` → `appeal`, `-01`).
pub fn surface_pieces(token: &str) -> Vec<String> {
    let t = token.trim_matches('"');
    if t.is_empty() {
        return vec![token.to_string()];
    }
    if let Some(dash) = t.rfind('-') {
        let sense = &t[dash + 1..];
        if dash > 0 && !sense.is_empty() && sense.chars().all(|c| c.is_ascii_digit()) {
            return vec![t[..dash].to_string(), t[dash..].to_string()];
        }
    }
    vec![t.to_string()]
}

impl AmrTokenizer {
    /// Builds the vocabulary from `corpus` (plus the standard relation
    /// inventory) and the id table from every token the corpus produces.
    pub fn build(corpus: &[AmrGraph], variant: EncoderVariant) -> Result<Self, crate::amr::AmrError> {
        let mut vocab = build_vocab(corpus, variant.vocab_mode())?;
        vocab.extend_relations(STANDARD_RELATIONS.iter().copied());
        let mut table = Vocab::build(STRUCTURE_TOKENS);
        for t in &vocab.special_tokens {
            table.insert(t);
        }
        let mut tok = Self { variant, vocab, table };
        for g in corpus {
            for t in crate::amr::linearize(g).tokens {
                if !LinearizedAmr::is_relation(&t) {
                    for piece in tok.pieces(&t) {
                        tok.table.insert(&piece);
                    }
                }
            }
        }
        Ok(tok)
    }

    fn pieces(&self, token: &str) -> Vec<String> {
        if STRUCTURE_TOKENS.contains(&token) || self.vocab.contains(token) {
            return vec![token.to_string()];
        }
        match self.variant {
            EncoderVariant::ConceptAware => vec![token.to_string()],
            EncoderVariant::Surface => surface_pieces(token),
        }
    }

    /// Encoder ids for `seq`; unknown content tokens map to `<unk>`,
    /// unknown relations are an error.
    pub fn encode(&self, seq: &LinearizedAmr) -> Result<Vec<usize>, PrefixError> {
        let mut out = Vec::with_capacity(seq.len());
        for t in &seq.tokens {
            if LinearizedAmr::is_relation(t) {
                if !self.vocab.contains(t) {
                    return Err(PrefixError::OovStructureToken(t.clone()));
                }
                out.push(self.table.id(t));
            } else {
                out.extend(self.pieces(t).iter().map(|p| self.table.id(p)));
            }
        }
        Ok(out)
    }

    /// Id sequence as the model vocabulary's words (used when the graph is
    /// appended to the text prompt).
    pub fn words(&self, seq: &LinearizedAmr) -> Result<Vec<String>, PrefixError> {
        let mut out = Vec::with_capacity(seq.len());
        for t in &seq.tokens {
            if LinearizedAmr::is_relation(t) && !self.vocab.contains(t) {
                return Err(PrefixError::OovStructureToken(t.clone()));
            }
            out.extend(self.pieces(t));
        }
        Ok(out)
    }
}

/// Small transformer encoder over AMR token ids.
#[derive(Debug, Clone)]
pub struct AmrEncoder {
    pub spec: AmrEncoderSpec,
    embed: ParamId,
    pos: ParamId,
    layers: Vec<EncoderLayer>,
    norm: Norm,
}

impl AmrEncoder {
    fn build(spec: AmrEncoderSpec, vocab_size: usize, b: &mut Builder) -> Result<Self, ModelError> {
        if spec.dim == 0 || spec.heads == 0 || !spec.dim.is_multiple_of(spec.heads) {
            return Err(ModelError::InvalidConfig(format!(
                "AMR encoder dim {} not divisible by {} heads",
                spec.dim, spec.heads
            )));
        }
        let d = spec.dim;
        let embed = b.param("amr_enc.embed", vocab_size, d, Init::Normal((1.0 / d as f64).sqrt()))?;
        let pos = b.param("amr_enc.pos", spec.max_len, d, Init::Normal(0.5))?;
        let layers = (0..spec.layers)
            .map(|i| EncoderLayer::new(b, &format!("amr_enc.{i}"), d, spec.heads, 2 * d))
            .collect::<Result<_, _>>()?;
        let norm = Norm::new(b, "amr_enc.norm", d)?;
        Ok(Self { spec, embed, pos, layers, norm })
    }

    pub fn init(spec: AmrEncoderSpec, vocab_size: usize, store: &mut ParamStore, seed: u64) -> Result<Self, ModelError> {
        Self::build(spec, vocab_size, &mut Builder::init(store, seed))
    }

    pub fn bind(spec: AmrEncoderSpec, vocab_size: usize, store: &mut ParamStore) -> Result<Self, ModelError> {
        Self::build(spec, vocab_size, &mut Builder::bind(store))
    }

    /// One representation (row) per id. With `frozen` set the encoder's
    /// weights enter the graph as constants and receive no gradient.
    pub fn encode(&self, g: &mut Graph, ids: &[usize]) -> Result<Var, ModelError> {
        let trainable = !self.spec.frozen;
        let d = self.spec.dim;
        if ids.len() > self.spec.max_len {
            return Err(ModelError::ShapeMismatch(format!(
                "AMR sequence of {} exceeds max_len {}",
                ids.len(),
                self.spec.max_len
            )));
        }
        if ids.is_empty() {
            return Ok(g.constant(ndarray::Array2::zeros((0, d))));
        }
        let table = g.param_leaf(self.embed, trainable);
        let x = g.gather(table, ids);
        let x = g.scale(x, (d as f64).sqrt());
        let pos_table = g.param_leaf(self.pos, trainable);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = g.gather(pos_table, &positions);
        let mut x = g.add(x, p);
        for layer in &self.layers {
            x = layer.forward(g, x, None, trainable)?;
        }
        Ok(self.norm.forward(g, x, trainable))
    }

    pub fn param_ids(&self, store: &ParamStore) -> Vec<ParamId> {
        store.ids_with_prefix("amr_enc.").collect()
    }
}

/// Learnable queries, one attention layer and a linear head producing
/// `2 · L · d_model` values per query.
#[derive(Debug, Clone)]
pub struct Compressor {
    pub queries: ParamId,
    pub len: usize,
    adapter: Option<Linear>,
    attn: MultiHeadAttention,
    head: Linear,
    width: usize,
}

impl Compressor {
    fn build(l: usize, input_dim: usize, config: &ModelConfig, b: &mut Builder) -> Result<Self, ModelError> {
        if l == 0 {
            return Err(ModelError::InvalidConfig("compressor needs at least one query".into()));
        }
        let d = config.d_model;
        let width = 2 * config.blocks().len() * d;
        let queries = b.param("compress.queries", l, d, Init::Normal(1.0))?;
        let adapter = if input_dim != d { Some(Linear::new(b, "compress.adapter", input_dim, d)?) } else { None };
        let attn = MultiHeadAttention::new(b, "compress.attn", d, config.n_heads)?;
        let head = Linear::new(b, "compress.head", d, width)?;
        Ok(Self { queries, len: l, adapter, attn, head, width })
    }

    pub fn init(l: usize, input_dim: usize, config: &ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self, ModelError> {
        Self::build(l, input_dim, config, &mut Builder::init(store, seed))
    }

    pub fn bind(l: usize, input_dim: usize, config: &ModelConfig, store: &mut ParamStore) -> Result<Self, ModelError> {
        Self::build(l, input_dim, config, &mut Builder::bind(store))
    }

    /// Values per query row of `P`.
    pub fn width(&self) -> usize {
        self.width
    }

    /// `P`: `l × 2·L·d_model`, the queries' attention summary of `reps`.
    pub fn compress(&self, g: &mut Graph, reps: Var) -> Result<Var, PrefixError> {
        if g.shape(reps).0 == 0 {
            return Err(PrefixError::EmptyRepresentations);
        }
        let reps = match &self.adapter {
            Some(a) => a.forward(g, reps, true),
            None => reps,
        };
        let q = g.param(self.queries);
        let summary = self.attn.forward(g, q, reps, None, None, true)?.output;
        Ok(self.head.forward(g, summary, true))
    }
}

/// Slices `P` into per-block prefixes: blocks ordered by site then layer,
/// each block taking a key slice followed by a value slice of `d_model`
/// columns.
pub fn disassemble(g: &mut Graph, p: Var, config: &ModelConfig) -> Result<PrefixSet, PrefixError> {
    let blocks = config.blocks();
    let d = config.d_model;
    let (l, width) = g.shape(p);
    let expected = 2 * blocks.len() * d;
    if width != expected {
        return Err(PrefixError::CapacityMismatch { expected, found: width });
    }
    let mut out = PrefixSet { len: l, blocks: Vec::with_capacity(blocks.len()) };
    for (n, (site, layer)) in blocks.into_iter().enumerate() {
        let k = g.slice_cols(p, 2 * n * d, (2 * n + 1) * d);
        let v = g.slice_cols(p, (2 * n + 1) * d, (2 * n + 2) * d);
        out.blocks.push(PrefixBlock { site, layer, k, v });
    }
    Ok(out)
}

/// Prefixes of length zero for every injected block.
pub fn empty_prefixes(g: &mut Graph, config: &ModelConfig) -> PrefixSet {
    let d = config.d_model;
    let blocks = config
        .blocks()
        .into_iter()
        .map(|(site, layer)| {
            let k = g.constant(ndarray::Array2::zeros((0, d)));
            let v = g.constant(ndarray::Array2::zeros((0, d)));
            PrefixBlock { site, layer, k, v }
        })
        .collect();
    PrefixSet { len: 0, blocks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Site;
    use crate::amr::parse_penman;
    use crate::model::AmrMode;

    fn cfg(d: usize, enc: usize, dec: usize) -> ModelConfig {
        ModelConfig {
            d_model: d,
            n_heads: 2,
            n_enc_layers: enc,
            n_dec_layers: dec,
            d_ff: 2 * d,
            vocab_size: 10,
            max_len: 16,
            injection_sites: Site::DEFAULT.to_vec(),
            amr_mode: AmrMode::Prefix,
        }
    }

    #[test]
    fn disassembly_arithmetic() {
        let c = cfg(8, 2, 2);
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let p = g.constant(ndarray::Array2::from_shape_fn((2, 2 * 4 * 8), |(r, c)| (r * 1000 + c) as f64));
        let set = disassemble(&mut g, p, &c).unwrap();
        assert_eq!(set.blocks.len(), 4);
        assert_eq!(set.scalar_count(&g), 128);
        let (k, v) = set.get(Site::DecoderCross, 0).unwrap();
        assert_eq!(g.value(k)[[1, 0]], (1000 + 2 * 2 * 8) as f64);
        assert_eq!(g.value(v)[[0, 7]], (5 * 8 + 7) as f64);

        let bad = g.constant(ndarray::Array2::zeros((2, 10)));
        assert!(matches!(disassemble(&mut g, bad, &c), Err(PrefixError::CapacityMismatch { expected: 64, found: 10 })));
    }

    #[test]
    fn no_blocks_gives_empty_set() {
        let mut c = cfg(8, 0, 0);
        c.injection_sites = vec![Site::EncoderSelf];
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let p = g.constant(ndarray::Array2::zeros((3, 0)));
        assert!(disassemble(&mut g, p, &c).unwrap().is_empty());
    }

    #[test]
    fn surface_splits_sense_numbers() {
        assert_eq!(surface_pieces("appeal-01"), ["appeal", "-01"]);
        assert_eq!(surface_pieces("\"Washington\""), ["Washington"]);
        assert_eq!(surface_pieces("-"), ["-"]);
        assert_eq!(surface_pieces("district"), ["district"]);
    }

    #[test]
    fn tokenizer_variants_and_oov_relation() {
        let g = parse_penman("(a / appeal-01 :ARG0 (d / district))").unwrap();
        let ca = AmrTokenizer::build(std::slice::from_ref(&g), EncoderVariant::ConceptAware).unwrap();
        let lin = crate::amr::linearize(&g);
        assert_eq!(ca.encode(&lin).unwrap().len(), 7);
        let sf = AmrTokenizer::build(std::slice::from_ref(&g), EncoderVariant::Surface).unwrap();
        assert_eq!(sf.words(&lin).unwrap(), ["(", "appeal", "-01", ":ARG0", "(", "district", ")", ")"]);
        let odd = LinearizedAmr::new(vec!["(".into(), "x".into(), ":made-up".into(), "y".into(), ")".into()]);
        assert!(matches!(ca.encode(&odd), Err(PrefixError::OovStructureToken(r)) if r == ":made-up"));
    }

    #[test]
    fn compress_is_input_dependent_and_deterministic() {
        let c = cfg(16, 2, 2);
        let mut store = ParamStore::new();
        let spec = AmrEncoderSpec { dim: 8, heads: 2, ..Default::default() };
        let enc = AmrEncoder::init(spec, 12, &mut store, 1).unwrap();
        let comp = Compressor::init(40, 8, &c, &mut store, 2).unwrap();
        let run = |ids: &[usize]| {
            let mut g = Graph::new(&store);
            let reps = enc.encode(&mut g, ids).unwrap();
            assert_eq!(g.shape(reps), (ids.len(), 8));
            let p = comp.compress(&mut g, reps).unwrap();
            g.value(p).clone()
        };
        let a = run(&[4, 5, 6]);
        assert_eq!(a.dim(), (40, 2 * 4 * 16));
        assert_eq!(a, run(&[4, 5, 6]));
        let b = run(&[4, 7, 6, 8]);
        assert!((&a - &b).iter().any(|d| d.abs() > 0.0));

        let mut g = Graph::new(&store);
        let empty = enc.encode(&mut g, &[]).unwrap();
        assert!(matches!(comp.compress(&mut g, empty), Err(PrefixError::EmptyRepresentations)));
    }
}
