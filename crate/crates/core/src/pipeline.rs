//! The assembled extractor: prompt encoding, AMR side input, copy-aware
//! loss, greedy inference, scoring and checkpoints.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use eae_autograd::{AdamConfig, Gradients, Graph, ParamStore, StoreError, TensorRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{linearize, parse_penman, AmrError, AmrGraph};
use crate::config::RunConfig;
use crate::copy::{copy_distribution, gen_gate, mix, sequence_loss, CopyError, CopyMode, CopySource, CopyTarget, GenGate};
use crate::data::{DataError, EventInstance, InstanceKey, Trigger};
use crate::eval::{match_spans, score, EvalError, Prediction, ScoreReport, ScoredArgument};
use crate::model::{argmax_last_row, AmrMode, AmrSide, Memory, ModelError, Seq2Seq};
use crate::parser_client::{fetch_amr, AmrCache, ParseRequest, ParserBackend, ParserError};
use crate::prefix::{disassemble, empty_prefixes, AmrEncoder, AmrTokenizer, Compressor, PrefixError};
use crate::prompting::{
    build_prompt, decode_output, fill_template, gold_assignment, EventTemplate, Ontology, PromptError, RoleAssignment,
};
use crate::text::{tokenize, Vocab, BOS_ID, EOS, UNK_ID};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing data: {0}")]
    DataMissing(String),
    #[error("no AMR graph for passages: {}", .0.join(", "))]
    AmrCacheMiss(Vec<String>),
    #[error("trigger `{0}` does not occur in the passage")]
    TriggerNotFound(String),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prefix(#[from] PrefixError),
    #[error(transparent)]
    Copy(#[from] CopyError),
    #[error(transparent)]
    Amr(#[from] AmrError),
    #[error(transparent)]
    Parser(#[from] ParserError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Passage graphs keyed by `doc_id`.
pub type AmrTable = BTreeMap<String, AmrGraph>;

/// Graph for every distinct passage in `instances`: inline Penman first,
/// then the cache, then the backend (whose output is cached when a cache
/// is given). Passages no route can supply are reported together.
pub fn resolve_graphs(
    instances: &[EventInstance],
    cache: Option<&AmrCache>,
    backend: Option<&dyn ParserBackend>,
) -> Result<AmrTable> {
    let mut out = AmrTable::new();
    let mut missing = Vec::new();
    for inst in instances {
        if out.contains_key(&inst.doc_id) || missing.contains(&inst.doc_id) {
            continue;
        }
        let graph = if let Some(text) = &inst.amr {
            Some(parse_penman(text)?)
        } else {
            let req = ParseRequest::for_instance(inst);
            match (cache, backend) {
                (Some(c), b) => match c.get(&inst.doc_id)? {
                    Some(g) => Some(g),
                    None if b.is_some() => Some(fetch_amr(&req, c, b)?),
                    None => None,
                },
                (None, Some(b)) => {
                    let penman = b
                        .parse(&req.text)
                        .map_err(|reason| ParserError::Backend { passage_id: req.passage_id.clone(), reason })?;
                    Some(parse_penman(&penman)?)
                }
                (None, None) => None,
            }
        };
        match graph {
            Some(g) => {
                out.insert(inst.doc_id.clone(), g);
            }
            None => missing.push(inst.doc_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(PipelineError::AmrCacheMiss(missing));
    }
    Ok(out)
}

/// Model-ready form of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub key: InstanceKey,
    /// Encoder token ids.
    pub input: Vec<usize>,
    /// Extended-vocabulary id of each text position: model ids, or
    /// `V + k` for the `k`-th entry of `oov`.
    pub source_ids: Vec<usize>,
    pub copy_range: Range<usize>,
    pub oov: Vec<String>,
    /// AMR encoder ids (empty when the route takes none).
    pub amr_ids: Vec<usize>,
    pub decoder_input: Vec<usize>,
    /// Extended ids of the target, end token included.
    pub gold: Vec<usize>,
}

/// Result of decoding one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub assignment: RoleAssignment,
    /// Generated text as produced.
    pub raw: String,
    pub misaligned: bool,
    pub arguments: Vec<ScoredArgument>,
}

/// Turns generated tokens into role fillers and passage spans.
pub fn interpret(template: &EventTemplate, instance: &EventInstance, generated: &[String]) -> PredictOutput {
    let raw = generated.join(" ");
    let decoded = decode_output(template, &raw);
    let pairs: Vec<(String, String)> =
        decoded.assignment.pairs().map(|(a, r)| (a.to_string(), r.to_string())).collect();
    let fillers: Vec<String> = pairs.iter().map(|(a, _)| a.clone()).collect();
    let arguments = match_spans(&fillers, instance)
        .into_iter()
        .zip(pairs)
        .map(|(span, (_, role))| ScoredArgument { span, role })
        .collect();
    PredictOutput { assignment: decoded.assignment, raw, misaligned: decoded.misaligned, arguments }
}

/// Vocabulary of a run: training passages, ontology words, and under
/// `amr_prompt_concat` the words of the training graphs.
pub fn build_vocab(
    train: &[EventInstance],
    ontology: &Ontology,
    graphs: &AmrTable,
    tokenizer: Option<&AmrTokenizer>,
) -> Result<Vocab> {
    let mut vocab = Vocab::default();
    for inst in train {
        for t in &inst.tokens {
            vocab.insert(t);
        }
    }
    for w in ontology.words() {
        vocab.insert(&w);
    }
    if let Some(tok) = tokenizer {
        for inst in train {
            if let Some(g) = graphs.get(&inst.doc_id) {
                for w in tok.words(&linearize(g))? {
                    vocab.insert(&w);
                }
            }
        }
    }
    Ok(vocab)
}

#[derive(Debug, Clone)]
pub struct Extractor {
    /// Run configuration; `model.vocab_size` matches `vocab`.
    pub config: RunConfig,
    pub vocab: Vocab,
    pub ontology: Ontology,
    pub amr_tokenizer: Option<AmrTokenizer>,
    pub store: ParamStore,
    model: Seq2Seq,
    gate: GenGate,
    amr_encoder: Option<AmrEncoder>,
    compressor: Option<Compressor>,
}

impl Extractor {
    /// Fresh parameters, seeded from `config.seed`.
    pub fn init(
        config: &RunConfig,
        vocab: Vocab,
        ontology: Ontology,
        amr_tokenizer: Option<AmrTokenizer>,
    ) -> Result<Self> {
        Self::assemble(config, vocab, ontology, amr_tokenizer, ParamStore::new(), Some(config.seed))
    }

    fn assemble(
        config: &RunConfig,
        vocab: Vocab,
        ontology: Ontology,
        amr_tokenizer: Option<AmrTokenizer>,
        mut store: ParamStore,
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut config = config.clone();
        config.model = config.model_config(vocab.len());
        let mc = config.model.clone();
        let mode = mc.amr_mode;
        if config.needs_amr() && amr_tokenizer.is_none() {
            return Err(PipelineError::Config(format!("amr_mode {mode:?} needs an AMR tokenizer")));
        }
        if mode == AmrMode::EncodingConcat && config.amr_encoder.dim != mc.d_model {
            return Err(PipelineError::Config(format!(
                "encoding_concat needs AMR encoder dim {} equal to d_model {}",
                config.amr_encoder.dim, mc.d_model
            )));
        }
        let with_prefix = mode == AmrMode::Prefix && config.prefix_len > 0;
        let with_encoder = with_prefix || mode == AmrMode::EncodingConcat;
        let amr_vocab = amr_tokenizer.as_ref().map_or(0, |t| t.table.len());
        let spec = config.amr_encoder.clone();
        let l = config.prefix_len;
        let (model, gate, amr_encoder, compressor) = match seed {
            Some(s) => (
                Seq2Seq::init(mc.clone(), &mut store, s)?,
                GenGate::init(mc.d_model, &mut store, s.wrapping_add(3))?,
                with_encoder.then(|| AmrEncoder::init(spec.clone(), amr_vocab, &mut store, s.wrapping_add(1))).transpose()?,
                with_prefix.then(|| Compressor::init(l, spec.dim, &mc, &mut store, s.wrapping_add(2))).transpose()?,
            ),
            None => (
                Seq2Seq::bind(mc.clone(), &mut store)?,
                GenGate::bind(mc.d_model, &mut store)?,
                with_encoder.then(|| AmrEncoder::bind(spec.clone(), amr_vocab, &mut store)).transpose()?,
                with_prefix.then(|| Compressor::bind(l, spec.dim, &mc, &mut store)).transpose()?,
            ),
        };
        Ok(Self { config, vocab, ontology, amr_tokenizer, store, model, gate, amr_encoder, compressor })
    }

    pub fn model(&self) -> &Seq2Seq {
        &self.model
    }

    pub fn gate(&self) -> &GenGate {
        &self.gate
    }

    pub fn compressor(&self) -> Option<&Compressor> {
        self.compressor.as_ref()
    }

    pub fn amr_encoder(&self) -> Option<&AmrEncoder> {
        self.amr_encoder.as_ref()
    }

    /// Encodes `inst`; with `with_target` the gold output is included.
    pub fn encode_instance(&self, inst: &EventInstance, graphs: &AmrTable, with_target: bool) -> Result<Encoded> {
        let template = self.ontology.get(&inst.trigger.event_type)?;
        let mut text = build_prompt(inst, &self.ontology)?;
        text.push(EOS.to_string());
        let v = self.vocab.len();
        let mut oov: Vec<String> = Vec::new();
        let source_ids: Vec<usize> = text
            .iter()
            .map(|t| {
                self.vocab.get(t).unwrap_or_else(|| match oov.iter().position(|o| o == t) {
                    Some(k) => v + k,
                    None => {
                        oov.push(t.clone());
                        v + oov.len() - 1
                    }
                })
            })
            .collect();
        let copy_range = match self.config.copy.source {
            CopySource::FullInput => 0..text.len(),
            CopySource::PassageOnly => 0..inst.tokens.len(),
        };
        let mut input = self.vocab.encode(&text);

        let mode = self.config.model.amr_mode;
        let mut amr_ids = Vec::new();
        if mode != AmrMode::None {
            let graph =
                graphs.get(&inst.doc_id).ok_or_else(|| PipelineError::AmrCacheMiss(vec![inst.doc_id.clone()]))?;
            let tok = self.amr_tokenizer.as_ref().expect("checked at assembly");
            let seq = linearize(graph);
            match mode {
                AmrMode::AmrPromptConcat => {
                    input.extend(self.vocab.encode(&tok.words(&seq)?));
                    input.push(self.vocab.id(EOS));
                }
                AmrMode::Prefix | AmrMode::EncodingConcat if self.amr_encoder.is_some() => {
                    amr_ids = tok.encode(&seq)?;
                }
                _ => {}
            }
        }

        let (mut decoder_input, mut gold) = (Vec::new(), Vec::new());
        if with_target {
            let target = tokenize(&fill_template(template, &gold_assignment(inst, template)));
            gold = target
                .iter()
                .map(|t| {
                    self.vocab.get(t).unwrap_or_else(|| oov.iter().position(|o| o == t).map_or(UNK_ID, |k| v + k))
                })
                .collect();
            gold.push(self.vocab.id(EOS));
            decoder_input.push(BOS_ID);
            decoder_input.extend(gold[..gold.len() - 1].iter().map(|&t| if t < v { t } else { UNK_ID }));
        }
        Ok(Encoded { key: inst.key(), input, source_ids, copy_range, oov, amr_ids, decoder_input, gold })
    }

    /// Encoder memory with the configured AMR route applied.
    pub fn memory(&self, g: &mut Graph, ex: &Encoded) -> Result<Memory> {
        let cfg = &self.model.config;
        let memory = match cfg.amr_mode {
            AmrMode::Prefix => {
                let set = match (&self.amr_encoder, &self.compressor) {
                    (Some(enc), Some(c)) => {
                        let reps = enc.encode(g, &ex.amr_ids)?;
                        let p = c.compress(g, reps)?;
                        disassemble(g, p, cfg)?
                    }
                    _ => empty_prefixes(g, cfg),
                };
                self.model.encode(g, &ex.input, AmrSide::Prefix(&set))?
            }
            AmrMode::EncodingConcat => {
                let enc = self.amr_encoder.as_ref().expect("built for encoding_concat");
                let reps = enc.encode(g, &ex.amr_ids)?;
                self.model.encode(g, &ex.input, AmrSide::Encodings(reps))?
            }
            AmrMode::None | AmrMode::AmrPromptConcat => self.model.encode(g, &ex.input, AmrSide::Absent)?,
        };
        Ok(memory)
    }

    /// Builds the training loss of `ex` in `g`.
    pub fn loss(&self, g: &mut Graph, ex: &Encoded) -> Result<crate::copy::LossParts> {
        if ex.gold.is_empty() {
            return Err(PipelineError::DataMissing(format!("{}: encoded without a target", ex.key.doc_id)));
        }
        let memory = self.memory(g, ex)?;
        let fwd = self.model.decode(g, &memory, &ex.decoder_input)?;
        let w_gen = self.gate.forward(g, fwd.hidden, self.config.copy.mode);
        let target = CopyTarget { source_ids: &ex.source_ids, source_range: ex.copy_range.clone(), gold: &ex.gold };
        Ok(sequence_loss(g, fwd.logits, w_gen, &fwd.cross_attention, fwd.prefix_len, &target, &self.config.copy)?)
    }

    pub fn loss_value(&self, ex: &Encoded) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        let parts = self.loss(&mut g, ex)?;
        Ok(g.scalar(parts.loss))
    }

    pub fn loss_and_gradients(&self, ex: &Encoded) -> Result<(f64, Gradients)> {
        let mut g = Graph::new(&self.store);
        let parts = self.loss(&mut g, ex)?;
        Ok((g.scalar(parts.loss), g.backward(parts.loss)))
    }

    /// Greedy decoding under the mixed distribution; returns output words.
    pub fn generate(&self, ex: &Encoded) -> Result<Vec<String>> {
        let mut g = Graph::new(&self.store);
        let memory = self.memory(&mut g, ex)?;
        let mode = self.config.copy.mode;
        let range = ex.copy_range.clone();
        let src = &ex.source_ids[range.clone()];
        let ids = self.model.greedy_decode(&mut g, &memory, self.config.max_decode_len, |g, fwd| {
            let logits = g.value(fwd.logits);
            if mode == CopyMode::Off {
                return Ok::<_, PipelineError>(argmax_last_row(logits));
            }
            let last = logits.nrows() - 1;
            let row = logits.row(last);
            let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let exp: Vec<f64> = row.iter().map(|&x| (x - top).exp()).collect();
            let z: f64 = exp.iter().sum();
            let p_gen: Vec<f64> = exp.iter().map(|e| e / z).collect();
            let hidden = g.value(fwd.hidden).row(last).to_vec();
            let w = gen_gate(&self.store, &self.gate, &hidden, mode);
            let heads: Vec<Vec<f64>> = fwd.cross_attention.iter().map(|&h| g.value(h).row(last).to_vec()).collect();
            let off = fwd.prefix_len;
            let p_copy = copy_distribution(&heads, off + range.start..off + range.end)?;
            let mixed = mix(&p_gen, &p_copy, w, src);
            let mut best = 0;
            for (i, &p) in mixed.iter().enumerate() {
                if p > mixed[best] {
                    best = i;
                }
            }
            Ok(best)
        })?;
        let v = self.vocab.len();
        Ok(ids
            .into_iter()
            .map(|id| if id < v { self.vocab.token(id).unwrap_or_default().to_string() } else { ex.oov[id - v].clone() })
            .collect())
    }

    /// Decodes one instance. An empty passage has nothing to extract and
    /// yields the empty assignment without running the model.
    pub fn predict_instance(&self, inst: &EventInstance, graphs: &AmrTable) -> Result<PredictOutput> {
        let template = self.ontology.get(&inst.trigger.event_type)?;
        if inst.tokens.is_empty() {
            return Ok(PredictOutput {
                assignment: template.empty_assignment(),
                raw: String::new(),
                misaligned: false,
                arguments: Vec::new(),
            });
        }
        let ex = self.encode_instance(inst, graphs, false)?;
        Ok(interpret(template, inst, &self.generate(&ex)?))
    }

    /// Decodes every instance (in parallel, results in input order) and
    /// scores them against the gold arguments.
    pub fn evaluate(&self, instances: &[EventInstance], graphs: &AmrTable) -> Result<(ScoreReport, Vec<PredictOutput>)> {
        let outputs: Vec<PredictOutput> =
            instances.par_iter().map(|i| self.predict_instance(i, graphs)).collect::<Result<_>>()?;
        let predictions: Vec<Prediction> = instances
            .iter()
            .zip(&outputs)
            .map(|(i, o)| Prediction { key: i.key(), arguments: o.arguments.clone() })
            .collect();
        Ok((score(&predictions, instances)?, outputs))
    }

    /// Single-passage inference from raw text.
    pub fn predict(&self, passage: &str, trigger: &str, event_type: &str, graph: Option<&AmrGraph>) -> Result<PredictOutput> {
        let tokens = tokenize(passage);
        let needle = tokenize(trigger);
        let start = if tokens.is_empty() {
            0
        } else {
            (!needle.is_empty())
                .then(|| tokens.windows(needle.len()).position(|w| w == needle.as_slice()))
                .flatten()
                .ok_or_else(|| PipelineError::TriggerNotFound(trigger.to_string()))?
        };
        let end = if tokens.is_empty() { 0 } else { start + needle.len() };
        let inst = EventInstance {
            doc_id: "input".into(),
            tokens,
            trigger: Trigger { start, end, event_type: event_type.to_string() },
            arguments: Vec::new(),
            amr: None,
        };
        let mut graphs = AmrTable::new();
        if let Some(g) = graph {
            graphs.insert(inst.doc_id.clone(), g.clone());
        }
        self.predict_instance(&inst, &graphs)
    }

    pub fn checkpoint(&self, epoch: usize, best_dev_arg_c: Option<f64>) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            ontology: self.ontology.clone(),
            amr_tokenizer: self.amr_tokenizer.clone(),
            optimizer: self.optimizer_config(),
            epoch,
            best_dev_arg_c,
            tensors: self.store.to_records(),
        }
    }

    pub fn optimizer_config(&self) -> AdamConfig {
        AdamConfig { lr: self.config.lr, ..AdamConfig::default() }
    }
}

/// Everything needed to rebuild an [`Extractor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub vocab: Vocab,
    pub ontology: Ontology,
    pub amr_tokenizer: Option<AmrTokenizer>,
    pub optimizer: AdamConfig,
    pub epoch: usize,
    pub best_dev_arg_c: Option<f64>,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn extractor(&self) -> Result<Extractor> {
        if self.version != CHECKPOINT_VERSION {
            return Err(PipelineError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let store = ParamStore::from_records(self.tensors.clone())?;
        let expected = store.len();
        let ex = Extractor::assemble(
            &self.config,
            self.vocab.clone(),
            self.ontology.clone(),
            self.amr_tokenizer.clone(),
            store,
            None,
        )?;
        if ex.store.len() != expected {
            return Err(PipelineError::Checkpoint("tensor set does not match the configuration".into()));
        }
        Ok(ex)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string(self).map_err(|e| PipelineError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Checkpoint(format!("{}: {e}", path.display())))
    }
}
