//! Training loop, dataset loading, and the ablation sweep.

use std::collections::BTreeSet;

use eae_autograd::{Adam, Gradients};
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::copy::CopyMode;
use crate::data::{load_dataset, split_proportion, EventInstance};
use crate::eval::ScoreReport;
use crate::model::AmrMode;
use crate::parser_client::AmrCache;
use crate::pipeline::{build_vocab, resolve_graphs, AmrTable, Checkpoint, Extractor, PipelineError, Result};
use crate::prefix::AmrTokenizer;
use crate::prompting::Ontology;

/// In-memory inputs of a run. `train` is the full training file; the
/// configured split is applied by [`train_on`].
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<EventInstance>,
    pub dev: Vec<EventInstance>,
    pub ontology: Ontology,
    pub graphs: AmrTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed loss over the epoch's training instances.
    pub train_loss: f64,
    pub dev: Option<ScoreReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best checkpoint by dev Arg-C F1 (the last epoch without a dev set).
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Tokenizer over every graph the run will see, in passage order.
pub fn amr_tokenizer(config: &RunConfig, instances: &[&[EventInstance]], graphs: &AmrTable) -> Result<Option<AmrTokenizer>> {
    if !config.needs_amr() {
        return Ok(None);
    }
    let mut seen = BTreeSet::new();
    let mut corpus = Vec::new();
    for inst in instances.iter().flat_map(|s| s.iter()) {
        if seen.insert(inst.doc_id.as_str()) {
            let g = graphs.get(&inst.doc_id).ok_or_else(|| PipelineError::AmrCacheMiss(vec![inst.doc_id.clone()]))?;
            corpus.push(g.clone());
        }
    }
    Ok(Some(AmrTokenizer::build(&corpus, config.amr_encoder.variant)?))
}

fn check_graphs(instances: &[&[EventInstance]], graphs: &AmrTable) -> Result<()> {
    let missing: BTreeSet<String> = instances
        .iter()
        .flat_map(|s| s.iter())
        .filter(|i| !graphs.contains_key(&i.doc_id))
        .map(|i| i.doc_id.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::AmrCacheMiss(missing.into_iter().collect()))
    }
}

/// Freshly initialized extractor for `train` (already split).
pub fn prepare(config: &RunConfig, train: &[EventInstance], dev: &[EventInstance], ontology: &Ontology, graphs: &AmrTable) -> Result<Extractor> {
    if config.needs_amr() {
        check_graphs(&[train, dev], graphs)?;
    }
    let tokenizer = amr_tokenizer(config, &[train, dev], graphs)?;
    let concat = config.amr_mode() == AmrMode::AmrPromptConcat;
    let vocab = build_vocab(train, ontology, graphs, tokenizer.as_ref().filter(|_| concat))?;
    Extractor::init(config, vocab, ontology.clone(), tokenizer)
}

/// One pass over `order` in mini-batches. Per-instance gradients are
/// computed in parallel and summed in batch order, so results do not
/// depend on the number of workers.
fn run_epoch(
    ex: &mut Extractor,
    adam: &mut Adam,
    examples: &[crate::pipeline::Encoded],
    order: &[usize],
    batch_size: usize,
    clip: Option<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for batch in order.chunks(batch_size.max(1)) {
        let parts: Vec<(f64, Gradients)> =
            batch.par_iter().map(|&i| ex.loss_and_gradients(&examples[i])).collect::<Result<_>>()?;
        let mut grads = Gradients::new();
        for (loss, g) in &parts {
            total += loss;
            grads.merge(g);
        }
        grads.scale(1.0 / batch.len() as f64);
        if let Some(c) = clip {
            grads.clip_global_norm(c);
        }
        adam.step(&mut ex.store, &grads);
    }
    Ok(total)
}

/// Trains on `data` under `config`, scoring the dev set after each epoch
/// and keeping the best checkpoint.
pub fn train_on(config: &RunConfig, data: &TrainData) -> Result<TrainOutcome> {
    let train = split_proportion(&data.train, &config.split);
    if train.is_empty() {
        return Err(PipelineError::DataMissing("training split is empty".into()));
    }
    let mut ex = prepare(config, &train, &data.dev, &data.ontology, &data.graphs)?;
    let examples = train.iter().map(|i| ex.encode_instance(i, &data.graphs, true)).collect::<Result<Vec<_>>>()?;
    let mut adam = Adam::new(ex.optimizer_config());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let train_loss = run_epoch(&mut ex, &mut adam, &examples, &order, config.batch_size, config.clip_norm)?;
        let dev = if data.dev.is_empty() { None } else { Some(ex.evaluate(&data.dev, &data.graphs)?.0) };
        match &dev {
            Some(r) => info!("epoch {epoch}: loss {train_loss:.4}, dev Arg-I {:.4} Arg-C {:.4}", r.arg_i.f1, r.arg_c.f1),
            None => info!("epoch {epoch}: loss {train_loss:.4}"),
        }
        if let Some(r) = &dev {
            let f = r.arg_c.f1;
            if best.as_ref().is_none_or(|(b, _)| f > *b) {
                best = Some((f, ex.checkpoint(epoch, Some(f))));
            }
        }
        history.push(EpochRecord { epoch, train_loss, dev });
    }
    let checkpoint = match best {
        Some((_, c)) => c,
        None => ex.checkpoint(config.epochs, None),
    };
    Ok(TrainOutcome { checkpoint, history })
}

/// Graphs for `instances` from the configured cache and parser.
pub fn load_graphs(config: &RunConfig, instances: &[EventInstance]) -> Result<AmrTable> {
    if !config.needs_amr() {
        return Ok(AmrTable::new());
    }
    let cache = config.paths.amr_cache.as_ref().map(AmrCache::open).transpose()?;
    let backend = config.parser.as_ref().map(|d| d.build()).transpose()?;
    resolve_graphs(instances, cache.as_ref(), backend.as_deref())
}

fn require<'a>(path: &'a Option<std::path::PathBuf>, what: &str) -> Result<&'a std::path::Path> {
    let p = path.as_deref().ok_or_else(|| PipelineError::DataMissing(format!("paths.{what} is not set")))?;
    if !p.exists() {
        return Err(PipelineError::DataMissing(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p)
}

/// Loads the configured training, dev and ontology files and their graphs.
pub fn load_data(config: &RunConfig) -> Result<TrainData> {
    let train = load_dataset(require(&config.paths.train, "train")?)?;
    let dev = match &config.paths.dev {
        Some(_) => load_dataset(require(&config.paths.dev, "dev")?)?,
        None => Vec::new(),
    };
    let ontology = Ontology::load(require(&config.paths.ontology, "ontology")?)?;
    let both: Vec<EventInstance> = train.iter().chain(&dev).cloned().collect();
    let graphs = load_graphs(config, &both)?;
    Ok(TrainData { train, dev, ontology, graphs })
}

/// Trains from the files named in `config` and writes the best checkpoint
/// to `paths.output` when set.
pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    let data = load_data(config)?;
    let outcome = train_on(config, &data)?;
    if let Some(out) = &config.paths.output {
        outcome.checkpoint.save(out)?;
    }
    Ok(outcome)
}

/// Axes of an ablation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub amr_modes: Vec<AmrMode>,
    pub copy_modes: Vec<CopyMode>,
    pub frozen: Vec<bool>,
    pub seeds: Vec<u64>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            amr_modes: vec![AmrMode::Prefix, AmrMode::AmrPromptConcat, AmrMode::EncodingConcat, AmrMode::None],
            copy_modes: vec![CopyMode::Adjusted, CopyMode::Plain, CopyMode::Pure, CopyMode::Off],
            frozen: vec![true, false],
            seeds: vec![0],
        }
    }
}

impl AblationGrid {
    /// One configuration per grid cell and seed, derived from `base`.
    pub fn configs(&self, base: &RunConfig) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &amr in &self.amr_modes {
            for &copy in &self.copy_modes {
                for &frozen in &self.frozen {
                    for &seed in &self.seeds {
                        let mut c = base.clone();
                        c.set_amr_mode(amr);
                        c.copy.mode = copy;
                        c.amr_encoder.frozen = frozen;
                        c.seed = seed;
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// Scores of one grid cell across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub amr_mode: AmrMode,
    pub copy_mode: CopyMode,
    pub frozen: bool,
    pub arg_i: Vec<f64>,
    pub arg_c: Vec<f64>,
    /// Set when a run of this cell failed; its message.
    pub error: Option<String>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

impl AblationTable {
    /// Markdown table of Arg-I / Arg-C F1 (×100) as mean ± std over seeds.
    pub fn render(&self) -> String {
        let mut s = String::from("| amr_mode | copy | amr encoder | runs | Arg-I | Arg-C |\n|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let fmt = |xs: &[f64]| {
                let (m, sd) = mean_std(xs);
                match xs.len() {
                    0 => "-".to_string(),
                    1 => format!("{:.1}", 100.0 * m),
                    _ => format!("{:.1} ± {:.1}", 100.0 * m, 100.0 * sd),
                }
            };
            let enc = if r.frozen { "frozen" } else { "trained" };
            let (i, c) = match &r.error {
                Some(e) => (format!("failed: {e}"), "-".to_string()),
                None => (fmt(&r.arg_i), fmt(&r.arg_c)),
            };
            s.push_str(&format!(
                "| {} | {} | {enc} | {} | {i} | {c} |\n",
                label(&r.amr_mode),
                label(&r.copy_mode),
                r.arg_c.len()
            ));
        }
        s
    }
}

/// Trains every grid configuration on `data` and scores the selected
/// checkpoint on `eval_set`. A failing run is recorded in its row and
/// the sweep continues.
pub fn ablate(base: &RunConfig, grid: &AblationGrid, data: &TrainData, eval_set: &[EventInstance]) -> Result<AblationTable> {
    if grid.seeds.is_empty() {
        return Err(PipelineError::Config("ablation needs at least one seed".into()));
    }
    let mut rows: Vec<AblationRow> = Vec::new();
    for cfg in grid.configs(base) {
        let key = (cfg.amr_mode(), cfg.copy.mode, cfg.amr_encoder.frozen);
        if rows.last().is_none_or(|r| (r.amr_mode, r.copy_mode, r.frozen) != key) {
            rows.push(AblationRow { amr_mode: key.0, copy_mode: key.1, frozen: key.2, arg_i: vec![], arg_c: vec![], error: None });
        }
        let row = rows.last_mut().expect("pushed above");
        if row.error.is_some() {
            continue;
        }
        let run = train_on(&cfg, data).and_then(|o| o.checkpoint.extractor()?.evaluate(eval_set, &data.graphs));
        match run {
            Ok((report, _)) => {
                info!("{key:?} seed {}: Arg-C {:.4}", cfg.seed, report.arg_c.f1);
                row.arg_i.push(report.arg_i.f1);
                row.arg_c.push(report.arg_c.f1);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
    }
    Ok(AblationTable { rows })
}
