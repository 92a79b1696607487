use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eae_core::amr::parse_penman;
use eae_core::config::RunConfig;
use eae_core::copy::CopyMode;
use eae_core::data::{load_dataset, save_dataset, SplitSpec};
use eae_core::model::AmrMode;
use eae_core::parser_client::{precompute_corpus, AmrCache, BackendDescriptor};
use eae_core::pipeline::{Checkpoint, PredictOutput};
use eae_core::synthetic::{generate_synthetic, MAX_EVENT_TYPES};
use eae_core::train::{ablate, load_data, load_graphs, train, AblationGrid};

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

#[derive(Parser)]
#[command(name = "eae", version, about = "Template-based event argument extraction with AMR prefixes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every passage of a dataset into the AMR cache.
    ParseAmr {
        #[command(flatten)]
        run: RunArgs,
        /// Dataset to parse; defaults to the configured train, dev and test files.
        #[arg(long)]
        data: Vec<PathBuf>,
    },
    /// Write a synthetic corpus with a ready-to-run config.
    GenSynthetic {
        #[arg(long, default_value = "synthetic")]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        dev: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = MAX_EVENT_TYPES)]
        event_types: usize,
    },
    /// Train and keep the best checkpoint by dev Arg-C.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional per-instance outputs as JSON lines.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Extract arguments from one passage.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        passage: String,
        #[arg(long)]
        trigger: String,
        #[arg(long)]
        event_type: String,
        /// Penman graph of the passage; otherwise the configured parser is used.
        #[arg(long)]
        amr: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train and score every combination of AMR route, copy mode and
    /// encoder freezing.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds; each cell reports mean ± std over them.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_enum::<AmrMode>)]
        amr_modes: Vec<AmrMode>,
        #[arg(long, value_delimiter = ',', value_parser = parse_enum::<CopyMode>)]
        copy_modes: Vec<CopyMode>,
        /// Score on the test file instead of dev.
        #[arg(long)]
        on_test: bool,
        /// Also write the table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of the training file to use.
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long, value_parser = parse_enum::<CopyMode>)]
    copy_mode: Option<CopyMode>,
    #[arg(long, value_parser = parse_enum::<AmrMode>)]
    amr_mode: Option<AmrMode>,
    #[arg(long)]
    freeze_amr_encoder: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Any field by dotted path, e.g. `--set copy.lambda=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(anyhow::Error::msg)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("`{kv}` is not KEY=VALUE"))?;
            cfg.set(k.trim(), v.trim()).map_err(anyhow::Error::msg)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.split.seed = s;
        }
        if let Some(p) = self.proportion {
            cfg.split = SplitSpec::new(p, cfg.split.seed)?;
        }
        if let Some(m) = self.copy_mode {
            cfg.copy.mode = m;
        }
        if let Some(m) = self.amr_mode {
            cfg.set_amr_mode(m);
        }
        if let Some(f) = self.freeze_amr_encoder {
            cfg.amr_encoder.frozen = f;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        Ok(cfg)
    }
}

fn print_output(out: &PredictOutput) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(out)?);
    Ok(())
}

fn gen_synthetic(out: &Path, n: usize, dev: usize, seed: u64, event_types: usize) -> Result<()> {
    fs::create_dir_all(out)?;
    let train = generate_synthetic(n, seed, event_types);
    let dev = generate_synthetic(dev, seed.wrapping_add(1000), event_types);
    save_dataset(&out.join("train.jsonl"), &train.instances)?;
    save_dataset(&out.join("dev.jsonl"), &dev.instances)?;
    train.ontology.save(&out.join("ontology.json"))?;
    let mut table: BTreeMap<String, String> = train.amr.clone();
    table.extend(dev.amr.clone());
    fs::write(out.join("amr_table.json"), serde_json::to_string_pretty(&table)?)?;
    let mut cfg = RunConfig { lr: 1e-3, seed, ..RunConfig::default() };
    cfg.paths.train = Some("train.jsonl".into());
    cfg.paths.dev = Some("dev.jsonl".into());
    cfg.paths.ontology = Some("ontology.json".into());
    cfg.paths.amr_cache = Some("amr_cache".into());
    cfg.paths.output = Some("checkpoint.json".into());
    cfg.parser = Some(BackendDescriptor::Stub { table: Some("amr_table.json".into()) });
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    println!("wrote {} train and {} dev instances to {}", train.instances.len(), dev.instances.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { out, n, dev, seed, event_types } => gen_synthetic(&out, n, dev, seed, event_types),
        Command::ParseAmr { run, data } => {
            let cfg = run.resolve()?;
            let cache_dir = cfg.paths.amr_cache.clone().context("paths.amr_cache is not set")?;
            let cache = AmrCache::open(cache_dir)?;
            let backend = cfg.parser.as_ref().map(|d| d.build()).transpose()?;
            let files: Vec<PathBuf> = if data.is_empty() {
                [&cfg.paths.train, &cfg.paths.dev, &cfg.paths.test].into_iter().flatten().cloned().collect()
            } else {
                data
            };
            if files.is_empty() {
                bail!("no dataset given");
            }
            for f in files {
                let instances = load_dataset(&f)?;
                let parsed = precompute_corpus(&instances, &cache, backend.as_deref())?;
                println!("{}: parsed {parsed} new passages", f.display());
            }
            Ok(())
        }
        Command::Train { run } => {
            let cfg = run.resolve()?;
            let outcome = train(&cfg)?;
            for e in &outcome.history {
                match &e.dev {
                    Some(d) => println!("epoch {:>3}  loss {:>10.4}  dev Arg-I {:.4}  Arg-C {:.4}", e.epoch, e.train_loss, d.arg_i.f1, d.arg_c.f1),
                    None => println!("epoch {:>3}  loss {:>10.4}", e.epoch, e.train_loss),
                }
            }
            println!("best checkpoint: epoch {}, dev Arg-C {:?}", outcome.checkpoint.epoch, outcome.checkpoint.best_dev_arg_c);
            if cfg.paths.output.is_none() {
                eprintln!("paths.output is not set; checkpoint not written");
            }
            Ok(())
        }
        Command::Eval { checkpoint, data, predictions, run } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let mut cfg = if run.config.is_some() { run.resolve()? } else { ckpt.config.clone() };
            cfg.model.amr_mode = ckpt.config.model.amr_mode;
            let instances = load_dataset(&data)?;
            let graphs = load_graphs(&cfg, &instances)?;
            let (report, outputs) = ckpt.extractor()?.evaluate(&instances, &graphs)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(p) = predictions {
                let lines: Vec<String> = instances
                    .iter()
                    .zip(&outputs)
                    .map(|(i, o)| serde_json::json!({"key": i.key(), "output": o}).to_string())
                    .collect();
                fs::write(p, lines.join("\n") + "\n")?;
            }
            Ok(())
        }
        Command::Predict { checkpoint, passage, trigger, event_type, amr, run } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ex = ckpt.extractor()?;
            let graph = match amr {
                Some(text) => Some(parse_penman(&text)?),
                None if ex.config.needs_amr() && !passage.trim().is_empty() => {
                    let cfg = if run.config.is_some() { run.resolve()? } else { ckpt.config.clone() };
                    let backend = cfg.parser.as_ref().context("no --amr given and no parser configured")?.build()?;
                    Some(parse_penman(&backend.parse(&passage).map_err(anyhow::Error::msg)?)?)
                }
                None => None,
            };
            print_output(&ex.predict(&passage, &trigger, &event_type, graph.as_ref())?)
        }
        Command::Ablate { run, seeds, amr_modes, copy_modes, on_test, table } => {
            let cfg = run.resolve()?;
            let mut grid = AblationGrid::default();
            if !seeds.is_empty() {
                grid.seeds = seeds;
            } else {
                grid.seeds = vec![cfg.seed];
            }
            if !amr_modes.is_empty() {
                grid.amr_modes = amr_modes;
            }
            if !copy_modes.is_empty() {
                grid.copy_modes = copy_modes;
            }
            // Graphs are needed by any AMR route in the grid.
            let mut load_cfg = cfg.clone();
            if grid.amr_modes.iter().any(|&m| m != AmrMode::None) {
                load_cfg.set_amr_mode(AmrMode::Prefix);
            }
            let mut data = load_data(&load_cfg)?;
            let eval_set = if on_test {
                let test = load_dataset(cfg.paths.test.as_deref().context("paths.test is not set")?)?;
                data.graphs.extend(load_graphs(&load_cfg, &test)?);
                test
            } else {
                data.dev.clone()
            };
            let result = ablate(&cfg, &grid, &data, &eval_set)?;
            let rendered = result.render();
            print!("{rendered}");
            if let Some(p) = table {
                fs::write(p, rendered)?;
            }
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
