//! Run configuration: everything a training or evaluation run needs,
//! loadable from TOML with every field optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::copy::CopyConfig;
use crate::data::SplitSpec;
use crate::model::{AmrMode, ModelConfig, Site};
use crate::parser_client::BackendDescriptor;
use crate::prefix::{AmrEncoderSpec, EncoderVariant};

/// Dataset whose published schedule the defaults follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Ace05e,
    EreEn,
}

impl Profile {
    pub fn epochs(self) -> usize {
        match self {
            Profile::Ace05e => 60,
            Profile::EreEn => 75,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub amr_cache: Option<PathBuf>,
    /// Where the best checkpoint is written.
    pub output: Option<PathBuf>,
}

impl Paths {
    /// Makes relative paths relative to `base`.
    pub fn rebase(&mut self, base: &Path) {
        for p in [&mut self.train, &mut self.dev, &mut self.test, &mut self.ontology, &mut self.amr_cache, &mut self.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub copy: CopyConfig,
    pub amr_encoder: AmrEncoderSpec,
    /// Number of compression queries, i.e. the prefix length.
    #[serde(alias = "l")]
    pub prefix_len: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub split: SplitSpec,
    pub max_decode_len: usize,
    pub paths: Paths,
    pub parser: Option<BackendDescriptor>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Ace05e, EncoderVariant::ConceptAware)
    }
}

impl RunConfig {
    /// Published schedule for a dataset; batch size depends on the AMR
    /// encoder variant (4 with the concept-aware encoder, 6 otherwise).
    pub fn for_profile(profile: Profile, variant: EncoderVariant) -> Self {
        Self {
            model: ModelConfig::default(),
            copy: CopyConfig::default(),
            amr_encoder: AmrEncoderSpec { variant, ..AmrEncoderSpec::default() },
            prefix_len: 40,
            lr: 1e-5,
            epochs: profile.epochs(),
            batch_size: match variant {
                EncoderVariant::ConceptAware => 4,
                EncoderVariant::Surface => 6,
            },
            clip_norm: Some(1.0),
            seed: 0,
            split: SplitSpec::full(),
            max_decode_len: 64,
            paths: Paths::default(),
            parser: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(dir) = path.parent() {
            cfg.paths.rebase(dir);
            if let Some(BackendDescriptor::Stub { table: Some(t) }) = cfg.parser.as_mut() {
                if t.is_relative() {
                    *t = dir.join(&*t);
                }
            }
        }
        Ok(cfg)
    }

    /// Sets the field at dotted `path` (e.g. `copy.lambda`) from a TOML
    /// literal; bare words are taken as strings.
    pub fn set(&mut self, path: &str, value: &str) -> Result<(), String> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| e.to_string())?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let path = if path == "l" { "prefix_len" } else { path };
        let mut slot = &mut root;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let table = slot.as_table_mut().ok_or_else(|| format!("`{}` is not a table", keys[..i].join(".")))?;
            if i + 1 == keys.len() {
                table.insert(key.to_string(), parsed);
                break;
            }
            slot = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let mut updated: RunConfig = root.try_into().map_err(|e: toml::de::Error| format!("{path}: {e}"))?;
        if path == "model.amr_mode" {
            let mode = updated.model.amr_mode;
            updated.set_amr_mode(mode);
        }
        *self = updated;
        Ok(())
    }

    pub fn amr_mode(&self) -> AmrMode {
        self.model.amr_mode
    }

    /// Switches the AMR route, keeping injection sites consistent with it.
    pub fn set_amr_mode(&mut self, mode: AmrMode) {
        self.model.amr_mode = mode;
        if mode != AmrMode::Prefix {
            self.model.injection_sites.clear();
        } else if self.model.injection_sites.is_empty() {
            self.model.injection_sites = Site::DEFAULT.to_vec();
        }
    }

    /// Model configuration for a vocabulary of `vocab_size` tokens.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut cfg = self.clone();
        cfg.set_amr_mode(self.model.amr_mode);
        ModelConfig { vocab_size, ..cfg.model }
    }

    /// Whether passages need an AMR graph under this configuration.
    pub fn needs_amr(&self) -> bool {
        self.model.amr_mode != AmrMode::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copy::CopyMode;

    #[test]
    fn published_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.lr, c.copy.lambda, c.prefix_len, c.epochs, c.batch_size), (1e-5, 1.0, 40, 60, 4));
        let e = RunConfig::for_profile(Profile::EreEn, EncoderVariant::Surface);
        assert_eq!((e.epochs, e.batch_size), (75, 6));
    }

    #[test]
    fn partial_toml_overrides() {
        let c = RunConfig::from_toml("l = 30\nseed = 5\n[copy]\nmode = \"off\"\n[model]\namr_mode = \"none\"\n").unwrap();
        assert_eq!((c.prefix_len, c.seed, c.copy.mode), (30, 5, CopyMode::Off));
        assert_eq!(c.copy.lambda, 1.0);
        assert_eq!(c.model.d_model, 64);
        let m = c.model_config(100);
        assert!(m.injection_sites.is_empty());
        m.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig { parser: Some(BackendDescriptor::Http { url: "http://localhost:1".into() }), ..Default::default() };
        c.paths.train = Some("train.jsonl".into());
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn dotted_overrides() {
        let mut c = RunConfig::default();
        c.set("copy.lambda", "0.5").unwrap();
        c.set("copy.mode", "pure").unwrap();
        c.set("model.amr_mode", "none").unwrap();
        c.set("paths.train", "data/train.jsonl").unwrap();
        c.set("split.proportion", "0.05").unwrap();
        c.set("l", "8").unwrap();
        assert_eq!(c.prefix_len, 8);
        assert_eq!((c.copy.lambda, c.copy.mode, c.split.proportion), (0.5, CopyMode::Pure, 0.05));
        assert!(c.model.injection_sites.is_empty());
        assert_eq!(c.paths.train.as_deref(), Some(Path::new("data/train.jsonl")));
        assert!(c.set("epochs", "lots").is_err());
        assert!(c.set("nope.x", "1").is_err());
        assert_eq!(c.epochs, 60);
    }

    #[test]
    fn bad_fields_rejected() {
        assert!(RunConfig::from_toml("learning_rat = 3").is_err());
        assert!(RunConfig::from_toml("epochs = \"many\"").is_err());
    }
}
