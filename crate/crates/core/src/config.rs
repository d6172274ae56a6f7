//! The single TOML config file read by every command.
//!
//! ```toml
//! [weights]
//! alpha = 0.25
//! beta = 0.25
//! gamma = 0.25
//! delta = 0.25
//!
//! [scoring]
//! tags = ["think", "answer"]
//! format_mode = "strict"
//! count_mode = "literal"
//!
//! [grpo]
//! clip_epsilon = 0.2
//! kl_coefficient = 0.04
//! advantage_epsilon = 1e-8
//! group_size = 4
//!
//! [curation]
//! input = "samples.jsonl"
//! output = "references.jsonl"
//! threshold = 0.7
//! max_correction_iters = 5
//! concurrency = 4
//! generator = { kind = "mock", script = "script.json" }
//! evaluator = { kind = "http", base_url = "http://localhost:8000/v1", model = "judge" }
//!
//! [toy]
//! steps = 3000
//! learning_rate = 0.1
//! out_dir = "metrics"
//!
//! [toy.task]
//! language = "ar"
//! ```
//!
//! Every section is optional and every key falls back to its default,
//! except that a `[weights]` table must list all four coefficients.
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curation::{CurationConfig, EndpointConfig};
use crate::document::{FormatMode, TagSet};
use crate::grpo::GrpoConfig;
use crate::reward::{CountMode, RewardWeights, Scorer};
use crate::toy::{TaskSettings, ToyConfig, TrainSettings};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub weights: RewardWeights,
    pub scoring: ScoringSection,
    pub grpo: GrpoConfig,
    pub curation: CurationSection,
    pub toy: ToySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringSection {
    /// Bare tag names; each `name` expands to `<name>` / `</name>`.
    pub tags: Vec<String>,
    pub format_mode: FormatMode,
    pub count_mode: CountMode,
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self {
            tags: vec!["think".into(), "answer".into()],
            format_mode: FormatMode::Strict,
            count_mode: CountMode::Literal,
        }
    }
}

/// Where a curation client comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientSettings {
    /// Scripted offline client; `script` is a JSON mock script, or absent
    /// for the built-in defaults.
    Mock {
        #[serde(default)]
        script: Option<PathBuf>,
    },
    Http(EndpointConfig),
}

impl Default for ClientSettings {
    fn default() -> Self {
        ClientSettings::Mock { script: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurationSection {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub threshold: f64,
    pub max_correction_iters: usize,
    pub concurrency: usize,
    pub generator: ClientSettings,
    pub evaluator: ClientSettings,
}

impl Default for CurationSection {
    fn default() -> Self {
        let c = CurationConfig::default();
        Self {
            input: None,
            output: None,
            threshold: c.threshold,
            max_correction_iters: c.max_correction_iters,
            concurrency: c.concurrency,
            generator: ClientSettings::default(),
            evaluator: ClientSettings::default(),
        }
    }
}

impl CurationSection {
    pub fn params(&self) -> CurationConfig {
        CurationConfig {
            threshold: self.threshold,
            max_correction_iters: self.max_correction_iters,
            concurrency: self.concurrency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySection {
    pub steps: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
    pub smoothing_window: usize,
    pub init_scale: f64,
    pub out_dir: PathBuf,
    /// Run the five-configuration weight grid instead of a single run.
    pub grid: bool,
    pub task: TaskSettings,
}

impl Default for ToySection {
    fn default() -> Self {
        let t = TrainSettings::default();
        Self {
            steps: t.steps,
            learning_rate: t.learning_rate,
            temperature: t.temperature,
            seed: t.seed,
            smoothing_window: t.smoothing_window,
            init_scale: t.init_scale,
            out_dir: PathBuf::from("metrics"),
            grid: false,
            task: TaskSettings::default(),
        }
    }
}

impl ToySection {
    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            steps: self.steps,
            learning_rate: self.learning_rate,
            temperature: self.temperature,
            seed: self.seed,
            smoothing_window: self.smoothing_window,
            init_scale: self.init_scale,
        }
    }
}

impl AppConfig {
    /// Parses TOML text without touching the filesystem.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads, validates and resolves relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        config.validate()?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.curation.input.as_mut() {
            fix(p);
        }
        if let Some(p) = self.curation.output.as_mut() {
            fix(p);
        }
        for client in [&mut self.curation.generator, &mut self.curation.evaluator] {
            if let ClientSettings::Mock { script: Some(p) } = client {
                fix(p);
            }
        }
        fix(&mut self.toy.out_dir);
    }

    /// Checks every section; messages name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.weights
            .validate()
            .map_err(|e| invalid(format!("weights: {e}")))?;
        self.tag_set()?;
        self.grpo.validate().map_err(|e| invalid(e.to_string()))?;
        self.curation
            .params()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        for (name, client) in [
            ("generator", &self.curation.generator),
            ("evaluator", &self.curation.evaluator),
        ] {
            if let ClientSettings::Http(endpoint) = client {
                if endpoint.base_url.trim().is_empty() {
                    return Err(invalid(format!("curation.{name}.base_url is empty")));
                }
                if endpoint.model.trim().is_empty() {
                    return Err(invalid(format!("curation.{name}.model is empty")));
                }
            }
        }
        self.toy
            .train_settings()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        crate::toy::ToyTask::structured(&self.toy.task)
            .map_err(|e| invalid(format!("toy.task: {e}")))?;
        Ok(())
    }

    pub fn tag_set(&self) -> Result<TagSet, ConfigError> {
        TagSet::from_names(&self.scoring.tags)
            .map_err(|e| ConfigError::Invalid(format!("scoring.tags: {e}")))
    }

    pub fn scorer(&self) -> Result<Scorer, ConfigError> {
        let mut scorer = Scorer::new(self.weights, self.tag_set()?);
        scorer.format_mode = self.scoring.format_mode;
        scorer.count_mode = self.scoring.count_mode;
        Ok(scorer)
    }

    pub fn toy_config(&self) -> ToyConfig {
        ToyConfig {
            weights: self.weights,
            grpo: self.grpo,
            train: self.toy.train_settings(),
            task: self.toy.task.clone(),
        }
    }
}
