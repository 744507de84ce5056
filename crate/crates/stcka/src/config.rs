//! Model and run configuration.
//!
//! [`ModelConfig`] holds every hyperparameter the model needs and travels
//! inside checkpoints; [`RunConfig`] adds the file paths a command works
//! with. Run configs load from plain `key = value` files where unknown keys
//! are hard errors, so a typo cannot silently fall back to a default, and
//! every accepted config round-trips through [`RunConfig::dump`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::GammaMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`, got `{text}`")]
    Malformed {
        path: String,
        line: usize,
        text: String,
    },
    #[error("{path}:{line}: unknown config key `{key}`")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },
    #[error("config key `{key}`: bad value `{value}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Word and character table treatment during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbedMode {
    /// Random init, trained.
    Rand,
    /// Frozen: word and character tables keep their initial values.
    Static,
    /// Pretrained or random init, trained.
    NonStatic,
}

impl EmbedMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EmbedMode::Rand => "rand",
            EmbedMode::Static => "static",
            EmbedMode::NonStatic => "non-static",
        }
    }
}

impl std::str::FromStr for EmbedMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rand" => Ok(EmbedMode::Rand),
            "static" => Ok(EmbedMode::Static),
            "non-static" => Ok(EmbedMode::NonStatic),
            _ => Err(format!("`{s}`: expected rand, static, or non-static")),
        }
    }
}

/// Hyperparameters; defaults follow the shipped `configs/default.conf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token embedding width; must be even (half words, half characters).
    pub embed_dim: usize,
    /// LSTM hidden size per direction; encodings are twice this wide.
    pub hidden_size: usize,
    /// Hidden width of the concept-to-text attention scorer.
    pub cst_attn_dim: usize,
    /// Hidden width of the concept-to-concept-set attention scorer.
    pub ccs_attn_dim: usize,
    /// Concept budget per text; retrieval truncates beyond it.
    pub max_concepts: usize,
    /// Token budget per text; tokenization truncates beyond it.
    pub max_tokens: usize,
    /// Class count. Filled in from the training data when absent.
    pub num_classes: Option<usize>,
    /// Width of the hidden layer before the output; defaults to the
    /// encoding width (twice `hidden_size`).
    pub fc_hidden: Option<usize>,
    /// Symbols seen fewer times than this map to the unknown id.
    pub min_freq: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub gamma: GammaMode,
    pub embed_mode: EmbedMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 96,
            hidden_size: 64,
            cst_attn_dim: 70,
            ccs_attn_dim: 35,
            max_concepts: 10,
            max_tokens: 64,
            num_classes: None,
            fc_hidden: None,
            min_freq: 1,
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            gamma: GammaMode::Learned,
            embed_mode: EmbedMode::Rand,
        }
    }
}

impl ModelConfig {
    /// Effective width of the pre-output hidden layer.
    pub fn fc_width(&self) -> usize {
        self.fc_hidden.unwrap_or(2 * self.hidden_size)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.embed_dim < 6 || self.embed_dim % 2 != 0 {
            return fail(format!(
                "embed_dim must be an even value of at least 6, got {}",
                self.embed_dim
            ));
        }
        for (name, v) in [
            ("hidden_size", self.hidden_size),
            ("cst_attn_dim", self.cst_attn_dim),
            ("ccs_attn_dim", self.ccs_attn_dim),
            ("max_concepts", self.max_concepts),
            ("max_tokens", self.max_tokens),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("min_freq", self.min_freq),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if let Some(k) = self.num_classes {
            if k < 2 {
                return fail(format!("num_classes must be at least 2, got {k}"));
            }
        }
        if let Some(w) = self.fc_hidden {
            if w == 0 {
                return fail("fc_hidden must be positive".into());
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

/// A [`ModelConfig`] plus the files a run reads and writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub pretrained: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    /// Reads a `key = value` file. Blank lines and `#` comments are
    /// skipped; keys outside the schema abort the load.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: display.clone(),
            source,
        })?;
        let mut config = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                path: display.clone(),
                line: idx + 1,
                text: line.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            config.set(key, value).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey {
                    path: display.clone(),
                    line: idx + 1,
                    key,
                },
                other => other,
            })?;
        }
        Ok(config)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let m = &mut self.model;
        match key {
            "embed_dim" => m.embed_dim = parse_as(key, value)?,
            "hidden_size" => m.hidden_size = parse_as(key, value)?,
            "cst_attn_dim" => m.cst_attn_dim = parse_as(key, value)?,
            "ccs_attn_dim" => m.ccs_attn_dim = parse_as(key, value)?,
            "max_concepts" => m.max_concepts = parse_as(key, value)?,
            "max_tokens" => m.max_tokens = parse_as(key, value)?,
            "num_classes" => m.num_classes = Some(parse_as(key, value)?),
            "fc_hidden" => m.fc_hidden = Some(parse_as(key, value)?),
            "min_freq" => m.min_freq = parse_as(key, value)?,
            "learning_rate" => m.learning_rate = parse_as(key, value)?,
            "batch_size" => m.batch_size = parse_as(key, value)?,
            "epochs" => m.epochs = parse_as(key, value)?,
            "seed" => m.seed = parse_as(key, value)?,
            "gamma" => m.gamma = parse_as(key, value)?,
            "embed_mode" => m.embed_mode = parse_as(key, value)?,
            "train" => self.train = Some(PathBuf::from(value)),
            "valid" => self.valid = Some(PathBuf::from(value)),
            "test" => self.test = Some(PathBuf::from(value)),
            "lexicon" => self.lexicon = Some(PathBuf::from(value)),
            "triples" => self.triples = Some(PathBuf::from(value)),
            "pretrained" => self.pretrained = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => {
                return Err(ConfigError::UnknownKey {
                    path: String::new(),
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Emits the config in the file format, one key per line, unset
    /// optionals omitted. `from_file(dump(c)) == c` for every valid `c`.
    pub fn dump(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("embed_dim", m.embed_dim.to_string());
        line("hidden_size", m.hidden_size.to_string());
        line("cst_attn_dim", m.cst_attn_dim.to_string());
        line("ccs_attn_dim", m.ccs_attn_dim.to_string());
        line("max_concepts", m.max_concepts.to_string());
        line("max_tokens", m.max_tokens.to_string());
        if let Some(k) = m.num_classes {
            line("num_classes", k.to_string());
        }
        if let Some(w) = m.fc_hidden {
            line("fc_hidden", w.to_string());
        }
        line("min_freq", m.min_freq.to_string());
        line("learning_rate", m.learning_rate.to_string());
        line("batch_size", m.batch_size.to_string());
        line("epochs", m.epochs.to_string());
        line("seed", m.seed.to_string());
        line("gamma", m.gamma.to_string());
        line("embed_mode", m.embed_mode.as_str().to_string());
        for (k, v) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
            ("lexicon", &self.lexicon),
            ("triples", &self.triples),
            ("pretrained", &self.pretrained),
            ("checkpoint", &self.checkpoint),
            ("out", &self.out),
        ] {
            if let Some(p) = v {
                line(k, p.display().to_string());
            }
        }
        out
    }
}
