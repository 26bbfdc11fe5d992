//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::corpus::DEFAULT_MIN_STATEMENTS;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub const DEFAULT_VOCAB_SIZE: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub value_vocab: usize,
    pub target_vocab: usize,
    pub min_statements: usize,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            value_vocab: DEFAULT_VOCAB_SIZE,
            target_vocab: DEFAULT_VOCAB_SIZE,
            min_statements: DEFAULT_MIN_STATEMENTS,
            data_dir: None,
            out_dir: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.into(), value: value.into(), reason: e.to_string() })
}

impl RunConfig {
    /// Every key accepted by [`RunConfig::set`], in file order.
    pub const KEYS: &'static [&'static str] = &[
        "lr",
        "beta1",
        "beta2",
        "eps",
        "batch_size",
        "max_epochs",
        "seed",
        "grad_clip_norm",
        "validate_every",
        "patience",
        "dropout",
        "stage2_template",
        "hidden",
        "word_dim",
        "prop_dim",
        "pos_dim",
        "max_position",
        "max_template_len",
        "max_description_len",
        "init_scale",
        "value_vocab",
        "target_vocab",
        "min_statements",
        "data_dir",
        "out_dir",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (t, m) = (&mut self.train, &mut self.model);
        match key {
            "lr" => t.lr = parse(key, value)?,
            "beta1" => t.beta1 = parse(key, value)?,
            "beta2" => t.beta2 = parse(key, value)?,
            "eps" => t.eps = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "grad_clip_norm" => t.grad_clip_norm = parse(key, value)?,
            "validate_every" => t.validate_every = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "dropout" => t.dropout = parse(key, value)?,
            "stage2_template" => t.stage2_template = parse(key, value)?,
            "hidden" => m.hidden = parse(key, value)?,
            "word_dim" => m.word_dim = parse(key, value)?,
            "prop_dim" => m.prop_dim = parse(key, value)?,
            "pos_dim" => m.pos_dim = parse(key, value)?,
            "max_position" => m.max_position = parse(key, value)?,
            "max_template_len" => m.max_template_len = parse(key, value)?,
            "max_description_len" => m.max_description_len = parse(key, value)?,
            "init_scale" => m.init_scale = parse(key, value)?,
            "value_vocab" => self.value_vocab = parse(key, value)?,
            "target_vocab" => self.target_vocab = parse(key, value)?,
            "min_statements" => self.min_statements = parse(key, value)?,
            "data_dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out_dir" => self.out_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Parses on top of the defaults. Blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_text()).map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })
    }

    fn value_of(&self, key: &str) -> String {
        let (t, m) = (&self.train, &self.model);
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "lr" => t.lr.to_string(),
            "beta1" => t.beta1.to_string(),
            "beta2" => t.beta2.to_string(),
            "eps" => t.eps.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "max_epochs" => t.max_epochs.to_string(),
            "seed" => t.seed.to_string(),
            "grad_clip_norm" => t.grad_clip_norm.to_string(),
            "validate_every" => t.validate_every.to_string(),
            "patience" => t.patience.to_string(),
            "dropout" => t.dropout.to_string(),
            "stage2_template" => t.stage2_template.to_string(),
            "hidden" => m.hidden.to_string(),
            "word_dim" => m.word_dim.to_string(),
            "prop_dim" => m.prop_dim.to_string(),
            "pos_dim" => m.pos_dim.to_string(),
            "max_position" => m.max_position.to_string(),
            "max_template_len" => m.max_template_len.to_string(),
            "max_description_len" => m.max_description_len.to_string(),
            "init_scale" => m.init_scale.to_string(),
            "value_vocab" => self.value_vocab.to_string(),
            "target_vocab" => self.target_vocab.to_string(),
            "min_statements" => self.min_statements.to_string(),
            "data_dir" => path(&self.data_dir),
            "out_dir" => path(&self.out_dir),
            _ => unreachable!("key list and accessor out of sync"),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }
}
