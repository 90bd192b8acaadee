use std::path::PathBuf;

use crate::error::{Result, SrbError};
use crate::kv;
use crate::model::ModelConfig;
use crate::text::{DEFAULT_MAX_SOURCE_LEN, DEFAULT_MAX_SUMMARY_LEN};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling applied before every update.
    pub clip_norm: f64,
    /// Save a checkpoint every this many epochs; 0 saves only the final one.
    pub checkpoint_interval: usize,
    pub max_source_len: usize,
    pub max_summary_len: usize,
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 10,
            seed: 0,
            clip_norm: 5.0,
            checkpoint_interval: 0,
            max_source_len: DEFAULT_MAX_SOURCE_LEN,
            max_summary_len: DEFAULT_MAX_SUMMARY_LEN,
            corpus: None,
            vocab: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(SrbError::argument("batch_size must be at least 1"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(SrbError::argument("learning_rate must be positive"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(SrbError::argument("clip_norm must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SrbError::argument("Adam betas must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(SrbError::argument("epsilon must be positive"));
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, raw: &str) -> Result<bool> {
        match key {
            "batch_size" => self.batch_size = kv::value(key, raw)?,
            "learning_rate" => self.learning_rate = kv::value(key, raw)?,
            "beta1" => self.beta1 = kv::value(key, raw)?,
            "beta2" => self.beta2 = kv::value(key, raw)?,
            "epsilon" => self.epsilon = kv::value(key, raw)?,
            "epochs" => self.epochs = kv::value(key, raw)?,
            "seed" => self.seed = kv::value(key, raw)?,
            "clip_norm" => self.clip_norm = kv::value(key, raw)?,
            "checkpoint_interval" => self.checkpoint_interval = kv::value(key, raw)?,
            "max_source_len" => self.max_source_len = kv::value(key, raw)?,
            "max_summary_len" => self.max_summary_len = kv::value(key, raw)?,
            "corpus" => self.corpus = Some(raw.into()),
            "vocab" => self.vocab = Some(raw.into()),
            "checkpoint_dir" => self.checkpoint_dir = Some(raw.into()),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Parses a combined `key=value` experiment file holding model and training
/// settings. Unknown keys are rejected.
pub fn parse_experiment_config(text: &str) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::default();
    let mut train = TrainConfig::default();
    for (k, v) in kv::parse(text)? {
        if !model.apply(&k, &v)? && !train.apply(&k, &v)? {
            return Err(SrbError::argument(format!("unknown config key {k:?}")));
        }
    }
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}
