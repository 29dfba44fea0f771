use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::classes::Task;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Network preset used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// ResNet-50 with the 3x3, stride-1 stem and stride-1 pool.
    #[default]
    Resnet50,
    /// Unmodified ResNet-50 stem, for comparison.
    StandardResnet50,
    /// One block per stage, eight channels.
    Tiny,
}

impl Architecture {
    pub fn spec(self, num_classes: usize) -> ModelSpec {
        match self {
            Architecture::Resnet50 => ModelSpec::small_stem_resnet50(num_classes),
            Architecture::StandardResnet50 => ModelSpec::standard_resnet50(10, num_classes),
            Architecture::Tiny => ModelSpec::tiny(num_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Training draws per class and epoch; the median class size when unset.
    pub per_class: Option<usize>,
    /// Validation draws per class; the smallest validation class when unset.
    pub val_per_class: Option<usize>,
    pub init_seed: u64,
    pub sampler_seed: u64,
    /// Checkpoint to start from; its backbone replaces `architecture`.
    pub pretrained: Option<PathBuf>,
    /// Stop after this many epochs without a new best validation accuracy.
    pub early_stop_patience: Option<usize>,
    /// Multiply the learning rate by `plateau_factor` after this many epochs
    /// without improvement.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Random dihedral transforms on training draws.
    pub augment: bool,
    /// Only the head is updated; the backbone runs in inference mode.
    pub freeze_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Plant,
            architecture: Architecture::Resnet50,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 100,
            per_class: None,
            val_per_class: None,
            init_seed: 0,
            sampler_seed: 0,
            pretrained: None,
            early_stop_patience: Some(15),
            plateau_patience: 5,
            plateau_factor: 0.1,
            augment: true,
            freeze_backbone: false,
        }
    }
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(TrainConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// A flat value: JSON when it parses (numbers, booleans, null, quoted
/// strings), otherwise the raw text as a string.
fn flat_value(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn check_keys(map: &Map<String, Value>) -> Result<()> {
    let known = known_keys();
    if let Some(k) = map.keys().find(|k| !known.contains(k)) {
        return Err(Error::Config(format!("unknown configuration key `{k}`")));
    }
    Ok(())
}

fn from_map(map: Map<String, Value>) -> Result<TrainConfig> {
    check_keys(&map)?;
    let cfg: TrainConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

impl TrainConfig {
    /// Parses a JSON object or flat `key = value` lines (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let map = if trimmed.starts_with('{') {
            match serde_json::from_str::<Value>(text).map_err(|e| Error::Config(e.to_string()))? {
                Value::Object(m) => m,
                _ => return Err(Error::Config("configuration must be an object".into())),
            }
        } else {
            let mut m = Map::new();
            for (n, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .or_else(|| line.split_once(':'))
                    .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
                m.insert(k.trim().to_string(), flat_value(v));
            }
            m
        };
        from_map(map)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map = match serde_json::to_value(&*self).map_err(|e| Error::json("config", e))? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        if !map.contains_key(key) {
            return Err(Error::Config(format!("unknown configuration key `{key}`")));
        }
        map.insert(key.to_string(), flat_value(value));
        *self = from_map(map)?;
        Ok(())
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive");
        }
        if self.per_class == Some(0) || self.val_per_class == Some(0) {
            return fail("per_class must be positive");
        }
        if let Some(pc) = self.per_class {
            if self.batch_size > pc * num_classes {
                return Err(Error::Config(format!(
                    "batch_size {} exceeds an epoch of {} draws",
                    self.batch_size,
                    pc * num_classes
                )));
            }
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return fail("plateau_factor must be in (0, 1]");
        }
        Ok(())
    }

    pub fn sgd(&self, learning_rate: f64) -> super::sgd::SgdConfig {
        super::sgd::SgdConfig {
            learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}
