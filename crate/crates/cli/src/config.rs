//! `key = value` run configuration. Blank lines and `#` comments are ignored;
//! unknown keys are rejected.

use std::str::FromStr;

use cerberus_core::{SplitMode, SplitSpec, TrainConfig};

/// Everything a training run can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub train: TrainConfig,
    pub split: SplitSpec,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            split: SplitSpec::new(SplitMode::StratifiedCells, 0),
        }
    }
}

pub const KEYS: [&str; 22] = [
    "epochs",
    "batch_size",
    "seed",
    "patience",
    "validation_fraction",
    "deterministic",
    "lr",
    "beta1",
    "beta2",
    "epsilon",
    "gru_hidden",
    "gru_layers",
    "lstm_hidden",
    "lstm_layers",
    "relaxation_mlp",
    "history_mlp",
    "n0",
    "n_ramp",
    "w_min",
    "w_max",
    "split",
    "train_fraction",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_sizes(key: &str, value: &str) -> Result<Vec<usize>, String> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl RunSettings {
    /// Sets one key. The seed drives both the split and the model.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.train;
        let m = &mut t.model;
        let s = &mut m.schedule;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "seed" => {
                t.seed = parse(key, value)?;
                self.split.seed = t.seed;
            }
            "patience" => t.patience = parse(key, value)?,
            "validation_fraction" => t.validation_fraction = parse(key, value)?,
            "deterministic" => t.deterministic = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "beta1" => t.adam.beta1 = parse(key, value)?,
            "beta2" => t.adam.beta2 = parse(key, value)?,
            "epsilon" => t.adam.epsilon = parse(key, value)?,
            "gru_hidden" => m.gru_hidden = parse(key, value)?,
            "gru_layers" => m.gru_layers = parse(key, value)?,
            "lstm_hidden" => m.lstm_hidden = parse(key, value)?,
            "lstm_layers" => m.lstm_layers = parse(key, value)?,
            "relaxation_mlp" => m.relaxation_mlp = parse_sizes(key, value)?,
            "history_mlp" => m.history_mlp = parse_sizes(key, value)?,
            "n0" => s.n0 = parse(key, value)?,
            "n_ramp" => s.n_ramp = parse(key, value)?,
            "w_min" => s.w_min = parse(key, value)?,
            "w_max" => s.w_max = parse(key, value)?,
            "split" => self.split.mode = value.parse().map_err(|e| format!("{e}"))?,
            "train_fraction" => self.split.train_fraction = parse(key, value)?,
            _ => return Err(format!("unknown key {key:?} (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies a whole config document.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.train.validate().map_err(|e| e.to_string())?;
        self.split.validate().map_err(|e| e.to_string())
    }
}
