//! Flag groups shared by several subcommands.

use clap::Args;
use hierlstm_core::dataset::SplitMode;
use hierlstm_core::forecaster::Variant;
use hierlstm_core::train::TrainConfig;
use serde::Serialize;

pub const HORIZON_MINUTES: [usize; 3] = [15, 30, 45];
const STEP_MINUTES: usize = 5;

/// Accepts 15, 30, or 45 minutes and returns the lead in five-minute steps.
pub fn parse_horizon(s: &str) -> Result<usize, String> {
    let minutes: usize = s.trim().parse().map_err(|_| format!("`{s}` is not a whole number of minutes"))?;
    if HORIZON_MINUTES.contains(&minutes) {
        Ok(minutes / STEP_MINUTES)
    } else {
        Err(format!("invalid horizon {minutes}; valid horizons are 15, 30, 45 (minutes)"))
    }
}

pub fn horizon_minutes(steps: usize) -> usize {
    steps * STEP_MINUTES
}

pub fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: hierlstm_core::Error| e.to_string())
}

pub fn parse_split(s: &str) -> Result<SplitMode, String> {
    match s {
        "random" => Ok(SplitMode::Random),
        "chronological" => Ok(SplitMode::Chronological),
        _ => Err(format!("unknown split `{s}` (expected random, chronological)")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Hidden units per LSTM layer.
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Lower-layer steps pooled into one top-layer step.
    #[arg(long, default_value_t = 6)]
    pub pooling_k: usize,
    /// Input window length in five-minute steps.
    #[arg(long, default_value_t = 24)]
    pub input_window: usize,
    /// How windows are assigned to train/val/test: random or chronological.
    #[arg(long, default_value = "random", value_parser = parse_split)]
    pub split: SplitMode,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BudgetArgs {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Train on a fixed seeded subset of this many windows.
    #[arg(long)]
    pub max_train_samples: Option<usize>,
    #[arg(long)]
    pub max_val_samples: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

impl BudgetArgs {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            seed,
            max_train_samples: self.max_train_samples,
            max_val_samples: self.max_val_samples,
            clip_norm: self.clip_norm,
            ..TrainConfig::default()
        }
    }
}
