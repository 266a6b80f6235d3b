use std::path::{Path, PathBuf};

use clap::Args;
use hierlstm_core::checkpoint::{save_checkpoint, TrainingMetadata};
use hierlstm_core::dataset::{make_windows, SplitConfig};
use hierlstm_core::forecaster::{ModelConfig, Variant};
use hierlstm_core::train::train;
use serde::Serialize;

use super::load_data;
use crate::args::{parse_horizon, parse_variant, BudgetArgs, ModelArgs};
use crate::error::CliError;
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// hierlstmat, stackedlstm, or stackedlstmat.
    #[arg(long, default_value = "hierlstmat", value_parser = parse_variant)]
    pub variant: Variant,
    /// Forecast lead in minutes: 15, 30, or 45.
    #[arg(long, default_value = "30", value_parser = parse_horizon)]
    pub horizon: usize,
    /// Seeds the split, initialization, and batch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

pub fn run(args: TrainArgs, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut run = Run::start("train", out)?;
    let matrix = load_data(&mut run, &args.data)?;
    let config = ModelConfig {
        corridors: matrix.cols(),
        input_window: args.model.input_window,
        hidden_dim: args.model.hidden,
        pooling_window: args.model.pooling_k,
        horizon: args.horizon,
        variant: args.variant,
    };
    config.validate()?;
    let split = SplitConfig {
        input_window: args.model.input_window,
        horizon: args.horizon,
        seed: args.seed,
        mode: args.model.split,
    };
    let splits = make_windows(&matrix, &split)?;
    let tc = args.budget.train_config(args.seed);
    let outcome = train(config, &splits.train, &splits.val, &tc)?;

    let mut w = csv::Writer::from_path(run.output("loss_history.csv"))?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for e in &outcome.history {
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), super::opt(e.val_loss)])?;
    }
    w.flush()?;

    let metadata = TrainingMetadata {
        seed: args.seed,
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        normalizer: splits.train.normalizer.clone(),
        split,
        train: tc,
    };
    save_checkpoint(run.output("model.ckpt"), &outcome.params, &metadata)?;

    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a TrainArgs,
        model: ModelConfig,
    }
    run.finish(&Config { args: &args, model: config }, &[args.seed])
}
