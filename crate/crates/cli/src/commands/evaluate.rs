use std::path::{Path, PathBuf};

use clap::Args;
use hierlstm_core::checkpoint::{load_checkpoint, Checkpoint};
use hierlstm_core::data::TravelTimeMatrix;
use hierlstm_core::dataset::{build_dataset, partition_starts};
use hierlstm_core::metrics::{evaluate, persistence, Metrics};
use serde::Serialize;

use super::load_data;
use crate::error::CliError;
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

pub fn load_compatible(run: &mut Run, checkpoint: &Path, data: &Path) -> Result<(Checkpoint, TravelTimeMatrix), CliError> {
    run.input(checkpoint)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let matrix = load_data(run, data)?;
    let expected = ckpt.params.config.corridors;
    if matrix.cols() != expected {
        return Err(CliError::data(format!(
            "checkpoint {} expects {expected} corridors, {} has {}",
            checkpoint.display(),
            data.display(),
            matrix.cols()
        )));
    }
    Ok((ckpt, matrix))
}

pub fn run(args: EvaluateArgs, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut run = Run::start("evaluate", out)?;
    let (ckpt, matrix) = load_compatible(&mut run, &args.checkpoint, &args.data)?;
    let meta = &ckpt.metadata;
    let cfg = ckpt.params.config;
    let parts = partition_starts(&matrix, &meta.split)?;

    let mut w = csv::Writer::from_path(run.output("metrics.csv"))?;
    w.write_record(["split", "model", "horizon_steps", "samples", "cells", "mae", "rmse", "mape"])?;
    let mut record = |split: &str, model: &str, samples: usize, m: &Metrics| {
        w.write_record([
            split.to_string(),
            model.to_string(),
            cfg.horizon.to_string(),
            samples.to_string(),
            m.cells.to_string(),
            m.mae.to_string(),
            m.rmse.to_string(),
            m.mape.to_string(),
        ])
    };
    for (split, starts) in ["train", "val", "test"].into_iter().zip(&parts) {
        if starts.is_empty() {
            continue;
        }
        let data = build_dataset(&matrix, starts, cfg.input_window, cfg.horizon, &meta.normalizer)?;
        let eval = evaluate(&ckpt.params, &data)?;
        record(split, cfg.variant.as_str(), data.len(), &eval.report.metrics)?;
        record(split, "persistence", data.len(), &persistence(&data)?)?;
    }
    w.flush()?;

    run.finish(&args, &[meta.seed])
}
