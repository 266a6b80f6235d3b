use std::path::{Path, PathBuf};

use clap::Args;
use hierlstm_core::compare::predict_trace;
use serde::Serialize;

use super::evaluate::load_compatible;
use super::{opt, timestamp};
use crate::error::CliError;
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Number of trailing rows to predict; 2016 is one week.
    #[arg(long, default_value_t = 2016, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,
}

pub fn run(args: PredictArgs, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut run = Run::start("predict", out)?;
    let (ckpt, matrix) = load_compatible(&mut run, &args.checkpoint, &args.data)?;
    let end = matrix.rows();
    let rows = end.saturating_sub(args.rows as usize)..end;
    let trace = predict_trace(&ckpt.params, &matrix, &ckpt.metadata.normalizer, rows)?;

    let mut w = csv::Writer::from_path(run.output("predictions.csv"))?;
    w.write_record(["timestamp", "corridor_id", "truth", "prediction"])?;
    for (row, pred) in trace.rows.clone().zip(&trace.predictions) {
        let ts = timestamp(&matrix, row);
        for (c, id) in matrix.corridor_ids().iter().enumerate() {
            let truth = (!matrix.is_gap(row, c)).then(|| matrix.value(row, c));
            let p = pred.as_ref().map(|p| p[c]);
            w.write_record([ts.as_str(), id, &opt(truth), &opt(p)])?;
        }
    }
    w.flush()?;

    run.finish(&args, &[ckpt.metadata.seed])
}
