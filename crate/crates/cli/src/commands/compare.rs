use std::path::{Path, PathBuf};

use clap::Args;
use hierlstm_core::compare::{compare_models, CompareConfig, CompareRow};
use hierlstm_core::data::load_spike_mask;
use hierlstm_core::forecaster::Variant;
use serde::Serialize;

use super::{load_data, opt, timestamp};
use crate::args::{horizon_minutes, parse_horizon, parse_variant, BudgetArgs, ModelArgs};
use crate::error::CliError;
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "stackedlstm,stackedlstmat,hierlstmat", value_parser = parse_variant)]
    pub variants: Vec<Variant>,
    /// Horizons in minutes.
    #[arg(long, value_delimiter = ',', default_value = "15,30,45", value_parser = parse_horizon)]
    pub horizons: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Incident file from `synth`; enables spike-period scores.
    #[arg(long)]
    pub incidents: Option<PathBuf>,
    /// Trailing rows covered by traces.csv; 0 disables traces.
    #[arg(long, default_value_t = 2016)]
    pub trace_rows: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

const HEADER: [&str; 15] = [
    "variant",
    "model",
    "horizon_min",
    "horizon_steps",
    "seed",
    "mae",
    "rmse",
    "mape",
    "samples",
    "persistence_mape",
    "spike_mae",
    "persistence_spike_mae",
    "spike_cells",
    "epochs_run",
    "error",
];

fn record(r: &CompareRow) -> Vec<String> {
    vec![
        r.variant.as_str().to_string(),
        r.variant.display_name().to_string(),
        horizon_minutes(r.horizon_steps).to_string(),
        r.horizon_steps.to_string(),
        r.seed.map_or_else(|| "median".to_string(), |s| s.to_string()),
        r.mae.to_string(),
        r.rmse.to_string(),
        r.mape.to_string(),
        r.samples.to_string(),
        r.persistence_mape.to_string(),
        opt(r.spike_mae),
        opt(r.persistence_spike_mae),
        r.spike_cells.to_string(),
        r.epochs_run.to_string(),
        r.error.clone().unwrap_or_default(),
    ]
}

pub fn run(args: CompareArgs, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut run = Run::start("compare", out)?;
    let matrix = load_data(&mut run, &args.data)?;
    let mask = match &args.incidents {
        Some(path) => {
            run.input(path)?;
            Some(load_spike_mask(&matrix, path)?)
        }
        None => None,
    };
    let cfg = CompareConfig {
        variants: args.variants.clone(),
        horizons: args.horizons.clone(),
        seeds: args.seeds.clone(),
        input_window: args.model.input_window,
        hidden_dim: args.model.hidden,
        pooling_window: args.model.pooling_k,
        split_mode: args.model.split,
        train: args.budget.train_config(0),
        trace_rows: args.trace_rows,
    };
    let outcome = compare_models(&matrix, mask.as_deref(), &cfg)?;

    // One summary row per variant and horizon; per-seed rows go alongside.
    for (name, rows) in [("comparison.csv", &outcome.medians), ("comparison_seeds.csv", &outcome.rows)] {
        let mut w = csv::Writer::from_path(run.output(name))?;
        w.write_record(HEADER)?;
        for r in rows {
            w.write_record(record(r))?;
        }
        w.flush()?;
    }

    if args.trace_rows > 0 {
        let mut w = csv::Writer::from_path(run.output("traces.csv"))?;
        w.write_record(["variant", "horizon_min", "timestamp", "corridor_id", "truth", "prediction"])?;
        for t in &outcome.traces {
            let (variant, minutes) = (t.variant.as_str(), horizon_minutes(t.horizon_steps).to_string());
            for (row, pred) in t.rows.clone().zip(&t.predictions) {
                let ts = timestamp(&matrix, row);
                for (c, id) in matrix.corridor_ids().iter().enumerate() {
                    let truth = (!matrix.is_gap(row, c)).then(|| matrix.value(row, c));
                    w.write_record([variant, &minutes, &ts, id, &opt(truth), &opt(pred.as_ref().map(|p| p[c]))])?;
                }
            }
        }
        w.flush()?;
    }

    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a CompareArgs,
        resolved: &'a CompareConfig,
    }
    run.finish(
        &Config {
            args: &args,
            resolved: &cfg,
        },
        &args.seeds,
    )
}
