//! Trains every variant at every horizon under shared seeds and budgets,
//! and tabulates test metrics per seed plus the median over seeds.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TravelTimeMatrix;
use crate::dataset::{build_sample, make_windows, Normalizer, SplitConfig, SplitMode, WindowedDataset};
use crate::error::{Error, Result};
use crate::forecaster::{forward, ModelConfig, ModelParams, Variant};
use crate::metrics::{evaluate, masked_mae, metrics};
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub variants: Vec<Variant>,
    /// Horizons in steps.
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub input_window: usize,
    pub hidden_dim: usize,
    pub pooling_window: usize,
    pub split_mode: SplitMode,
    /// Shared budget; its seed is replaced by each row's seed.
    pub train: TrainConfig,
    /// Length of the prediction trace at the end of the series, in rows;
    /// 0 disables traces.
    pub trace_rows: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            horizons: crate::forecaster::STANDARD_HORIZONS.to_vec(),
            seeds: vec![0],
            input_window: 24,
            hidden_dim: 16,
            pooling_window: 6,
            split_mode: SplitMode::Random,
            train: TrainConfig::default(),
            trace_rows: 7 * 288,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variant: Variant,
    pub horizon_steps: usize,
    /// `None` on median rows.
    pub seed: Option<u64>,
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
    pub samples: usize,
    pub persistence_mape: f64,
    /// MAE over test cells inside incident periods.
    pub spike_mae: Option<f64>,
    pub persistence_spike_mae: Option<f64>,
    pub spike_cells: usize,
    pub epochs_run: usize,
    pub error: Option<String>,
}

impl CompareRow {
    fn failed(variant: Variant, horizon_steps: usize, seed: u64, err: &Error) -> Self {
        Self {
            variant,
            horizon_steps,
            seed: Some(seed),
            mae: f64::NAN,
            rmse: f64::NAN,
            mape: f64::NAN,
            samples: 0,
            persistence_mape: f64::NAN,
            spike_mae: None,
            persistence_spike_mae: None,
            spike_cells: 0,
            epochs_run: 0,
            error: Some(err.to_string()),
        }
    }
}

/// Predictions for a contiguous range of target rows; `None` where no
/// gap-free window precedes the row.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub variant: Variant,
    pub horizon_steps: usize,
    pub rows: Range<usize>,
    pub predictions: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    /// Per-seed rows in (horizon, seed, variant) order.
    pub rows: Vec<CompareRow>,
    /// One median row per (horizon, variant) over seeds that succeeded.
    pub medians: Vec<CompareRow>,
    pub traces: Vec<Trace>,
}

/// Start row of the window whose target is `target_row`, if that window
/// lies inside one segment.
pub fn window_start_for(matrix: &TravelTimeMatrix, target_row: usize, input_window: usize, horizon: usize) -> Option<usize> {
    let start = target_row.checked_sub(input_window - 1 + horizon)?;
    matrix
        .segments()
        .iter()
        .any(|s| s.start <= start && target_row < s.end)
        .then_some(start)
}

pub fn predict_trace(
    params: &ModelParams,
    matrix: &TravelTimeMatrix,
    normalizer: &Normalizer,
    rows: Range<usize>,
) -> Result<Trace> {
    let cfg = params.config;
    let predictions = rows
        .clone()
        .into_par_iter()
        .map(|r| match window_start_for(matrix, r, cfg.input_window, cfg.horizon) {
            None => Ok(None),
            Some(start) => {
                let s = build_sample(matrix, start, cfg.input_window, cfg.horizon, normalizer)?;
                let z = forward(params, &s.window)?;
                Ok(Some(normalizer.denormalize(z.as_slice())))
            }
        })
        .collect::<Result<_>>()?;
    Ok(Trace {
        variant: cfg.variant,
        horizon_steps: cfg.horizon,
        rows,
        predictions,
    })
}

#[derive(Clone, Copy)]
struct Job {
    variant: Variant,
    horizon: usize,
    seed: u64,
    want_trace: bool,
}

struct RowResult {
    row: CompareRow,
    trace: Option<Trace>,
}

fn spike_scores(test: &WindowedDataset, preds: &[Vec<f64>], mask: &[bool]) -> (Option<f64>, Option<f64>, usize) {
    let cols = test.corridors();
    let (mut p, mut last, mut truth, mut sel) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (s, pred) in test.samples.iter().zip(preds) {
        for c in 0..cols {
            p.push(pred[c]);
            last.push(s.last[c]);
            truth.push(s.truth[c]);
            sel.push(mask[s.target_row * cols + c]);
        }
    }
    let n = sel.iter().filter(|&&m| m).count();
    (masked_mae(&p, &truth, &sel), masked_mae(&last, &truth, &sel), n)
}

fn run_row(
    matrix: &TravelTimeMatrix,
    spike_mask: Option<&[bool]>,
    cfg: &CompareConfig,
    splits: &crate::dataset::Splits,
    job: Job,
) -> Result<RowResult> {
    let Job {
        variant,
        horizon,
        seed,
        want_trace,
    } = job;
    let model = ModelConfig {
        corridors: matrix.cols(),
        input_window: cfg.input_window,
        hidden_dim: cfg.hidden_dim,
        pooling_window: cfg.pooling_window,
        horizon,
        variant,
    };
    let tc = TrainConfig { seed, ..cfg.train };
    let outcome = train(model, &splits.train, &splits.val, &tc)?;
    let eval = evaluate(&outcome.params, &splits.test)?;
    let truth: Vec<f64> = splits.test.samples.iter().flat_map(|s| s.truth.iter().copied()).collect();
    let last: Vec<f64> = splits.test.samples.iter().flat_map(|s| s.last.iter().copied()).collect();
    let persistence = metrics(&last, &truth)?;
    let (spike_mae, persistence_spike_mae, spike_cells) = match spike_mask {
        Some(mask) => spike_scores(&splits.test, &eval.predictions, mask),
        None => (None, None, 0),
    };
    let trace = if want_trace && cfg.trace_rows > 0 {
        let end = matrix.rows();
        let rows = end.saturating_sub(cfg.trace_rows)..end;
        Some(predict_trace(&outcome.params, matrix, &splits.train.normalizer, rows)?)
    } else {
        None
    };
    let m = eval.report.metrics;
    Ok(RowResult {
        row: CompareRow {
            variant,
            horizon_steps: horizon,
            seed: Some(seed),
            mae: m.mae,
            rmse: m.rmse,
            mape: m.mape,
            samples: eval.report.samples,
            persistence_mape: persistence.mape,
            spike_mae,
            persistence_spike_mae,
            spike_cells,
            epochs_run: outcome.history.len(),
            error: None,
        },
        trace,
    })
}

/// Runs the full grid. A failing row is recorded with its error and the
/// remaining rows still run. `spike_mask` is the row-major `T × C` incident
/// mask of a synthetic corpus, if known.
pub fn compare_models(matrix: &TravelTimeMatrix, spike_mask: Option<&[bool]>, cfg: &CompareConfig) -> Result<CompareOutcome> {
    if cfg.variants.is_empty() || cfg.horizons.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("compare needs at least one variant, horizon, and seed".into()));
    }
    if let Some(mask) = spike_mask {
        if mask.len() != matrix.values().len() {
            return Err(Error::Dataset("spike mask does not match the matrix".into()));
        }
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for &horizon in &cfg.horizons {
        for (i, &seed) in cfg.seeds.iter().enumerate() {
            let split = SplitConfig {
                input_window: cfg.input_window,
                horizon,
                seed,
                mode: cfg.split_mode,
            };
            let splits = match make_windows(matrix, &split) {
                Ok(s) => s,
                Err(e) => {
                    rows.extend(cfg.variants.iter().map(|&v| CompareRow::failed(v, horizon, seed, &e)));
                    continue;
                }
            };
            let results: Vec<(Variant, Result<RowResult>)> = cfg
                .variants
                .par_iter()
                .map(|&variant| {
                    let job = Job {
                        variant,
                        horizon,
                        seed,
                        want_trace: i == 0,
                    };
                    (variant, run_row(matrix, spike_mask, cfg, &splits, job))
                })
                .collect();
            for (v, r) in results {
                match r {
                    Ok(r) => {
                        rows.push(r.row);
                        traces.extend(r.trace);
                    }
                    Err(e) => rows.push(CompareRow::failed(v, horizon, seed, &e)),
                }
            }
        }
    }
    let medians = median_rows(&rows, cfg);
    Ok(CompareOutcome { rows, medians, traces })
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn median_rows(rows: &[CompareRow], cfg: &CompareConfig) -> Vec<CompareRow> {
    let mut out = Vec::new();
    for &horizon in &cfg.horizons {
        for &variant in &cfg.variants {
            let ok: Vec<&CompareRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.horizon_steps == horizon && r.error.is_none())
                .collect();
            let med = |f: &dyn Fn(&CompareRow) -> f64| median(&mut ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let med_opt = |f: &dyn Fn(&CompareRow) -> Option<f64>| median(&mut ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let failures = rows
                .iter()
                .filter(|r| r.variant == variant && r.horizon_steps == horizon && r.error.is_some())
                .count();
            out.push(CompareRow {
                variant,
                horizon_steps: horizon,
                seed: None,
                mae: med(&|r| r.mae).unwrap_or(f64::NAN),
                rmse: med(&|r| r.rmse).unwrap_or(f64::NAN),
                mape: med(&|r| r.mape).unwrap_or(f64::NAN),
                samples: ok.first().map_or(0, |r| r.samples),
                persistence_mape: med(&|r| r.persistence_mape).unwrap_or(f64::NAN),
                spike_mae: med_opt(&|r| r.spike_mae),
                persistence_spike_mae: med_opt(&|r| r.persistence_spike_mae),
                spike_cells: ok.first().map_or(0, |r| r.spike_cells),
                epochs_run: ok.iter().map(|r| r.epochs_run).max().unwrap_or(0),
                error: (failures > 0).then(|| format!("{failures} of {} seeds failed", cfg.seeds.len())),
            });
        }
    }
    out
}
