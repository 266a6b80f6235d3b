//! RMSE, MAE, and MAPE over every (sample, corridor) cell, in minutes.

use serde::{Deserialize, Serialize};

use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};
use crate::forecaster::{forward, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent. Cells with zero ground truth are left out.
    pub mape: f64,
    pub cells: usize,
    pub mape_excluded: usize,
}

/// Metrics over paired flat slices of predictions and ground truth.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} predictions", pred.len()),
            format!("{} truths", truth.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Dataset("no cells to score".into()));
    }
    let (mut abs, mut sq, mut pct, mut pct_n) = (0.0, 0.0, 0.0, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        if *t != 0.0 {
            pct += (e / t).abs();
            pct_n += 1;
        }
    }
    let n = pred.len() as f64;
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        mape: if pct_n == 0 { f64::NAN } else { 100.0 * pct / pct_n as f64 },
        cells: pred.len(),
        mape_excluded: pred.len() - pct_n,
    })
}

/// Mean absolute error over the cells where `mask` is set, `None` when the
/// mask selects nothing.
pub fn masked_mae(pred: &[f64], truth: &[f64], mask: &[bool]) -> Option<f64> {
    let (sum, n) = pred
        .iter()
        .zip(truth)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((p, t), _)| (s + (p - t).abs(), n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub horizon_steps: usize,
    pub samples: usize,
    pub corridors: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    /// De-normalized predictions, one row per sample.
    pub predictions: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn flat_predictions(&self) -> Vec<f64> {
        self.predictions.concat()
    }
}

/// Scores `params` on a dataset in original units.
pub fn evaluate(params: &ModelParams, data: &WindowedDataset) -> Result<Evaluation> {
    use rayon::prelude::*;
    if data.corridors() != params.config.corridors {
        return Err(Error::Dataset(format!(
            "model expects {} corridors, data has {}",
            params.config.corridors,
            data.corridors()
        )));
    }
    let predictions: Vec<Vec<f64>> = data
        .samples
        .par_iter()
        .map(|s| forward(params, &s.window).map(|z| data.normalizer.denormalize(z.as_slice())))
        .collect::<Result<_>>()?;
    let truth: Vec<f64> = data.samples.iter().flat_map(|s| s.truth.iter().copied()).collect();
    let m = metrics(&predictions.concat(), &truth)?;
    Ok(Evaluation {
        report: EvalReport {
            variant: params.config.variant.to_string(),
            horizon_steps: data.horizon,
            samples: data.len(),
            corridors: data.corridors(),
            metrics: m,
        },
        predictions,
    })
}

/// Predict-last-value baseline on the same cells.
pub fn persistence(data: &WindowedDataset) -> Result<Metrics> {
    let pred: Vec<f64> = data.samples.iter().flat_map(|s| s.last.iter().copied()).collect();
    let truth: Vec<f64> = data.samples.iter().flat_map(|s| s.truth.iter().copied()).collect();
    metrics(&pred, &truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_zero() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.mape), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_case() {
        let m = metrics(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.mae, 1.5);
        assert!((m.rmse - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((m.rmse - 1.5811).abs() < 1e-4);
        assert_eq!(m.mape, 100.0);
    }

    #[test]
    fn zero_truth_is_excluded_from_mape() {
        let m = metrics(&[1.0, 3.0], &[0.0, 2.0]).unwrap();
        assert_eq!(m.mape_excluded, 1);
        assert_eq!(m.mape, 50.0);
        assert_eq!(m.mae, 1.0);
    }

    #[test]
    fn masked_mae_selects_cells() {
        assert_eq!(masked_mae(&[1.0, 5.0], &[0.0, 1.0], &[false, true]), Some(4.0));
        assert_eq!(masked_mae(&[1.0], &[0.0], &[false]), None);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(metrics(&[], &[]).is_err());
    }
}
