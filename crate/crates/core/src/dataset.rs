//! Sliding input windows, train/validation/test splits, and per-corridor
//! z-scoring.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TravelTimeMatrix;
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Random,
    /// Earliest 60% of samples train, next 20% validate, last 20% test.
    Chronological,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub input_window: usize,
    pub horizon: usize,
    pub seed: u64,
    pub mode: SplitMode,
}

impl SplitConfig {
    pub fn new(input_window: usize, horizon: usize, seed: u64) -> Self {
        Self {
            input_window,
            horizon,
            seed,
            mode: SplitMode::Random,
        }
    }

    /// Rows from window start to target, inclusive.
    pub fn span(&self) -> usize {
        self.input_window + self.horizon
    }
}

/// Per-corridor mean and standard deviation used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Statistics over the given rows of the matrix. A corridor with (near)
    /// zero spread gets unit scale.
    pub fn fit(matrix: &TravelTimeMatrix, rows: impl IntoIterator<Item = usize>) -> Result<Self> {
        let cols = matrix.cols();
        let (mut sum, mut n) = (vec![0.0; cols], 0usize);
        let rows: Vec<usize> = rows.into_iter().collect();
        for &t in &rows {
            for (s, v) in sum.iter_mut().zip(matrix.row(t)) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Dataset("no rows to fit normalization on".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; cols];
        for &t in &rows {
            for ((acc, v), m) in var.iter_mut().zip(matrix.row(t)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn corridors(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Row index of the first window row in the source matrix.
    pub start: usize,
    /// `input_window × C`, z-scored.
    pub window: Matrix,
    /// z-scored target row.
    pub target: Vector,
    /// Target row in minutes.
    pub truth: Vec<f64>,
    /// Last window row in minutes (the persistence forecast).
    pub last: Vec<f64>,
    pub target_row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub samples: Vec<Sample>,
    pub normalizer: Normalizer,
    pub input_window: usize,
    pub horizon: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn corridors(&self) -> usize {
        self.normalizer.corridors()
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

/// Window start rows whose window and target lie inside one segment.
pub fn admissible_starts(matrix: &TravelTimeMatrix, input_window: usize, horizon: usize) -> Vec<usize> {
    let span = input_window + horizon;
    matrix
        .segments()
        .iter()
        .filter(|s| s.len() >= span)
        .flat_map(|s| s.start..=s.end - span)
        .collect()
}

/// The window starting at `start` for a target `horizon` steps after its
/// last row.
pub fn build_sample(
    matrix: &TravelTimeMatrix,
    start: usize,
    input_window: usize,
    horizon: usize,
    normalizer: &Normalizer,
) -> Result<Sample> {
    let target_row = start + input_window - 1 + horizon;
    if target_row >= matrix.rows() {
        return Err(Error::Dataset(format!(
            "target row {target_row} is past the end of a {}-row matrix",
            matrix.rows()
        )));
    }
    let mut data = Vec::with_capacity(input_window * matrix.cols());
    for t in start..start + input_window {
        data.extend(normalizer.normalize(matrix.row(t)));
    }
    Ok(Sample {
        start,
        window: Matrix::from_vec(input_window, matrix.cols(), data)?,
        target: Vector::new(normalizer.normalize(matrix.row(target_row)))?,
        truth: matrix.row(target_row).to_vec(),
        last: matrix.row(start + input_window - 1).to_vec(),
        target_row,
    })
}

pub fn build_dataset(
    matrix: &TravelTimeMatrix,
    starts: &[usize],
    input_window: usize,
    horizon: usize,
    normalizer: &Normalizer,
) -> Result<WindowedDataset> {
    if normalizer.corridors() != matrix.cols() {
        return Err(Error::Dataset(format!(
            "normalizer covers {} corridors, data has {}",
            normalizer.corridors(),
            matrix.cols()
        )));
    }
    Ok(WindowedDataset {
        samples: starts
            .iter()
            .map(|&s| build_sample(matrix, s, input_window, horizon, normalizer))
            .collect::<Result<_>>()?,
        normalizer: normalizer.clone(),
        input_window,
        horizon,
    })
}

/// Split sizes for `n` samples: ⌊0.2n⌋ each for validation and test, the
/// rest for training.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let val = n / 5;
    let test = n / 5;
    (n - val - test, val, test)
}

/// Window starts for the train, validation, and test splits, each sorted.
pub fn partition_starts(matrix: &TravelTimeMatrix, cfg: &SplitConfig) -> Result<[Vec<usize>; 3]> {
    if cfg.input_window == 0 || cfg.horizon == 0 {
        return Err(Error::Config("input window and horizon must be positive".into()));
    }
    let mut starts = admissible_starts(matrix, cfg.input_window, cfg.horizon);
    if starts.is_empty() {
        return Err(Error::Dataset(format!(
            "no gap-free stretch of {} rows (window {} + horizon {}); longest segment has {}",
            cfg.span(),
            cfg.input_window,
            cfg.horizon,
            matrix.segments().iter().map(|s| s.len()).max().unwrap_or(0)
        )));
    }
    if cfg.mode == SplitMode::Random {
        starts.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    }
    let (n_train, n_val, _) = split_sizes(starts.len());
    let mut parts = [
        starts[..n_train].to_vec(),
        starts[n_train..n_train + n_val].to_vec(),
        starts[n_train + n_val..].to_vec(),
    ];
    for part in &mut parts {
        part.sort_unstable();
    }
    Ok(parts)
}

/// Enumerates every admissible window, partitions 60/20/20, and z-scores
/// everything with statistics from the rows the training split touches.
pub fn make_windows(matrix: &TravelTimeMatrix, cfg: &SplitConfig) -> Result<Splits> {
    let [train, val, test] = partition_starts(matrix, cfg)?;
    let mut rows = BTreeSet::new();
    for &s in &train {
        rows.extend(s..s + cfg.input_window);
        rows.insert(s + cfg.input_window - 1 + cfg.horizon);
    }
    let normalizer = Normalizer::fit(matrix, rows)?;
    let build = |starts: &[usize]| build_dataset(matrix, starts, cfg.input_window, cfg.horizon, &normalizer);
    Ok(Splits {
        train: build(&train)?,
        val: build(&val)?,
        test: build(&test)?,
    })
}
