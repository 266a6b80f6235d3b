pub mod analyze;
pub mod compare;
pub mod evaluate;
pub mod predict;
pub mod synth;
pub mod train;

use std::path::Path;

use hierlstm_core::data::{load_csv, TravelTimeMatrix};

use crate::error::CliError;
use crate::run::Run;

pub fn load_data(run: &mut Run, path: &Path) -> Result<TravelTimeMatrix, CliError> {
    run.input(path)?;
    Ok(load_csv(path)?)
}

pub fn timestamp(matrix: &TravelTimeMatrix, row: usize) -> String {
    matrix.timestamp(row).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Empty string for a missing value so the CSV stays numeric-or-blank.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
