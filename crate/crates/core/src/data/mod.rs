//! Travel-time matrices: ingestion, gap repair, and synthetic corpora.

mod csv_io;
mod gaps;
mod synth;

use std::ops::Range;

use chrono::{DateTime, Duration, Utc};

use crate::error::{Error, Result};

pub use csv_io::{
    load_csv, load_csv_with, load_spike_mask, write_csv, write_incidents, LoadReport, RejectedCorridor, CSV_HEADER,
    INCIDENT_HEADER,
};
pub use gaps::{fill_gaps, DEFAULT_MAX_FILL_RUN};
pub use synth::{generate_synthetic, Incident, SyntheticCorpus, SyntheticSpec};

/// Five minutes.
pub const DEFAULT_STEP_SECS: i64 = 300;

/// Dense `T × C` grid of travel times in minutes. Row `t` is the timestamp
/// `start_time + t·step`; column `j` is corridor `corridor_ids[j]`.
///
/// Cells that were missing at ingestion carry `gap_mask = true`. Rows
/// covered by an unrepaired gap fall outside every entry of `segments`, and
/// windowing never crosses a segment boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeMatrix {
    start_time: DateTime<Utc>,
    step_secs: i64,
    corridor_ids: Vec<String>,
    rows: usize,
    values: Vec<f64>,
    gap_mask: Vec<bool>,
    segments: Vec<Range<usize>>,
}

impl TravelTimeMatrix {
    /// A complete matrix (no gaps, one segment).
    pub fn new(start_time: DateTime<Utc>, step_secs: i64, corridor_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let cols = corridor_ids.len();
        if cols == 0 || values.len() % cols != 0 {
            return Err(Error::Dataset(format!(
                "{} values do not fill {} corridors",
                values.len(),
                cols
            )));
        }
        let rows = values.len() / cols;
        let m = Self {
            start_time,
            step_secs,
            corridor_ids,
            rows,
            gap_mask: vec![false; values.len()],
            values,
            segments: vec![0..rows],
        };
        m.check_values()?;
        Ok(m)
    }

    /// Matrix with missing cells (`None`), not yet repaired. Missing cells
    /// hold NaN until [`fill_gaps`] runs.
    pub fn with_missing(
        start_time: DateTime<Utc>,
        step_secs: i64,
        corridor_ids: Vec<String>,
        cells: Vec<Option<f64>>,
    ) -> Result<Self> {
        let cols = corridor_ids.len();
        if cols == 0 || cells.len() % cols != 0 {
            return Err(Error::Dataset(format!(
                "{} cells do not fill {} corridors",
                cells.len(),
                cols
            )));
        }
        let rows = cells.len() / cols;
        let gap_mask = cells.iter().map(Option::is_none).collect();
        let values = cells.into_iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        let m = Self {
            start_time,
            step_secs,
            corridor_ids,
            rows,
            values,
            gap_mask,
            segments: vec![0..rows],
        };
        m.check_values()?;
        Ok(m)
    }

    fn check_values(&self) -> Result<()> {
        for (i, (&v, &gap)) in self.values.iter().zip(&self.gap_mask).enumerate() {
            if !gap && !(v.is_finite() && v > 0.0) {
                let (t, c) = (i / self.cols(), i % self.cols());
                return Err(Error::Dataset(format!(
                    "travel time {v} at row {t}, corridor {} is not strictly positive",
                    self.corridor_ids[c]
                )));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.corridor_ids.len()
    }

    pub fn corridor_ids(&self) -> &[String] {
        &self.corridor_ids
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn step_secs(&self) -> i64 {
        self.step_secs
    }

    pub fn timestamp(&self, row: usize) -> DateTime<Utc> {
        self.start_time + Duration::seconds(self.step_secs * row as i64)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|t| self.value(t, col)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_gap(&self, row: usize, col: usize) -> bool {
        self.gap_mask[row * self.cols() + col]
    }

    pub fn gap_count(&self) -> usize {
        self.gap_mask.iter().filter(|&&g| g).count()
    }

    pub fn segments(&self) -> &[Range<usize>] {
        &self.segments
    }

    /// Mean over corridors at every row.
    pub fn network_mean(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|t| self.row(t).iter().sum::<f64>() / self.cols() as f64)
            .collect()
    }

    /// Rows `range` as a new matrix; segments are clipped to the range.
    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        let c = self.cols();
        let segments = self
            .segments
            .iter()
            .filter_map(|s| {
                let (a, b) = (s.start.max(range.start), s.end.min(range.end));
                (a < b).then(|| a - range.start..b - range.start)
            })
            .collect();
        Self {
            start_time: self.timestamp(range.start),
            step_secs: self.step_secs,
            corridor_ids: self.corridor_ids.clone(),
            rows: range.len(),
            values: self.values[range.start * c..range.end * c].to_vec(),
            gap_mask: self.gap_mask[range.start * c..range.end * c].to_vec(),
            segments,
        }
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &[bool], &mut Vec<Range<usize>>) {
        (&mut self.values, &self.gap_mask, &mut self.segments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn rejects_nonpositive_values() {
        let ids = vec!["a".to_string()];
        assert!(TravelTimeMatrix::new(t0(), 300, ids.clone(), vec![1.0, 0.0]).is_err());
        assert!(TravelTimeMatrix::new(t0(), 300, ids, vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn timestamps_advance_by_step() {
        let m = TravelTimeMatrix::new(t0(), 300, vec!["a".into()], vec![1.0; 3]).unwrap();
        assert_eq!(m.timestamp(2) - m.timestamp(1), Duration::seconds(300));
    }

    #[test]
    fn slicing_clips_segments() {
        let ids = vec!["a".to_string()];
        let mut m = TravelTimeMatrix::new(t0(), 300, ids, vec![1.0; 10]).unwrap();
        m.segments = vec![0..4, 6..10];
        let s = m.slice_rows(2..8);
        assert_eq!(s.segments(), &[0..2, 4..6]);
        assert_eq!(s.start_time(), m.timestamp(2));
    }
}
