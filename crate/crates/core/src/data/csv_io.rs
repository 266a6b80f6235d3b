use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};

use super::{fill_gaps, Incident, TravelTimeMatrix, DEFAULT_MAX_FILL_RUN, DEFAULT_STEP_SECS};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 3] = ["timestamp", "corridor_id", "travel_time_min"];

/// Corridors with more than this fraction of missing cells are dropped.
const MAX_MISSING_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedCorridor {
    pub corridor_id: String,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadReport {
    pub records: usize,
    pub rejected: Vec<RejectedCorridor>,
    pub missing_cells: usize,
    pub segments: usize,
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<TravelTimeMatrix> {
    load_csv_with(path, DEFAULT_MAX_FILL_RUN).map(|(m, _)| m)
}

/// Reads the long `timestamp,corridor_id,travel_time_min` format, snaps
/// timestamps to the five-minute grid, pivots to `T × C` with corridors in
/// lexicographic order, and repairs gaps with [`fill_gaps`].
pub fn load_csv_with(path: impl AsRef<Path>, max_fill_run: usize) -> Result<(TravelTimeMatrix, LoadReport)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;

    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let step = DEFAULT_STEP_SECS;
    let mut cells: BTreeMap<(i64, String), f64> = BTreeMap::new();
    let mut records = 0;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if row.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", row.len())));
        }
        let ts = parse_timestamp(&row[0]).ok_or_else(|| parse_err(format!("bad timestamp `{}`", &row[0])))?;
        let corridor = row[1].to_string();
        if corridor.is_empty() {
            return Err(parse_err("empty corridor id".into()));
        }
        let value: f64 = row[2]
            .parse()
            .map_err(|_| parse_err(format!("bad travel time `{}`", &row[2])))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(parse_err(format!("travel time must be positive, found {value}")));
        }
        let slot = (ts.timestamp() + step / 2).div_euclid(step) * step;
        if cells.insert((slot, corridor.clone()), value).is_some() {
            let timestamp = Utc.timestamp_opt(slot, 0).single().map(|t| t.to_rfc3339()).unwrap_or_default();
            return Err(Error::Conflict { corridor, timestamp });
        }
        records += 1;
    }

    if cells.is_empty() {
        return Err(Error::Dataset(format!("{} contains no records", path.display())));
    }
    let first = cells.keys().map(|k| k.0).min().unwrap();
    let last = cells.keys().map(|k| k.0).max().unwrap();
    let rows = ((last - first) / step) as usize + 1;

    let corridors: BTreeSet<&String> = cells.keys().map(|k| &k.1).collect();
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for (_, c) in cells.keys() {
        *counts.entry(c).or_default() += 1;
    }
    let mut report = LoadReport {
        records,
        ..Default::default()
    };
    let mut kept = Vec::new();
    for c in corridors {
        let missing = 1.0 - counts[c] as f64 / rows as f64;
        if missing > MAX_MISSING_FRACTION {
            report.rejected.push(RejectedCorridor {
                corridor_id: c.clone(),
                missing_fraction: missing,
            });
        } else {
            kept.push(c.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::Dataset(format!(
            "every corridor in {} is more than {}% missing",
            path.display(),
            MAX_MISSING_FRACTION * 100.0
        )));
    }

    let mut grid = Vec::with_capacity(rows * kept.len());
    for t in 0..rows {
        let slot = first + t as i64 * step;
        for c in &kept {
            grid.push(cells.get(&(slot, c.clone())).copied());
        }
    }
    report.missing_cells = grid.iter().filter(|c| c.is_none()).count();
    let start = Utc.timestamp_opt(first, 0).single().expect("grid start is a valid timestamp");
    let raw = TravelTimeMatrix::with_missing(start, step, kept, grid)?;
    let filled = fill_gaps(&raw, max_fill_run);
    report.segments = filled.segments().len();
    Ok((filled, report))
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

/// Writes the long format. Imputed cells are omitted so a reload sees the
/// same gaps.
pub fn write_csv(matrix: &TravelTimeMatrix, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", CSV_HEADER.join(","))?;
    for t in 0..matrix.rows() {
        let ts = matrix.timestamp(t).format("%Y-%m-%dT%H:%M:%SZ");
        for (c, id) in matrix.corridor_ids().iter().enumerate() {
            if !matrix.is_gap(t, c) {
                writeln!(w, "{ts},{id},{}", matrix.value(t, c))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub const INCIDENT_HEADER: [&str; 5] = ["corridor_id", "start", "duration_steps", "amplitude", "propagated_from"];

/// Writes incidents with corridors and start rows resolved against `matrix`.
pub fn write_incidents(matrix: &TravelTimeMatrix, incidents: &[Incident], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(INCIDENT_HEADER)?;
    let ids = matrix.corridor_ids();
    for inc in incidents {
        w.write_record([
            ids[inc.corridor].clone(),
            matrix.timestamp(inc.start_row).format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            inc.duration.to_string(),
            inc.amplitude.to_string(),
            inc.propagated_from.map(|c| ids[c].clone()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an incident file and marks the covered cells of `matrix` in a
/// row-major `T × C` mask. Incidents on corridors the matrix lacks, or
/// outside its time range, are clipped away.
pub fn load_spike_mask(matrix: &TravelTimeMatrix, path: impl AsRef<Path>) -> Result<Vec<bool>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != INCIDENT_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{}`", INCIDENT_HEADER.join(",")),
        });
    }
    let (rows, cols) = (matrix.rows() as i64, matrix.cols());
    let start = matrix.start_time().timestamp();
    let step = matrix.step_secs();
    let mut mask = vec![false; matrix.values().len()];
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if row.len() != INCIDENT_HEADER.len() {
            return Err(parse_err(format!("expected {} fields, found {}", INCIDENT_HEADER.len(), row.len())));
        }
        let ts = parse_timestamp(&row[1]).ok_or_else(|| parse_err(format!("bad timestamp `{}`", &row[1])))?;
        let duration: i64 = row[2]
            .parse()
            .map_err(|_| parse_err(format!("bad duration `{}`", &row[2])))?;
        let Some(col) = matrix.corridor_ids().iter().position(|id| id == &row[0]) else {
            continue;
        };
        let first = (ts.timestamp() - start).div_euclid(step);
        for r in first.max(0)..(first + duration).min(rows) {
            mask[r as usize * cols + col] = true;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn complete_grid_pivots() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "timestamp,corridor_id,travel_time_min\n\
             2020-01-01T00:00:00Z,b,2.0\n2020-01-01T00:00:00Z,a,1.0\n\
             2020-01-01T00:05:00Z,a,1.5\n2020-01-01T00:05:00Z,b,2.5\n\
             2020-01-01T00:10:00Z,a,1.25\n2020-01-01T00:10:00Z,b,2.25\n",
        );
        let m = load_csv(&p).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.corridor_ids(), &["a", "b"]);
        assert_eq!(m.row(1), &[1.5, 2.5]);
        assert_eq!(m.gap_count(), 0);
    }

    #[test]
    fn missing_interior_cell_is_filled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "timestamp,corridor_id,travel_time_min\n\
             2020-01-01T00:00:00Z,a,10\n2020-01-01T00:00:00Z,b,3\n\
             2020-01-01T00:05:00Z,b,3\n\
             2020-01-01T00:10:00Z,a,12\n2020-01-01T00:10:00Z,b,3\n",
        );
        let m = load_csv(&p).unwrap();
        assert_eq!(m.column(0), vec![10.0, 10.0, 12.0]);
        assert!(m.is_gap(1, 0));
    }

    #[test]
    fn off_grid_timestamps_snap_to_five_minutes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "timestamp,corridor_id,travel_time_min\n2020-01-01T00:01:10Z,a,1\n2020-01-01T00:06:00,a,2\n",
        );
        let m = load_csv(&p).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.start_time().to_rfc3339(), "2020-01-01T00:00:00+00:00");
    }

    #[test]
    fn errors_carry_context() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.csv", "timestamp,corridor_id,travel_time_min\n2020-01-01T00:00:00Z,a,1\nnot-a-time,a,2\n");
        match load_csv(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }

        let p = write(&dir, "dup.csv", "timestamp,corridor_id,travel_time_min\n2020-01-01T00:00:00Z,a,1\n2020-01-01T00:01:00Z,a,2\n");
        assert!(matches!(load_csv(&p).unwrap_err(), Error::Conflict { .. }));

        let p = write(&dir, "hdr.csv", "time,corridor,tt\n");
        assert!(matches!(load_csv(&p).unwrap_err(), Error::Parse { line: 1, .. }));

        let p = write(&dir, "neg.csv", "timestamp,corridor_id,travel_time_min\n2020-01-01T00:00:00Z,a,-1\n");
        assert!(matches!(load_csv(&p).unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn sparse_corridor_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("timestamp,corridor_id,travel_time_min\n");
        for i in 0..10 {
            body += &format!("2020-01-01T00:{:02}:00Z,full,5\n", i * 5);
        }
        body += "2020-01-01T00:00:00Z,sparse,5\n";
        let p = write(&dir, "s.csv", &body);
        let (m, report) = load_csv_with(&p, 6).unwrap();
        assert_eq!(m.corridor_ids(), &["full"]);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].corridor_id, "sparse");
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let start = Utc.with_ymd_and_hms(2021, 3, 4, 5, 0, 0).unwrap();
        let m = TravelTimeMatrix::new(start, 300, vec!["x".into(), "y".into()], vec![1.1, 2.2, 3.3, 4.4, 0.1 + 0.2, 7.0]).unwrap();
        let p = dir.path().join("m.csv");
        write_csv(&m, &p).unwrap();
        assert_eq!(load_csv(&p).unwrap(), m);
    }

    #[test]
    fn incident_file_reproduces_the_spike_mask() {
        let corpus = super::super::generate_synthetic(&super::super::SyntheticSpec::new(3, 4, 2)).unwrap();
        assert!(!corpus.incidents.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("incidents.csv");
        write_incidents(&corpus.matrix, &corpus.incidents, &p).unwrap();
        assert_eq!(load_spike_mask(&corpus.matrix, &p).unwrap(), corpus.spike_mask());
    }
}
