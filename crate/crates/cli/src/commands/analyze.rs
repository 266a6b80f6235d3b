use std::path::{Path, PathBuf};

use clap::Args;
use hierlstm_core::diagnostics::{
    acf, adf_test, pacf, seasonal_profiles, transform, LagPolicy, SeriesTransform, TransformKind, DEFAULT_MA_WINDOW,
};
use rayon::prelude::*;
use serde::Serialize;

use super::load_data;
use crate::error::CliError;
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Travel-time CSV (`timestamp,corridor_id,travel_time_min`).
    #[arg(long)]
    pub data: PathBuf,
    /// Largest lag written to acf.csv and pacf.csv.
    #[arg(long, default_value_t = 576)]
    pub max_lag: usize,
    /// Trailing moving-average window for the log-minus-MA transform.
    #[arg(long, default_value_t = DEFAULT_MA_WINDOW)]
    pub ma_window: usize,
    /// Transform applied before ACF/PACF: raw, log, log_minus_moving_average.
    /// ADF results cover all three regardless.
    #[arg(long, default_value = "raw", value_parser = parse_transform)]
    pub transform: TransformKind,
}

fn parse_transform(s: &str) -> Result<TransformKind, String> {
    s.parse().map_err(|e: hierlstm_core::Error| e.to_string())
}

#[derive(Serialize)]
struct AdfEntry {
    series: String,
    transform: TransformKind,
    statistic: Option<f64>,
    p_value: Option<f64>,
    critical_1: Option<f64>,
    critical_5: Option<f64>,
    critical_10: Option<f64>,
    n_obs: Option<usize>,
    lags_used: Option<usize>,
    /// Unit root rejected at the 5% level.
    rejects_at_5: Option<bool>,
    error: Option<String>,
}

#[derive(Serialize)]
struct AdfReport {
    regression: &'static str,
    lag_rule: &'static str,
    ma_window: usize,
    results: Vec<AdfEntry>,
}

fn adf_entry(name: &str, series: &[f64], kind: TransformKind, ma_window: usize) -> AdfEntry {
    let outcome = transform(series, SeriesTransform { kind, ma_window })
        .and_then(|x| adf_test(&x, LagPolicy::default_for(x.len())));
    match outcome {
        Ok(r) => AdfEntry {
            series: name.to_string(),
            transform: kind,
            statistic: Some(r.statistic),
            p_value: Some(r.p_value),
            critical_1: Some(r.critical_1),
            critical_5: Some(r.critical_5),
            critical_10: Some(r.critical_10),
            n_obs: Some(r.n_obs),
            lags_used: Some(r.lags_used),
            rejects_at_5: Some(r.statistic < r.critical_5),
            error: None,
        },
        Err(e) => AdfEntry {
            series: name.to_string(),
            transform: kind,
            statistic: None,
            p_value: None,
            critical_1: None,
            critical_5: None,
            critical_10: None,
            n_obs: None,
            lags_used: None,
            rejects_at_5: None,
            error: Some(e.to_string()),
        },
    }
}

fn write_wide(path: &Path, names: &[String], columns: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once("lag").chain(names.iter().map(String::as_str)))?;
    let lags = columns.first().map_or(0, Vec::len);
    for lag in 0..lags {
        let mut rec = vec![lag.to_string()];
        rec.extend(columns.iter().map(|c| c[lag].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: AnalyzeArgs, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut run = Run::start("analyze", out)?;
    let matrix = load_data(&mut run, &args.data)?;

    let mut names = vec!["network_mean".to_string()];
    names.extend(matrix.corridor_ids().iter().cloned());
    let mut series = vec![matrix.network_mean()];
    series.extend((0..matrix.cols()).map(|c| matrix.column(c)));

    let spec = SeriesTransform {
        kind: args.transform,
        ma_window: args.ma_window,
    };
    let correlations: Vec<(Vec<f64>, Vec<f64>)> = series
        .par_iter()
        .map(|s| {
            let x = transform(s, spec)?;
            Ok((acf(&x, args.max_lag)?, pacf(&x, args.max_lag)?))
        })
        .collect::<hierlstm_core::Result<_>>()?;
    let (acfs, pacfs): (Vec<_>, Vec<_>) = correlations.into_iter().unzip();
    write_wide(&run.output("acf.csv"), &names, &acfs)?;
    write_wide(&run.output("pacf.csv"), &names, &pacfs)?;

    let jobs: Vec<(usize, TransformKind)> = (0..series.len())
        .flat_map(|i| TransformKind::ALL.into_iter().map(move |k| (i, k)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, k)| adf_entry(&names[i], &series[i], k, args.ma_window))
        .collect();
    let report = AdfReport {
        regression: "constant",
        lag_rule: "floor(12*(n/100)^0.25)",
        ma_window: args.ma_window,
        results,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(run.output("adf.json"), json + "\n")?;

    let profiles = seasonal_profiles(&matrix);
    let mut w = csv::Writer::from_path(run.output("seasonal_profiles.csv"))?;
    w.write_record(["granularity", "period", "corridor_id", "mean_travel_time_min"])?;
    for (granularity, rows) in [("daily", &profiles.daily), ("monthly", &profiles.monthly)] {
        for row in rows {
            for (id, mean) in profiles.corridor_ids.iter().zip(&row.means) {
                w.write_record([granularity, &row.period, id, &super::opt(*mean)])?;
            }
        }
    }
    w.flush()?;

    run.finish(&args, &[])
}
