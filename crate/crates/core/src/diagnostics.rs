//! Autocorrelation, partial autocorrelation, stationarity transforms, and the
//! augmented Dickey-Fuller unit-root test.

use std::collections::BTreeMap;

use chrono::Datelike;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TravelTimeMatrix;
use crate::error::{Error, Result};

fn check_finite(series: &[f64]) -> Result<()> {
    match series.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("series value at index {i} is not finite"))),
        None => Ok(()),
    }
}

/// Sample autocorrelation with the biased (full-series variance) normalizer.
/// Returns `max_lag + 1` values starting at lag 0.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::Domain(format!(
            "series of length {} is too short for lag {max_lag}",
            series.len()
        )));
    }
    check_finite(series)?;
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom <= f64::EPSILON * n * mean.abs().max(1.0).powi(2) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / denom
            }
        })
        .collect())
}

/// Partial autocorrelation by the Durbin-Levinson recursion; entry 0 is 1.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(series, max_lag)?;
    Ok(durbin_levinson(&r))
}

fn durbin_levinson(r: &[f64]) -> Vec<f64> {
    let max_lag = r.len() - 1;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    let mut v = 1.0f64;
    for k in 1..=max_lag {
        let num = r[k] - phi.iter().enumerate().map(|(j, p)| p * r[k - 1 - j]).sum::<f64>();
        let a = if v.abs() < f64::MIN_POSITIVE { 0.0 } else { num / v };
        let mut next: Vec<f64> = phi.iter().enumerate().map(|(j, p)| p - a * phi[k - 2 - j]).collect();
        next.push(a);
        phi = next;
        v *= 1.0 - a * a;
        out.push(a);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lags")]
pub enum LagPolicy {
    Fixed(usize),
    /// Minimizes AIC over `0..=max` lags on a common sample, then refits.
    AicMax(usize),
}

impl LagPolicy {
    /// `⌊12·(n/100)^¼⌋` fixed lags.
    pub fn default_for(n: usize) -> Self {
        LagPolicy::Fixed(default_lags(n))
    }
}

pub fn default_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub critical_1: f64,
    pub critical_5: f64,
    pub critical_10: f64,
    pub n_obs: usize,
    pub lags_used: usize,
}

struct OlsFit {
    beta: DVector<f64>,
    /// Standard error of the first coefficient.
    se0: f64,
    rss: f64,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::Degenerate(format!("{n} observations for {p} regressors")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    for j in 0..p {
        if r[(j, j)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate("regressor matrix is rank deficient".into()));
        }
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Degenerate("singular triangular factor".into()))?;
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = rss / (n - p) as f64;
    // (XᵀX)⁻¹ = R⁻¹R⁻ᵀ; its (0,0) entry is the squared norm of row 0 of R⁻¹.
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Degenerate("singular triangular factor".into()))?;
    let se0 = (sigma2 * r_inv.row(0).norm_squared()).sqrt();
    Ok(OlsFit { beta, se0, rss })
}

/// Regression of Δx_t on [x_{t−1}, Δx_{t−1..t−lags}, 1] using the last
/// `nobs` differences.
fn adf_design(series: &[f64], lags: usize, nobs: usize) -> (DMatrix<f64>, DVector<f64>) {
    let dx: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let first = dx.len() - nobs;
    let p = lags + 2;
    let x = DMatrix::from_fn(nobs, p, |r, c| {
        let i = first + r;
        match c {
            0 => series[i],
            c if c == p - 1 => 1.0,
            c => dx[i - c],
        }
    });
    let y = DVector::from_fn(nobs, |r, _| dx[first + r]);
    (x, y)
}

/// Augmented Dickey-Fuller test with a constant and no trend.
pub fn adf_test(series: &[f64], lag_policy: LagPolicy) -> Result<AdfResult> {
    check_finite(series)?;
    let n = series.len();
    let max_lags = match lag_policy {
        LagPolicy::Fixed(k) | LagPolicy::AicMax(k) => k,
    };
    if n <= 20 + max_lags {
        return Err(Error::Domain(format!(
            "series of length {n} is too short for {max_lags} lags (need more than {})",
            20 + max_lags
        )));
    }
    let lags = match lag_policy {
        LagPolicy::Fixed(k) => k,
        LagPolicy::AicMax(k) => {
            let nobs = n - 1 - k;
            let mut best = (f64::INFINITY, 0);
            for lag in 0..=k {
                let (x, y) = adf_design(series, lag, nobs);
                let fit = ols(&x, &y)?;
                let llf = -0.5 * nobs as f64 * ((2.0 * std::f64::consts::PI).ln() + (fit.rss / nobs as f64).ln() + 1.0);
                let aic = -2.0 * llf + 2.0 * (lag + 2) as f64;
                if aic < best.0 {
                    best = (aic, lag);
                }
            }
            best.1
        }
    };
    let nobs = n - 1 - lags;
    let (x, y) = adf_design(series, lags, nobs);
    let fit = ols(&x, &y)?;
    let statistic = fit.beta[0] / fit.se0;
    if !statistic.is_finite() {
        return Err(Error::Degenerate("test statistic is not finite (perfect fit)".into()));
    }
    let [critical_1, critical_5, critical_10] = critical_values(nobs);
    Ok(AdfResult {
        statistic,
        p_value: mackinnon_p(statistic),
        critical_1,
        critical_5,
        critical_10,
        n_obs: nobs,
        lags_used: lags,
    })
}

/// MacKinnon (2010) response surface, constant-only regression, one series.
pub fn critical_values(nobs: usize) -> [f64; 3] {
    const SURFACE: [[f64; 4]; 3] = [
        [-3.43035, -6.5393, -16.786, -79.433],
        [-2.86154, -2.8903, -4.234, -40.040],
        [-2.56677, -1.5384, -2.809, 0.0],
    ];
    let t = nobs as f64;
    SURFACE.map(|c| c[0] + c[1] / t + c[2] / (t * t) + c[3] / (t * t * t))
}

/// MacKinnon (1994) asymptotic p-value approximation for the constant-only
/// Dickey-Fuller distribution.
pub fn mackinnon_p(stat: f64) -> f64 {
    const TAU_MAX: f64 = 2.74;
    const TAU_MIN: f64 = -18.83;
    const TAU_STAR: f64 = -1.61;
    const SMALL: [f64; 3] = [2.1659, 1.4412, 0.038269];
    const LARGE: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];
    if stat > TAU_MAX {
        return 1.0;
    }
    if stat < TAU_MIN {
        return 0.0;
    }
    let coefs: &[f64] = if stat <= TAU_STAR { &SMALL } else { &LARGE };
    let z = coefs.iter().rev().fold(0.0, |acc, c| acc * stat + c);
    normal_cdf(z)
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Raw,
    Log,
    LogMinusMovingAverage,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [TransformKind::Raw, TransformKind::Log, TransformKind::LogMinusMovingAverage];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Raw => "raw",
            TransformKind::Log => "log",
            TransformKind::LogMinusMovingAverage => "log_minus_moving_average",
        }
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown transform `{s}` (expected raw, log, log_minus_moving_average)")))
    }
}

/// One day at five-minute resolution.
pub const DEFAULT_MA_WINDOW: usize = 288;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesTransform {
    pub kind: TransformKind,
    pub ma_window: usize,
}

impl SeriesTransform {
    pub fn new(kind: TransformKind) -> Self {
        Self {
            kind,
            ma_window: DEFAULT_MA_WINDOW,
        }
    }
}

/// Applies the transform. The moving-average variant subtracts a trailing
/// mean of the logs and drops the first `ma_window − 1` points.
pub fn transform(series: &[f64], t: SeriesTransform) -> Result<Vec<f64>> {
    if t.kind == TransformKind::Raw {
        return Ok(series.to_vec());
    }
    let logs = series
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(Error::Domain(format!("log of nonpositive value {v} at index {i}")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    if t.kind == TransformKind::Log {
        return Ok(logs);
    }
    let w = t.ma_window;
    if w == 0 {
        return Err(Error::Config("moving-average window must be positive".into()));
    }
    if logs.len() < w {
        return Err(Error::Domain(format!(
            "series of length {} is shorter than the moving-average window {w}",
            logs.len()
        )));
    }
    Ok(logs
        .windows(w)
        .map(|win| win[w - 1] - win.iter().sum::<f64>() / w as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    /// `YYYY-MM-DD` for daily rows, `YYYY-MM` for monthly rows.
    pub period: String,
    /// Per corridor; `None` when every cell in the period is a gap.
    pub means: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalProfiles {
    pub corridor_ids: Vec<String>,
    pub daily: Vec<ProfileRow>,
    pub monthly: Vec<ProfileRow>,
}

/// Calendar-day and calendar-month means per corridor, ignoring imputed
/// cells.
pub fn seasonal_profiles(matrix: &TravelTimeMatrix) -> SeasonalProfiles {
    let cols = matrix.cols();
    let mut daily: BTreeMap<String, Vec<(f64, usize)>> = BTreeMap::new();
    let mut monthly: BTreeMap<String, Vec<(f64, usize)>> = BTreeMap::new();
    for t in 0..matrix.rows() {
        let ts = matrix.timestamp(t);
        let day = ts.format("%Y-%m-%d").to_string();
        let month = format!("{:04}-{:02}", ts.year(), ts.month());
        for c in 0..cols {
            if matrix.is_gap(t, c) {
                continue;
            }
            let v = matrix.value(t, c);
            for (map, key) in [(&mut daily, &day), (&mut monthly, &month)] {
                let acc = map.entry(key.clone()).or_insert_with(|| vec![(0.0, 0); cols]);
                acc[c].0 += v;
                acc[c].1 += 1;
            }
        }
    }
    let rows = |map: BTreeMap<String, Vec<(f64, usize)>>| {
        map.into_iter()
            .map(|(period, acc)| ProfileRow {
                period,
                means: acc.iter().map(|&(s, n)| (n > 0).then(|| s / n as f64)).collect(),
            })
            .collect()
    };
    SeasonalProfiles {
        corridor_ids: matrix.corridor_ids().to_vec(),
        daily: rows(daily),
        monthly: rows(monthly),
    }
}
