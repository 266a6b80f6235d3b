use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{TravelTimeMatrix, DEFAULT_STEP_SECS};
use crate::error::{Error, Result};

// Independent random streams, so switching one component off leaves the
// draws of every other component untouched.
const STREAM_PROFILE: u64 = 1;
const STREAM_REGIME: u64 = 2;
const STREAM_INCIDENTS: u64 = 3;
const STREAM_NOISE_BASE: u64 = 100;

/// Every parameter of the synthetic travel-time generator. Amplitudes are
/// fractions of each corridor's free-flow time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub corridors: usize,
    pub days: usize,
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub step_secs: i64,
    /// Free-flow travel time range in minutes.
    pub base_min: f64,
    pub base_max: f64,
    pub am_peak_hour: f64,
    pub pm_peak_hour: f64,
    pub am_width_hours: f64,
    pub pm_width_hours: f64,
    pub peak_amp_min: f64,
    pub peak_amp_max: f64,
    /// Multiplier on the diurnal congestion on Saturdays and Sundays.
    pub weekend_factor: f64,
    pub ar_phi: f64,
    /// Stationary standard deviation of the AR(1) noise.
    pub noise_sd: f64,
    /// Daily standard deviation of the network-wide log-level random walk
    /// that scales every corridor (slow demand regimes).
    pub regime_sd: f64,
    /// The log-level starts at 0 and reflects off 0 and this bound.
    pub regime_bound: f64,
    /// Network-wide growth of the log-level per day.
    pub trend_per_day: f64,
    /// Largest cumulative trend rise in log-level; the trend stops there.
    pub trend_cap: f64,
    /// Poisson arrival rate per corridor per day.
    pub incidents_per_day: f64,
    pub incident_amp_min: f64,
    pub incident_amp_max: f64,
    pub incident_min_steps: usize,
    pub incident_max_steps: usize,
    pub propagation_lag_min: usize,
    pub propagation_lag_max: usize,
    /// Amplitude of the propagated incident relative to its source.
    pub propagation_factor: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            corridors: 5,
            days: 60,
            seed: 0,
            start: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
            step_secs: DEFAULT_STEP_SECS,
            base_min: 5.0,
            base_max: 20.0,
            am_peak_hour: 8.0,
            pm_peak_hour: 17.5,
            am_width_hours: 1.2,
            pm_width_hours: 1.5,
            peak_amp_min: 0.15,
            peak_amp_max: 0.45,
            weekend_factor: 0.35,
            ar_phi: 0.9,
            noise_sd: 0.03,
            regime_sd: 0.05,
            regime_bound: 0.2,
            trend_per_day: 0.03,
            trend_cap: 1.8,
            incidents_per_day: 0.3,
            incident_amp_min: 0.5,
            incident_amp_max: 2.0,
            incident_min_steps: 6,
            incident_max_steps: 18,
            propagation_lag_min: 1,
            propagation_lag_max: 3,
            propagation_factor: 0.6,
        }
    }
}

impl SyntheticSpec {
    pub fn new(corridors: usize, days: usize, seed: u64) -> Self {
        Self {
            corridors,
            days,
            seed,
            ..Self::default()
        }
    }

    /// Same spec with noise, trend, regime drift, and incidents switched
    /// off: an exactly periodic (weekly) series.
    pub fn noiseless(mut self) -> Self {
        self.noise_sd = 0.0;
        self.trend_per_day = 0.0;
        self.regime_sd = 0.0;
        self.incidents_per_day = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synthetic spec: {msg}")));
        if self.corridors == 0 {
            return bad("corridors must be at least 1");
        }
        if self.days == 0 {
            return bad("days must be at least 1");
        }
        if self.step_secs <= 0 || 86_400 % self.step_secs != 0 {
            return bad("step must divide one day");
        }
        if !(self.base_min > 0.0 && self.base_max >= self.base_min) {
            return bad("need 0 < base_min <= base_max");
        }
        if !(0.0..1.0).contains(&self.ar_phi.abs()) {
            return bad("ar_phi must lie in (-1, 1)");
        }
        let rates = [self.noise_sd, self.regime_sd, self.regime_bound, self.trend_per_day, self.trend_cap, self.incidents_per_day];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("noise, trend, regime, and incident parameters must be finite and non-negative");
        }
        if self.incident_min_steps == 0 || self.incident_max_steps < self.incident_min_steps {
            return bad("need 1 <= incident_min_steps <= incident_max_steps");
        }
        if self.propagation_lag_max < self.propagation_lag_min {
            return bad("need propagation_lag_min <= propagation_lag_max");
        }
        if self.incident_amp_min < 0.0 || self.incident_amp_max < self.incident_amp_min {
            return bad("need 0 <= incident_amp_min <= incident_amp_max");
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        (86_400 / self.step_secs) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub corridor: usize,
    pub start_row: usize,
    pub duration: usize,
    /// Peak extra travel time as a fraction of free-flow time.
    pub amplitude: f64,
    /// Source corridor when this incident is a propagated copy.
    pub propagated_from: Option<usize>,
}

impl Incident {
    fn contribution(&self, row: usize) -> f64 {
        if row < self.start_row || row >= self.start_row + self.duration {
            return 0.0;
        }
        let k = (row - self.start_row) as f64;
        self.amplitude * (-3.0 * k / self.duration as f64).exp()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub matrix: TravelTimeMatrix,
    pub base: Vec<f64>,
    pub incidents: Vec<Incident>,
}

impl SyntheticCorpus {
    /// Row-major `T × C` mask of cells inside an incident.
    pub fn spike_mask(&self) -> Vec<bool> {
        let (rows, cols) = (self.matrix.rows(), self.matrix.cols());
        let mut mask = vec![false; rows * cols];
        for inc in &self.incidents {
            for r in inc.start_row..(inc.start_row + inc.duration).min(rows) {
                mask[r * cols + inc.corridor] = true;
            }
        }
        mask
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn circular_hours(delta: f64) -> f64 {
    (delta + 12.0).rem_euclid(24.0) - 12.0
}

/// Builds a corpus: per corridor, free-flow time × network level × (1 +
/// double-peak diurnal congestion scaled by a weekday/weekend factor, plus
/// AR(1) noise, plus exponentially decaying incident spikes). The network
/// level is the exponential of a capped linear growth trend plus a bounded
/// random walk, which makes the raw series non-stationary. Each incident
/// also appears, weaker and a few steps later, on one other corridor.
/// Values stay within `[base, 10·base]`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let (cols, rows) = (spec.corridors, spec.days * spec.steps_per_day());

    let mut profile_rng = stream(spec.seed, STREAM_PROFILE);
    struct Profile {
        base: f64,
        am_amp: f64,
        pm_amp: f64,
        am_hour: f64,
        pm_hour: f64,
    }
    let profiles: Vec<Profile> = (0..cols)
        .map(|_| Profile {
            base: profile_rng.random_range(spec.base_min..=spec.base_max),
            am_amp: profile_rng.random_range(spec.peak_amp_min..=spec.peak_amp_max),
            pm_amp: profile_rng.random_range(spec.peak_amp_min..=spec.peak_amp_max),
            am_hour: spec.am_peak_hour + profile_rng.random_range(-0.5..=0.5),
            pm_hour: spec.pm_peak_hour + profile_rng.random_range(-0.5..=0.5),
        })
        .collect();

    let mut regime_rng = stream(spec.seed, STREAM_REGIME);
    let step_sd = spec.regime_sd / (spec.steps_per_day() as f64).sqrt();
    let mut walk = 0.0f64;
    let trend = spec.trend_per_day / spec.steps_per_day() as f64;
    let level: Vec<f64> = (0..rows)
        .map(|t| {
            if step_sd > 0.0 {
                walk += step_sd * standard_normal(&mut regime_rng);
                let b = spec.regime_bound;
                if walk > b {
                    walk = 2.0 * b - walk;
                } else if walk < 0.0 {
                    walk = -walk;
                }
                walk = walk.clamp(0.0, b);
            }
            (walk + (trend * t as f64).min(spec.trend_cap)).exp()
        })
        .collect();

    let incidents = draw_incidents(spec, rows);
    let mut bump = vec![0.0; rows * cols];
    for inc in &incidents {
        for r in inc.start_row..(inc.start_row + inc.duration).min(rows) {
            bump[r * cols + inc.corridor] += inc.contribution(r);
        }
    }

    let mut values = vec![0.0; rows * cols];
    let innovation_sd = spec.noise_sd * (1.0 - spec.ar_phi * spec.ar_phi).sqrt();
    for (c, p) in profiles.iter().enumerate() {
        let mut rng = stream(spec.seed, STREAM_NOISE_BASE + c as u64);
        let mut noise = spec.noise_sd * standard_normal(&mut rng);
        for t in 0..rows {
            if t > 0 {
                noise = spec.ar_phi * noise + innovation_sd * standard_normal(&mut rng);
            }
            let ts = spec.start + chrono::Duration::seconds(spec.step_secs * t as i64);
            let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0 + ts.second() as f64 / 3600.0;
            let weekly = match ts.weekday() {
                Weekday::Sat | Weekday::Sun => spec.weekend_factor,
                _ => 1.0,
            };
            let am = circular_hours(hour - p.am_hour) / spec.am_width_hours;
            let pm = circular_hours(hour - p.pm_hour) / spec.pm_width_hours;
            let diurnal = p.am_amp * (-0.5 * am * am).exp() + p.pm_amp * (-0.5 * pm * pm).exp();
            let congestion = (weekly * diurnal + noise).max(0.0);
            let v = p.base * level[t] * (1.0 + congestion + bump[t * cols + c]);
            values[t * cols + c] = v.min(10.0 * p.base);
        }
    }

    let ids = (0..cols).map(|c| format!("corridor_{:02}", c + 1)).collect();
    let matrix = TravelTimeMatrix::new(spec.start, spec.step_secs, ids, values)?;
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        matrix,
        base: profiles.iter().map(|p| p.base).collect(),
        incidents,
    })
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

fn draw_incidents(spec: &SyntheticSpec, rows: usize) -> Vec<Incident> {
    let mut rng = stream(spec.seed, STREAM_INCIDENTS);
    let rate = spec.incidents_per_day / spec.steps_per_day() as f64;
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    for t in 0..rows {
        for c in 0..spec.corridors {
            if rng.random::<f64>() >= rate {
                continue;
            }
            let amplitude = rng.random_range(spec.incident_amp_min..=spec.incident_amp_max);
            let duration = rng.random_range(spec.incident_min_steps..=spec.incident_max_steps);
            out.push(Incident {
                corridor: c,
                start_row: t,
                duration,
                amplitude,
                propagated_from: None,
            });
            if spec.corridors > 1 {
                let neighbor = (c + 1 + rng.random_range(0..spec.corridors - 1)) % spec.corridors;
                let lag = rng.random_range(spec.propagation_lag_min..=spec.propagation_lag_max);
                if t + lag < rows {
                    out.push(Incident {
                        corridor: neighbor,
                        start_row: t + lag,
                        duration,
                        amplitude: amplitude * spec.propagation_factor,
                        propagated_from: Some(c),
                    });
                }
            }
        }
    }
    out
}
