//! Acceptance checks shared by the per-topic test targets and the
//! end-to-end acceptance run. Each returns a one-line summary on success
//! or the first violation found.

#![allow(dead_code)]

pub mod model_oracle;

use std::time::Instant;

use hierlstm_core::data::{generate_synthetic, SyntheticSpec};
use hierlstm_core::dataset::{admissible_starts, build_dataset, make_windows, Normalizer, SplitConfig, WindowedDataset};
use hierlstm_core::diagnostics::{acf, adf_test, pacf, transform, LagPolicy, SeriesTransform, TransformKind};
use hierlstm_core::forecaster::{forward, forward_hier, ModelConfig, ModelParams, Variant};
use hierlstm_core::lstm::LayerState;
use hierlstm_core::metrics::{evaluate, metrics, persistence};
use hierlstm_core::pooling::{pool, PoolingParams};
use hierlstm_core::tape::Tape;
use hierlstm_core::tensor::{Matrix, Vector};
use hierlstm_core::train::{dataset_loss, init_params, train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// Gradient fidelity

const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|)`, with the denominator floored so that two
/// gradients that are both essentially zero compare as equal.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

/// Checks every entry of every named parameter; returns the count and the
/// worst relative error.
fn model_gradcheck(variant: Variant, seed: u64) -> Result<(usize, f64), String> {
    let cfg = ModelConfig {
        corridors: 2,
        input_window: 12,
        hidden_dim: 4,
        pooling_window: 3,
        horizon: 3,
        variant,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(cfg, &mut rng).map_err(|e| e.to_string())?;
    // Nonzero biases so every bias gradient is exercised off its init.
    for t in params.tensors_mut() {
        if t.shape.1 == 1 {
            for v in t.data.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    let window = Matrix::uniform(12, 2, 1.5, &mut rng);
    let target = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = bound.record_forward(&mut tape, &window).map_err(|e| e.to_string())?;
    let loss = tape.mean_squared_error(out, &target).map_err(|e| e.to_string())?;
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;

    let names: Vec<String> = params.tensors().into_iter().map(|t| t.name).collect();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for name in &names {
        let analytic = grads.get(name).ok_or_else(|| format!("{variant}: no gradient for {name}"))?.to_vec();
        for (k, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| {
                let mut p = params.clone();
                let mut ts = p.tensors_mut();
                let t = ts.iter_mut().find(|t| &t.name == name).unwrap();
                t.data[k] += delta;
                drop(ts);
                mse(forward(&p, &window).unwrap().as_slice(), &target)
            };
            let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            let e = rel_err(a, numeric, 1e-7);
            ensure!(e < 1e-3, "{variant} {name}[{k}]: analytic {a:e} vs numeric {numeric:e} (rel {e:e})");
            worst = worst.max(e);
            checked += 1;
        }
    }
    Ok((checked, worst))
}

pub fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (mut total, mut worst) = (0, 0.0f64);
    for variant in Variant::ALL {
        for seed in 0..3 {
            let (n, w) = model_gradcheck(variant, seed)?;
            ensure!(n > 100, "{variant}: only {n} entries checked");
            total += n;
            worst = worst.max(w);
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs() < 60, "gradient check took {elapsed:?}");
    Ok(format!("{total} entries, worst rel err {worst:.2e}, {:.1}s", elapsed.as_secs_f64()))
}

// Pooling algebra

fn within_bounds(pooled: &[f64], states: &[&[f64]], tol: f64) -> bool {
    (0..pooled.len()).all(|j| {
        let lo = states.iter().map(|s| s[j]).fold(f64::INFINITY, f64::min);
        let hi = states.iter().map(|s| s[j]).fold(f64::NEG_INFINITY, f64::max);
        pooled[j] >= lo - tol && pooled[j] <= hi + tol
    })
}

pub fn pooling_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut k1_cases = 0;
    for case in 0..1000 {
        let h = rng.random_range(1..9);
        let k = rng.random_range(1..8);
        let scale = rng.random_range(0.1..4.0);
        let params = PoolingParams {
            cs_w: Matrix::uniform(1, h, scale, &mut rng),
            cs_b: Vector::uniform(1, scale, &mut rng),
            hs_w: Matrix::uniform(1, h, scale, &mut rng),
            hs_b: Vector::uniform(1, scale, &mut rng),
        };
        let lower: Vec<LayerState> = (0..k)
            .map(|_| LayerState {
                c: Vector::uniform(h, 3.0, &mut rng),
                h: Vector::uniform(h, 1.0, &mut rng),
            })
            .collect();
        let top_c = Vector::uniform(h, 3.0, &mut rng);
        let out = pool(&params, &lower, &top_c).map_err(|e| e.to_string())?;

        ensure!(out.cs_weights.len() == k + 1 && out.hs_weights.len() == k, "case {case}: weight counts");
        for w in [&out.cs_weights, &out.hs_weights] {
            let total: f64 = w.as_slice().iter().sum();
            ensure!((total - 1.0).abs() <= 1e-9, "case {case}: weights sum to {total}");
            ensure!(w.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)), "case {case}: weight outside [0, 1]");
        }

        let mut cells: Vec<&[f64]> = vec![top_c.as_slice()];
        cells.extend(lower.iter().map(|s| s.c.as_slice()));
        ensure!(within_bounds(out.pcs.as_slice(), &cells, 1e-12), "case {case}: PCS out of bounds");
        let hiddens: Vec<&[f64]> = lower.iter().map(|s| s.h.as_slice()).collect();
        ensure!(within_bounds(out.phs.as_slice(), &hiddens, 1e-12), "case {case}: PHS out of bounds");

        if k == 1 {
            ensure!(out.phs == lower[0].h, "case {case}: K=1 must pass the hidden state through");
            k1_cases += 1;
        }

        let same = Vector::uniform(h, 3.0, &mut rng);
        let copies: Vec<LayerState> = (0..k)
            .map(|_| LayerState {
                c: same.clone(),
                h: same.clone(),
            })
            .collect();
        let out = pool(&params, &copies, &same).map_err(|e| e.to_string())?;
        for (p, s) in out.pcs.as_slice().iter().zip(same.as_slice()) {
            ensure!((p - s).abs() <= 1e-12, "case {case}: PCS of identical states drifted by {:e}", (p - s).abs());
        }
    }
    Ok(format!("1000 instances ({k1_cases} with K=1)"))
}

// Transliteration

pub fn random_config(variant: Variant, rng: &mut ChaCha8Rng) -> ModelConfig {
    let k = rng.random_range(1..5);
    ModelConfig {
        corridors: rng.random_range(1..6),
        input_window: k * rng.random_range(1..6),
        hidden_dim: rng.random_range(1..9),
        pooling_window: k,
        horizon: 3,
        variant,
    }
}

pub fn transliteration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let cfg = random_config(Variant::HierLstmAt, &mut rng);
        let mut p = ModelParams::init(cfg, &mut rng).map_err(|e| e.to_string())?;
        for t in p.tensors_mut() {
            for v in t.data.iter_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
        let window = Matrix::uniform(cfg.input_window, cfg.corridors, 2.0, &mut rng);
        let got = forward_hier(&p, &window).map_err(|e| e.to_string())?;
        let want = model_oracle::oracle(&p, &window);
        for (a, b) in got.as_slice().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst <= 1e-10, "max deviation {worst:e}");
    Ok(format!("200 configurations, max deviation {worst:.1e}"))
}

// Overfit sanity

pub fn tiny_set(samples: usize) -> WindowedDataset {
    let corpus = generate_synthetic(&SyntheticSpec::new(3, 2, 11)).unwrap();
    let m = &corpus.matrix;
    let starts: Vec<usize> = admissible_starts(m, 12, 3).into_iter().step_by(29).take(samples).collect();
    assert_eq!(starts.len(), samples);
    let norm = Normalizer::fit(m, 0..m.rows()).unwrap();
    build_dataset(m, &starts, 12, 3, &norm).unwrap()
}

pub fn empty_like(d: &WindowedDataset) -> WindowedDataset {
    WindowedDataset {
        samples: Vec::new(),
        ..d.clone()
    }
}

pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        corridors: 3,
        input_window: 12,
        hidden_dim: 8,
        pooling_window: 3,
        horizon: 3,
        variant,
    }
}

pub fn overfit_sanity() -> Outcome {
    let data = tiny_set(16);
    let refs: Vec<_> = data.samples.iter().collect();
    let tc = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        epochs: 2000,
        patience: 0,
        ..TrainConfig::default()
    };
    let mut summary = Vec::new();
    for variant in Variant::ALL {
        let out = train(tiny_config(variant), &data, &empty_like(&data), &tc).map_err(|e| e.to_string())?;
        let mse = dataset_loss(&out.params, &refs).map_err(|e| e.to_string())?;
        ensure!(mse < 1e-3, "{variant}: train MSE {mse} after {} epochs", out.history.len());
        summary.push(format!("{variant} {mse:.1e}"));
    }

    let frozen = TrainConfig {
        learning_rate: 0.0,
        batch_size: 4,
        epochs: 5,
        patience: 0,
        seed: 3,
        ..TrainConfig::default()
    };
    let bits = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for variant in Variant::ALL {
        let before = init_params(tiny_config(variant), 3).map_err(|e| e.to_string())?;
        let out = train(tiny_config(variant), &data, &empty_like(&data), &frozen).map_err(|e| e.to_string())?;
        for (a, b) in before.tensors().iter().zip(out.params.tensors()) {
            ensure!(bits(a.data) == bits(b.data), "{variant}: {} moved at zero learning rate", a.name);
        }
    }
    Ok(format!("train MSE {}; zero rate leaves parameters bitwise fixed", summary.join(", ")))
}

// Metrics

pub fn metrics_oracle() -> Outcome {
    let corpus = generate_synthetic(&SyntheticSpec::new(4, 3, 5)).unwrap();
    let splits = make_windows(&corpus.matrix, &SplitConfig::new(24, 6, 1)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for variant in Variant::ALL {
        let mut cfg = ModelConfig::new(variant, 4);
        cfg.hidden_dim = 6;
        let params = init_params(cfg, 2).map_err(|e| e.to_string())?;
        for data in [&splits.train, &splits.val, &splits.test] {
            let m = evaluate(&params, data).map_err(|e| e.to_string())?.report.metrics;
            let norm = &data.normalizer;
            let (mut abs, mut sq, mut pct, mut n) = (0.0, 0.0, 0.0, 0.0);
            for s in &data.samples {
                let z = forward(&params, &s.window).map_err(|e| e.to_string())?;
                for j in 0..4 {
                    let pred = z.as_slice()[j] * norm.std[j] + norm.mean[j];
                    let truth = corpus.matrix.value(s.target_row, j);
                    abs += (pred - truth).abs();
                    sq += (pred - truth).powi(2);
                    pct += ((pred - truth) / truth).abs();
                    n += 1.0;
                }
            }
            for (name, got, want) in [
                ("MAE", m.mae, abs / n),
                ("RMSE", m.rmse, (sq / n).sqrt()),
                ("MAPE", m.mape, 100.0 * pct / n),
            ] {
                let d = (got - want).abs();
                ensure!(d <= 1e-9, "{variant} {name}: {got} vs double loop {want}");
                worst = worst.max(d);
            }
            ensure!(m.mae <= m.rmse, "{variant}: MAE {} > RMSE {}", m.mae, m.rmse);
        }
        let p = persistence(&splits.test).map_err(|e| e.to_string())?;
        ensure!(p.mae <= p.rmse, "persistence: MAE {} > RMSE {}", p.mae, p.rmse);
    }

    let m = metrics(&[2.0, 4.0], &[1.0, 2.0]).map_err(|e| e.to_string())?;
    ensure!(m.mae == 1.5, "hand case MAE {}", m.mae);
    ensure!((m.rmse - 1.5811).abs() < 5e-5, "hand case RMSE {}", m.rmse);
    ensure!(m.mape == 100.0, "hand case MAPE {}", m.mape);
    Ok(format!("max deviation {worst:.1e}; hand case MAE 1.5, RMSE {:.4}, MAPE 100%", m.rmse))
}

// Diagnostics

pub fn gaussian(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn cumsum(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect()
}

pub fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
    let e = gaussian(seed, n + 200);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for (t, et) in e.iter().enumerate() {
        x = phi * x + et;
        if t >= 200 {
            out.push(x);
        }
    }
    out
}

pub fn adf(series: &[f64]) -> f64 {
    adf_test(series, LagPolicy::default_for(series.len())).unwrap().statistic
}

pub fn diagnostics_statistics() -> Outcome {
    let rejections = (0..20).filter(|&s| adf(&gaussian(s, 5000)) < -3.43).count();
    ensure!(rejections >= 18, "white noise rejected in only {rejections}/20 seeds");
    let kept = (0..20).filter(|&s| adf(&cumsum(&gaussian(100 + s, 5000))) > -2.8636).count();
    ensure!(kept >= 18, "random walk kept its unit root in only {kept}/20 seeds");

    let x = ar1(5, 5000, 0.8);
    let r = acf(&x, 10).map_err(|e| e.to_string())?;
    ensure!((r[1] - 0.8).abs() <= 0.05, "AR(1) acf(1) = {}", r[1]);
    let p = pacf(&x, 10).map_err(|e| e.to_string())?;
    for (k, v) in p.iter().enumerate().skip(2) {
        ensure!(v.abs() <= 0.05, "AR(1) pacf({k}) = {v}");
    }

    // Raw and log series keep their unit root; removing the moving average
    // of the logs makes the series strongly stationary.
    let corpus = generate_synthetic(&SyntheticSpec::new(5, 60, 7)).unwrap();
    let mean = corpus.matrix.network_mean();
    let run = |kind| {
        let x = transform(&mean, SeriesTransform::new(kind)).unwrap();
        adf_test(&x, LagPolicy::default_for(x.len())).unwrap()
    };
    let raw = run(TransformKind::Raw);
    let log = run(TransformKind::Log);
    let ma = run(TransformKind::LogMinusMovingAverage);
    ensure!(raw.statistic > raw.critical_5, "raw series rejected the unit root: {raw:?}");
    ensure!(log.statistic > log.critical_5, "log series rejected the unit root: {log:?}");
    ensure!(ma.statistic < ma.critical_1, "log-minus-MA series kept its unit root: {ma:?}");
    Ok(format!(
        "white noise {rejections}/20, random walk {kept}/20, AR(1) acf(1) {:.3}; synthetic ADF raw {:.3}, log {:.3}, log-minus-MA {:.3}",
        r[1], raw.statistic, log.statistic, ma.statistic
    ))
}
