//! Full forecasting models: the hierarchical LSTM with attention pooling
//! and a self-attention head, plus the two stacked-LSTM baselines. Every
//! model maps an `input_window × C` block of normalized travel times to a
//! C-vector prediction at one horizon.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{record_step, record_unroll, LstmNodes, LstmParams, StateNodes};
use crate::params::{self, NamedTensor, NamedTensorMut, ParamGroup, Tensor};
use crate::pooling::{record_pool, PoolingNodes, PoolingParams};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Matrix, Vector};

/// Horizons in 5-minute steps matching the 15/30/45-minute evaluation.
pub const STANDARD_HORIZONS: [usize; 3] = [3, 6, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "hierlstmat")]
    HierLstmAt,
    #[serde(rename = "stackedlstm")]
    StackedLstm,
    #[serde(rename = "stackedlstmat")]
    StackedLstmAt,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::StackedLstm, Variant::StackedLstmAt, Variant::HierLstmAt];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::HierLstmAt => "hierlstmat",
            Variant::StackedLstm => "stackedlstm",
            Variant::StackedLstmAt => "stackedlstmat",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::HierLstmAt => "HierLSTMat",
            Variant::StackedLstm => "Stacked LSTM",
            Variant::StackedLstmAt => "Stacked LSTMat",
        }
    }

    fn has_attention(self) -> bool {
        !matches!(self, Variant::StackedLstm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hierlstmat" => Ok(Variant::HierLstmAt),
            "stackedlstm" => Ok(Variant::StackedLstm),
            "stackedlstmat" => Ok(Variant::StackedLstmAt),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected hierlstmat, stackedlstm, stackedlstmat)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub corridors: usize,
    pub input_window: usize,
    pub hidden_dim: usize,
    pub pooling_window: usize,
    /// Forecast lead in steps.
    pub horizon: usize,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn new(variant: Variant, corridors: usize) -> Self {
        Self {
            corridors,
            input_window: 24,
            hidden_dim: 16,
            pooling_window: 6,
            horizon: 6,
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.corridors == 0 || self.input_window == 0 || self.hidden_dim == 0 || self.horizon == 0 {
            return Err(Error::Config(format!("all dimensions must be positive: {self:?}")));
        }
        if self.variant == Variant::HierLstmAt {
            if self.pooling_window == 0 || self.input_window % self.pooling_window != 0 {
                return Err(Error::Config(format!(
                    "input window {} is not divisible by pooling window {}",
                    self.input_window, self.pooling_window
                )));
            }
        }
        Ok(())
    }

    /// False for horizons outside 15/30/45 minutes; those still run.
    pub fn is_standard_horizon(&self) -> bool {
        STANDARD_HORIZONS.contains(&self.horizon)
    }

    /// Number of top-layer steps in the hierarchical model.
    pub fn top_steps(&self) -> usize {
        self.input_window / self.pooling_window.max(1)
    }
}

/// Single-head scaled dot-product attention, queried by the last state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl AttentionParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w_q: Matrix::zeros(dim, dim),
            w_k: Matrix::zeros(dim, dim),
            w_v: Matrix::zeros(dim, dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        Self {
            w_q: Matrix::uniform(dim, dim, bound, rng),
            w_k: Matrix::uniform(dim, dim, bound, rng),
            w_v: Matrix::uniform(dim, dim, bound, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    fn bind(&self, tape: &mut Tape, prefix: &str) -> AttentionNodes {
        AttentionNodes {
            w_q: tape.param_matrix(format!("{prefix}.w_q"), &self.w_q),
            w_k: tape.param_matrix(format!("{prefix}.w_k"), &self.w_k),
            w_v: tape.param_matrix(format!("{prefix}.w_v"), &self.w_v),
            dim: self.dim(),
        }
    }
}

impl ParamGroup for AttentionParams {
    fn fields(&self) -> Vec<(&'static str, &dyn Tensor)> {
        vec![("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)]
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut dyn Tensor)> {
        vec![("w_q", &mut self.w_q), ("w_k", &mut self.w_k), ("w_v", &mut self.w_v)]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    w_q: NodeId,
    w_k: NodeId,
    w_v: NodeId,
    dim: usize,
}

/// Fully connected output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w: Matrix,
    pub b: Vector,
}

impl ParamGroup for HeadParams {
    fn fields(&self) -> Vec<(&'static str, &dyn Tensor)> {
        vec![("w", &self.w), ("b", &self.b)]
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut dyn Tensor)> {
        vec![("w", &mut self.w), ("b", &mut self.b)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub bottom: LstmParams,
    pub top: LstmParams,
    pub pooling: Option<PoolingParams>,
    pub attn: Option<AttentionParams>,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (c, h) = (config.corridors, config.hidden_dim);
        Ok(Self {
            config,
            bottom: LstmParams::zeros(c, h),
            top: LstmParams::zeros(h, h),
            pooling: (config.variant == Variant::HierLstmAt).then(|| PoolingParams::zeros(h)),
            attn: config.variant.has_attention().then(|| AttentionParams::zeros(h)),
            head: HeadParams {
                w: Matrix::zeros(c, h),
                b: Vector::zeros(c),
            },
        })
    }

    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (c, h) = (config.corridors, config.hidden_dim);
        let bottom = LstmParams::init(c, h, rng);
        let top = LstmParams::init(h, h, rng);
        let pooling = (config.variant == Variant::HierLstmAt).then(|| PoolingParams::init(h, rng));
        let attn = config.variant.has_attention().then(|| AttentionParams::init(h, rng));
        let head = HeadParams {
            w: Matrix::uniform(c, h, 1.0 / (h as f64).sqrt(), rng),
            b: Vector::zeros(c),
        };
        Ok(Self {
            config,
            bottom,
            top,
            pooling,
            attn,
            head,
        })
    }

    /// Every trainable tensor under its unique dotted name.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        params::named(&self.bottom, "bottom", &mut out);
        params::named(&self.top, "top", &mut out);
        if let Some(p) = &self.pooling {
            params::named(p, "pool", &mut out);
        }
        if let Some(a) = &self.attn {
            params::named(a, "attn", &mut out);
        }
        params::named(&self.head, "head", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let mut out = Vec::new();
        params::named_mut(&mut self.bottom, "bottom", &mut out);
        params::named_mut(&mut self.top, "top", &mut out);
        if let Some(p) = &mut self.pooling {
            params::named_mut(p, "pool", &mut out);
        }
        if let Some(a) = &mut self.attn {
            params::named_mut(a, "attn", &mut out);
        }
        params::named_mut(&mut self.head, "head", &mut out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let bottom = self.bottom.bind(tape, "bottom");
        let top = self.top.bind(tape, "top");
        let pooling = self.pooling.as_ref().map(|p| p.bind(tape, "pool"));
        let attn = self.attn.as_ref().map(|a| a.bind(tape, "attn"));
        let head_w = tape.param_matrix("head.w", &self.head.w);
        let head_b = tape.param_vector("head.b", &self.head.b);
        let zero = tape.input(&vec![0.0; self.config.hidden_dim]);
        BoundModel {
            config: self.config,
            bottom,
            top,
            pooling,
            attn,
            head_w,
            head_b,
            zero,
        }
    }
}

/// A [`ModelParams`] bound onto one tape; reusable for many windows.
#[derive(Debug, Clone, Copy)]
pub struct BoundModel {
    config: ModelConfig,
    bottom: LstmNodes,
    top: LstmNodes,
    pooling: Option<PoolingNodes>,
    attn: Option<AttentionNodes>,
    head_w: NodeId,
    head_b: NodeId,
    zero: NodeId,
}

impl BoundModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Records the forward pass for one window (rows = timesteps).
    pub fn record_forward(&self, tape: &mut Tape, window: &Matrix) -> Result<NodeId> {
        let cfg = &self.config;
        if window.shape() != (cfg.input_window, cfg.corridors) {
            return Err(Error::shape(
                "forward",
                format!("window {}x{}", cfg.input_window, cfg.corridors),
                format!("window {}x{}", window.rows(), window.cols()),
            ));
        }
        let xs: Vec<NodeId> = (0..window.rows()).map(|t| tape.input(window.row(t))).collect();
        let init = StateNodes {
            c: self.zero,
            h: self.zero,
        };
        let lower = record_unroll(tape, &self.bottom, &xs, init)?;

        let top_states: Vec<NodeId> = match (cfg.variant, self.pooling) {
            (Variant::HierLstmAt, Some(pool)) => {
                let mut top = init;
                let mut hs = Vec::with_capacity(cfg.top_steps());
                for block in lower.chunks(cfg.pooling_window) {
                    let block: Vec<StateNodes> = block.iter().map(|&s| s.into()).collect();
                    let pooled = record_pool(tape, &pool, &block, top.c)?;
                    let step = record_step(tape, &self.top, pooled.phs, top.h, pooled.pcs)?;
                    top = step.into();
                    hs.push(step.h);
                }
                hs
            }
            (Variant::HierLstmAt, None) => {
                return Err(Error::Config("hierarchical model without pooling parameters".into()))
            }
            _ => {
                let lower_h: Vec<NodeId> = lower.iter().map(|s| s.h).collect();
                record_unroll(tape, &self.top, &lower_h, init)?
                    .iter()
                    .map(|s| s.h)
                    .collect()
            }
        };

        let features = match self.attn {
            Some(attn) => record_self_attention(tape, &attn, &top_states)?,
            None => *top_states.last().expect("unroll yields at least one state"),
        };
        tape.affine(self.head_w, features, Some(self.head_b))
    }
}

pub fn record_self_attention(tape: &mut Tape, attn: &AttentionNodes, states: &[NodeId]) -> Result<NodeId> {
    let Some(&last) = states.last() else {
        return Err(Error::Domain("self-attention over an empty sequence".into()));
    };
    let inv_sqrt = 1.0 / (attn.dim as f64).sqrt();
    let q = tape.affine(attn.w_q, last, None)?;
    let mut scores = Vec::with_capacity(states.len());
    let mut values = Vec::with_capacity(states.len());
    for &s in states {
        let k = tape.affine(attn.w_k, s, None)?;
        let qk = tape.dot(q, k)?;
        scores.push(tape.scale(qk, inv_sqrt));
        values.push(tape.affine(attn.w_v, s, None)?);
    }
    let scores = tape.concat(&scores)?;
    let weights = tape.softmax(scores)?;
    tape.weighted_sum(weights, &values)
}

/// Self-attention on values: `Σ softmax(q·k_t/√d)_t · v_t` with the query
/// taken from the last state.
pub fn self_attention(attn: &AttentionParams, states: &[Vector]) -> Result<Vector> {
    if states.is_empty() {
        return Err(Error::Domain("self-attention over an empty sequence".into()));
    }
    if let Some(bad) = states.iter().find(|s| s.len() != attn.dim()) {
        return Err(Error::shape("self_attention", format!("dim {}", attn.dim()), format!("len {}", bad.len())));
    }
    let mut tape = Tape::new();
    let nodes = attn.bind(&mut tape, "attn");
    let ids: Vec<NodeId> = states.iter().map(|s| tape.input(s.as_slice())).collect();
    let out = record_self_attention(&mut tape, &nodes, &ids)?;
    Ok(tape.vector(out))
}

/// Prediction for one window with whatever variant `params` holds.
pub fn forward(params: &ModelParams, window: &Matrix) -> Result<Vector> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = bound.record_forward(&mut tape, window)?;
    Ok(tape.vector(out))
}

pub fn forward_hier(params: &ModelParams, window: &Matrix) -> Result<Vector> {
    if params.config.variant != Variant::HierLstmAt {
        return Err(Error::Config(format!("forward_hier called on a {} model", params.config.variant)));
    }
    forward(params, window)
}

pub fn forward_baseline(params: &ModelParams, window: &Matrix) -> Result<Vector> {
    if params.config.variant == Variant::HierLstmAt {
        return Err(Error::Config("forward_baseline called on a hierlstmat model".into()));
    }
    forward(params, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(variant: Variant) -> ModelConfig {
        ModelConfig {
            corridors: 2,
            input_window: 12,
            hidden_dim: 4,
            pooling_window: 3,
            horizon: 6,
            variant,
        }
    }

    fn window(rng: &mut ChaCha8Rng, c: &ModelConfig) -> Matrix {
        Matrix::uniform(c.input_window, c.corridors, 1.5, rng)
    }

    #[test]
    fn zero_params_predict_head_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for v in Variant::ALL {
            let mut p = ModelParams::zeros(cfg(v)).unwrap();
            let w = window(&mut rng, &p.config);
            assert_eq!(forward(&p, &w).unwrap(), Vector::zeros(2));
            p.head.b = Vector::new(vec![0.25, -3.0]).unwrap();
            assert_eq!(forward(&p, &w).unwrap(), p.head.b);
        }
    }

    #[test]
    fn parameter_names_are_unique() {
        for v in Variant::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let p = ModelParams::init(cfg(v), &mut rng).unwrap();
            let names: Vec<_> = p.tensors().into_iter().map(|t| t.name).collect();
            let mut dedup = names.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(names.len(), dedup.len());
            let mut tape = Tape::new();
            p.bind(&mut tape);
            let x = tape.input(&[0.0]);
            let loss = tape.dot(x, x).unwrap();
            let grads = tape.backward(loss).unwrap();
            let grad_names: Vec<_> = grads.iter().map(|(n, _)| n.to_string()).collect();
            assert_eq!(names, grad_names);
        }
    }

    #[test]
    fn variant_specific_parameters() {
        let h = ModelParams::zeros(cfg(Variant::HierLstmAt)).unwrap();
        assert!(h.pooling.is_some() && h.attn.is_some());
        let s = ModelParams::zeros(cfg(Variant::StackedLstm)).unwrap();
        assert!(s.pooling.is_none() && s.attn.is_none());
        let a = ModelParams::zeros(cfg(Variant::StackedLstmAt)).unwrap();
        assert!(a.pooling.is_none() && a.attn.is_some());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Variant::HierLstmAt);
        c.pooling_window = 5;
        assert!(ModelParams::zeros(c).is_err());
        c.variant = Variant::StackedLstm;
        assert!(ModelParams::zeros(c).is_ok());
        let mut c = cfg(Variant::HierLstmAt);
        c.horizon = 4;
        assert!(c.validate().is_ok());
        assert!(!c.is_standard_horizon());
    }

    #[test]
    fn window_shape_is_checked() {
        let p = ModelParams::zeros(cfg(Variant::HierLstmAt)).unwrap();
        let err = forward(&p, &Matrix::zeros(12, 3)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(forward_baseline(&p, &Matrix::zeros(12, 2)).is_err());
    }

    #[test]
    fn self_attention_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = AttentionParams::init(3, &mut rng);
        let s = Vector::uniform(3, 1.0, &mut rng);
        let value = crate::tensor::affine(&a.w_v, &s, &Vector::zeros(3)).unwrap();
        let single = self_attention(&a, std::slice::from_ref(&s)).unwrap();
        assert_eq!(single, value);
        let repeated = self_attention(&a, &[s.clone(), s.clone(), s.clone()]).unwrap();
        for (x, y) in repeated.as_slice().iter().zip(value.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(self_attention(&a, &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_attention_averages_hidden_states() {
        let mut a = AttentionParams::zeros(2);
        a.w_v = Matrix::identity(2);
        let states = vec![
            Vector::new(vec![1.0, 0.0]).unwrap(),
            Vector::new(vec![0.0, 2.0]).unwrap(),
            Vector::new(vec![-1.0, 1.0]).unwrap(),
        ];
        let out = self_attention(&a, &states).unwrap();
        assert!((out[0] - 0.0).abs() < 1e-15);
        assert!((out[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = ModelParams::init(cfg(Variant::HierLstmAt), &mut rng).unwrap();
        let w = window(&mut rng, &p.config);
        let a = forward_hier(&p, &w).unwrap();
        let b = forward_hier(&p, &w).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn variant_round_trips_through_text() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("bilstm".parse::<Variant>().is_err());
    }
}
