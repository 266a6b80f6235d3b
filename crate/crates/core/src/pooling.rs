//! Attention pooling between the two LSTM levels.
//!
//! Each of the K lower-layer cell states, together with the top layer's
//! previous cell state, is projected to one score; a single softmax over
//! those K+1 scores weights the pooled cell state. The K lower hidden
//! states get their own softmax and form the pooled hidden state. The top
//! layer's own hidden state never enters the hidden-state pool.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{LayerState, StateNodes};
use crate::params::{ParamGroup, Tensor};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Matrix, Vector};

/// Two affine maps from a state vector to a scalar score. The cell-state
/// map is shared between the top-layer and lower-layer cell states so all
/// K+1 scores live on one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingParams {
    pub cs_w: Matrix,
    pub cs_b: Vector,
    pub hs_w: Matrix,
    pub hs_b: Vector,
}

impl PoolingParams {
    pub fn zeros(state_dim: usize) -> Self {
        Self {
            cs_w: Matrix::zeros(1, state_dim),
            cs_b: Vector::zeros(1),
            hs_w: Matrix::zeros(1, state_dim),
            hs_b: Vector::zeros(1),
        }
    }

    pub fn init<R: Rng + ?Sized>(state_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (state_dim as f64).sqrt();
        Self {
            cs_w: Matrix::uniform(1, state_dim, bound, rng),
            cs_b: Vector::zeros(1),
            hs_w: Matrix::uniform(1, state_dim, bound, rng),
            hs_b: Vector::zeros(1),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.cs_w.cols()
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> PoolingNodes {
        PoolingNodes {
            cs_w: tape.param_matrix(format!("{prefix}.cs_w"), &self.cs_w),
            cs_b: tape.param_vector(format!("{prefix}.cs_b"), &self.cs_b),
            hs_w: tape.param_matrix(format!("{prefix}.hs_w"), &self.hs_w),
            hs_b: tape.param_vector(format!("{prefix}.hs_b"), &self.hs_b),
        }
    }
}

impl ParamGroup for PoolingParams {
    fn fields(&self) -> Vec<(&'static str, &dyn Tensor)> {
        vec![
            ("cs_w", &self.cs_w),
            ("cs_b", &self.cs_b),
            ("hs_w", &self.hs_w),
            ("hs_b", &self.hs_b),
        ]
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut dyn Tensor)> {
        vec![
            ("cs_w", &mut self.cs_w),
            ("cs_b", &mut self.cs_b),
            ("hs_w", &mut self.hs_w),
            ("hs_b", &mut self.hs_b),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PoolingNodes {
    cs_w: NodeId,
    cs_b: NodeId,
    hs_w: NodeId,
    hs_b: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledStates {
    pub pcs: Vector,
    pub phs: Vector,
    /// K+1 weights; index 0 belongs to the top layer's previous cell state.
    pub cs_weights: Vector,
    /// K weights over the lower hidden states.
    pub hs_weights: Vector,
}

#[derive(Debug, Clone, Copy)]
pub struct PooledNodes {
    pub pcs: NodeId,
    pub phs: NodeId,
    pub cs_weights: NodeId,
    pub hs_weights: NodeId,
}

/// Score nodes: `cs` has K+1 entries (top-layer state first), `hs` has K.
pub struct ScoreNodes {
    pub cs: Vec<NodeId>,
    pub hs: Vec<NodeId>,
}

pub fn record_scores(tape: &mut Tape, p: &PoolingNodes, lower: &[StateNodes], top_prev_c: NodeId) -> Result<ScoreNodes> {
    if lower.is_empty() {
        return Err(Error::Domain("attention pooling needs at least one lower state".into()));
    }
    let mut cs = Vec::with_capacity(lower.len() + 1);
    cs.push(tape.affine(p.cs_w, top_prev_c, Some(p.cs_b))?);
    for s in lower {
        cs.push(tape.affine(p.cs_w, s.c, Some(p.cs_b))?);
    }
    let hs = lower
        .iter()
        .map(|s| tape.affine(p.hs_w, s.h, Some(p.hs_b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreNodes { cs, hs })
}

pub fn record_pool(tape: &mut Tape, p: &PoolingNodes, lower: &[StateNodes], top_prev_c: NodeId) -> Result<PooledNodes> {
    let scores = record_scores(tape, p, lower, top_prev_c)?;
    let cs_scores = tape.concat(&scores.cs)?;
    let hs_scores = tape.concat(&scores.hs)?;
    let cs_weights = tape.softmax(cs_scores)?;
    let hs_weights = tape.softmax(hs_scores)?;

    let mut cells = Vec::with_capacity(lower.len() + 1);
    cells.push(top_prev_c);
    cells.extend(lower.iter().map(|s| s.c));
    let hiddens: Vec<NodeId> = lower.iter().map(|s| s.h).collect();

    let pcs = tape.weighted_sum(cs_weights, &cells)?;
    let phs = tape.weighted_sum(hs_weights, &hiddens)?;
    Ok(PooledNodes {
        pcs,
        phs,
        cs_weights,
        hs_weights,
    })
}

fn check_inputs(params: &PoolingParams, lower_cs: &[Vector], lower_hs: &[Vector], top_prev_cs: &Vector) -> Result<()> {
    if lower_cs.is_empty() {
        return Err(Error::Domain("attention pooling needs at least one lower state".into()));
    }
    if lower_cs.len() != lower_hs.len() {
        return Err(Error::shape(
            "pool",
            format!("{} cell states", lower_cs.len()),
            format!("{} hidden states", lower_hs.len()),
        ));
    }
    let d = params.state_dim();
    for v in lower_cs.iter().chain(lower_hs).chain(std::iter::once(top_prev_cs)) {
        if v.len() != d {
            return Err(Error::shape("pool", format!("state dim {d}"), format!("len {}", v.len())));
        }
    }
    Ok(())
}

/// Projects every state to its score: `(cell scores [K+1], hidden scores [K])`.
pub fn score_states(
    params: &PoolingParams,
    lower_cs: &[Vector],
    lower_hs: &[Vector],
    top_prev_cs: &Vector,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(params, lower_cs, lower_hs, top_prev_cs)?;
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, "pool");
    let lower = bind_states(&mut tape, lower_cs, lower_hs);
    let top = tape.input(top_prev_cs.as_slice());
    let scores = record_scores(&mut tape, &p, &lower, top)?;
    Ok((
        scores.cs.iter().map(|&n| tape.scalar(n)).collect(),
        scores.hs.iter().map(|&n| tape.scalar(n)).collect(),
    ))
}

pub fn pool(params: &PoolingParams, lower_states: &[LayerState], top_prev_cs: &Vector) -> Result<PooledStates> {
    let cs: Vec<Vector> = lower_states.iter().map(|s| s.c.clone()).collect();
    let hs: Vec<Vector> = lower_states.iter().map(|s| s.h.clone()).collect();
    check_inputs(params, &cs, &hs, top_prev_cs)?;
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, "pool");
    let lower = bind_states(&mut tape, &cs, &hs);
    let top = tape.input(top_prev_cs.as_slice());
    let out = record_pool(&mut tape, &p, &lower, top)?;
    Ok(PooledStates {
        pcs: tape.vector(out.pcs),
        phs: tape.vector(out.phs),
        cs_weights: tape.vector(out.cs_weights),
        hs_weights: tape.vector(out.hs_weights),
    })
}

fn bind_states(tape: &mut Tape, cs: &[Vector], hs: &[Vector]) -> Vec<StateNodes> {
    cs.iter()
        .zip(hs)
        .map(|(c, h)| StateNodes {
            c: tape.input(c.as_slice()),
            h: tape.input(h.as_slice()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(c: &[f64], h: &[f64]) -> LayerState {
        LayerState {
            c: Vector::new(c.to_vec()).unwrap(),
            h: Vector::new(h.to_vec()).unwrap(),
        }
    }

    #[test]
    fn constant_projection_gives_constant_scores() {
        let mut p = PoolingParams::zeros(3);
        p.cs_b = Vector::filled(1, 3.0);
        let cs = vec![Vector::filled(3, 1.0), Vector::filled(3, -4.0)];
        let hs = cs.clone();
        let (ucs, uhs) = score_states(&p, &cs, &hs, &Vector::filled(3, 9.0)).unwrap();
        assert_eq!(ucs, vec![3.0; 3]);
        assert_eq!(uhs, vec![0.0; 2]);
    }

    #[test]
    fn identical_inputs_score_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = PoolingParams::init(4, &mut rng);
        let v = Vector::uniform(4, 1.0, &mut rng);
        let (ucs, uhs) = score_states(&p, &[v.clone(), v.clone()], &[v.clone(), v.clone()], &v).unwrap();
        assert!(ucs.iter().all(|&s| s == ucs[0]));
        assert_eq!(uhs[0], uhs[1]);
    }

    #[test]
    fn single_lower_state_passes_hidden_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = PoolingParams::init(2, &mut rng);
        let s = state(&[0.5, -0.25], &[0.1, 0.9]);
        let out = pool(&p, std::slice::from_ref(&s), &Vector::filled(2, 1.0)).unwrap();
        assert_eq!(out.hs_weights.as_slice(), &[1.0]);
        assert_eq!(out.phs, s.h);
        assert_eq!(out.cs_weights.len(), 2);
    }

    #[test]
    fn identical_cells_pool_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = PoolingParams::init(3, &mut rng);
        let c = [0.7, -1.3, 2.0];
        let lower = vec![state(&c, &[0.0, 0.1, 0.2]), state(&c, &[0.3, 0.4, 0.5])];
        let out = pool(&p, &lower, &Vector::new(c.to_vec()).unwrap()).unwrap();
        for (a, b) in out.pcs.as_slice().iter().zip(c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_window_is_a_domain_error() {
        let p = PoolingParams::zeros(2);
        assert!(matches!(pool(&p, &[], &Vector::zeros(2)), Err(Error::Domain(_))));
        assert!(matches!(score_states(&p, &[], &[], &Vector::zeros(2)), Err(Error::Domain(_))));
    }

    #[test]
    fn mismatched_state_dims_are_rejected() {
        let p = PoolingParams::zeros(2);
        let bad = state(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert!(pool(&p, &[bad], &Vector::zeros(2)).is_err());
    }
}
