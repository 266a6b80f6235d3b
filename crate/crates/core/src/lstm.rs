//! The LSTM unit: input, forget, and output gates plus a tanh candidate,
//! with a paired input-side and hidden-side bias for every gate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamGroup, Tensor};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_ix: Matrix,
    pub w_fx: Matrix,
    pub w_ox: Matrix,
    pub w_gx: Matrix,
    pub w_ih: Matrix,
    pub w_fh: Matrix,
    pub w_oh: Matrix,
    pub w_gh: Matrix,
    pub b_ii: Vector,
    pub b_hi: Vector,
    pub b_if: Vector,
    pub b_hf: Vector,
    pub b_io: Vector,
    pub b_ho: Vector,
    pub b_ig: Vector,
    pub b_hg: Vector,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let wx = || Matrix::zeros(hidden_dim, input_dim);
        let wh = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Vector::zeros(hidden_dim);
        Self {
            w_ix: wx(),
            w_fx: wx(),
            w_ox: wx(),
            w_gx: wx(),
            w_ih: wh(),
            w_fh: wh(),
            w_oh: wh(),
            w_gh: wh(),
            b_ii: b(),
            b_hi: b(),
            b_if: b(),
            b_hf: b(),
            b_io: b(),
            b_ho: b(),
            b_ig: b(),
            b_hg: b(),
        }
    }

    /// Weights uniform in ±1/√hidden, biases zero except the input-side
    /// forget bias, which starts at 1.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut p = Self::zeros(input_dim, hidden_dim);
        for w in [&mut p.w_ix, &mut p.w_fx, &mut p.w_ox, &mut p.w_gx] {
            *w = Matrix::uniform(hidden_dim, input_dim, bound, rng);
        }
        for w in [&mut p.w_ih, &mut p.w_fh, &mut p.w_oh, &mut p.w_gh] {
            *w = Matrix::uniform(hidden_dim, hidden_dim, bound, rng);
        }
        p.b_if = Vector::filled(hidden_dim, 1.0);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_ix.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_ix.rows()
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> LstmNodes {
        let mut m = |name: &str, t: &Matrix| tape.param_matrix(format!("{prefix}.{name}"), t);
        let (w_ix, w_fx, w_ox, w_gx) = (m("w_ix", &self.w_ix), m("w_fx", &self.w_fx), m("w_ox", &self.w_ox), m("w_gx", &self.w_gx));
        let (w_ih, w_fh, w_oh, w_gh) = (m("w_ih", &self.w_ih), m("w_fh", &self.w_fh), m("w_oh", &self.w_oh), m("w_gh", &self.w_gh));
        let mut v = |name: &str, t: &Vector| tape.param_vector(format!("{prefix}.{name}"), t);
        LstmNodes {
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
            w_ix,
            w_fx,
            w_ox,
            w_gx,
            w_ih,
            w_fh,
            w_oh,
            w_gh,
            b_ii: v("b_ii", &self.b_ii),
            b_hi: v("b_hi", &self.b_hi),
            b_if: v("b_if", &self.b_if),
            b_hf: v("b_hf", &self.b_hf),
            b_io: v("b_io", &self.b_io),
            b_ho: v("b_ho", &self.b_ho),
            b_ig: v("b_ig", &self.b_ig),
            b_hg: v("b_hg", &self.b_hg),
        }
    }
}

impl ParamGroup for LstmParams {
    fn fields(&self) -> Vec<(&'static str, &dyn Tensor)> {
        vec![
            ("w_ix", &self.w_ix),
            ("w_fx", &self.w_fx),
            ("w_ox", &self.w_ox),
            ("w_gx", &self.w_gx),
            ("w_ih", &self.w_ih),
            ("w_fh", &self.w_fh),
            ("w_oh", &self.w_oh),
            ("w_gh", &self.w_gh),
            ("b_ii", &self.b_ii),
            ("b_hi", &self.b_hi),
            ("b_if", &self.b_if),
            ("b_hf", &self.b_hf),
            ("b_io", &self.b_io),
            ("b_ho", &self.b_ho),
            ("b_ig", &self.b_ig),
            ("b_hg", &self.b_hg),
        ]
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut dyn Tensor)> {
        vec![
            ("w_ix", &mut self.w_ix),
            ("w_fx", &mut self.w_fx),
            ("w_ox", &mut self.w_ox),
            ("w_gx", &mut self.w_gx),
            ("w_ih", &mut self.w_ih),
            ("w_fh", &mut self.w_fh),
            ("w_oh", &mut self.w_oh),
            ("w_gh", &mut self.w_gh),
            ("b_ii", &mut self.b_ii),
            ("b_hi", &mut self.b_hi),
            ("b_if", &mut self.b_if),
            ("b_hf", &mut self.b_hf),
            ("b_io", &mut self.b_io),
            ("b_ho", &mut self.b_ho),
            ("b_ig", &mut self.b_ig),
            ("b_hg", &mut self.b_hg),
        ]
    }
}

/// Tape handles for one bound [`LstmParams`].
#[derive(Debug, Clone, Copy)]
pub struct LstmNodes {
    pub input_dim: usize,
    pub hidden_dim: usize,
    w_ix: NodeId,
    w_fx: NodeId,
    w_ox: NodeId,
    w_gx: NodeId,
    w_ih: NodeId,
    w_fh: NodeId,
    w_oh: NodeId,
    w_gh: NodeId,
    b_ii: NodeId,
    b_hi: NodeId,
    b_if: NodeId,
    b_hf: NodeId,
    b_io: NodeId,
    b_ho: NodeId,
    b_ig: NodeId,
    b_hg: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub c: Vector,
    pub h: Vector,
}

impl LayerState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            c: Vector::zeros(hidden_dim),
            h: Vector::zeros(hidden_dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub i: Vector,
    pub f: Vector,
    pub o: Vector,
    pub g: Vector,
}

/// Node handles for one recorded step.
#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    pub i: NodeId,
    pub f: NodeId,
    pub o: NodeId,
    pub g: NodeId,
    pub c: NodeId,
    pub h: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct StateNodes {
    pub c: NodeId,
    pub h: NodeId,
}

impl From<StepNodes> for StateNodes {
    fn from(s: StepNodes) -> Self {
        Self { c: s.c, h: s.h }
    }
}

fn gate_pre(tape: &mut Tape, wx: NodeId, bx: NodeId, x: NodeId, wh: NodeId, bh: NodeId, h: NodeId) -> Result<NodeId> {
    let from_x = tape.affine(wx, x, Some(bx))?;
    let from_h = tape.affine(wh, h, Some(bh))?;
    tape.add(from_x, from_h)
}

/// Records one step. The cell update uses `carry` in place of the previous
/// cell state, which lets the top layer of the hierarchical model feed its
/// pooled cell state through the same unit.
pub fn record_step(tape: &mut Tape, p: &LstmNodes, x: NodeId, h_prev: NodeId, carry: NodeId) -> Result<StepNodes> {
    let pre_i = gate_pre(tape, p.w_ix, p.b_ii, x, p.w_ih, p.b_hi, h_prev)?;
    let pre_f = gate_pre(tape, p.w_fx, p.b_if, x, p.w_fh, p.b_hf, h_prev)?;
    let pre_o = gate_pre(tape, p.w_ox, p.b_io, x, p.w_oh, p.b_ho, h_prev)?;
    let pre_g = gate_pre(tape, p.w_gx, p.b_ig, x, p.w_gh, p.b_hg, h_prev)?;
    let i = tape.sigmoid(pre_i);
    let f = tape.sigmoid(pre_f);
    let o = tape.sigmoid(pre_o);
    let g = tape.tanh(pre_g);
    let keep = tape.hadamard(f, carry)?;
    let write = tape.hadamard(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.hadamard(o, tc)?;
    Ok(StepNodes { i, f, o, g, c, h })
}

/// Records a full left-to-right pass and returns every step's nodes.
pub fn record_unroll(tape: &mut Tape, p: &LstmNodes, inputs: &[NodeId], init: StateNodes) -> Result<Vec<StepNodes>> {
    if inputs.is_empty() {
        return Err(Error::Domain("cannot unroll an LSTM over an empty sequence".into()));
    }
    let mut state = init;
    let mut out = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let step = record_step(tape, p, x, state.h, state.c)?;
        state = step.into();
        out.push(step);
    }
    Ok(out)
}

fn check_dims(params: &LstmParams, x: &Vector, prev: &LayerState) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::shape(
            "lstm_step",
            format!("input dim {}", params.input_dim()),
            format!("x len {}", x.len()),
        ));
    }
    let hd = params.hidden_dim();
    if prev.c.len() != hd || prev.h.len() != hd {
        return Err(Error::shape(
            "lstm_step",
            format!("hidden dim {hd}"),
            format!("state dims c {} / h {}", prev.c.len(), prev.h.len()),
        ));
    }
    Ok(())
}

/// One step on values. Returns the new state and the gate activations.
pub fn lstm_step(params: &LstmParams, x: &Vector, prev: &LayerState) -> Result<(LayerState, Gates)> {
    check_dims(params, x, prev)?;
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, "lstm");
    let xn = tape.input(x.as_slice());
    let h = tape.input(prev.h.as_slice());
    let c = tape.input(prev.c.as_slice());
    let s = record_step(&mut tape, &p, xn, h, c)?;
    Ok((
        LayerState {
            c: tape.vector(s.c),
            h: tape.vector(s.h),
        },
        Gates {
            i: tape.vector(s.i),
            f: tape.vector(s.f),
            o: tape.vector(s.o),
            g: tape.vector(s.g),
        },
    ))
}

/// Runs the cell over `inputs` and keeps both cell and hidden states of
/// every step.
pub fn unroll(params: &LstmParams, inputs: &[Vector], init: &LayerState) -> Result<Vec<LayerState>> {
    let Some(first) = inputs.first() else {
        return Err(Error::Domain("cannot unroll an LSTM over an empty sequence".into()));
    };
    check_dims(params, first, init)?;
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, "lstm");
    let xs = inputs
        .iter()
        .map(|x| {
            if x.len() != params.input_dim() {
                return Err(Error::shape(
                    "unroll",
                    format!("input dim {}", params.input_dim()),
                    format!("x len {}", x.len()),
                ));
            }
            Ok(tape.input(x.as_slice()))
        })
        .collect::<Result<Vec<_>>>()?;
    let init = StateNodes {
        c: tape.input(init.c.as_slice()),
        h: tape.input(init.h.as_slice()),
    };
    let steps = record_unroll(&mut tape, &p, &xs, init)?;
    Ok(steps
        .iter()
        .map(|s| LayerState {
            c: tape.vector(s.c),
            h: tape.vector(s.h),
        })
        .collect())
}
