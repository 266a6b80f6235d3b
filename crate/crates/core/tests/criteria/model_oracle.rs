//! The model assembled from plain loops, one equation per line.

use hierlstm_core::forecaster::{ModelParams, Variant};
use hierlstm_core::lstm::LstmParams;
use hierlstm_core::tensor::{Matrix, Vector};

type V = Vec<f64>;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(w: &Matrix, x: &[f64]) -> V {
    (0..w.rows())
        .map(|r| (0..w.cols()).map(|c| w.get(r, c) * x[c]).sum())
        .collect()
}

fn gate(wx: &Matrix, bx: &Vector, wh: &Matrix, bh: &Vector, x: &[f64], h: &[f64], act: fn(f64) -> f64) -> V {
    let a = matvec(wx, x);
    let b = matvec(wh, h);
    (0..a.len())
        .map(|j| act(a[j] + bx.as_slice()[j] + b[j] + bh.as_slice()[j]))
        .collect()
}

/// One LSTM update; `carry` is the previous cell state for an ordinary
/// step and the pooled cell state for a top-layer step.
pub fn lstm(p: &LstmParams, x: &[f64], h_prev: &[f64], carry: &[f64]) -> (V, V) {
    let i = gate(&p.w_ix, &p.b_ii, &p.w_ih, &p.b_hi, x, h_prev, sig);
    let f = gate(&p.w_fx, &p.b_if, &p.w_fh, &p.b_hf, x, h_prev, sig);
    let o = gate(&p.w_ox, &p.b_io, &p.w_oh, &p.b_ho, x, h_prev, sig);
    let g = gate(&p.w_gx, &p.b_ig, &p.w_gh, &p.b_hg, x, h_prev, f64::tanh);
    let c: V = (0..i.len()).map(|j| f[j] * carry[j] + i[j] * g[j]).collect();
    let h: V = (0..i.len()).map(|j| o[j] * c[j].tanh()).collect();
    (c, h)
}

fn scalar_affine(w: &Matrix, b: &Vector, x: &[f64]) -> f64 {
    (0..x.len()).map(|j| w.get(0, j) * x[j]).sum::<f64>() + b.as_slice()[0]
}

fn softmax(u: &[f64]) -> V {
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: V = u.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn attention(p: &ModelParams, states: &[V]) -> V {
    let a = p.attn.as_ref().unwrap();
    let d = states[0].len() as f64;
    let q = matvec(&a.w_q, states.last().unwrap());
    let scores: V = states
        .iter()
        .map(|s| {
            let k = matvec(&a.w_k, s);
            q.iter().zip(&k).map(|(x, y)| x * y).sum::<f64>() / d.sqrt()
        })
        .collect();
    let w = softmax(&scores);
    let mut out = vec![0.0; states[0].len()];
    for (wt, s) in w.iter().zip(states) {
        let v = matvec(&a.w_v, s);
        for j in 0..out.len() {
            out[j] += wt * v[j];
        }
    }
    out
}

fn head(p: &ModelParams, features: &[f64]) -> V {
    let y = matvec(&p.head.w, features);
    y.iter().zip(p.head.b.as_slice()).map(|(a, b)| a + b).collect()
}

pub fn oracle(p: &ModelParams, window: &Matrix) -> V {
    let cfg = p.config;
    let h0 = vec![0.0; cfg.hidden_dim];

    let (mut c, mut h) = (h0.clone(), h0.clone());
    let mut lower = Vec::new();
    for t in 0..window.rows() {
        (c, h) = lstm(&p.bottom, window.row(t), &h, &c);
        lower.push((c.clone(), h.clone()));
    }

    let top_states: Vec<V> = match cfg.variant {
        Variant::HierLstmAt => {
            let pool = p.pooling.as_ref().unwrap();
            let (mut top_c, mut top_h) = (h0.clone(), h0.clone());
            let mut hs = Vec::new();
            for block in lower.chunks(cfg.pooling_window) {
                // Scores for the previous top cell state and every lower cell
                // state share one projection; hidden scores use their own.
                let mut u_cs = vec![scalar_affine(&pool.cs_w, &pool.cs_b, &top_c)];
                u_cs.extend(block.iter().map(|(c, _)| scalar_affine(&pool.cs_w, &pool.cs_b, c)));
                let u_hs: V = block.iter().map(|(_, h)| scalar_affine(&pool.hs_w, &pool.hs_b, h)).collect();
                let v_cs = softmax(&u_cs);
                let v_hs = softmax(&u_hs);
                let mut pcs: V = top_c.iter().map(|x| v_cs[0] * x).collect();
                let mut phs = vec![0.0; cfg.hidden_dim];
                for (t, (c, h)) in block.iter().enumerate() {
                    for j in 0..cfg.hidden_dim {
                        pcs[j] += v_cs[t + 1] * c[j];
                        phs[j] += v_hs[t] * h[j];
                    }
                }
                (top_c, top_h) = lstm(&p.top, &phs, &top_h, &pcs);
                hs.push(top_h.clone());
            }
            hs
        }
        _ => {
            let (mut c, mut h) = (h0.clone(), h0.clone());
            let mut hs = Vec::new();
            for (_, x) in &lower {
                (c, h) = lstm(&p.top, x, &h, &c);
                hs.push(h.clone());
            }
            hs
        }
    };

    let features = match cfg.variant {
        Variant::StackedLstm => top_states.last().unwrap().clone(),
        _ => attention(p, &top_states),
    };
    head(p, &features)
}
