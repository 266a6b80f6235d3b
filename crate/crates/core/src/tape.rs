//! Reverse-mode differentiation over a linear record of vector operations.
//!
//! Every value produced during a forward pass lives in a node on the tape.
//! Calling [`Tape::backward`] walks the nodes in reverse order of recording,
//! visiting each once, and accumulates gradients additively into the inputs
//! of every operation. Parameters are leaf nodes registered under a name;
//! the resulting [`Gradients`] map is keyed by those names.
//!
//! A tape is single-threaded. Parallel gradient evaluation uses one tape
//! per worker and sums the resulting [`Gradients`].

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `W·x (+ b)`; `w` is a matrix node.
    Affine {
        w: NodeId,
        x: NodeId,
        b: Option<NodeId>,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    Dot(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Stacks scalars into a vector.
    Concat(Vec<NodeId>),
    /// `Σ_t weights[t] · items[t]`.
    WeightedSum {
        weights: NodeId,
        items: Vec<NodeId>,
    },
    /// Elementwise sum of equally shaped nodes.
    Sum(Vec<NodeId>),
    /// Mean over components of `(pred - target)^2`.
    MeanSquaredError {
        pred: NodeId,
        target: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    pub fn vector(&self, id: NodeId) -> Vector {
        Vector::from_raw(self.nodes[id.0].value.clone())
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push_vec(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        let n = value.len();
        self.push(value, n, 1, op)
    }

    /// Constant input; receives no gradient entry.
    pub fn input(&mut self, values: &[f64]) -> NodeId {
        self.push_vec(values.to_vec(), Op::Leaf)
    }

    /// Trainable leaf registered under `name`.
    pub fn param(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: &[f64]) -> NodeId {
        debug_assert_eq!(rows * cols, data.len());
        let id = self.push(data.to_vec(), rows, cols, Op::Leaf);
        self.params.push((name.into(), id));
        id
    }

    pub fn param_matrix(&mut self, name: impl Into<String>, m: &Matrix) -> NodeId {
        self.param(name, m.rows(), m.cols(), m.as_slice())
    }

    pub fn param_vector(&mut self, name: impl Into<String>, v: &Vector) -> NodeId {
        self.param(name, v.len(), 1, v.as_slice())
    }

    fn same_len(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<usize> {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        if la != lb {
            return Err(Error::shape(op, format!("len {la}"), format!("len {lb}")));
        }
        Ok(la)
    }

    pub fn affine(&mut self, w: NodeId, x: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (rows, cols) = self.shape(w);
        let xl = self.len_of(x);
        if cols != xl {
            return Err(Error::shape(
                "affine",
                format!("W {rows}x{cols}"),
                format!("x len {xl}"),
            ));
        }
        if let Some(b) = b {
            let bl = self.len_of(b);
            if bl != rows {
                return Err(Error::shape(
                    "affine",
                    format!("W {rows}x{cols}"),
                    format!("b len {bl}"),
                ));
            }
        }
        let mut out = vec![0.0; rows];
        tensor::affine_into(
            &self.nodes[w.0].value,
            rows,
            cols,
            &self.nodes[x.0].value,
            b.map(|b| self.nodes[b.0].value.as_slice()),
            &mut out,
        );
        Ok(self.push_vec(out, Op::Affine { w, x, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push_vec(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push_vec(out, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("hadamard", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push_vec(out, Op::Hadamard(a, b)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|&v| tensor::sigmoid_scalar(v)).collect();
        self.push_vec(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|v| v.tanh()).collect();
        self.push_vec(out, Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.len_of(a);
        if n == 0 {
            return Err(Error::Domain("softmax of an empty vector".into()));
        }
        let mut out = vec![0.0; n];
        tensor::softmax_into(self.value(a), &mut out);
        Ok(self.push_vec(out, Op::Softmax(a)))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len("dot", a, b)?;
        let out = tensor::dot(self.value(a), self.value(b));
        Ok(self.push_vec(vec![out], Op::Dot(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let out = self.value(a).iter().map(|v| v * factor).collect();
        self.push_vec(out, Op::Scale(a, factor))
    }

    /// Stacks scalar nodes into one vector.
    pub fn concat(&mut self, scalars: &[NodeId]) -> Result<NodeId> {
        if let Some(&bad) = scalars.iter().find(|&&s| self.len_of(s) != 1) {
            return Err(Error::shape(
                "concat",
                "scalar",
                format!("len {}", self.len_of(bad)),
            ));
        }
        let out = scalars.iter().map(|&s| self.scalar(s)).collect();
        Ok(self.push_vec(out, Op::Concat(scalars.to_vec())))
    }

    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        let wl = self.len_of(weights);
        if wl != items.len() || items.is_empty() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{wl} weights"),
                format!("{} items", items.len()),
            ));
        }
        let dim = self.len_of(items[0]);
        let mut out = vec![0.0; dim];
        for (t, &item) in items.iter().enumerate() {
            if self.len_of(item) != dim {
                return Err(Error::shape(
                    "weighted_sum",
                    format!("item len {dim}"),
                    format!("item len {}", self.len_of(item)),
                ));
            }
            let w = self.nodes[weights.0].value[t];
            for (o, v) in out.iter_mut().zip(&self.nodes[item.0].value) {
                *o += w * v;
            }
        }
        Ok(self.push_vec(
            out,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = items.first() else {
            return Err(Error::Domain("sum of no nodes".into()));
        };
        let dim = self.len_of(first);
        let mut out = vec![0.0; dim];
        for &item in items {
            if self.len_of(item) != dim {
                return Err(Error::shape(
                    "sum",
                    format!("len {dim}"),
                    format!("len {}", self.len_of(item)),
                ));
            }
            for (o, v) in out.iter_mut().zip(&self.nodes[item.0].value) {
                *o += v;
            }
        }
        Ok(self.push_vec(out, Op::Sum(items.to_vec())))
    }

    pub fn mean_squared_error(&mut self, pred: NodeId, target: &[f64]) -> Result<NodeId> {
        let n = self.len_of(pred);
        if n != target.len() || n == 0 {
            return Err(Error::shape(
                "mean_squared_error",
                format!("pred len {n}"),
                format!("target len {}", target.len()),
            ));
        }
        let mse = self
            .value(pred)
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n as f64;
        Ok(self.push_vec(
            vec![mse],
            Op::MeanSquaredError {
                pred,
                target: target.to_vec(),
            },
        ))
    }

    /// Gradient of the scalar `loss` with respect to every registered
    /// parameter. Parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.len_of(loss) != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, node has {} components",
                self.len_of(loss)
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[i]);
            if g.is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = g;
                }
                Op::Affine { w, x, b } => {
                    let (rows, cols) = (node.rows, self.nodes[w.0].cols);
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    {
                        let gw = slot(&mut grads, *w, rows * cols);
                        for r in 0..rows {
                            let gr = g[r];
                            if gr != 0.0 {
                                let row = &mut gw[r * cols..(r + 1) * cols];
                                for (acc, xk) in row.iter_mut().zip(xv) {
                                    *acc += gr * xk;
                                }
                            }
                        }
                    }
                    {
                        let gx = slot(&mut grads, *x, cols);
                        for r in 0..rows {
                            let gr = g[r];
                            if gr != 0.0 {
                                let row = &wv[r * cols..(r + 1) * cols];
                                for (acc, wk) in gx.iter_mut().zip(row) {
                                    *acc += gr * wk;
                                }
                            }
                        }
                    }
                    if let Some(b) = b {
                        accumulate(slot(&mut grads, *b, rows), &g);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(slot(&mut grads, *a, g.len()), &g);
                    accumulate(slot(&mut grads, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    accumulate(slot(&mut grads, *a, g.len()), &g);
                    let gb = slot(&mut grads, *b, g.len());
                    for (acc, gi) in gb.iter_mut().zip(&g) {
                        *acc -= gi;
                    }
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = slot(&mut grads, *a, g.len());
                    for ((acc, gi), bi) in ga.iter_mut().zip(&g).zip(bv) {
                        *acc += gi * bi;
                    }
                    let gb = slot(&mut grads, *b, g.len());
                    for ((acc, gi), ai) in gb.iter_mut().zip(&g).zip(av) {
                        *acc += gi * ai;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = slot(&mut grads, *a, g.len());
                    for ((acc, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += gi * yi * (1.0 - yi);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = slot(&mut grads, *a, g.len());
                    for ((acc, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += gi * (1.0 - yi * yi);
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy = tensor::dot(&g, y);
                    let ga = slot(&mut grads, *a, g.len());
                    for ((acc, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += yi * (gi - gy);
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let s = g[0];
                    let ga = slot(&mut grads, *a, av.len());
                    for (acc, bi) in ga.iter_mut().zip(bv) {
                        *acc += s * bi;
                    }
                    let gb = slot(&mut grads, *b, bv.len());
                    for (acc, ai) in gb.iter_mut().zip(av) {
                        *acc += s * ai;
                    }
                }
                Op::Scale(a, factor) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for (acc, gi) in ga.iter_mut().zip(&g) {
                        *acc += gi * factor;
                    }
                }
                Op::Concat(items) => {
                    for (&item, gi) in items.iter().zip(&g) {
                        slot(&mut grads, item, 1)[0] += gi;
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let wv = &self.nodes[weights.0].value;
                    for (t, &item) in items.iter().enumerate() {
                        let iv = &self.nodes[item.0].value;
                        let dw = tensor::dot(&g, iv);
                        slot(&mut grads, *weights, wv.len())[t] += dw;
                        let gi = slot(&mut grads, item, g.len());
                        for (acc, gk) in gi.iter_mut().zip(&g) {
                            *acc += wv[t] * gk;
                        }
                    }
                }
                Op::Sum(items) => {
                    for &item in items {
                        accumulate(slot(&mut grads, item, g.len()), &g);
                    }
                }
                Op::MeanSquaredError { pred, target } => {
                    let pv = &self.nodes[pred.0].value;
                    let scale = 2.0 * g[0] / pv.len() as f64;
                    let gp = slot(&mut grads, *pred, pv.len());
                    for ((acc, p), t) in gp.iter_mut().zip(pv).zip(target) {
                        *acc += scale * (p - t);
                    }
                }
            }
        }

        let mut out = Gradients::default();
        for (name, id) in &self.params {
            let node = &self.nodes[id.0];
            let data = match grads.get_mut(id.0) {
                Some(g) if !g.is_empty() => std::mem::take(g),
                _ => vec![0.0; node.value.len()],
            };
            out.insert(name.clone(), node.rows, node.cols, data);
        }
        Ok(out)
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn slot(grads: &mut [Vec<f64>], id: NodeId, len: usize) -> &mut Vec<f64> {
    let g = &mut grads[id.0];
    if g.is_empty() {
        g.resize(len, 0.0);
    }
    g
}

fn accumulate(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Parameter name → gradient, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    entries: IndexMap<String, GradTensor>,
}

impl Gradients {
    pub fn insert(&mut self, name: String, rows: usize, cols: usize, data: Vec<f64>) {
        match self.entries.get_mut(&name) {
            // A name bound twice on one tape (one binding per sample) sums.
            Some(existing) => accumulate(&mut existing.data, &data),
            None => {
                self.entries.insert(name, GradTensor { rows, cols, data });
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).map(|g| g.data.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &GradTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds `other` into `self`, entry by entry.
    pub fn merge(&mut self, other: Gradients) {
        for (name, g) in other.entries {
            self.insert(name, g.rows, g.cols, g.data);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.entries.values_mut() {
            for v in &mut g.data {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|g| &g.data)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().flat_map(|g| &g.data).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let x = tape.param("x", 2, 1, &[1.0, 2.0]);
        let loss = tape.dot(x, x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("x").unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param("x", 2, 1, &[1.0, 2.0]);
        tape.param("unused", 2, 2, &[1.0; 4]);
        let loss = tape.dot(x, x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("unused").unwrap(), &[0.0; 4]);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn non_scalar_loss_is_a_usage_error() {
        let mut tape = Tape::new();
        let x = tape.param("x", 2, 1, &[1.0, 2.0]);
        let y = tape.sigmoid(x);
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = x·x + 3x summed through two consumers of the same node.
        let mut tape = Tape::new();
        let x = tape.param("x", 1, 1, &[2.0]);
        let sq = tape.dot(x, x).unwrap();
        let lin = tape.scale(x, 3.0);
        let loss = tape.add(sq, lin).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("x").unwrap(), &[7.0]);
    }

    #[test]
    fn shape_errors_name_operands() {
        let mut tape = Tape::new();
        let w = tape.param("w", 2, 3, &[0.0; 6]);
        let x = tape.input(&[1.0, 2.0]);
        let err = tape.affine(w, x, None).unwrap_err().to_string();
        assert!(err.contains("W 2x3") && err.contains("x len 2"), "{err}");
        let y = tape.input(&[1.0, 2.0, 3.0]);
        assert!(tape.hadamard(x, y).is_err());
        let empty = tape.input(&[]);
        assert!(tape.softmax(empty).is_err());
    }

    #[test]
    fn gradients_merge_by_name() {
        let mut a = Gradients::default();
        a.insert("w".into(), 1, 2, vec![1.0, 2.0]);
        let mut b = Gradients::default();
        b.insert("w".into(), 1, 2, vec![0.5, 0.5]);
        a.merge(b);
        assert_eq!(a.get("w").unwrap(), &[1.5, 2.5]);
        assert!((a.global_norm() - (1.5f64.powi(2) + 2.5f64.powi(2)).sqrt()).abs() < 1e-15);
    }
}
