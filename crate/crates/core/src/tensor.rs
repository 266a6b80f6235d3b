//! Dense row-major matrices, vectors, and the elementwise kernels every
//! model is assembled from.
//!
//! The slice-level kernels in this module are shared by the value-level
//! API and by [`crate::tape::Tape`], so recorded and unrecorded forward
//! passes compute bit-identical results.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        ensure_finite("vector", &data)?;
        Ok(Self(data))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn uniform<R: Rng + ?Sized>(len: usize, bound: f64, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random_range(-bound..=bound)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        Self(data)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        ensure_finite("matrix", &data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(
                "matrix rows",
                format!("{cols} columns"),
                format!("{} columns", bad.len()),
            ));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| rng.random_range(-bound..=bound))
                .collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

fn ensure_finite(what: &str, data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Domain(format!(
            "{what} entry {i} is not finite ({})",
            data[i]
        ))),
        None => Ok(()),
    }
}

/// `W·x + b`.
pub fn affine(w: &Matrix, x: &Vector, b: &Vector) -> Result<Vector> {
    if w.cols != x.len() {
        return Err(Error::shape(
            "affine",
            format!("W {}x{}", w.rows, w.cols),
            format!("x len {}", x.len()),
        ));
    }
    if w.rows != b.len() {
        return Err(Error::shape(
            "affine",
            format!("W {}x{}", w.rows, w.cols),
            format!("b len {}", b.len()),
        ));
    }
    let mut out = vec![0.0; w.rows];
    affine_into(&w.data, w.rows, w.cols, &x.0, Some(&b.0), &mut out);
    Ok(Vector(out))
}

pub fn sigmoid(x: &Vector) -> Vector {
    Vector(x.0.iter().map(|&v| sigmoid_scalar(v)).collect())
}

pub fn tanh_act(x: &Vector) -> Vector {
    Vector(x.0.iter().map(|v| v.tanh()).collect())
}

pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "hadamard",
            format!("len {}", a.len()),
            format!("len {}", b.len()),
        ));
    }
    Ok(Vector(a.0.iter().zip(&b.0).map(|(x, y)| x * y).collect()))
}

pub fn softmax(scores: &Vector) -> Result<Vector> {
    if scores.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    let mut out = vec![0.0; scores.len()];
    softmax_into(&scores.0, &mut out);
    Ok(Vector(out))
}

// --- slice kernels -------------------------------------------------------

pub(crate) fn affine_into(
    w: &[f64],
    rows: usize,
    cols: usize,
    x: &[f64],
    b: Option<&[f64]>,
    out: &mut [f64],
) {
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for k in 0..cols {
            acc += row[k] * x[k];
        }
        out[i] = match b {
            Some(b) => acc + b[i],
            None => acc,
        };
    }
}

#[inline]
pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    // Branching keeps exp() from overflowing for large |v|.
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
