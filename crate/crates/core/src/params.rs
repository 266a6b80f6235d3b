//! Named access to trainable tensors, used by the optimizer, gradient
//! checks, and checkpoints.

use crate::tensor::{Matrix, Vector};

pub trait Tensor {
    fn shape(&self) -> (usize, usize);
    fn data(&self) -> &[f64];
    fn data_mut(&mut self) -> &mut [f64];
}

impl Tensor for Matrix {
    fn shape(&self) -> (usize, usize) {
        Matrix::shape(self)
    }
    fn data(&self) -> &[f64] {
        self.as_slice()
    }
    fn data_mut(&mut self) -> &mut [f64] {
        self.as_mut_slice()
    }
}

impl Tensor for Vector {
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn data(&self) -> &[f64] {
        self.as_slice()
    }
    fn data_mut(&mut self) -> &mut [f64] {
        self.as_mut_slice()
    }
}

/// A group of parameters with stable field names.
pub trait ParamGroup {
    fn fields(&self) -> Vec<(&'static str, &dyn Tensor)>;
    fn fields_mut(&mut self) -> Vec<(&'static str, &mut dyn Tensor)>;
}

pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

pub struct NamedTensorMut<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a mut [f64],
}

pub(crate) fn qualify(prefix: &str, field: &str) -> String {
    format!("{prefix}.{field}")
}

pub(crate) fn named<'a, G: ParamGroup + ?Sized>(group: &'a G, prefix: &str, out: &mut Vec<NamedTensor<'a>>) {
    for (field, t) in group.fields() {
        out.push(NamedTensor {
            name: qualify(prefix, field),
            shape: t.shape(),
            data: t.data(),
        });
    }
}

pub(crate) fn named_mut<'a, G: ParamGroup + ?Sized>(
    group: &'a mut G,
    prefix: &str,
    out: &mut Vec<NamedTensorMut<'a>>,
) {
    for (field, t) in group.fields_mut() {
        let shape = t.shape();
        out.push(NamedTensorMut {
            name: qualify(prefix, field),
            shape,
            data: t.data_mut(),
        });
    }
}
