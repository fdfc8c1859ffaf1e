//! Dense row-major 64-bit float tensors.
//!
//! These are plain value carriers for network parameters and field samples;
//! all differentiation happens on the tape, not here.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} holds {} entries, got {}",
                shape,
                n,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node: i });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Entry of a rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col] = v;
    }

    /// Matrix-vector product for a rank-2 tensor.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.shape.len() != 2 || self.shape[1] != x.len() {
            return Err(Error::ShapeMismatch(format!(
                "matvec: {:?} with vector of length {}",
                self.shape,
                x.len()
            )));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += self.data[r * cols + c] * x[c];
            }
            out[r] = acc;
        }
        Ok(out)
    }
}
