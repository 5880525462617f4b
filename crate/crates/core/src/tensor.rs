use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array with an explicit shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Contract(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Grows the leading dimension, keeping existing rows bit-identical.
    pub(crate) fn append_rows(&mut self, rows: Vec<T>) {
        let cols: usize = self.shape[1..].iter().product();
        debug_assert_eq!(rows.len() % cols.max(1), 0);
        self.shape[0] += rows.len() / cols.max(1);
        self.data.extend(rows);
    }
}

/// `out = W x + b` for `W` of shape `[rows, cols]`.
pub(crate) fn affine<T: Scalar>(w: &Tensor<T>, b: &Tensor<T>, x: &[T], out: &mut [T]) {
    let cols = w.shape[1];
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w.data[i * cols..(i + 1) * cols];
        let mut acc = b.data[i];
        for (wv, xv) in row.iter().zip(x) {
            acc += *wv * *xv;
        }
        *o = acc;
    }
}

/// Accumulates the gradients of `y = W x + b`: `dW += dy xᵀ`, `db += dy`, `dx += Wᵀ dy`.
pub(crate) fn affine_backward<T: Scalar>(
    w: &Tensor<T>,
    x: &[T],
    dy: &[T],
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
    dx: Option<&mut [T]>,
) {
    let cols = w.shape[1];
    for (i, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        db.data[i] += g;
        let drow = &mut dw.data[i * cols..(i + 1) * cols];
        for (d, xv) in drow.iter_mut().zip(x) {
            *d += g * *xv;
        }
    }
    if let Some(dx) = dx {
        for (i, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            let row = &w.data[i * cols..(i + 1) * cols];
            for (d, wv) in dx.iter_mut().zip(row) {
                *d += g * *wv;
            }
        }
    }
}
