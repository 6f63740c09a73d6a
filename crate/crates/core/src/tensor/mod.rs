//! Dense N-order tensors and the multilinear operators the network is built
//! from.
//!
//! Storage is a flat `Vec<f64>` in row-major order (last index fastest). Mode
//! indices in the public operator API are **1-based**, so mode 1 is the
//! leading (sample) mode of a batched tensor, matching the `×₂ … ×ₗ`
//! notation used throughout the docs.

pub mod dtf;
pub(crate) mod linalg;
mod ops;

pub use ops::{contraction, frobenius_norm, mode_n_product, tucker_reconstruct};
pub(crate) use ops::{contract_samples, mode_gram, mode_product_axis};

use crate::error::{Result, TrnnError};

/// An N-order real array with an explicit shape.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(TrnnError::InvalidShape {
            shape: shape.to_vec(),
            reason: "order must be at least 1".into(),
        });
    }
    if shape.contains(&0) {
        return Err(TrnnError::InvalidShape {
            shape: shape.to_vec(),
            reason: "every extent must be at least 1".into(),
        });
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| TrnnError::InvalidShape {
            shape: shape.to_vec(),
            reason: "element count overflows".into(),
        })
}

impl DenseTensor {
    /// Builds a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = validate_shape(&shape)?;
        if data.len() != len {
            return Err(TrnnError::InvalidShape {
                shape,
                reason: format!("data has {} entries, shape requires {len}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor.
    ///
    /// # Panics
    ///
    /// Panics if `shape` is empty or has a zero extent.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = validate_shape(shape).expect("valid tensor shape");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in row-major
    /// order.
    ///
    /// # Panics
    ///
    /// Panics on an invalid shape.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment_index(&mut idx, shape);
        }
        t
    }

    /// A `rows × cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: a valid tensor holds at least one entry.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut off = 0;
        for (&i, &e) in index.iter().zip(&self.shape) {
            if i >= e {
                return None;
            }
            off = off * e + i;
        }
        Some(off)
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.offset(index).map(|o| self.data[o])
    }

    /// Matrix entry `(row, col)` of an order-2 tensor.
    #[inline]
    pub fn at2(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.order(), 2);
        self.data[row * self.shape[1] + col]
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_shape(other.shape())?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Transpose of an order-2 tensor.
    pub fn transpose(&self) -> Result<Self> {
        if self.order() != 2 {
            return Err(TrnnError::Order(format!(
                "transpose needs a matrix, got order {}",
                self.order()
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        Ok(Self::from_fn(&[c, r], |i| self.data[i[1] * c + i[0]]))
    }

    pub(crate) fn expect_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(TrnnError::ShapeMismatch {
                expected: expected.to_vec(),
                found: self.shape.clone(),
            });
        }
        Ok(())
    }

    /// Extent of the leading (sample) mode.
    pub fn num_samples(&self) -> usize {
        self.shape[0]
    }

    /// Extents of every mode after the leading one.
    pub fn sample_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    /// Number of entries in a single sample slice.
    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Stacks the selected leading-mode slices into a new tensor, in the
    /// order given.
    pub fn select_samples(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(TrnnError::EmptyBatch);
        }
        let n = self.num_samples();
        let stride = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            if i >= n {
                return Err(TrnnError::InvalidShape {
                    shape: self.shape.clone(),
                    reason: format!("sample index {i} out of range"),
                });
            }
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Self { shape, data })
    }

    /// Stacks equally shaped tensors along a new leading mode.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or(TrnnError::EmptyBatch)?;
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            t.expect_shape(first.shape())?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        Self::new(shape, data)
    }
}

/// Advances a row-major multi-index by one, wrapping to all-zero past the
/// end.
pub(crate) fn increment_index(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}
