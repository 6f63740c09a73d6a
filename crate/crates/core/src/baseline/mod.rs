//! Reference regressors: the single-layer linear network, partial least
//! squares and a flattened dense ReLU network.

mod flat_dense;
mod pls;
mod sl_trnn;

pub use flat_dense::{fit_flat_dense, flat_dense_parameter_count, FlatDenseBaseline};
pub use pls::{fit_pls, fit_pls_centered, objective, PlsModel};
pub use sl_trnn::{
    fit_sl_trnn, pls_equivalence_check, sl_trnn_config, sl_trnn_spec, EquivalenceReport, SlTrnnModel,
};

use nalgebra::DMatrix;

use crate::error::{Result, TrnnError};
use crate::tensor::DenseTensor;

/// Sample shapes of data that a baseline sees as flat rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flattened {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

impl Flattened {
    pub fn of(x: &DenseTensor, y: &DenseTensor) -> Result<Self> {
        if x.num_samples() != y.num_samples() {
            return Err(TrnnError::ModeMismatch {
                mode: 1,
                expected: x.num_samples(),
                found: y.num_samples(),
            });
        }
        Ok(Self {
            input_shape: x.sample_shape().to_vec(),
            output_shape: y.sample_shape().to_vec(),
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_width(&self) -> usize {
        self.output_shape.iter().product()
    }

    fn check(found: &[usize], expected: &[usize]) -> Result<()> {
        if found != expected {
            return Err(TrnnError::ShapeMismatch {
                expected: expected.to_vec(),
                found: found.to_vec(),
            });
        }
        Ok(())
    }

    /// `X` reshaped row-major to `(N, ∏P)`.
    pub fn flatten_input(&self, x: &DenseTensor) -> Result<DenseTensor> {
        Self::check(x.sample_shape(), &self.input_shape)?;
        x.reshape(&[x.num_samples(), self.input_width()])
    }

    pub fn flatten_output(&self, y: &DenseTensor) -> Result<DenseTensor> {
        Self::check(y.sample_shape(), &self.output_shape)?;
        y.reshape(&[y.num_samples(), self.output_width()])
    }

    /// `(N, ∏Q)` rows back to `(N, Q₂, …)`.
    pub fn unflatten_output(&self, y: &DenseTensor) -> Result<DenseTensor> {
        let mut shape = vec![y.num_samples()];
        shape.extend_from_slice(&self.output_shape);
        y.reshape(&shape)
    }

    pub(crate) fn input_matrix(&self, x: &DenseTensor) -> Result<DMatrix<f64>> {
        Ok(as_matrix(&self.flatten_input(x)?))
    }

    pub(crate) fn output_matrix(&self, y: &DenseTensor) -> Result<DMatrix<f64>> {
        Ok(as_matrix(&self.flatten_output(y)?))
    }

    pub(crate) fn output_tensor(&self, m: &DMatrix<f64>) -> Result<DenseTensor> {
        self.unflatten_output(&from_matrix(m))
    }
}

/// Order-2 tensor as an nalgebra matrix.
pub(crate) fn as_matrix(t: &DenseTensor) -> DMatrix<f64> {
    assert_eq!(t.order(), 2, "expected a matrix");
    DMatrix::from_row_slice(t.shape()[0], t.shape()[1], t.data())
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> DenseTensor {
    let data = m.transpose().as_slice().to_vec();
    DenseTensor::matrix(m.nrows(), m.ncols(), data).expect("non-empty matrix")
}
