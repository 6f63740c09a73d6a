use crate::error::{Result, TrnnError};
use crate::tensor::DenseTensor;

/// Per-entry standardization statistics over the sample mode.
///
/// Entries with (numerically) zero spread get a unit scale so they are
/// only centered.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: DenseTensor,
    pub std: DenseTensor,
}

const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit(t: &DenseTensor) -> Self {
        let n = t.num_samples() as f64;
        let len = t.sample_len();
        let mut mean = vec![0.0; len];
        for row in t.data().chunks_exact(len) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; len];
        for row in t.data().chunks_exact(len) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > MIN_STD {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let shape = t.sample_shape().to_vec();
        Self {
            mean: DenseTensor::new(shape.clone(), mean).expect("sample shape"),
            std: DenseTensor::new(shape, std).expect("sample shape"),
        }
    }

    fn check(&self, t: &DenseTensor) -> Result<()> {
        if t.sample_shape() != self.mean.shape() {
            return Err(TrnnError::ShapeMismatch {
                expected: self.mean.shape().to_vec(),
                found: t.sample_shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn transform(&self, t: &DenseTensor) -> Result<DenseTensor> {
        self.check(t)?;
        let mut out = t.clone();
        let len = t.sample_len();
        for row in out.data_mut().chunks_exact_mut(len) {
            for ((v, m), s) in row.iter_mut().zip(self.mean.data()).zip(self.std.data()) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, t: &DenseTensor) -> Result<DenseTensor> {
        self.check(t)?;
        let mut out = t.clone();
        let len = t.sample_len();
        for row in out.data_mut().chunks_exact_mut(len) {
            for ((v, m), s) in row.iter_mut().zip(self.mean.data()).zip(self.std.data()) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }
}
