use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Flattened;
use crate::error::{Result, TrnnError};
use crate::model::{fit_loop, Standardizer, TrainConfig, TrainReport, Trainable};
use crate::tensor::linalg::{gemm, View};
use crate::tensor::DenseTensor;

/// Fully connected ReLU network on flattened samples. The output layer is
/// linear.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatDenseBaseline {
    /// Widths including input `∏P` and output `∏Q`.
    pub widths: Vec<usize>,
    /// `weights[l]` is `widths[l] × widths[l+1]`.
    pub weights: Vec<DenseTensor>,
    pub biases: Vec<DenseTensor>,
    pub shapes: Flattened,
    pub seed: u64,
    pub x_scaler: Option<Standardizer>,
    pub y_scaler: Option<Standardizer>,
}

/// `Σ (wᵢ + 1)·wᵢ₊₁`.
pub fn flat_dense_parameter_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl FlatDenseBaseline {
    /// Glorot-uniform weights and zero biases.
    pub fn init(shapes: Flattened, hidden: &[usize], seed: u64) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(TrnnError::InvalidConfig("hidden widths must be positive".into()));
        }
        let mut widths = vec![shapes.input_width()];
        widths.extend_from_slice(hidden);
        widths.push(shapes.output_width());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let b = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(DenseTensor::from_fn(&[w[0], w[1]], |_| rng.random_range(-b..b)));
            biases.push(DenseTensor::zeros(&[w[1]]));
        }
        Ok(Self {
            widths,
            weights,
            biases,
            shapes,
            seed,
            x_scaler: None,
            y_scaler: None,
        })
    }

    pub fn parameter_count(&self) -> usize {
        flat_dense_parameter_count(&self.widths)
    }

    /// Pre-activations of every layer for flat input rows `(N, w₀)`.
    fn forward_flat(&self, x: &DenseTensor) -> Vec<DenseTensor> {
        let n = x.num_samples();
        let depth = self.weights.len();
        let mut pre: Vec<DenseTensor> = Vec::with_capacity(depth);
        for l in 0..depth {
            let (win, wout) = (self.widths[l], self.widths[l + 1]);
            let input = if l == 0 {
                x.clone()
            } else {
                pre[l - 1].map(|v| v.max(0.0))
            };
            let mut out = vec![0.0; n * wout];
            for row in out.chunks_exact_mut(wout) {
                row.copy_from_slice(self.biases[l].data());
            }
            gemm(
                View::rm(input.data(), n, win),
                View::rm(self.weights[l].data(), win, wout),
                1.0,
                &mut out,
            );
            pre.push(DenseTensor::new(vec![n, wout], out).expect("non-empty"));
        }
        pre
    }

    fn check_flat(&self, x: &DenseTensor, width: usize) -> Result<()> {
        if x.order() != 2 || x.shape()[1] != width {
            return Err(TrnnError::ShapeMismatch {
                expected: vec![x.num_samples(), width],
                found: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let mut flat = self.shapes.flatten_input(x)?;
        if let Some(s) = &self.x_scaler {
            flat = s.transform(&flat)?;
        }
        let mut out = self.forward_flat(&flat).pop().expect("at least one layer");
        if let Some(s) = &self.y_scaler {
            out = s.inverse(&out)?;
        }
        self.shapes.unflatten_output(&out)
    }
}

impl Trainable for FlatDenseBaseline {
    fn loss(&self, x: &DenseTensor, y: &DenseTensor) -> Result<f64> {
        self.check_flat(x, self.widths[0])?;
        self.check_flat(y, *self.widths.last().expect("widths"))?;
        let out = self.forward_flat(x).pop().expect("layer");
        let n = x.num_samples() as f64;
        Ok(out.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * n))
    }

    fn loss_and_grads(&self, x: &DenseTensor, y: &DenseTensor) -> Result<(f64, Vec<DenseTensor>)> {
        self.check_flat(x, self.widths[0])?;
        self.check_flat(y, *self.widths.last().expect("widths"))?;
        let n = x.num_samples();
        let pre = self.forward_flat(x);
        let out = pre.last().expect("layer");
        let inv = 1.0 / n as f64;
        let loss = out.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5 * inv;
        let mut g: Vec<f64> = out.data().iter().zip(y.data()).map(|(a, b)| (a - b) * inv).collect();
        let depth = self.weights.len();
        let mut dw = vec![DenseTensor::zeros(&[1]); depth];
        let mut db = vec![DenseTensor::zeros(&[1]); depth];
        for l in (0..depth).rev() {
            let (win, wout) = (self.widths[l], self.widths[l + 1]);
            let act;
            let input = if l == 0 {
                x.data()
            } else {
                act = pre[l - 1].map(|v| v.max(0.0));
                act.data()
            };
            let mut w_grad = vec![0.0; win * wout];
            gemm(View::rm_t(input, n, win), View::rm(&g, n, wout), 0.0, &mut w_grad);
            let mut b_grad = vec![0.0; wout];
            for row in g.chunks_exact(wout) {
                for (b, v) in b_grad.iter_mut().zip(row) {
                    *b += v;
                }
            }
            dw[l] = DenseTensor::new(vec![win, wout], w_grad)?;
            db[l] = DenseTensor::new(vec![wout], b_grad)?;
            if l > 0 {
                let mut g_in = vec![0.0; n * win];
                gemm(
                    View::rm(&g, n, wout),
                    View::rm_t(self.weights[l].data(), win, wout),
                    0.0,
                    &mut g_in,
                );
                for (v, p) in g_in.iter_mut().zip(pre[l - 1].data()) {
                    if *p < 0.0 {
                        *v = 0.0;
                    }
                }
                g = g_in;
            }
        }
        let mut grads = Vec::with_capacity(2 * depth);
        for (w, b) in dw.into_iter().zip(db) {
            grads.push(w);
            grads.push(b);
        }
        Ok((loss, grads))
    }

    fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}

/// Trains a dense network on row-major flattened samples of `(x, y)`.
/// `hidden` lists the hidden widths; an empty list gives an affine map.
pub fn fit_flat_dense(
    x: &DenseTensor,
    y: &DenseTensor,
    hidden: &[usize],
    config: &TrainConfig,
) -> Result<(FlatDenseBaseline, TrainReport)> {
    let shapes = Flattened::of(x, y)?;
    let mut xf = shapes.flatten_input(x)?;
    let mut yf = shapes.flatten_output(y)?;
    let mut model = FlatDenseBaseline::init(shapes, hidden, config.seed)?;
    if config.standardize {
        let (sx, sy) = (Standardizer::fit(&xf), Standardizer::fit(&yf));
        xf = sx.transform(&xf)?;
        yf = sy.transform(&yf)?;
        model.x_scaler = Some(sx);
        model.y_scaler = Some(sy);
    }
    let report = fit_loop(&mut model, &xf, &yf, config)?;
    Ok((model, report))
}
