//! Network assembly, initialization, prediction, training and persistence.

mod bundle;
mod spec;
mod standardize;
mod train;

pub use bundle::{load_model, save_model, ModelManifest, MODEL_FORMAT_VERSION};
pub use spec::{default_bottleneck, CacheShapes, NetworkSpec, ScheduleOptions};
pub use standardize::Standardizer;
pub use train::{fit_loop, train, LrSchedule, TrainConfig, TrainReport, Trainable};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backprop::{full_backward, GradientSet};
use crate::error::{Result, TrnnError};
use crate::layers::{mse_loss, ContractionLayer, ExpandTuckerLayer, ForwardCache, ShrinkTuckerLayer};
use crate::tensor::DenseTensor;

/// An instantiated network: encoder factors `U`, contraction core `𝒞` and
/// decoder factors `W`, plus optional data standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct TrnnModel {
    spec: NetworkSpec,
    encoder: Vec<ShrinkTuckerLayer>,
    contraction: ContractionLayer,
    decoder: Vec<ExpandTuckerLayer>,
    seed: u64,
    x_scaler: Option<Standardizer>,
    y_scaler: Option<Standardizer>,
}

fn glorot_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> DenseTensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseTensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

fn glorot_layers(rng: &mut ChaCha8Rng, shapes: Vec<Vec<[usize; 2]>>) -> Vec<Vec<DenseTensor>> {
    shapes
        .into_iter()
        .map(|layer| {
            layer
                .into_iter()
                .map(|[r, c]| glorot_uniform(rng, &[r, c], c, r))
                .collect()
        })
        .collect()
}

/// Fresh model with every parameter drawn i.i.d. uniform on `(−b, b)`,
/// `b = √(6 / (fan_in + fan_out))`. Deterministic in `seed`.
pub fn init_model(spec: &NetworkSpec, seed: u64) -> Result<TrnnModel> {
    TrnnModel::init(spec, seed)
}

impl TrnnModel {
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = glorot_layers(&mut rng, spec.encoder_factor_shapes());
        let core_shape = spec.core_shape();
        let p: usize = spec.bottleneck_in().iter().product();
        let q: usize = spec.bottleneck_out.iter().product();
        let core = glorot_uniform(&mut rng, &core_shape, p, q);
        let dec = glorot_layers(&mut rng, spec.decoder_factor_shapes());
        Self::from_parts(
            spec.clone(),
            enc.into_iter().map(ShrinkTuckerLayer::new).collect::<Result<_>>()?,
            ContractionLayer::new(core, spec.input_shape.len())?,
            dec.into_iter().map(ExpandTuckerLayer::new).collect::<Result<_>>()?,
            seed,
        )
    }

    /// Assembles a model from explicit layers, checking every parameter shape
    /// against `spec`.
    pub fn from_parts(
        spec: NetworkSpec,
        encoder: Vec<ShrinkTuckerLayer>,
        contraction: ContractionLayer,
        decoder: Vec<ExpandTuckerLayer>,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let check = |found: &[usize], expected: &[usize]| -> Result<()> {
            if found != expected {
                return Err(TrnnError::ShapeMismatch {
                    expected: expected.to_vec(),
                    found: found.to_vec(),
                });
            }
            Ok(())
        };
        let layer_count = |found: usize, expected: usize, side: &str| -> Result<()> {
            if found != expected {
                return Err(TrnnError::InvalidSpec(format!(
                    "{side} has {found} layers, spec requires {expected}"
                )));
            }
            Ok(())
        };
        let enc_shapes = spec.encoder_factor_shapes();
        layer_count(encoder.len(), enc_shapes.len(), "encoder")?;
        for (layer, shapes) in encoder.iter().zip(&enc_shapes) {
            layer_count(layer.factors().len(), shapes.len(), "encoder layer")?;
            for (f, s) in layer.factors().iter().zip(shapes) {
                check(f.shape(), s)?;
            }
        }
        check(contraction.core().shape(), &spec.core_shape())?;
        let dec_shapes = spec.decoder_factor_shapes();
        layer_count(decoder.len(), dec_shapes.len(), "decoder")?;
        for (layer, shapes) in decoder.iter().zip(&dec_shapes) {
            layer_count(layer.factors().len(), shapes.len(), "decoder layer")?;
            for (f, s) in layer.factors().iter().zip(shapes) {
                check(f.shape(), s)?;
            }
        }
        Ok(Self {
            spec,
            encoder,
            contraction,
            decoder,
            seed,
            x_scaler: None,
            y_scaler: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encoder(&self) -> &[ShrinkTuckerLayer] {
        &self.encoder
    }

    pub fn contraction(&self) -> &ContractionLayer {
        &self.contraction
    }

    pub fn decoder(&self) -> &[ExpandTuckerLayer] {
        &self.decoder
    }

    pub fn scalers(&self) -> (Option<&Standardizer>, Option<&Standardizer>) {
        (self.x_scaler.as_ref(), self.y_scaler.as_ref())
    }

    pub fn set_scalers(&mut self, x: Option<Standardizer>, y: Option<Standardizer>) -> Result<()> {
        if let Some(s) = &x {
            if s.mean.shape() != self.spec.input_shape.as_slice() {
                return Err(TrnnError::ShapeMismatch {
                    expected: self.spec.input_shape.clone(),
                    found: s.mean.shape().to_vec(),
                });
            }
        }
        if let Some(s) = &y {
            if s.mean.shape() != self.spec.output_shape.as_slice() {
                return Err(TrnnError::ShapeMismatch {
                    expected: self.spec.output_shape.clone(),
                    found: s.mean.shape().to_vec(),
                });
            }
        }
        self.x_scaler = x;
        self.y_scaler = y;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }

    /// Every parameter tensor in canonical order: encoder factors by layer
    /// then mode, the core, decoder factors by layer then mode.
    pub fn parameters(&self) -> Vec<&DenseTensor> {
        let mut out: Vec<&DenseTensor> = Vec::new();
        for l in &self.encoder {
            out.extend(l.factors());
        }
        out.push(self.contraction.core());
        for l in &self.decoder {
            out.extend(l.factors());
        }
        out
    }

    /// Mutable parameters in the same order as [`Self::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut DenseTensor> {
        let mut out: Vec<&mut DenseTensor> = Vec::new();
        for l in &mut self.encoder {
            out.extend(l.factors_mut());
        }
        out.push(self.contraction.core_mut());
        for l in &mut self.decoder {
            out.extend(l.factors_mut());
        }
        out
    }

    pub(crate) fn check_input(&self, x: &DenseTensor) -> Result<()> {
        if x.sample_shape() != self.spec.input_shape.as_slice() {
            return Err(TrnnError::ShapeMismatch {
                expected: self.spec.input_shape.clone(),
                found: x.sample_shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Raw network forward pass (no standardization), caching every
    /// intermediate tensor.
    pub fn forward(&self, x: &DenseTensor) -> Result<ForwardCache> {
        self.check_input(x)?;
        let act = self.spec.activation;
        let mut s = vec![x.clone()];
        let mut r = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let rn = layer.forward(s.last().expect("s₀"))?;
            s.push(act.apply(&rn));
            r.push(rn);
        }
        let mut z = vec![self.contraction.forward(s.last().expect("s₀"))?];
        let mut a = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let an = act.apply(z.last().expect("z₀"));
            z.push(layer.forward(&an)?);
            a.push(an);
        }
        Ok(ForwardCache { r, s, z, a })
    }

    /// Maps `x (N, P…)` to `Ŷ (N, Q…)` in data units, applying the stored
    /// standardization on both sides.
    pub fn predict(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.check_input(x)?;
        let xs = match &self.x_scaler {
            Some(s) => s.transform(x)?,
            None => x.clone(),
        };
        let out = self.forward(&xs)?.into_output();
        match &self.y_scaler {
            Some(s) => s.inverse(&out),
            None => Ok(out),
        }
    }
}

/// Free-function form of [`TrnnModel::predict`].
pub fn predict(model: &TrnnModel, x: &DenseTensor) -> Result<DenseTensor> {
    model.predict(x)
}

impl Trainable for TrnnModel {
    fn loss(&self, x: &DenseTensor, y: &DenseTensor) -> Result<f64> {
        mse_loss(self.forward(x)?.output(), y)
    }

    fn loss_and_grads(&self, x: &DenseTensor, y: &DenseTensor) -> Result<(f64, Vec<DenseTensor>)> {
        let cache = self.forward(x)?;
        let loss = mse_loss(cache.output(), y)?;
        let grads: GradientSet = full_backward(self, &cache, y)?;
        Ok((loss, grads.into_flat()))
    }

    fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        self.parameters_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Activation;

    fn spec() -> NetworkSpec {
        NetworkSpec {
            input_shape: vec![4, 3],
            output_shape: vec![5],
            encoder: vec![vec![3, 3], vec![2, 2]],
            bottleneck_out: vec![2],
            decoder: vec![vec![3], vec![5]],
            activation: Activation::Relu,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(&spec(), 7).unwrap();
        let b = init_model(&spec(), 7).unwrap();
        let c = init_model(&spec(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for p in a.parameters() {
            let (fi, fo) = if p.order() == 2 {
                (p.shape()[1], p.shape()[0])
            } else {
                (4, 2) // core: ∏P = 2·2, ∏Q = 2
            };
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            assert!(p.data().iter().all(|v| v.abs() < bound));
        }

        let tiny = NetworkSpec {
            input_shape: vec![1],
            output_shape: vec![1],
            encoder: vec![vec![1]],
            bottleneck_out: vec![1],
            decoder: vec![vec![1]],
            activation: Activation::Relu,
        };
        let m = init_model(&tiny, 3).unwrap();
        let v = m.encoder()[0].factors()[0].data()[0];
        assert!(v.abs() < 3f64.sqrt());
    }

    #[test]
    fn forward_matches_shape_inference() {
        let m = init_model(&spec(), 1).unwrap();
        let x = DenseTensor::filled(&[6, 4, 3], 0.5);
        let cache = m.forward(&x).unwrap();
        let want = spec().cache_shapes(6);
        let shapes = |v: &[DenseTensor]| v.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>();
        assert_eq!(shapes(&cache.r), want.r);
        assert_eq!(shapes(&cache.s), want.s);
        assert_eq!(shapes(&cache.z), want.z);
        assert_eq!(shapes(&cache.a), want.a);
    }

    #[test]
    fn predict_rejects_wrong_input_and_empty_batches() {
        let m = init_model(&spec(), 1).unwrap();
        assert!(matches!(
            m.predict(&DenseTensor::zeros(&[2, 3, 4])),
            Err(TrnnError::ShapeMismatch { .. })
        ));
        // a zero-sample batch cannot even be represented
        assert!(DenseTensor::new(vec![0, 4, 3], vec![]).is_err());
    }

    #[test]
    fn selector_model_reproduces_input_slices() {
        // identity factors, one-hot core, identity activation
        let spec = NetworkSpec {
            input_shape: vec![2, 2],
            output_shape: vec![2],
            encoder: vec![vec![2, 2]],
            bottleneck_out: vec![2],
            decoder: vec![vec![2]],
            activation: Activation::Identity,
        };
        // core maps x[i, 1, 0] -> out 0 and x[i, 0, 1] -> out 1
        let core = DenseTensor::from_fn(&[2, 2, 2], |i| match i {
            [1, 0, 0] | [0, 1, 1] => 1.0,
            _ => 0.0,
        });
        let m = TrnnModel::from_parts(
            spec,
            vec![ShrinkTuckerLayer::new(vec![DenseTensor::identity(2), DenseTensor::identity(2)]).unwrap()],
            ContractionLayer::new(core, 2).unwrap(),
            vec![ExpandTuckerLayer::new(vec![DenseTensor::identity(2)]).unwrap()],
            0,
        )
        .unwrap();
        let x = DenseTensor::from_fn(&[3, 2, 2], |i| (i[0] * 4 + i[1] * 2 + i[2]) as f64 - 5.0);
        let y = m.predict(&x).unwrap();
        for i in 0..3 {
            assert_eq!(y.get(&[i, 0]), x.get(&[i, 1, 0]));
            assert_eq!(y.get(&[i, 1]), x.get(&[i, 0, 1]));
        }
    }

    #[test]
    fn predict_is_permutation_equivariant() {
        let m = init_model(&spec(), 5).unwrap();
        let x = DenseTensor::from_fn(&[4, 4, 3], |i| ((i[0] * 31 + i[1] * 7 + i[2] * 3) % 11) as f64 / 5.0 - 1.0);
        let y = m.predict(&x).unwrap();
        let perm = [2, 0, 3, 1];
        let yp = m.predict(&x.select_samples(&perm).unwrap()).unwrap();
        assert_eq!(yp, y.select_samples(&perm).unwrap());
    }
}
