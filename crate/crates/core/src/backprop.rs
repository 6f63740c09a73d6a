//! Closed-form gradients of the loss w.r.t. every parameter and cached
//! activation.
//!
//! Tucker-layer factor gradients are computed through the mode-`k`
//! unfolding identity `∂ℰ/∂F_k = G₍ₖ₎ · T₍ₖ₎ᵀ`, where `T` is the layer input
//! with every factor except `F_k` applied. The ReLU indicator uses `≥ 0`, so
//! a pre-activation of exactly zero passes its gradient through.

use crate::error::{Result, TrnnError};
use crate::layers::{
    tucker_apply_transpose, tucker_factor_grads, Activation, ContractionLayer,
    ExpandTuckerLayer, ForwardCache, ShrinkTuckerLayer,
};
use crate::model::TrnnModel;
use crate::tensor::{linalg, DenseTensor};

/// Gradients for every parameter of a [`TrnnModel`], shaped like the
/// parameters themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    /// `dU[n][k]` for encoder layer `n + 1`, mode `k + 2`.
    pub encoder: Vec<Vec<DenseTensor>>,
    pub core: DenseTensor,
    /// `dW[n][k]` for decoder layer `n + 1`, mode `k + 2`.
    pub decoder: Vec<Vec<DenseTensor>>,
}

impl GradientSet {
    /// Gradients in the canonical parameter order of
    /// [`TrnnModel::parameters`].
    pub fn iter(&self) -> impl Iterator<Item = &DenseTensor> {
        self.encoder
            .iter()
            .flatten()
            .chain(std::iter::once(&self.core))
            .chain(self.decoder.iter().flatten())
    }

    pub fn into_flat(self) -> Vec<DenseTensor> {
        let mut out: Vec<DenseTensor> = self.encoder.into_iter().flatten().collect();
        out.push(self.core);
        out.extend(self.decoder.into_iter().flatten());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(DenseTensor::is_finite)
    }
}

/// `∂ℰ/∂Ŷ = (1/N)(Ŷ − Y)`.
pub fn loss_grad(y_hat: &DenseTensor, y: &DenseTensor) -> Result<DenseTensor> {
    let n = y.num_samples() as f64;
    y_hat.zip_map(y, |a, b| (a - b) / n)
}

/// Multiplies `g` by the indicator `𝟙{pre ≥ 0}`.
pub fn relu_backward(g: &DenseTensor, pre: &DenseTensor) -> Result<DenseTensor> {
    g.zip_map(pre, |gv, p| if p >= 0.0 { gv } else { 0.0 })
}

fn tucker_backward(
    factors: &[DenseTensor],
    g_out: &DenseTensor,
    pre_activation: Option<&DenseTensor>,
    input: &DenseTensor,
    need_input_grad: bool,
) -> Result<(Option<DenseTensor>, Vec<DenseTensor>)> {
    let grads = tucker_factor_grads(factors, g_out, input)?;
    if !need_input_grad {
        return Ok((None, grads));
    }
    let mut g_in = tucker_apply_transpose(factors, g_out)?;
    if let Some(pre) = pre_activation {
        g_in = relu_backward(&g_in, pre)?;
    }
    Ok((Some(g_in), grads))
}

/// Backward through an expanding Tucker layer.
///
/// `g_out` is `∂ℰ/∂zₙ`, `input` is `aₙ₋₁`. When `pre_activation` is given
/// (`zₙ₋₁`, the tensor that fed the ReLU producing `aₙ₋₁`), the returned
/// input gradient is `∂ℰ/∂zₙ₋₁`; otherwise it is `∂ℰ/∂aₙ₋₁`.
pub fn expand_tucker_backward(
    g_out: &DenseTensor,
    layer: &ExpandTuckerLayer,
    pre_activation: Option<&DenseTensor>,
    input: &DenseTensor,
) -> Result<(DenseTensor, Vec<DenseTensor>)> {
    let (g, d) = tucker_backward(layer.factors(), g_out, pre_activation, input, true)?;
    Ok((g.expect("input gradient requested"), d))
}

/// Backward through a shrinking Tucker layer; mirror of
/// [`expand_tucker_backward`] with `input = sₙ₋₁` and
/// `pre_activation = rₙ₋₁`. The first layer reads `𝒳` directly, so it has no
/// pre-activation.
pub fn shrink_tucker_backward(
    g_out: &DenseTensor,
    layer: &ShrinkTuckerLayer,
    pre_activation: Option<&DenseTensor>,
    input: &DenseTensor,
) -> Result<(DenseTensor, Vec<DenseTensor>)> {
    let (g, d) = tucker_backward(layer.factors(), g_out, pre_activation, input, true)?;
    Ok((g.expect("input gradient requested"), d))
}

/// Backward through the contraction layer: returns `∂ℰ/∂s_{n₁}` and
/// `∂ℰ/∂𝒞`, the latter summed over samples.
pub fn contraction_backward(
    g_out: &DenseTensor,
    layer: &ContractionLayer,
    s_last: &DenseTensor,
) -> Result<(DenseTensor, DenseTensor)> {
    let n = s_last.num_samples();
    if g_out.num_samples() != n || g_out.sample_shape() != layer.output_shape() {
        let mut expected = vec![n];
        expected.extend_from_slice(layer.output_shape());
        return Err(TrnnError::ShapeMismatch {
            expected,
            found: g_out.shape().to_vec(),
        });
    }
    if s_last.sample_shape() != layer.input_shape() {
        let mut expected = vec![n];
        expected.extend_from_slice(layer.input_shape());
        return Err(TrnnError::ShapeMismatch {
            expected,
            found: s_last.shape().to_vec(),
        });
    }
    let p = s_last.sample_len();
    let q = g_out.sample_len();
    use linalg::{gemm, View};
    let mut g_in = DenseTensor::zeros(s_last.shape());
    gemm(
        View::rm(g_out.data(), n, q),
        View::rm_t(layer.core().data(), p, q),
        0.0,
        g_in.data_mut(),
    );
    let mut d_core = DenseTensor::zeros(layer.core().shape());
    gemm(
        View::rm_t(s_last.data(), n, p),
        View::rm(g_out.data(), n, q),
        0.0,
        d_core.data_mut(),
    );
    Ok((g_in, d_core))
}

fn check_cache(model: &TrnnModel, cache: &ForwardCache, y: &DenseTensor) -> Result<()> {
    let n = y.num_samples();
    let want = model.spec().cache_shapes(n);
    let shapes = |v: &[DenseTensor]| v.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>();
    let ok = shapes(&cache.r) == want.r
        && shapes(&cache.s) == want.s
        && shapes(&cache.z) == want.z
        && shapes(&cache.a) == want.a;
    if !ok {
        return Err(TrnnError::StaleCache(
            "cached activations do not match the model's layer shapes for this batch".into(),
        ));
    }
    Ok(())
}

/// Chains the loss gradient back through the decoder, the contraction and
/// the encoder. `cache` must come from a forward pass of `model` on the same
/// batch whose targets are `y`.
pub fn full_backward(model: &TrnnModel, cache: &ForwardCache, y: &DenseTensor) -> Result<GradientSet> {
    check_cache(model, cache, y)?;
    let relu = model.spec().activation == Activation::Relu;

    let mut g = loss_grad(cache.output(), y)?;
    let mut decoder = Vec::with_capacity(model.decoder().len());
    for (n, layer) in model.decoder().iter().enumerate().rev() {
        let pre = relu.then(|| &cache.z[n]);
        let (g_in, d) = expand_tucker_backward(&g, layer, pre, &cache.a[n])?;
        decoder.push(d);
        g = g_in;
    }
    decoder.reverse();

    let n1 = model.encoder().len();
    let (g_s, core) = contraction_backward(&g, model.contraction(), &cache.s[n1])?;
    g = match (n1, relu) {
        (0, _) | (_, false) => g_s,
        _ => relu_backward(&g_s, &cache.r[n1 - 1])?,
    };

    let mut encoder = Vec::with_capacity(n1);
    for (n, layer) in model.encoder().iter().enumerate().rev() {
        let pre = (relu && n > 0).then(|| &cache.r[n - 1]);
        let (g_in, d) = tucker_backward(layer.factors(), &g, pre, &cache.s[n], n > 0)?;
        encoder.push(d);
        if let Some(gi) = g_in {
            g = gi;
        }
    }
    encoder.reverse();

    Ok(GradientSet {
        encoder,
        core,
        decoder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::mse_loss;
    use crate::model::{init_model, NetworkSpec};

    fn random(shape: &[usize], seed: u64) -> DenseTensor {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(17);
        DenseTensor::from_fn(shape, |_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn small_spec(act: Activation) -> NetworkSpec {
        NetworkSpec {
            input_shape: vec![3, 2],
            output_shape: vec![3, 2],
            encoder: vec![vec![2, 2]],
            bottleneck_out: vec![2, 2],
            decoder: vec![vec![3, 2]],
            activation: act,
        }
    }

    #[test]
    fn loss_grad_examples() {
        let y = random(&[2, 3], 1);
        assert!(loss_grad(&y, &y).unwrap().data().iter().all(|&v| v == 0.0));
        let y = DenseTensor::zeros(&[2, 1]);
        let y_hat = DenseTensor::new(vec![2, 1], vec![4.0, 0.0]).unwrap();
        assert_eq!(loss_grad(&y_hat, &y).unwrap().data(), &[2.0, 0.0]);

        // central finite differences of the loss
        let y = random(&[3, 2], 2);
        let y_hat = random(&[3, 2], 3);
        let g = loss_grad(&y_hat, &y).unwrap();
        let h = 1e-5;
        for i in 0..y_hat.len() {
            let mut p = y_hat.clone();
            p.data_mut()[i] += h;
            let mut m = y_hat.clone();
            m.data_mut()[i] -= h;
            let fd = (mse_loss(&p, &y).unwrap() - mse_loss(&m, &y).unwrap()) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn expand_identity_and_dead_relu() {
        let layer = ExpandTuckerLayer::new(vec![DenseTensor::identity(3)]).unwrap();
        let g = random(&[2, 3], 4);
        let pre = DenseTensor::filled(&[2, 3], 0.5);
        let (g_in, _) = expand_tucker_backward(&g, &layer, Some(&pre), &pre).unwrap();
        assert_eq!(g_in, g);

        let layer = ExpandTuckerLayer::new(vec![random(&[4, 3], 5)]).unwrap();
        let g = random(&[2, 4], 6);
        let dead = DenseTensor::filled(&[2, 3], -0.5);
        let (g_in, _) = expand_tucker_backward(&g, &layer, Some(&dead), &dead.map(|_| 0.0)).unwrap();
        assert!(g_in.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shrink_identity_passthrough() {
        let layer = ShrinkTuckerLayer::new(vec![DenseTensor::identity(2), DenseTensor::identity(3)]).unwrap();
        let g = random(&[2, 2, 3], 7);
        let pre = DenseTensor::filled(&[2, 2, 3], 1.0);
        let (g_in, _) = shrink_tucker_backward(&g, &layer, Some(&pre), &pre).unwrap();
        assert_eq!(g_in, g);
    }

    #[test]
    fn first_layer_factor_gradient_by_hand() {
        // r = x Uᵀ for one sample: dU = g_outᵀ · x
        let x = DenseTensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let g_out = DenseTensor::new(vec![1, 2], vec![0.3, -1.0]).unwrap();
        let layer = ShrinkTuckerLayer::new(vec![random(&[2, 3], 8)]).unwrap();
        let (_, d) = shrink_tucker_backward(&g_out, &layer, None, &x).unwrap();
        let want = [0.3, -0.6, 0.15, -1.0, 2.0, -0.5];
        for (a, b) in d[0].data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn contraction_backward_zero_and_selector() {
        let core = DenseTensor::from_fn(&[2, 2, 3], |i| if i == [1, 0, 2] { 1.0 } else { 0.0 });
        let layer = ContractionLayer::new(core, 2).unwrap();
        let s = random(&[2, 2, 2], 9);
        let (g_in, d) = contraction_backward(&DenseTensor::zeros(&[2, 3]), &layer, &s).unwrap();
        assert!(g_in.data().iter().chain(d.data()).all(|&v| v == 0.0));

        let g = random(&[2, 3], 10);
        let (g_in, _) = contraction_backward(&g, &layer, &s).unwrap();
        for i in 0..2 {
            for p in 0..2 {
                for p2 in 0..2 {
                    let want = if (p, p2) == (1, 0) { g.get(&[i, 2]).unwrap() } else { 0.0 };
                    assert_eq!(g_in.get(&[i, p, p2]).unwrap(), want);
                }
            }
        }
    }

    // Literal nested-sum oracle for the contraction gradients.
    #[test]
    fn contraction_backward_matches_index_sums() {
        let core = random(&[2, 3, 2], 11);
        let layer = ContractionLayer::new(core.clone(), 2).unwrap();
        let s = random(&[3, 2, 3], 12);
        let g = random(&[3, 2], 13);
        let (g_in, d) = contraction_backward(&g, &layer, &s).unwrap();
        for i in 0..3 {
            for p in 0..2 {
                for p2 in 0..3 {
                    let want: f64 = (0..2).map(|q| g.get(&[i, q]).unwrap() * core.get(&[p, p2, q]).unwrap()).sum();
                    assert!((g_in.get(&[i, p, p2]).unwrap() - want).abs() < 1e-14);
                }
            }
        }
        for p in 0..2 {
            for p2 in 0..3 {
                for q in 0..2 {
                    let want: f64 = (0..3).map(|i| g.get(&[i, q]).unwrap() * s.get(&[i, p, p2]).unwrap()).sum();
                    assert!((d.get(&[p, p2, q]).unwrap() - want).abs() < 1e-14);
                }
            }
        }
    }

    // Literal nested-sum oracle for a two-mode Tucker factor gradient.
    #[test]
    fn tucker_factor_grad_matches_index_sums() {
        let u2 = random(&[2, 3], 14);
        let u3 = random(&[3, 4], 15);
        let layer = ShrinkTuckerLayer::new(vec![u2.clone(), u3.clone()]).unwrap();
        let s = random(&[2, 3, 4], 16);
        let g = random(&[2, 2, 3], 17);
        let (g_in, d) = shrink_tucker_backward(&g, &layer, None, &s).unwrap();
        for p in 0..2 {
            for pt in 0..3 {
                let mut want = 0.0;
                for i in 0..2 {
                    for q in 0..3 {
                        for qt in 0..4 {
                            want += g.get(&[i, p, q]).unwrap()
                                * s.get(&[i, pt, qt]).unwrap()
                                * u3.at2(q, qt);
                        }
                    }
                }
                assert!((d[0].at2(p, pt) - want).abs() < 1e-13);
            }
        }
        for q in 0..3 {
            for qt in 0..4 {
                let mut want = 0.0;
                for i in 0..2 {
                    for p in 0..2 {
                        for pt in 0..3 {
                            want += g.get(&[i, p, q]).unwrap()
                                * s.get(&[i, pt, qt]).unwrap()
                                * u2.at2(p, pt);
                        }
                    }
                }
                assert!((d[1].at2(q, qt) - want).abs() < 1e-13);
            }
        }
        for i in 0..2 {
            for pt in 0..3 {
                for qt in 0..4 {
                    let mut want = 0.0;
                    for p in 0..2 {
                        for q in 0..3 {
                            want += g.get(&[i, p, q]).unwrap() * u2.at2(p, pt) * u3.at2(q, qt);
                        }
                    }
                    assert!((g_in.get(&[i, pt, qt]).unwrap() - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let m = init_model(&small_spec(Activation::Relu), 3).unwrap();
        let x = random(&[4, 3, 2], 18);
        let cache = m.forward(&x).unwrap();
        let g = full_backward(&m, &cache, cache.output()).unwrap();
        assert!(g.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn gradients_are_linear_in_the_residual() {
        let m = init_model(&small_spec(Activation::Relu), 4).unwrap();
        let x = random(&[4, 3, 2], 19);
        let cache = m.forward(&x).unwrap();
        let y = random(&[4, 3, 2], 20);
        // y2 = ŷ − 2(ŷ − y) doubles the residual
        let y2 = cache.output().zip_map(&y, |a, b| a - 2.0 * (a - b)).unwrap();
        let g1 = full_backward(&m, &cache, &y).unwrap();
        let g2 = full_backward(&m, &cache, &y2).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((2.0 * u - v).abs() <= 1e-12 * v.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let m = init_model(&small_spec(Activation::Relu), 5).unwrap();
        let cache = m.forward(&random(&[4, 3, 2], 21)).unwrap();
        let y = random(&[3, 3, 2], 22);
        assert!(matches!(full_backward(&m, &cache, &y), Err(TrnnError::StaleCache(_))));
    }

    #[test]
    fn directional_derivative_matches_loss_change() {
        let m = init_model(&small_spec(Activation::Identity), 6).unwrap();
        let x = random(&[3, 3, 2], 23);
        let y = random(&[3, 3, 2], 24);
        let cache = m.forward(&x).unwrap();
        let g = full_backward(&m, &cache, &y).unwrap().into_flat();
        let base = mse_loss(cache.output(), &y).unwrap();
        let eps = 1e-6;
        for (pi, grad) in g.iter().enumerate() {
            let mut mm = m.clone();
            mm.parameters_mut()[pi].data_mut()[0] += eps;
            let l = mse_loss(mm.forward(&x).unwrap().output(), &y).unwrap();
            let predicted = eps * grad.data()[0];
            assert!(((l - base) - predicted).abs() < 1e-9, "param {pi}");
        }
    }
}
