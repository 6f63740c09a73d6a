//! Forward semantics of the network's layer types.
//!
//! Every layer leaves the leading (sample) mode untouched. Tucker layers act
//! on modes `2..=order` through one factor matrix per mode; the contraction
//! layer maps each sample's slice through a learnable core and is the only
//! place where the tensor order can change.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrnnError};
use crate::tensor::{contract_samples, frobenius_norm, mode_gram, mode_product_axis, DenseTensor};

/// Elementwise nonlinearity used between Tucker layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    /// No nonlinearity; turns the network into a multilinear map.
    Identity,
}

impl Activation {
    pub fn apply(self, t: &DenseTensor) -> DenseTensor {
        match self {
            Activation::Relu => relu_forward(t),
            Activation::Identity => t.clone(),
        }
    }
}

/// Elementwise `max(t, 0)`.
pub fn relu_forward(t: &DenseTensor) -> DenseTensor {
    t.map(|v| v.max(0.0))
}

/// `(1 / 2N) · ‖ŷ − y‖²_F` where `N` is the leading extent.
pub fn mse_loss(y_hat: &DenseTensor, y: &DenseTensor) -> Result<f64> {
    let diff = y_hat.sub(y)?;
    let n = y.num_samples() as f64;
    Ok(frobenius_norm(&diff).powi(2) / (2.0 * n))
}

/// Shared mechanics of the two Tucker layer types: one factor per
/// non-sample mode, applied as consecutive mode products.
fn tucker_apply(factors: &[DenseTensor], input: &DenseTensor) -> Result<DenseTensor> {
    check_arity(factors, input)?;
    factors
        .iter()
        .enumerate()
        .try_fold(input.clone(), |acc, (k, f)| mode_product_axis(&acc, f, k + 1))
}

fn check_arity(factors: &[DenseTensor], input: &DenseTensor) -> Result<()> {
    if input.order() != factors.len() + 1 {
        return Err(TrnnError::Order(format!(
            "layer has {} factors but input has order {}",
            factors.len(),
            input.order()
        )));
    }
    Ok(())
}

/// Gradient w.r.t. the input of a Tucker map: `g ×₂ F₂ᵀ ⋯`.
pub(crate) fn tucker_apply_transpose(
    factors: &[DenseTensor],
    g_out: &DenseTensor,
) -> Result<DenseTensor> {
    check_arity(factors, g_out)?;
    factors.iter().enumerate().try_fold(g_out.clone(), |acc, (k, f)| {
        mode_product_axis(&acc, &f.transpose()?, k + 1)
    })
}

/// Per-factor gradients of a Tucker map: `dF_k = G₍ₖ₎ · T_k₍ₖ₎ᵀ` with `T_k`
/// the input multiplied by every factor except `F_k`.
pub(crate) fn tucker_factor_grads(
    factors: &[DenseTensor],
    g_out: &DenseTensor,
    input: &DenseTensor,
) -> Result<Vec<DenseTensor>> {
    check_arity(factors, input)?;
    let mut grads = Vec::with_capacity(factors.len());
    // prefix = input with factors 0..k applied
    let mut prefix = input.clone();
    for k in 0..factors.len() {
        let mut partial = prefix.clone();
        for (j, f) in factors.iter().enumerate().skip(k + 1) {
            partial = mode_product_axis(&partial, f, j + 1)?;
        }
        grads.push(mode_gram(g_out, &partial, k + 1)?);
        prefix = mode_product_axis(&prefix, &factors[k], k + 1)?;
    }
    Ok(grads)
}

fn validate_factors(factors: &[DenseTensor], shrinking: bool) -> Result<()> {
    if factors.is_empty() {
        return Err(TrnnError::InvalidSpec(
            "a Tucker layer needs at least one factor".into(),
        ));
    }
    for (k, f) in factors.iter().enumerate() {
        if f.order() != 2 {
            return Err(TrnnError::Order(format!(
                "factor for mode {} must be a matrix",
                k + 2
            )));
        }
        let (rows, cols) = (f.shape()[0], f.shape()[1]);
        let ok = if shrinking { rows <= cols } else { rows >= cols };
        if !ok {
            return Err(TrnnError::InvalidSpec(format!(
                "factor for mode {} is {rows}×{cols}, which is not {}",
                k + 2,
                if shrinking { "shrinking" } else { "expanding" }
            )));
        }
        if !f.is_finite() {
            return Err(TrnnError::InvalidSpec(format!(
                "factor for mode {} has non-finite entries",
                k + 2
            )));
        }
    }
    Ok(())
}

/// Encoder layer: `r = s ×₂ U₂ ⋯ ×ₗ Uₗ` with every `U_k` of shape
/// `P_k^(n) × P_k^(n−1)`, `P_k^(n) ≤ P_k^(n−1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShrinkTuckerLayer {
    factors: Vec<DenseTensor>,
}

impl ShrinkTuckerLayer {
    /// `factors[k]` acts on mode `k + 2`.
    pub fn new(factors: Vec<DenseTensor>) -> Result<Self> {
        validate_factors(&factors, true)?;
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[DenseTensor] {
        &self.factors
    }

    pub(crate) fn factors_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.factors
    }

    pub fn forward(&self, s_prev: &DenseTensor) -> Result<DenseTensor> {
        tucker_apply(&self.factors, s_prev)
    }
}

/// Decoder layer: `z = a ×₂ W₂ ⋯ ×_d W_d` with every `W_k` of shape
/// `Q_k^(n) × Q_k^(n−1)`, `Q_k^(n) ≥ Q_k^(n−1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandTuckerLayer {
    factors: Vec<DenseTensor>,
}

impl ExpandTuckerLayer {
    pub fn new(factors: Vec<DenseTensor>) -> Result<Self> {
        validate_factors(&factors, false)?;
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[DenseTensor] {
        &self.factors
    }

    pub(crate) fn factors_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.factors
    }

    pub fn forward(&self, a_prev: &DenseTensor) -> Result<DenseTensor> {
        tucker_apply(&self.factors, a_prev)
    }
}

/// Bottleneck layer holding the core `𝒞` of shape `(P₂…Pₗ, Q₂…Q_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionLayer {
    core: DenseTensor,
    input_modes: usize,
}

impl ContractionLayer {
    /// `input_modes` is the number of leading core modes contracted against
    /// each sample (`ℓ − 1`); the rest form the output sample shape.
    pub fn new(core: DenseTensor, input_modes: usize) -> Result<Self> {
        if input_modes == 0 || core.order() <= input_modes {
            return Err(TrnnError::Order(format!(
                "core of order {} cannot split into {input_modes} input modes plus at least one output mode",
                core.order()
            )));
        }
        Ok(Self { core, input_modes })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub(crate) fn core_mut(&mut self) -> &mut DenseTensor {
        &mut self.core
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.core.shape()[..self.input_modes]
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.core.shape()[self.input_modes..]
    }

    /// `z₀[i] = s[i] ∗ 𝒞` for every sample `i`.
    pub fn forward(&self, s_last: &DenseTensor) -> Result<DenseTensor> {
        if s_last.order() != self.input_modes + 1 {
            return Err(TrnnError::Order(format!(
                "contraction expects order {}, got {}",
                self.input_modes + 1,
                s_last.order()
            )));
        }
        contract_samples(s_last, &self.core)
    }
}

/// Everything backpropagation needs from one forward pass.
///
/// Encoder side: `s[0] = X`, `r[n-1]` is the n-th Tucker output and
/// `s[n] = act(r[n-1])`. Decoder side: `z[0]` is the contraction output,
/// `a[n] = act(z[n])` for `n < n₂`, and `z[n₂] = Ŷ`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub r: Vec<DenseTensor>,
    pub s: Vec<DenseTensor>,
    pub z: Vec<DenseTensor>,
    pub a: Vec<DenseTensor>,
}

impl ForwardCache {
    /// The network output `Ŷ`.
    pub fn output(&self) -> &DenseTensor {
        self.z.last().expect("forward cache always holds z₀")
    }

    pub fn into_output(mut self) -> DenseTensor {
        self.z.pop().expect("forward cache always holds z₀")
    }
}
