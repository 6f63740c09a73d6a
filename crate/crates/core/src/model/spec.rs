use serde::{Deserialize, Serialize};

use crate::error::{Result, TrnnError};
use crate::layers::Activation;

/// Declarative description of a network's layer sequence.
///
/// Shapes exclude the sample mode. `encoder[n]` lists the per-mode extents
/// after the `(n+1)`-th shrinking layer; `bottleneck_out` is the sample
/// shape produced by the contraction layer (`Q^(0)`); `decoder[n]` lists the
/// extents after the `(n+1)`-th expanding layer, ending at `output_shape`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    #[serde(default)]
    pub encoder: Vec<Vec<usize>>,
    pub bottleneck_out: Vec<usize>,
    #[serde(default)]
    pub decoder: Vec<Vec<usize>>,
    #[serde(default)]
    pub activation: Activation,
}

/// Per-layer tensor shapes (sample mode included) of one forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheShapes {
    pub r: Vec<Vec<usize>>,
    pub s: Vec<Vec<usize>>,
    pub z: Vec<Vec<usize>>,
    pub a: Vec<Vec<usize>>,
}

/// Knobs for [`NetworkSpec::geometric`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOptions {
    #[serde(default = "default_depth")]
    pub encoder_layers: usize,
    #[serde(default = "default_depth")]
    pub decoder_layers: usize,
    /// Bottleneck extents on the input side; defaults per mode to
    /// `max(2, ⌈extent / 8⌉)` (never above the extent itself), or to the
    /// data shape when there are no layers on that side.
    #[serde(default)]
    pub bottleneck_in: Option<Vec<usize>>,
    #[serde(default)]
    pub bottleneck_out: Option<Vec<usize>>,
    #[serde(default)]
    pub activation: Activation,
}

fn default_depth() -> usize {
    2
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            encoder_layers: 2,
            decoder_layers: 2,
            bottleneck_in: None,
            bottleneck_out: None,
            activation: Activation::Relu,
        }
    }
}

/// Default bottleneck extent for a mode of the given size.
pub fn default_bottleneck(extent: usize) -> usize {
    extent.div_ceil(8).max(2).min(extent)
}

/// Geometric interpolation from `from` (step 0) to `to` (step `steps`).
fn geometric_step(from: usize, to: usize, step: usize, steps: usize) -> usize {
    if step == steps {
        return to;
    }
    let ratio = to as f64 / from as f64;
    let v = from as f64 * ratio.powf(step as f64 / steps as f64);
    let (lo, hi) = (from.min(to), from.max(to));
    (v.round() as usize).clamp(lo, hi)
}

fn non_increasing(prev: &[usize], next: &[usize]) -> bool {
    prev.iter().zip(next).all(|(p, n)| n <= p)
}

impl NetworkSpec {
    /// Builds a spec whose per-mode extents shrink (resp. grow) geometrically
    /// between the data extents and the bottleneck.
    pub fn geometric(
        input_shape: &[usize],
        output_shape: &[usize],
        options: &ScheduleOptions,
    ) -> Result<Self> {
        let b_in = options
            .bottleneck_in
            .clone()
            .unwrap_or_else(|| match options.encoder_layers {
                0 => input_shape.to_vec(),
                _ => input_shape.iter().map(|&e| default_bottleneck(e)).collect(),
            });
        let b_out = options
            .bottleneck_out
            .clone()
            .unwrap_or_else(|| match options.decoder_layers {
                0 => output_shape.to_vec(),
                _ => output_shape.iter().map(|&e| default_bottleneck(e)).collect(),
            });
        if b_in.len() != input_shape.len() || b_out.len() != output_shape.len() {
            return Err(TrnnError::InvalidSpec(
                "bottleneck extents must have one entry per data mode".into(),
            ));
        }
        let n1 = options.encoder_layers;
        let n2 = options.decoder_layers;
        if n1 == 0 && b_in != input_shape {
            return Err(TrnnError::InvalidSpec(
                "without encoder layers the input bottleneck must equal the input shape".into(),
            ));
        }
        let encoder = (1..=n1)
            .map(|n| {
                input_shape
                    .iter()
                    .zip(&b_in)
                    .map(|(&e, &b)| geometric_step(e, b, n, n1))
                    .collect()
            })
            .collect();
        let decoder = (1..=n2)
            .map(|n| {
                output_shape
                    .iter()
                    .zip(&b_out)
                    .map(|(&e, &b)| geometric_step(b, e, n, n2))
                    .collect()
            })
            .collect();
        let spec = Self {
            input_shape: input_shape.to_vec(),
            output_shape: output_shape.to_vec(),
            encoder,
            bottleneck_out: b_out,
            decoder,
            activation: options.activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrnnError::InvalidSpec(m));
        if self.input_shape.is_empty() || self.output_shape.is_empty() {
            return bad("input and output need at least one non-sample mode".into());
        }
        let all = std::iter::once(&self.input_shape)
            .chain(std::iter::once(&self.output_shape))
            .chain(std::iter::once(&self.bottleneck_out))
            .chain(&self.encoder)
            .chain(&self.decoder);
        for shape in all {
            if shape.contains(&0) {
                return bad(format!("zero extent in {shape:?}"));
            }
        }
        let mut prev = &self.input_shape;
        for (n, layer) in self.encoder.iter().enumerate() {
            if layer.len() != self.input_shape.len() {
                return bad(format!("encoder layer {} has the wrong number of modes", n + 1));
            }
            if !non_increasing(prev, layer) {
                return bad(format!("encoder layer {} grows a mode: {prev:?} -> {layer:?}", n + 1));
            }
            prev = layer;
        }
        if self.bottleneck_out.len() != self.output_shape.len() {
            return bad("bottleneck_out must have one entry per output mode".into());
        }
        let mut prev = &self.bottleneck_out;
        for (n, layer) in self.decoder.iter().enumerate() {
            if layer.len() != self.output_shape.len() {
                return bad(format!("decoder layer {} has the wrong number of modes", n + 1));
            }
            if !non_increasing(layer, prev) {
                return bad(format!("decoder layer {} shrinks a mode: {prev:?} -> {layer:?}", n + 1));
            }
            prev = layer;
        }
        if prev != &self.output_shape {
            return bad(format!(
                "decoder ends at {prev:?} but the output shape is {:?}",
                self.output_shape
            ));
        }
        Ok(())
    }

    pub fn encoder_layers(&self) -> usize {
        self.encoder.len()
    }

    pub fn decoder_layers(&self) -> usize {
        self.decoder.len()
    }

    /// Sample shape entering the contraction layer (`P^(n₁)`).
    pub fn bottleneck_in(&self) -> &[usize] {
        self.encoder.last().unwrap_or(&self.input_shape)
    }

    /// Factor shapes `(P_k^(n), P_k^(n−1))` of every encoder layer.
    pub fn encoder_factor_shapes(&self) -> Vec<Vec<[usize; 2]>> {
        let mut prev = &self.input_shape;
        self.encoder
            .iter()
            .map(|layer| {
                let shapes = layer.iter().zip(prev).map(|(&r, &c)| [r, c]).collect();
                prev = layer;
                shapes
            })
            .collect()
    }

    /// Factor shapes `(Q_k^(n), Q_k^(n−1))` of every decoder layer.
    pub fn decoder_factor_shapes(&self) -> Vec<Vec<[usize; 2]>> {
        let mut prev = &self.bottleneck_out;
        self.decoder
            .iter()
            .map(|layer| {
                let shapes = layer.iter().zip(prev).map(|(&r, &c)| [r, c]).collect();
                prev = layer;
                shapes
            })
            .collect()
    }

    pub fn core_shape(&self) -> Vec<usize> {
        let mut s = self.bottleneck_in().to_vec();
        s.extend_from_slice(&self.bottleneck_out);
        s
    }

    /// Total number of learnable scalars.
    pub fn parameter_count(&self) -> usize {
        let factors: usize = self
            .encoder_factor_shapes()
            .iter()
            .chain(&self.decoder_factor_shapes())
            .flatten()
            .map(|[r, c]| r * c)
            .sum();
        factors + self.core_shape().iter().product::<usize>()
    }

    /// Shapes of every cached tensor for a batch of `n` samples, computed
    /// without touching data.
    pub fn cache_shapes(&self, n: usize) -> CacheShapes {
        let with_n = |s: &[usize]| {
            let mut v = vec![n];
            v.extend_from_slice(s);
            v
        };
        let r: Vec<_> = self.encoder.iter().map(|l| with_n(l)).collect();
        let mut s = vec![with_n(&self.input_shape)];
        s.extend(r.iter().cloned());
        let mut z = vec![with_n(&self.bottleneck_out)];
        z.extend(self.decoder.iter().map(|l| with_n(l)));
        let a = z[..z.len() - 1].to_vec();
        CacheShapes { r, s, z, a }
    }
}
