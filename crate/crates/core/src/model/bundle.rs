use std::path::Path;

use super::TrnnModel;
use crate::bundle::{read_bundle, scaler_entries, write_bundle, Bundle, ModelKind};
use crate::error::{Result, TrnnError};
use crate::layers::{Activation, ContractionLayer, ExpandTuckerLayer, ShrinkTuckerLayer};
use crate::tensor::DenseTensor;

pub use crate::bundle::{ModelManifest, MODEL_FORMAT_VERSION};

fn encoder_name(layer: usize, mode: usize) -> String {
    format!("encoder_{}_mode_{}", layer + 1, mode + 2)
}

fn decoder_name(layer: usize, mode: usize) -> String {
    format!("decoder_{}_mode_{}", layer + 1, mode + 2)
}

impl TrnnModel {
    /// Kind recorded in the manifest: identity-activation networks with one
    /// layer on each side and matrix data are tagged as SL-TRNN.
    pub fn kind(&self) -> ModelKind {
        let s = self.spec();
        if s.activation == Activation::Identity
            && s.encoder.len() == 1
            && s.decoder.len() == 1
            && s.input_shape.len() == 1
            && s.output_shape.len() == 1
        {
            ModelKind::SlTrnn
        } else {
            ModelKind::Trnn
        }
    }

    pub(crate) fn bundle_tensors(&self) -> Vec<(String, &DenseTensor)> {
        let mut out = Vec::new();
        for (n, l) in self.encoder().iter().enumerate() {
            for (k, f) in l.factors().iter().enumerate() {
                out.push((encoder_name(n, k), f));
            }
        }
        out.push(("core".to_string(), self.contraction().core()));
        for (n, l) in self.decoder().iter().enumerate() {
            for (k, f) in l.factors().iter().enumerate() {
                out.push((decoder_name(n, k), f));
            }
        }
        let (sx, sy) = self.scalers();
        out.extend(scaler_entries("x", sx));
        out.extend(scaler_entries("y", sy));
        out
    }

    pub(crate) fn from_bundle(mut b: Bundle) -> Result<Self> {
        let spec = b.manifest.spec.clone().ok_or_else(|| TrnnError::Format {
            path: "manifest".into(),
            reason: "network model bundle lacks a spec".into(),
        })?;
        spec.validate()?;
        let encoder = (0..spec.encoder.len())
            .map(|n| {
                let f = (0..spec.input_shape.len())
                    .map(|k| b.take(&encoder_name(n, k)))
                    .collect::<Result<Vec<_>>>()?;
                ShrinkTuckerLayer::new(f)
            })
            .collect::<Result<Vec<_>>>()?;
        let core = ContractionLayer::new(b.take("core")?, spec.input_shape.len())?;
        let decoder = (0..spec.decoder.len())
            .map(|n| {
                let f = (0..spec.output_shape.len())
                    .map(|k| b.take(&decoder_name(n, k)))
                    .collect::<Result<Vec<_>>>()?;
                ExpandTuckerLayer::new(f)
            })
            .collect::<Result<Vec<_>>>()?;
        let sx = b.take_scaler("x")?;
        let sy = b.take_scaler("y")?;
        let mut model = TrnnModel::from_parts(spec, encoder, core, decoder, b.manifest.seed)?;
        model.set_scalers(sx, sy)?;
        Ok(model)
    }
}

/// Writes `model` as a bundle directory.
pub fn save_model(model: &TrnnModel, dir: impl AsRef<Path>) -> Result<()> {
    let manifest = ModelManifest {
        spec: Some(model.spec().clone()),
        ..ModelManifest::new(model.kind(), model.seed())
    };
    write_bundle(dir, manifest, &model.bundle_tensors())
}

/// Reads a bundle written by [`save_model`]; the result compares equal to
/// the saved model.
pub fn load_model(dir: impl AsRef<Path>) -> Result<TrnnModel> {
    let b = read_bundle(dir)?;
    match b.manifest.kind {
        ModelKind::Trnn | ModelKind::SlTrnn => TrnnModel::from_bundle(b),
        other => Err(TrnnError::Format {
            path: "manifest".into(),
            reason: format!("expected a network model, found {other:?}"),
        }),
    }
}
