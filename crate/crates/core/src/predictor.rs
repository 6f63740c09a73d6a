//! Any fitted model, persisted through the common bundle format.

use std::path::Path;

use crate::baseline::{FlatDenseBaseline, Flattened, PlsModel};
use crate::bundle::{read_bundle, scaler_entries, write_bundle, Bundle, ModelKind, ModelManifest};
use crate::error::{Result, TrnnError};
use crate::model::{save_model, TrnnModel};
use crate::tensor::DenseTensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Predictor {
    /// Tensor network, including the single-layer linear special case.
    Network(TrnnModel),
    Pls(PlsModel),
    FlatDense(FlatDenseBaseline),
}

impl Predictor {
    pub fn kind(&self) -> ModelKind {
        match self {
            Predictor::Network(m) => m.kind(),
            Predictor::Pls(_) => ModelKind::Pls,
            Predictor::FlatDense(_) => ModelKind::FlatDense,
        }
    }

    pub fn predict(&self, x: &DenseTensor) -> Result<DenseTensor> {
        match self {
            Predictor::Network(m) => m.predict(x),
            Predictor::Pls(m) => m.predict(x),
            Predictor::FlatDense(m) => m.predict(x),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        match self {
            Predictor::Network(m) => save_model(m, dir),
            Predictor::Pls(m) => {
                let manifest = ModelManifest {
                    components: Some(m.components()),
                    input_shape: Some(m.shapes.input_shape.clone()),
                    output_shape: Some(m.shapes.output_shape.clone()),
                    ..ModelManifest::new(ModelKind::Pls, 0)
                };
                let mut tensors = vec![("w".to_string(), &m.w), ("b".to_string(), &m.b), ("v".to_string(), &m.v)];
                if let Some((mx, my)) = &m.centering {
                    tensors.push(("x_mean".to_string(), mx));
                    tensors.push(("y_mean".to_string(), my));
                }
                write_bundle(dir, manifest, &tensors)
            }
            Predictor::FlatDense(m) => {
                let manifest = ModelManifest {
                    widths: Some(m.widths.clone()),
                    input_shape: Some(m.shapes.input_shape.clone()),
                    output_shape: Some(m.shapes.output_shape.clone()),
                    ..ModelManifest::new(ModelKind::FlatDense, m.seed)
                };
                let mut tensors = Vec::new();
                for (l, (w, b)) in m.weights.iter().zip(&m.biases).enumerate() {
                    tensors.push((format!("weight_{}", l + 1), w));
                    tensors.push((format!("bias_{}", l + 1), b));
                }
                tensors.extend(scaler_entries("x", m.x_scaler.as_ref()));
                tensors.extend(scaler_entries("y", m.y_scaler.as_ref()));
                write_bundle(dir, manifest, &tensors)
            }
        }
    }

    /// Loads any bundle, dispatching on its `kind`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let b = read_bundle(dir)?;
        match b.manifest.kind {
            ModelKind::Trnn | ModelKind::SlTrnn => Ok(Predictor::Network(TrnnModel::from_bundle(b)?)),
            ModelKind::Pls => load_pls(b).map(Predictor::Pls),
            ModelKind::FlatDense => load_flat_dense(b).map(Predictor::FlatDense),
        }
    }
}

fn shapes(m: &ModelManifest) -> Result<Flattened> {
    Ok(Flattened {
        input_shape: ModelManifest::require(&m.input_shape, "input_shape")?,
        output_shape: ModelManifest::require(&m.output_shape, "output_shape")?,
    })
}

fn mismatch(reason: String) -> TrnnError {
    TrnnError::Format {
        path: "manifest".into(),
        reason,
    }
}

fn load_pls(mut b: Bundle) -> Result<PlsModel> {
    let shapes = shapes(&b.manifest)?;
    let k = ModelManifest::require(&b.manifest.components, "components")?;
    let (p, q) = (shapes.input_width(), shapes.output_width());
    let (w, bm, v) = (b.take("w")?, b.take("b")?, b.take("v")?);
    if w.shape() != [p, k] || bm.shape() != [k, k] || v.shape() != [q, k] {
        return Err(mismatch(format!("factor shapes do not match P={p}, Q={q}, k={k}")));
    }
    let centering = match (b.tensors.remove("x_mean"), b.tensors.remove("y_mean")) {
        (None, None) => None,
        (Some(mx), Some(my)) if mx.shape() == [p] && my.shape() == [q] => Some((mx, my)),
        _ => return Err(mismatch("inconsistent centering tensors".into())),
    };
    Ok(PlsModel {
        w,
        b: bm,
        v,
        centering,
        shapes,
    })
}

fn load_flat_dense(mut b: Bundle) -> Result<FlatDenseBaseline> {
    let shapes = shapes(&b.manifest)?;
    let widths = ModelManifest::require(&b.manifest.widths, "widths")?;
    if widths.len() < 2 || widths[0] != shapes.input_width() || *widths.last().unwrap() != shapes.output_width() {
        return Err(mismatch(format!("widths {widths:?} do not match the data shapes")));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (l, w) in widths.windows(2).enumerate() {
        let (wt, bt) = (b.take(&format!("weight_{}", l + 1))?, b.take(&format!("bias_{}", l + 1))?);
        if wt.shape() != [w[0], w[1]] || bt.shape() != [w[1]] {
            return Err(mismatch(format!("layer {} has the wrong extents", l + 1)));
        }
        weights.push(wt);
        biases.push(bt);
    }
    let x_scaler = b.take_scaler("x")?;
    let y_scaler = b.take_scaler("y")?;
    if x_scaler.as_ref().is_some_and(|s| s.mean.shape() != [widths[0]])
        || y_scaler.as_ref().is_some_and(|s| s.mean.shape() != [*widths.last().unwrap()])
    {
        return Err(mismatch("standardizer extents do not match".into()));
    }
    Ok(FlatDenseBaseline {
        widths,
        weights,
        biases,
        shapes,
        seed: b.manifest.seed,
        x_scaler,
        y_scaler,
    })
}
