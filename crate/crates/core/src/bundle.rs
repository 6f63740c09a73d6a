//! On-disk model bundles: a directory holding a TOML `manifest` plus one
//! `dtf` file per named tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrnnError};
use crate::model::{NetworkSpec, Standardizer};
use crate::tensor::{dtf, DenseTensor};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Trnn,
    SlTrnn,
    Pls,
    FlatDense,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format_version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<NetworkSpec>,
    /// Layer widths of a flat dense baseline, input and output included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    /// Sample shapes of baselines that work on flattened rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_shape: Option<Vec<usize>>,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `manifest` and every tensor (as `<name>.dtf`) into `dir`,
/// creating it if needed. The manifest's tensor table is rebuilt from
/// `tensors`.
pub fn write_bundle(
    dir: impl AsRef<Path>,
    mut manifest: ModelManifest,
    tensors: &[(String, &DenseTensor)],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| TrnnError::io(dir, e))?;
    manifest.tensors = tensors
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
        })
        .collect();
    for (name, t) in tensors {
        dtf::write(dir.join(format!("{name}.dtf")), t)?;
    }
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| TrnnError::format(dir.join(MANIFEST), e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| TrnnError::io(&path, e))
}

/// Loaded bundle: manifest plus tensors keyed by name.
pub struct Bundle {
    pub manifest: ModelManifest,
    pub tensors: BTreeMap<String, DenseTensor>,
}

impl ModelManifest {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            kind,
            seed,
            spec: None,
            widths: None,
            components: None,
            input_shape: None,
            output_shape: None,
            tensors: Vec::new(),
        }
    }

    pub(crate) fn require<T: Clone>(field: &Option<T>, name: &str) -> Result<T> {
        field.clone().ok_or_else(|| TrnnError::Format {
            path: "manifest".into(),
            reason: format!("missing field {name}"),
        })
    }
}

impl Bundle {
    pub fn take(&mut self, name: &str) -> Result<DenseTensor> {
        self.tensors.remove(name).ok_or_else(|| TrnnError::Format {
            path: name.into(),
            reason: "tensor missing from bundle".into(),
        })
    }

    pub(crate) fn take_scaler(&mut self, prefix: &str) -> Result<Option<Standardizer>> {
        let (m, s) = (format!("{prefix}_mean"), format!("{prefix}_std"));
        match (self.tensors.contains_key(&m), self.tensors.contains_key(&s)) {
            (false, false) => Ok(None),
            (true, true) => Ok(Some(Standardizer {
                mean: self.take(&m)?,
                std: self.take(&s)?,
            })),
            _ => Err(TrnnError::Format {
                path: prefix.into(),
                reason: "standardizer needs both mean and std".into(),
            }),
        }
    }
}

pub(crate) fn scaler_entries<'a>(
    prefix: &str,
    scaler: Option<&'a Standardizer>,
) -> Vec<(String, &'a DenseTensor)> {
    scaler
        .map(|s| {
            vec![
                (format!("{prefix}_mean"), &s.mean),
                (format!("{prefix}_std"), &s.std),
            ]
        })
        .unwrap_or_default()
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| TrnnError::io(&path, e))?;
    let manifest: ModelManifest =
        toml::from_str(&text).map_err(|e| TrnnError::format(&path, e.to_string()))?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(TrnnError::Version {
            expected: MODEL_FORMAT_VERSION,
            found: manifest.format_version,
        });
    }
    let mut tensors = BTreeMap::new();
    for entry in &manifest.tensors {
        let file = dir.join(format!("{}.dtf", entry.name));
        let t = dtf::read(&file)?;
        if t.shape() != entry.shape.as_slice() {
            return Err(TrnnError::format(
                &file,
                format!(
                    "manifest declares extents {:?} but the file holds {:?}",
                    entry.shape,
                    t.shape()
                ),
            ));
        }
        if !t.is_finite() {
            return Err(TrnnError::format(&file, "non-finite parameter values"));
        }
        if tensors.insert(entry.name.clone(), t).is_some() {
            return Err(TrnnError::format(&path, format!("duplicate tensor {}", entry.name)));
        }
    }
    Ok(Bundle { manifest, tensors })
}

/// Reads only the manifest, e.g. to dispatch on the model kind.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<ModelManifest> {
    Ok(read_bundle(dir)?.manifest)
}
