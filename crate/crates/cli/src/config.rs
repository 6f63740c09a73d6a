//! The `train` configuration file and its flag overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use trnn::eval::Regressor;
use trnn::model::ScheduleOptions;
use trnn::{NetworkSpec, TrainConfig};

use crate::failure::{CliResult, Failure};

/// Everything `train` needs. Keys not listed here are rejected.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory holding `X.dtf`, `Y.dtf` and optionally `meta`.
    pub data: Option<PathBuf>,
    /// Model bundle directory to write.
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV; defaults to `report.csv` inside `out`.
    pub report: Option<PathBuf>,
    pub seed: Option<u64>,
    pub method: Option<Regressor>,
    /// Rank for `sl_trnn` and `pls`.
    pub k: Option<usize>,
    /// Hidden widths for `flat_dense`.
    pub hidden: Option<Vec<usize>>,
    /// Geometric layer schedule; ignored when `spec` is given.
    pub schedule: Option<ScheduleOptions>,
    /// Full network spec; its shapes must match the data.
    pub spec: Option<NetworkSpec>,
    pub train: Option<TrainConfig>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct TrainOverrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub seed: Option<u64>,
    pub method: Option<Regressor>,
    pub k: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub no_standardize: bool,
}

/// A fully resolved and validated `train` invocation.
#[derive(Clone, Debug)]
pub struct TrainJob {
    pub data: PathBuf,
    pub out: PathBuf,
    pub report: PathBuf,
    pub seed: u64,
    pub method: Regressor,
    pub k: Option<usize>,
    pub hidden: Vec<usize>,
    pub schedule: ScheduleOptions,
    pub spec: Option<NetworkSpec>,
    pub train: TrainConfig,
}

impl TrainJob {
    pub fn resolve(file: RunConfig, flags: TrainOverrides) -> CliResult<Self> {
        let missing = |what: &str| Failure::Config(format!("{what} must be given in the config file or by flag"));
        let data = flags.data.or(file.data).ok_or_else(|| missing("data"))?;
        let out = flags.out.or(file.out).ok_or_else(|| missing("out"))?;
        let seed = flags.seed.or(file.seed).ok_or_else(|| missing("seed"))?;
        let method = flags.method.or(file.method).unwrap_or(Regressor::Trnn);
        let report = flags.report.or(file.report).unwrap_or_else(|| out.join("report.csv"));
        let mut train = match (file.train, method) {
            (Some(t), _) => t,
            (None, Regressor::SlTrnn) => trnn::baseline::sl_trnn_config(seed),
            (None, _) => TrainConfig::default(),
        };
        train.seed = seed;
        if let Some(e) = flags.epochs {
            train.max_epochs = e;
        }
        if let Some(lr) = flags.learning_rate {
            train.optimizer.learning_rate = lr;
        }
        if let Some(b) = flags.batch_size {
            train.batch_size = b;
        }
        if flags.no_standardize {
            train.standardize = false;
        }
        train.validate()?;
        if let Some(spec) = &file.spec {
            spec.validate()?;
        }
        Ok(Self {
            data,
            out,
            report,
            seed,
            method,
            k: flags.k.or(file.k),
            hidden: file.hidden.unwrap_or_else(|| vec![256]),
            schedule: file.schedule.unwrap_or_default(),
            spec: file.spec,
            train,
        })
    }
}
