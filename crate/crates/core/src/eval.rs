//! Relative error metric, replicated benchmark sweeps and metric export.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_flat_dense, fit_pls_centered, fit_sl_trnn, Flattened};
use crate::bundle::ModelKind;
use crate::datagen::{generate, generate_held_out, Dataset, Generator};
use crate::error::{Result, TrnnError};
use crate::model::{init_model, train, LrSchedule, NetworkSpec, ScheduleOptions, TrainConfig};
use crate::optimizer::OptimizerConfig;
use crate::predictor::Predictor;
use crate::tensor::DenseTensor;

/// `‖Ŷ − Y‖²_F / ‖Y‖²_F`: a ratio of squared norms.
pub fn rmse(y_hat: &DenseTensor, y: &DenseTensor) -> Result<f64> {
    y_hat.expect_shape(y.shape())?;
    let den: f64 = y.data().iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(TrnnError::ZeroNormReference);
    }
    let num: f64 = y_hat.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    Trnn,
    SlTrnn,
    Pls,
    FlatDense,
}

impl Regressor {
    pub const ALL: [Regressor; 4] = [Regressor::Trnn, Regressor::SlTrnn, Regressor::Pls, Regressor::FlatDense];

    pub fn name(self) -> &'static str {
        match self {
            Regressor::Trnn => "trnn",
            Regressor::SlTrnn => "sl_trnn",
            Regressor::Pls => "pls",
            Regressor::FlatDense => "flat_dense",
        }
    }
}

impl std::str::FromStr for Regressor {
    type Err = TrnnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TrnnError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

impl From<ModelKind> for Regressor {
    fn from(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Trnn => Regressor::Trnn,
            ModelKind::SlTrnn => Regressor::SlTrnn,
            ModelKind::Pls => Regressor::Pls,
            ModelKind::FlatDense => Regressor::FlatDense,
        }
    }
}

impl std::fmt::Display for Regressor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrnnMethodConfig {
    /// Used when no explicit `spec` is given; the data extents fill in the
    /// input and output shapes.
    pub schedule: ScheduleOptions,
    pub spec: Option<NetworkSpec>,
    pub train: TrainConfig,
}

impl TrnnMethodConfig {
    /// No encoder layers, one decoder layer from a small output core, and
    /// [`network_train_config`].
    pub fn tuned(generator: Generator, grid_i: usize, grid_j: usize) -> Self {
        let bottleneck_out = match generator {
            Generator::Waterdrop => Some(vec![grid_i.min(8), grid_j.min(8), 2]),
            Generator::Helicoid => Some(vec![2, grid_i.min(12), grid_j.min(12)]),
            _ => None,
        };
        Self {
            schedule: ScheduleOptions {
                encoder_layers: 0,
                decoder_layers: 1,
                bottleneck_in: None,
                bottleneck_out,
                ..ScheduleOptions::default()
            },
            spec: None,
            train: network_train_config(),
        }
    }
}

/// Adam at 1e-2 in batches of 100, halving the rate on plateaus, for at most
/// 3000 epochs or 100 000 samples.
pub fn network_train_config() -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerConfig::adam(1e-2),
        batch_size: 100,
        max_epochs: 3000,
        sample_budget: Some(100_000),
        tol: 1e-6,
        patience: 200,
        lr_schedule: LrSchedule::Plateau {
            factor: 0.5,
            patience: 100,
            threshold: 1e-3,
            min_lr: 1e-5,
        },
        ..TrainConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearMethodConfig {
    /// Rank; `None` means `min(4, P, Q, N)`.
    pub k: Option<usize>,
    pub train: TrainConfig,
}

impl Default for LinearMethodConfig {
    fn default() -> Self {
        Self {
            k: None,
            train: network_train_config(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlsMethodConfig {
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatDenseMethodConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Restrict this method to these noise levels; all when absent.
    pub only_sigma: Option<Vec<f64>>,
}

impl Default for FlatDenseMethodConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            train: TrainConfig::default(),
            only_sigma: None,
        }
    }
}

fn default_replications() -> usize {
    20
}
fn default_test_size() -> usize {
    200
}
fn default_grid() -> usize {
    20
}
fn default_jobs() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn all_methods() -> Vec<Regressor> {
    Regressor::ALL.to_vec()
}

/// A replicated sweep over `(N, σ)` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPlan {
    pub generator: Generator,
    #[serde(default = "all_methods")]
    pub methods: Vec<Regressor>,
    pub n: Vec<usize>,
    pub sigma: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Surface grid; feature widths for the linear generator.
    #[serde(default = "default_grid")]
    pub grid_i: usize,
    #[serde(default = "default_grid")]
    pub grid_j: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Record wall-clock fit times; when off every time is written as 0.
    #[serde(default = "yes")]
    pub timings: bool,
    /// Leave `N` and `σ` out of the replication seed so that cells share
    /// their underlying random draws.
    #[serde(default)]
    pub paired_cells: bool,
    #[serde(default)]
    pub trnn: TrnnMethodConfig,
    #[serde(default)]
    pub sl_trnn: LinearMethodConfig,
    #[serde(default)]
    pub pls: PlsMethodConfig,
    #[serde(default)]
    pub flat_dense: FlatDenseMethodConfig,
}

impl BenchmarkPlan {
    /// Reduced protocol: 20×20 grid, 20 replications, 200 test samples,
    /// `N ∈ {100, 1000}`, `σ ∈ {0.01, 0.1}`.
    pub fn desk(generator: Generator) -> Self {
        Self {
            generator,
            methods: all_methods(),
            n: vec![100, 1000],
            sigma: vec![0.01, 0.1],
            replications: 20,
            test_size: 200,
            grid_i: 20,
            grid_j: 20,
            base_seed: 0,
            jobs: 1,
            timings: true,
            paired_cells: false,
            trnn: TrnnMethodConfig::tuned(generator, 20, 20),
            sl_trnn: LinearMethodConfig::default(),
            pls: PlsMethodConfig::default(),
            flat_dense: FlatDenseMethodConfig::default(),
        }
    }

    /// Full protocol: 50×50 grid, 100 replications, 1000 test samples,
    /// `N ∈ {100, 1000, 10000}`, `σ ∈ {0.01, 0.1, 1}`.
    pub fn full(generator: Generator) -> Self {
        Self {
            n: vec![100, 1000, 10_000],
            sigma: vec![0.01, 0.1, 1.0],
            replications: 100,
            test_size: 1000,
            grid_i: 50,
            grid_j: 50,
            trnn: TrnnMethodConfig::tuned(generator, 50, 50),
            ..Self::desk(generator)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| TrnnError::InvalidConfig(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrnnError::InvalidConfig(m));
        if self.generator == Generator::External {
            return bad("benchmarks need a synthetic generator".into());
        }
        if self.methods.is_empty() || self.n.is_empty() || self.sigma.is_empty() {
            return bad("methods, n and sigma must be non-empty".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods must not repeat".into());
        }
        if self.replications == 0 || self.test_size == 0 || self.jobs == 0 {
            return bad("replications, test_size and jobs must be at least 1".into());
        }
        if self.n.contains(&0) {
            return bad("every N must be at least 1".into());
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("every sigma must be finite and ≥ 0".into());
        }
        self.trnn.train.validate()?;
        self.sl_trnn.train.validate()?;
        self.flat_dense.train.validate()?;
        Ok(())
    }

    fn runs(&self, method: Regressor, sigma: f64) -> bool {
        match (method, &self.flat_dense.only_sigma) {
            (Regressor::FlatDense, Some(only)) => only.contains(&sigma),
            _ => true,
        }
    }
}

/// FNV-1a over `(base_seed, generator, N, σ bits, rep)`, little-endian.
pub fn replication_seed(base_seed: u64, generator: Generator, n: usize, sigma: f64, rep: usize) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&base_seed.to_le_bytes());
    h.write(generator.name().as_bytes());
    h.write(&(n as u64).to_le_bytes());
    h.write(&sigma.to_bits().to_le_bytes());
    h.write(&(rep as u64).to_le_bytes());
    h.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Regressor,
    pub generator: Generator,
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma: f64,
    pub rep: usize,
    pub seed: u64,
    pub rmse: f64,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: Regressor,
    pub n: usize,
    pub sigma: f64,
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<FailureRecord>,
}

fn rank(cfg: Option<usize>, p: usize, q: usize, n: usize) -> usize {
    cfg.unwrap_or_else(|| 4.min(p).min(q).min(n))
}

/// Fits `method` on `train` with `seed` overriding every configured seed.
pub fn fit_method(plan: &BenchmarkPlan, method: Regressor, train_set: &Dataset, seed: u64) -> Result<Predictor> {
    let (x, y) = (&train_set.x, &train_set.y);
    match method {
        Regressor::Trnn => {
            let spec = match &plan.trnn.spec {
                Some(s) => s.clone(),
                None => NetworkSpec::geometric(x.sample_shape(), y.sample_shape(), &plan.trnn.schedule)?,
            };
            let mut model = init_model(&spec, seed)?;
            let cfg = TrainConfig { seed, ..plan.trnn.train.clone() };
            train(&mut model, x, y, &cfg)?;
            Ok(Predictor::Network(model))
        }
        Regressor::SlTrnn => {
            let shapes = Flattened::of(x, y)?;
            let (xf, yf) = (shapes.flatten_input(x)?, shapes.flatten_output(y)?);
            let k = rank(plan.sl_trnn.k, shapes.input_width(), shapes.output_width(), x.num_samples());
            let cfg = TrainConfig { seed, ..plan.sl_trnn.train.clone() };
            let (m, _) = fit_sl_trnn(&xf, &yf, k, &cfg)?;
            Ok(Predictor::Network(m.model))
        }
        Regressor::Pls => {
            let shapes = Flattened::of(x, y)?;
            let k = rank(plan.pls.k, shapes.input_width(), shapes.output_width(), x.num_samples());
            Ok(Predictor::Pls(fit_pls_centered(x, y, k)?))
        }
        Regressor::FlatDense => {
            let cfg = TrainConfig { seed, ..plan.flat_dense.train.clone() };
            Ok(Predictor::FlatDense(fit_flat_dense(x, y, &plan.flat_dense.hidden, &cfg)?.0))
        }
    }
}

fn predict_method(method: Regressor, model: &Predictor, x: &DenseTensor, y_shape: &[usize]) -> Result<DenseTensor> {
    match method {
        Regressor::SlTrnn => {
            let xf = x.reshape(&[x.num_samples(), x.sample_len()])?;
            model.predict(&xf)?.reshape(y_shape)
        }
        _ => model.predict(x),
    }
}

struct Task {
    n: usize,
    sigma: f64,
    rep: usize,
}

type TaskResult = (Vec<MetricsRecord>, Vec<FailureRecord>);

fn run_task(plan: &BenchmarkPlan, task: &Task, progress: &(dyn Fn(&MetricsRecord) + Sync)) -> TaskResult {
    let (n_key, sigma_key) = if plan.paired_cells { (0, 0.0) } else { (task.n, task.sigma) };
    let seed = replication_seed(plan.base_seed, plan.generator, n_key, sigma_key, task.rep);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let fail = |method, error: String| FailureRecord {
        method,
        n: task.n,
        sigma: task.sigma,
        rep: task.rep,
        seed,
        error,
    };
    let data = generate(plan.generator, task.n, task.sigma, plan.grid_i, plan.grid_j, seed).and_then(|tr| {
        Ok((tr, generate_held_out(plan.generator, plan.test_size, task.sigma, plan.grid_i, plan.grid_j, seed)?))
    });
    let (train_set, test_set) = match data {
        Ok(d) => d,
        Err(e) => {
            for &m in &plan.methods {
                failures.push(fail(m, e.to_string()));
            }
            return (records, failures);
        }
    };
    for &method in &plan.methods {
        if !plan.runs(method, task.sigma) {
            continue;
        }
        let start = Instant::now();
        let fitted = fit_method(plan, method, &train_set, seed);
        let seconds = start.elapsed().as_secs_f64();
        let result = fitted
            .and_then(|m| predict_method(method, &m, &test_set.x, test_set.y.shape()))
            .and_then(|pred| rmse(&pred, &test_set.y));
        match result {
            Ok(r) if r.is_finite() => {
                let rec = MetricsRecord {
                    method,
                    generator: plan.generator,
                    n: task.n,
                    sigma: task.sigma,
                    rep: task.rep,
                    seed,
                    rmse: r,
                    train_seconds: if plan.timings { seconds } else { 0.0 },
                };
                progress(&rec);
                records.push(rec);
            }
            Ok(r) => failures.push(fail(method, format!("non-finite rmse {r}"))),
            Err(e) => failures.push(fail(method, e.to_string())),
        }
    }
    (records, failures)
}

/// Runs every `(N, σ, replication)` task, fitting each method on freshly
/// generated training data and scoring it on an independent test set.
/// Output order is fixed by the plan, whatever the worker count.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkOutcome> {
    run_benchmark_with(plan, &|_| {})
}

/// As [`run_benchmark`], calling `progress` after every scored fit.
pub fn run_benchmark_with(plan: &BenchmarkPlan, progress: &(dyn Fn(&MetricsRecord) + Sync)) -> Result<BenchmarkOutcome> {
    plan.validate()?;
    let mut tasks = Vec::new();
    for &n in &plan.n {
        for &sigma in &plan.sigma {
            for rep in 0..plan.replications {
                tasks.push(Task { n, sigma, rep });
            }
        }
    }
    let results: Mutex<Vec<Option<TaskResult>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = plan.jobs.min(tasks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let r = run_task(plan, &tasks[i], progress);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let mut out = BenchmarkOutcome::default();
    for r in results.into_inner().expect("no worker panicked") {
        let (rec, fail) = r.expect("every task ran");
        out.records.extend(rec);
        out.failures.extend(fail);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator; 0 for one value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile with linear interpolation between order statistics at
/// position `p·(n − 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    (1.0 - f) * sorted[lo] + f * sorted[hi]
}

impl Stats {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            count: n,
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
            mean,
            std,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Regressor,
    pub generator: Generator,
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma: f64,
    pub rmse: Stats,
    pub train_seconds: Stats,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub cells: Vec<CellSummary>,
    pub failures: Vec<FailureRecord>,
    pub records: Vec<MetricsRecord>,
}

impl BenchmarkSummary {
    pub fn cell(&self, method: Regressor, n: usize, sigma: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.n == n && c.sigma == sigma)
    }

    pub fn median(&self, method: Regressor, n: usize, sigma: f64) -> Option<f64> {
        self.cell(method, n, sigma).map(|c| c.rmse.median)
    }

    /// Median RMSE table, one row per method and one column per cell.
    pub fn median_table(&self) -> String {
        let mut methods: Vec<Regressor> = self.cells.iter().map(|c| c.method).collect();
        methods.sort();
        methods.dedup();
        let mut cells: Vec<(usize, f64)> = self.cells.iter().map(|c| (c.n, c.sigma)).collect();
        cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        cells.dedup();
        let mut out = format!("{:<12}", "method");
        for (n, s) in &cells {
            out.push_str(&format!(" {:>24}", format!("N={n} sigma={s}")));
        }
        out.push('\n');
        for m in methods {
            out.push_str(&format!("{:<12}", m.name()));
            for &(n, s) in &cells {
                let v = match self.cell(m, n, s) {
                    Some(c) => format!("{:.4e} ({:.2}s)", c.rmse.median, c.train_seconds.median),
                    None => "-".into(),
                };
                out.push_str(&format!(" {v:>24}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Groups records by `(method, N, σ)`; cells appear in first-seen order.
pub fn summarize(outcome: &BenchmarkOutcome) -> Result<BenchmarkSummary> {
    if outcome.records.is_empty() && outcome.failures.is_empty() {
        return Err(TrnnError::InvalidConfig("nothing to summarize".into()));
    }
    let mut order: Vec<(Regressor, Generator, usize, u64)> = Vec::new();
    let mut groups: BTreeMap<(Regressor, Generator, usize, u64), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in &outcome.records {
        let key = (r.method, r.generator, r.n, r.sigma.to_bits());
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    let cells = order
        .into_iter()
        .map(|key| {
            let recs = &groups[&key];
            let rm: Vec<f64> = recs.iter().map(|r| r.rmse).collect();
            let ts: Vec<f64> = recs.iter().map(|r| r.train_seconds).collect();
            CellSummary {
                method: key.0,
                generator: key.1,
                n: key.2,
                sigma: f64::from_bits(key.3),
                rmse: Stats::of(&rm).expect("non-empty group"),
                train_seconds: Stats::of(&ts).expect("non-empty group"),
                failures: outcome
                    .failures
                    .iter()
                    .filter(|f| f.method == key.0 && f.n == key.2 && f.sigma.to_bits() == key.3)
                    .count(),
            }
        })
        .collect();
    Ok(BenchmarkSummary {
        cells,
        failures: outcome.failures.clone(),
        records: outcome.records.clone(),
    })
}

pub fn metrics_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(["method", "generator", "N", "sigma", "rep", "seed", "rmse", "train_seconds"])
            .map_err(|e| TrnnError::InvalidConfig(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| TrnnError::InvalidConfig(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| TrnnError::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_metrics_csv(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(records)?).map_err(|e| TrnnError::io(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| TrnnError::format(path, e.to_string()))?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| TrnnError::format(path, e.to_string())))
        .collect()
}

pub fn write_summary_json(path: impl AsRef<Path>, summary: &BenchmarkSummary) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        cells: &'a [CellSummary],
        failures: &'a [FailureRecord],
    }
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&Out {
        cells: &summary.cells,
        failures: &summary.failures,
    })
    .map_err(|e| TrnnError::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| TrnnError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> DenseTensor {
        DenseTensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let y = t(&[1.0, -2.0, 0.5]);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&DenseTensor::zeros(&[3]), &y).unwrap(), 1.0);
        assert_eq!(rmse(&y.scale(2.0), &y).unwrap(), 1.0);
        assert!(matches!(rmse(&y, &DenseTensor::zeros(&[3])), Err(TrnnError::ZeroNormReference)));
        assert!(rmse(&t(&[1.0]), &y).is_err());
    }

    proptest! {
        #[test]
        fn rmse_is_scale_invariant(
            v in proptest::collection::vec(-10.0f64..10.0, 1..20),
            w in proptest::collection::vec(-10.0f64..10.0, 1..20),
            c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        ) {
            let n = v.len().min(w.len());
            let (a, b) = (t(&v[..n]), t(&w[..n]));
            prop_assume!(b.data().iter().any(|x| *x != 0.0));
            let r1 = rmse(&a, &b).unwrap();
            let r2 = rmse(&a.scale(c), &b.scale(c)).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
        }
    }

    #[test]
    fn quantiles_use_linear_interpolation() {
        let s = Stats::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (2.0, 1.5, 2.5));
        let s = Stats::of(&[4.2]).unwrap();
        assert_eq!((s.median, s.std), (4.2, 0.0));
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn seeds_depend_on_every_field() {
        let base = replication_seed(1, Generator::Waterdrop, 100, 0.1, 0);
        assert_eq!(base, replication_seed(1, Generator::Waterdrop, 100, 0.1, 0));
        for other in [
            replication_seed(2, Generator::Waterdrop, 100, 0.1, 0),
            replication_seed(1, Generator::Helicoid, 100, 0.1, 0),
            replication_seed(1, Generator::Waterdrop, 101, 0.1, 0),
            replication_seed(1, Generator::Waterdrop, 100, 0.01, 0),
            replication_seed(1, Generator::Waterdrop, 100, 0.1, 1),
        ] {
            assert_ne!(base, other);
        }
    }

    fn linear_plan() -> BenchmarkPlan {
        BenchmarkPlan {
            methods: vec![Regressor::SlTrnn, Regressor::Pls],
            n: vec![60],
            sigma: vec![0.0],
            replications: 1,
            test_size: 30,
            grid_i: 3,
            grid_j: 3,
            timings: false,
            sl_trnn: LinearMethodConfig {
                k: Some(3),
                train: crate::baseline::sl_trnn_config(0),
            },
            pls: PlsMethodConfig { k: Some(3) },
            ..BenchmarkPlan::desk(Generator::Linear)
        }
    }

    #[test]
    fn linear_data_is_recovered() {
        let out = run_benchmark(&linear_plan()).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.records.len(), 2);
        for r in &out.records {
            assert!(r.rmse < 1e-4, "{} rmse {}", r.method, r.rmse);
        }
    }

    #[test]
    fn reruns_are_identical_and_workers_do_not_matter() {
        let plan = BenchmarkPlan {
            replications: 3,
            sigma: vec![0.0, 0.1],
            ..linear_plan()
        };
        let a = run_benchmark(&plan).unwrap();
        let b = run_benchmark(&BenchmarkPlan { jobs: 3, ..plan }).unwrap();
        assert_eq!(metrics_csv(&a.records).unwrap(), metrics_csv(&b.records).unwrap());
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let plan = BenchmarkPlan {
            pls: PlsMethodConfig { k: Some(9) },
            ..linear_plan()
        };
        let out = run_benchmark(&plan).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].method, Regressor::Pls);
        let s = summarize(&out).unwrap();
        assert_eq!(s.cells.len(), 1);
    }

    #[test]
    fn csv_round_trip_and_recomputed_medians() {
        let plan = BenchmarkPlan { replications: 4, ..linear_plan() };
        let out = run_benchmark(&plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&path, &out.records).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("method,generator,N,sigma,rep,seed,rmse,train_seconds\n"));
        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back, out.records);
        // spreadsheet-style recomputation from the CSV columns
        let summary = summarize(&out).unwrap();
        for m in [Regressor::SlTrnn, Regressor::Pls] {
            let mut col: Vec<f64> = text
                .lines()
                .skip(1)
                .map(|l| l.split(',').collect::<Vec<_>>())
                .filter(|f| f[0] == m.name())
                .map(|f| f[6].parse().unwrap())
                .collect();
            col.sort_by(f64::total_cmp);
            let med = (col[1] + col[2]) / 2.0;
            assert_eq!(summary.median(m, 60, 0.0).unwrap(), med);
        }
        write_summary_json(dir.path().join("s.json"), &summary).unwrap();
    }

    #[test]
    fn plan_parsing_rejects_unknown_keys() {
        let ok = "generator = \"helicoid\"\nn = [10]\nsigma = [0.1]\n[pls]\nk = 2\n";
        let p = BenchmarkPlan::from_toml(ok).unwrap();
        assert_eq!(p.methods, Regressor::ALL.to_vec());
        assert_eq!(p.replications, 20);
        assert!(BenchmarkPlan::from_toml(&format!("{ok}bogus = 1\n")).is_err());
        assert!(BenchmarkPlan::from_toml("generator = \"helicoid\"\nn = []\nsigma = [0.1]\n").is_err());
        assert!(BenchmarkPlan::from_toml("generator = \"helicoid\"\nn = [5]\nsigma = [0.1]\nreplications = 0\n").is_err());
    }
}
