//! Finite-difference verification of the analytic gradients.
//!
//! Every parameter entry is perturbed by `±h` and the central difference of
//! the loss is compared with the backpropagated gradient. With the ReLU
//! pattern held fixed the network output is affine in any single entry, so
//! the loss is quadratic along that coordinate and the central difference
//! carries only rounding error. Entries whose perturbation flips any ReLU
//! input across zero are skipped and counted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, TrnnError};
use crate::layers::{Activation, ForwardCache};
use crate::model::{init_model, NetworkSpec, Trainable, TrnnModel};
use crate::tensor::DenseTensor;

pub const MAX_PARAMETERS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub h: f64,
    /// Denominator floor of the relative error `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub tolerance: f64,
    /// Test hook: adds this amount to the first analytic core gradient entry.
    pub corrupt: Option<f64>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            floor: 1e-5,
            tolerance: 1e-4,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryError {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: Option<EntryError>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
    pub parameter_count: usize,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }

    pub fn skipped(&self) -> usize {
        self.groups.iter().map(|g| g.skipped).sum()
    }

    /// Groups over tolerance, worst first.
    pub fn failures(&self) -> Vec<&GroupReport> {
        let mut bad: Vec<_> = self.groups.iter().filter(|g| g.max_rel_error > self.tolerance).collect();
        bad.sort_by(|a, b| b.max_rel_error.total_cmp(&a.max_rel_error));
        bad
    }
}

/// Small two-layer ReLU spec used when no spec is given.
pub fn default_spec() -> NetworkSpec {
    NetworkSpec {
        input_shape: vec![3, 4],
        output_shape: vec![2, 3],
        encoder: vec![vec![3, 3], vec![2, 2]],
        bottleneck_out: vec![2, 2],
        decoder: vec![vec![2, 2], vec![2, 3]],
        activation: Activation::Relu,
    }
}

/// Parameter group names in canonical order.
pub fn group_names(spec: &NetworkSpec) -> Vec<String> {
    let mut names = Vec::new();
    for n in 0..spec.encoder.len() {
        for k in 0..spec.input_shape.len() {
            names.push(format!("encoder {} mode {}", n + 1, k + 2));
        }
    }
    names.push("core".into());
    for n in 0..spec.decoder.len() {
        for k in 0..spec.output_shape.len() {
            names.push(format!("decoder {} mode {}", n + 1, k + 2));
        }
    }
    names
}

fn relu_pattern(model: &TrnnModel, cache: &ForwardCache) -> Vec<bool> {
    if model.spec().activation == Activation::Identity {
        return Vec::new();
    }
    let decoder_inputs = &cache.z[..cache.z.len() - 1];
    cache
        .r
        .iter()
        .chain(decoder_inputs)
        .flat_map(|t| t.data().iter().map(|&v| v >= 0.0))
        .collect()
}

/// Compares analytic and central-difference gradients of the training loss
/// of `model` on `(x, y)` (raw units, no standardization).
pub fn gradcheck(model: &TrnnModel, x: &DenseTensor, y: &DenseTensor, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let count = model.parameter_count();
    if count > MAX_PARAMETERS {
        return Err(TrnnError::InvalidConfig(format!(
            "gradient check is limited to {MAX_PARAMETERS} parameters, model has {count}"
        )));
    }
    if !(cfg.h > 0.0 && cfg.floor > 0.0 && cfg.tolerance > 0.0) {
        return Err(TrnnError::InvalidConfig("h, floor and tolerance must be positive".into()));
    }
    let (_, mut grads) = model.loss_and_grads(x, y)?;
    let names = group_names(model.spec());
    if let Some(delta) = cfg.corrupt {
        let core = names.iter().position(|n| n == "core").expect("core group");
        grads[core].data_mut()[0] += delta;
    }
    let base_pattern = relu_pattern(model, &model.forward(x)?);
    let mut probe = model.clone();
    let mut groups = Vec::with_capacity(grads.len());
    for (gi, (name, grad)) in names.into_iter().zip(&grads).enumerate() {
        let mut report = GroupReport {
            name,
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
            worst: None,
        };
        for e in 0..grad.len() {
            let orig = probe.parameters()[gi].data()[e];
            let mut eval = |value: f64| -> Result<(DenseTensor, bool)> {
                probe.parameters_mut()[gi].data_mut()[e] = value;
                let cache = probe.forward(x)?;
                let same = relu_pattern(&probe, &cache) == base_pattern;
                Ok((cache.output().clone(), same))
            };
            let (up, same_up) = eval(orig + cfg.h)?;
            let (down, same_down) = eval(orig - cfg.h)?;
            probe.parameters_mut()[gi].data_mut()[e] = orig;
            if !(same_up && same_down) {
                report.skipped += 1;
                continue;
            }
            let numeric = loss_difference(&up, &down, y) / (2.0 * cfg.h);
            let analytic = grad.data()[e];
            let denom = analytic.abs().max(numeric.abs()).max(cfg.floor);
            let rel_error = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if rel_error > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel_error);
                report.worst = Some(EntryError {
                    index: e,
                    analytic,
                    numeric,
                    rel_error,
                });
            }
        }
        groups.push(report);
    }
    Ok(GradcheckReport {
        groups,
        tolerance: cfg.tolerance,
        parameter_count: count,
    })
}

/// `L(up) − L(down)` for the half mean squared error, expanded as
/// `Σ (up − down)(up + down − 2y) / 2N` so the large `‖y‖²` terms never
/// cancel.
fn loss_difference(up: &DenseTensor, down: &DenseTensor, y: &DenseTensor) -> f64 {
    let sum: f64 = up
        .data()
        .iter()
        .zip(down.data())
        .zip(y.data())
        .map(|((&u, &d), &t)| (u - d) * (u + d - 2.0 * t))
        .sum();
    sum / (2.0 * y.num_samples() as f64)
}

/// Uniform(−1, 1) data of the right shapes for `spec`.
pub fn random_data(spec: &NetworkSpec, n: usize, seed: u64) -> Result<(DenseTensor, DenseTensor)> {
    if n == 0 {
        return Err(TrnnError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = vec![n];
    xs.extend_from_slice(&spec.input_shape);
    let mut ys = vec![n];
    ys.extend_from_slice(&spec.output_shape);
    let x = DenseTensor::from_fn(&xs, |_| rng.random_range(-1.0..1.0));
    let y = DenseTensor::from_fn(&ys, |_| rng.random_range(-1.0..1.0));
    Ok((x, y))
}

/// Builds a seeded model and data for `spec` and checks it.
pub fn gradcheck_spec(spec: &NetworkSpec, n: usize, seed: u64, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    spec.validate()?;
    if spec.parameter_count() > MAX_PARAMETERS {
        return Err(TrnnError::InvalidConfig(format!(
            "gradient check is limited to {MAX_PARAMETERS} parameters, spec has {}",
            spec.parameter_count()
        )));
    }
    let model = init_model(spec, seed)?;
    let (x, y) = random_data(spec, n, seed.wrapping_add(1))?;
    gradcheck(&model, &x, &y, cfg)
}

/// Random valid spec with `1..=3` non-sample modes on each side, extents in
/// `2..=max_extent` and the given layer counts.
pub fn random_spec(rng: &mut impl Rng, max_extent: usize, n1: usize, n2: usize, activation: Activation) -> NetworkSpec {
    let shape = |rng: &mut _| -> Vec<usize> {
        let order = Rng::random_range(rng, 1..=3);
        (0..order).map(|_| Rng::random_range(rng, 2..=max_extent)).collect()
    };
    let input_shape = shape(rng);
    let output_shape = shape(rng);
    let mut encoder = Vec::with_capacity(n1);
    let mut prev = input_shape.clone();
    for _ in 0..n1 {
        let next: Vec<usize> = prev.iter().map(|&p| rng.random_range(1..=p)).collect();
        encoder.push(next.clone());
        prev = next;
    }
    // decoder extents grow towards the output, drawn backwards
    let mut decoder = vec![output_shape.clone()];
    let mut next = output_shape.clone();
    for _ in 1..n2 {
        next = next.iter().map(|&q| rng.random_range(1..=q)).collect();
        decoder.push(next.clone());
    }
    let bottleneck_out: Vec<usize> = next.iter().map(|&q| rng.random_range(1..=q)).collect();
    decoder.reverse();
    NetworkSpec {
        input_shape,
        output_shape,
        encoder,
        bottleneck_out,
        decoder,
        activation,
    }
}
