//! Seeded synthetic point-cloud datasets.
//!
//! Every sample `i` draws from its own ChaCha8 stream (`seed`, stream `i`):
//! first the four controls, then the Gaussian noise in row-major order of
//! `Y`. Gaussian draws use the ziggurat sampler of `rand_distr`. A sample
//! therefore does not depend on `N`, and datasets that share a seed but
//! differ in `σ` share their noise pattern up to scale.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrnnError};
use crate::tensor::{dtf, DenseTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Waterdrop,
    Helicoid,
    /// `Y = X·A` for Gaussian `X (N, I)` and a fixed Gaussian `A (I, J)`.
    Linear,
    /// Data not produced by this module; cannot be regenerated.
    External,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Waterdrop => "waterdrop",
            Generator::Helicoid => "helicoid",
            Generator::Linear => "linear",
            Generator::External => "external",
        }
    }
}

impl std::fmt::Display for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Generator {
    type Err = TrnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "waterdrop" => Ok(Generator::Waterdrop),
            "helicoid" => Ok(Generator::Helicoid),
            "linear" => Ok(Generator::Linear),
            "external" => Ok(Generator::External),
            _ => Err(TrnnError::InvalidConfig(format!("unknown generator {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaterDropParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub grid_i: usize,
    pub grid_j: usize,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HelicoidParams {
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub grid_i: usize,
    pub grid_j: usize,
    pub sigma: f64,
}

fn check_grid(i: usize, j: usize, sigma: f64) -> Result<()> {
    if i < 2 || j < 2 {
        return Err(TrnnError::InvalidConfig(format!(
            "grid must be at least 2×2, got {i}×{j}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(TrnnError::InvalidConfig(format!("sigma must be ≥ 0, got {sigma}")));
    }
    Ok(())
}

impl WaterDropParams {
    pub fn validate(&self) -> Result<()> {
        check_grid(self.grid_i, self.grid_j, self.sigma)?;
        if [self.a, self.c].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(TrnnError::InvalidConfig("water-drop a and c must be positive".into()));
        }
        if [self.b, self.d].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(TrnnError::InvalidConfig("water-drop b and d must be non-negative".into()));
        }
        Ok(())
    }

    /// Surface point at angle `phi` and height `z`.
    pub fn point(&self, phi: f64, z: f64) -> (f64, f64) {
        let radius = self.a * (1.0 + (self.b * phi).cos()) * (1.0 + (self.c * PI * z).sin())
            + self.d * (z - z * z);
        (radius * phi.cos(), radius * phi.sin())
    }
}

impl HelicoidParams {
    pub fn validate(&self) -> Result<()> {
        check_grid(self.grid_i, self.grid_j, self.sigma)?;
        if !(0.0 < self.c2 && self.c2 < self.c1) {
            return Err(TrnnError::InvalidConfig("helicoid needs 0 < c2 < c1".into()));
        }
        Ok(())
    }

    pub fn point(&self, r: f64, z: f64) -> (f64, f64) {
        let arm = (self.c1 + self.c2 * (self.beta * z).cos()) * r;
        (arm * (self.alpha * z).cos(), arm * (self.alpha * z).sin())
    }
}

/// `φᵢ = −π + 2πi/I` for `i = 1..=I`.
pub fn phi_grid(i: usize) -> Vec<f64> {
    (1..=i).map(|k| -PI + 2.0 * PI * k as f64 / i as f64).collect()
}

/// `k/n` for `k = 1..=n`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

/// Clean water-drop surface, shape `(I, J, 2)` with channels `(x, y)`.
pub fn waterdrop_surface(p: &WaterDropParams) -> Result<DenseTensor> {
    p.validate()?;
    let (phis, zs) = (phi_grid(p.grid_i), unit_grid(p.grid_j));
    let mut data = Vec::with_capacity(p.grid_i * p.grid_j * 2);
    for &phi in &phis {
        for &z in &zs {
            let (x, y) = p.point(phi, z);
            data.extend([x, y]);
        }
    }
    DenseTensor::new(vec![p.grid_i, p.grid_j, 2], data)
}

/// Clean helicoid surface, shape `(2, I, J)`.
pub fn helicoid_surface(p: &HelicoidParams) -> Result<DenseTensor> {
    p.validate()?;
    helicoid_grid(p)
}

// The sampled controls can land on c2 >= c1, so dataset generation skips
// the parameter check.
fn helicoid_grid(p: &HelicoidParams) -> Result<DenseTensor> {
    let (rs, zs) = (unit_grid(p.grid_i), unit_grid(p.grid_j));
    let n = p.grid_i * p.grid_j;
    let mut data = vec![0.0; 2 * n];
    for (a, &r) in rs.iter().enumerate() {
        for (b, &z) in zs.iter().enumerate() {
            let (x, y) = p.point(r, z);
            data[a * p.grid_j + b] = x;
            data[n + a * p.grid_j + b] = y;
        }
    }
    DenseTensor::new(vec![2, p.grid_i, p.grid_j], data)
}

/// Everything needed to regenerate a dataset bit-exactly, plus the drawn
/// per-sample controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub generator: Generator,
    pub seed: u64,
    pub sigma: f64,
    pub n: usize,
    pub grid_i: usize,
    pub grid_j: usize,
    /// Stream index of the first sample; held-out sets start past the
    /// training streams so they share any fixed generator parameters.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub first_sample: u64,
    #[serde(default)]
    pub controls: Vec<Vec<f64>>,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

/// First stream of the held-out samples drawn by [`generate_held_out`].
pub const HELD_OUT_STREAM: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DenseTensor,
    pub y: DenseTensor,
    pub meta: DatasetMeta,
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn add_noise(rng: &mut ChaCha8Rng, sigma: f64, values: &mut [f64]) {
    for v in values {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(TrnnError::EmptyBatch);
    }
    Ok(())
}

fn assemble(meta: DatasetMeta, x: Vec<DenseTensor>, y: Vec<DenseTensor>) -> Result<Dataset> {
    Ok(Dataset {
        x: DenseTensor::stack(&x)?,
        y: DenseTensor::stack(&y)?,
        meta,
    })
}

/// Water-drop dataset: `X (N, 4)` holds `(a, b, c, d)` with
/// `(a, b, c, d) = (U₁, U₂/2, U₃, U₄)`, `U ~ Uniform(1, 2)`, and
/// `Y (N, I, J, 2)` the surfaces plus `N(0, σ²)` noise.
pub fn gen_waterdrop_dataset(n: usize, sigma: f64, grid_i: usize, grid_j: usize, seed: u64) -> Result<Dataset> {
    waterdrop_from(0, n, sigma, grid_i, grid_j, seed)
}

fn waterdrop_from(first: u64, n: usize, sigma: f64, grid_i: usize, grid_j: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    check_grid(grid_i, grid_j, sigma)?;
    let (mut xs, mut ys, mut controls) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let mut rng = sample_rng(seed, first + i as u64);
        let mut u = [0.0; 4];
        for v in &mut u {
            *v = rng.random_range(1.0..2.0);
        }
        let p = WaterDropParams {
            a: u[0],
            b: 0.5 * u[1],
            c: u[2],
            d: u[3],
            grid_i,
            grid_j,
            sigma,
        };
        let mut surf = waterdrop_surface(&p)?;
        add_noise(&mut rng, sigma, surf.data_mut());
        let ctl = vec![p.a, p.b, p.c, p.d];
        xs.push(DenseTensor::new(vec![4], ctl.clone())?);
        ys.push(surf);
        controls.push(ctl);
    }
    let meta = DatasetMeta {
        generator: Generator::Waterdrop,
        seed,
        sigma,
        n,
        grid_i,
        grid_j,
        first_sample: first,
        controls,
    };
    assemble(meta, xs, ys)
}

/// Helicoid dataset: controls `(c₁, c₂, α, β) = (5U₁, 2U₂, 3U₃, 4U₄)` with
/// `U ~ Uniform(0.5, 1.5)`. `X (N, 4, J)` stacks `c₁`, `c₂` replicated over
/// the height grid and the profiles `cos αz_j`, `cos βz_j`; `Y (N, 2, I, J)`.
pub fn gen_helicoid_dataset(n: usize, sigma: f64, grid_i: usize, grid_j: usize, seed: u64) -> Result<Dataset> {
    helicoid_from(0, n, sigma, grid_i, grid_j, seed)
}

fn helicoid_from(first: u64, n: usize, sigma: f64, grid_i: usize, grid_j: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    check_grid(grid_i, grid_j, sigma)?;
    let zs = unit_grid(grid_j);
    let (mut xs, mut ys, mut controls) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let mut rng = sample_rng(seed, first + i as u64);
        let mut u = [0.0; 4];
        for v in &mut u {
            *v = rng.random_range(0.5..1.5);
        }
        let p = HelicoidParams {
            c1: 5.0 * u[0],
            c2: 2.0 * u[1],
            alpha: 3.0 * u[2],
            beta: 4.0 * u[3],
            grid_i,
            grid_j,
            sigma,
        };
        let mut surf = helicoid_grid(&p)?;
        add_noise(&mut rng, sigma, surf.data_mut());
        let mut x = Vec::with_capacity(4 * grid_j);
        x.extend(std::iter::repeat_n(p.c1, grid_j));
        x.extend(std::iter::repeat_n(p.c2, grid_j));
        x.extend(zs.iter().map(|z| (p.alpha * z).cos()));
        x.extend(zs.iter().map(|z| (p.beta * z).cos()));
        xs.push(DenseTensor::new(vec![4, grid_j], x)?);
        ys.push(surf);
        controls.push(vec![p.c1, p.c2, p.alpha, p.beta]);
    }
    let meta = DatasetMeta {
        generator: Generator::Helicoid,
        seed,
        sigma,
        n,
        grid_i,
        grid_j,
        first_sample: first,
        controls,
    };
    assemble(meta, xs, ys)
}

/// Linear-map dataset `Y = X·A + noise` with `X (N, p)` standard normal and
/// `A (p, q)` entries `N(0, 1/p)`. `A` comes from a stream no sample uses.
pub fn gen_linear_dataset(n: usize, sigma: f64, p: usize, q: usize, seed: u64) -> Result<Dataset> {
    linear_from(0, n, sigma, p, q, seed)
}

fn linear_from(first: u64, n: usize, sigma: f64, p: usize, q: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    if p == 0 || q == 0 {
        return Err(TrnnError::InvalidConfig("linear generator needs p, q ≥ 1".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(TrnnError::InvalidConfig(format!("sigma must be ≥ 0, got {sigma}")));
    }
    let mut rng = sample_rng(seed, u64::MAX);
    let scale = (p as f64).sqrt().recip();
    let a: Vec<f64> = (0..p * q)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let mut rng = sample_rng(seed, first + i as u64);
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut y: Vec<f64> = (0..q)
            .map(|c| (0..p).map(|r| x[r] * a[r * q + c]).sum())
            .collect();
        add_noise(&mut rng, sigma, &mut y);
        xs.push(DenseTensor::new(vec![p], x)?);
        ys.push(DenseTensor::new(vec![q], y)?);
    }
    let meta = DatasetMeta {
        generator: Generator::Linear,
        seed,
        sigma,
        n,
        grid_i: p,
        grid_j: q,
        first_sample: first,
        controls: Vec::new(),
    };
    assemble(meta, xs, ys)
}

/// Dispatches on `generator`; `grid_i`/`grid_j` are the feature widths for
/// the linear generator.
pub fn generate(generator: Generator, n: usize, sigma: f64, grid_i: usize, grid_j: usize, seed: u64) -> Result<Dataset> {
    generate_from(generator, 0, n, sigma, grid_i, grid_j, seed)
}

/// `n` samples from the same seed as a training set, on streams that no
/// training set of fewer than 2⁴⁰ samples touches.
pub fn generate_held_out(generator: Generator, n: usize, sigma: f64, grid_i: usize, grid_j: usize, seed: u64) -> Result<Dataset> {
    generate_from(generator, HELD_OUT_STREAM, n, sigma, grid_i, grid_j, seed)
}

fn generate_from(generator: Generator, first: u64, n: usize, sigma: f64, grid_i: usize, grid_j: usize, seed: u64) -> Result<Dataset> {
    match generator {
        Generator::Waterdrop => waterdrop_from(first, n, sigma, grid_i, grid_j, seed),
        Generator::Helicoid => helicoid_from(first, n, sigma, grid_i, grid_j, seed),
        Generator::Linear => linear_from(first, n, sigma, grid_i, grid_j, seed),
        Generator::External => Err(TrnnError::InvalidConfig(
            "external datasets cannot be generated".into(),
        )),
    }
}

impl Dataset {
    /// Wraps arbitrary tensors; leading extents must agree.
    pub fn external(x: DenseTensor, y: DenseTensor) -> Result<Self> {
        let n = x.num_samples();
        if y.num_samples() != n {
            return Err(TrnnError::ModeMismatch {
                mode: 1,
                expected: n,
                found: y.num_samples(),
            });
        }
        Ok(Self {
            x,
            y,
            meta: DatasetMeta {
                generator: Generator::External,
                seed: 0,
                sigma: 0.0,
                n,
                grid_i: 0,
                grid_j: 0,
                first_sample: 0,
                controls: Vec::new(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.meta.n
    }

    pub fn is_empty(&self) -> bool {
        self.meta.n == 0
    }

    /// Rebuilds the dataset from its metadata alone.
    pub fn regenerate(meta: &DatasetMeta) -> Result<Self> {
        let m = meta;
        generate_from(m.generator, m.first_sample, m.n, m.sigma, m.grid_i, m.grid_j, m.seed)
    }

    /// Writes `X.dtf`, `Y.dtf` and `meta` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| TrnnError::io(dir, e))?;
        dtf::write(dir.join("X.dtf"), &self.x)?;
        dtf::write(dir.join("Y.dtf"), &self.y)?;
        let path = dir.join("meta");
        let text = toml::to_string(&self.meta).map_err(|e| TrnnError::format(&path, e.to_string()))?;
        fs::write(&path, text).map_err(|e| TrnnError::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let x = dtf::read(dir.join("X.dtf"))?;
        let y = dtf::read(dir.join("Y.dtf"))?;
        let path = dir.join("meta");
        let meta: DatasetMeta = match fs::read_to_string(&path) {
            Ok(text) => toml::from_str(&text).map_err(|e| TrnnError::format(&path, e.to_string()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Dataset::external(x.clone(), y.clone())?.meta,
            Err(e) => return Err(TrnnError::io(&path, e)),
        };
        let (nx, ny) = (x.num_samples(), y.num_samples());
        if nx != meta.n || ny != meta.n {
            return Err(TrnnError::format(
                dir,
                format!("meta declares {} samples but X has {nx} and Y has {ny}", meta.n),
            ));
        }
        Ok(Self { x, y, meta })
    }
}
