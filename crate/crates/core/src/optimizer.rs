//! Parameter update rules and mini-batch scheduling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrnnError};
use crate::tensor::DenseTensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 coefficient added to the gradient as `weight_decay · θ`.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            method: Method::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    /// A zero learning rate is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrnnError::InvalidConfig(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

/// Mutable optimizer state for one training run.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    /// Learning rate actually used by the next step; starts at
    /// `config.learning_rate` and may be lowered by a schedule.
    pub learning_rate: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            learning_rate: config.learning_rate,
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        })
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies the configured update rule.
    pub fn apply(&mut self, params: &mut [&mut DenseTensor], grads: &[DenseTensor]) -> Result<()> {
        match self.config.method {
            Method::Sgd => sgd_step(params, grads, self),
            Method::Adam => adam_step(params, grads, self),
        }
    }
}

fn check_shapes(params: &[&mut DenseTensor], grads: &[DenseTensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(TrnnError::InvalidConfig(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        g.expect_shape(p.shape())?;
    }
    Ok(())
}

/// `θ ← θ − lr·(g + weight_decay·θ)`.
pub fn sgd_step(
    params: &mut [&mut DenseTensor],
    grads: &[DenseTensor],
    state: &mut OptimizerState,
) -> Result<()> {
    check_shapes(params, grads)?;
    let lr = state.learning_rate;
    let wd = state.config.weight_decay;
    for (p, g) in params.iter_mut().zip(grads) {
        for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * (gv + wd * *w);
        }
    }
    state.t += 1;
    Ok(())
}

/// Adam with bias-corrected first and second moments.
pub fn adam_step(
    params: &mut [&mut DenseTensor],
    grads: &[DenseTensor],
    state: &mut OptimizerState,
) -> Result<()> {
    check_shapes(params, grads)?;
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return Err(TrnnError::InvalidConfig(
            "parameter layout changed between optimizer steps".into(),
        ));
    }
    state.t += 1;
    let c = &state.config;
    let (b1, b2, eps, wd) = (c.beta1, c.beta2, c.epsilon, c.weight_decay);
    let t = state.t as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((w, &gv), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let grad = gv + wd * *w;
            *mi = b1 * *mi + (1.0 - b1) * grad;
            *vi = b2 * *vi + (1.0 - b2) * grad * grad;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Seeded epoch-by-epoch mini-batch schedule. Each epoch is an independent
/// uniform shuffle of `0..n` cut into `⌈n / batch_size⌉` batches; the last
/// batch may be short.
#[derive(Clone, Debug)]
pub struct MinibatchIter {
    n: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

pub fn minibatch_iterate(n: usize, batch_size: usize, seed: u64) -> Result<MinibatchIter> {
    if n == 0 {
        return Err(TrnnError::EmptyBatch);
    }
    if batch_size == 0 || batch_size > n {
        return Err(TrnnError::InvalidConfig(format!(
            "batch size {batch_size} must lie in 1..={n}"
        )));
    }
    Ok(MinibatchIter {
        n,
        batch_size,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl Iterator for MinibatchIter {
    type Item = Vec<Vec<usize>>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut self.rng);
        Some(order.chunks(self.batch_size).map(<[usize]>::to_vec).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DenseTensor {
        DenseTensor::filled(&[1], v)
    }

    #[test]
    fn sgd_examples() {
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1)).unwrap();
        let mut p = scalar(1.0);
        sgd_step(&mut [&mut p], &[scalar(0.0)], &mut st).unwrap();
        assert_eq!(p.data(), &[1.0]);
        sgd_step(&mut [&mut p], &[scalar(2.0)], &mut st).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(st.steps(), 2);
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // f(θ) = ‖θ − θ*‖², gradient 2(θ − θ*); lr 0.1 < 1/L = 0.5
        let target = [1.5, -2.0, 0.25];
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1)).unwrap();
        let mut p = DenseTensor::zeros(&[3]);
        for _ in 0..200 {
            let g = p.zip_map(&DenseTensor::new(vec![3], target.to_vec()).unwrap(), |a, b| 2.0 * (a - b)).unwrap();
            sgd_step(&mut [&mut p], &[g], &mut st).unwrap();
        }
        for (a, b) in p.data().iter().zip(target) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_examples() {
        let mut st = OptimizerState::new(OptimizerConfig::adam(0.01)).unwrap();
        let mut p = DenseTensor::filled(&[4], 0.3);
        adam_step(&mut [&mut p], &[DenseTensor::zeros(&[4])], &mut st).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.3));

        // first step moves by ≈ lr whatever the gradient scale
        for scale in [1e-3, 1.0, 1e3] {
            let mut st = OptimizerState::new(OptimizerConfig::adam(0.01)).unwrap();
            let mut p = scalar(0.0);
            adam_step(&mut [&mut p], &[scalar(scale)], &mut st).unwrap();
            assert!((p.data()[0] + 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let target = [0.7, -1.2];
        let tt = DenseTensor::new(vec![2], target.to_vec()).unwrap();
        let mut st = OptimizerState::new(OptimizerConfig::adam(1e-2)).unwrap();
        let mut p = DenseTensor::zeros(&[2]);
        let mut steps = 0;
        while steps < 5000 {
            let g = p.zip_map(&tt, |a, b| 2.0 * (a - b)).unwrap();
            adam_step(&mut [&mut p], &[g], &mut st).unwrap();
            steps += 1;
            if p.sub(&tt).unwrap().max_abs() < 1e-6 {
                break;
            }
        }
        assert!(p.sub(&tt).unwrap().max_abs() < 1e-6, "after {steps} steps: {:?}", p.data());
    }

    #[test]
    fn rejects_bad_configs_and_shapes() {
        assert!(OptimizerState::new(OptimizerConfig::sgd(-1.0)).is_err());
        assert!(OptimizerState::new(OptimizerConfig::sgd(f64::NAN)).is_err());
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1)).unwrap();
        let mut p = DenseTensor::zeros(&[2]);
        assert!(sgd_step(&mut [&mut p], &[DenseTensor::zeros(&[3])], &mut st).is_err());
    }

    #[test]
    fn minibatch_examples() {
        let mut it = minibatch_iterate(5, 5, 1).unwrap();
        let e = it.next().unwrap();
        assert_eq!(e.len(), 1);
        let mut all = e[0].clone();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);

        let e = minibatch_iterate(5, 2, 1).unwrap().next().unwrap();
        assert_eq!(e.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        let mut all: Vec<_> = e.concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);

        let a: Vec<_> = minibatch_iterate(9, 4, 42).unwrap().take(3).collect();
        let b: Vec<_> = minibatch_iterate(9, 4, 42).unwrap().take(3).collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);

        assert!(minibatch_iterate(0, 1, 0).is_err());
        assert!(minibatch_iterate(3, 4, 0).is_err());
        assert!(minibatch_iterate(3, 0, 0).is_err());
    }
}
