use serde::Serialize;

use super::pls::{fit_pls, objective};
use crate::error::{Result, TrnnError};
use crate::layers::Activation;
use crate::model::{init_model, train, LrSchedule, NetworkSpec, TrainConfig, TrainReport, TrnnModel};
use crate::optimizer::OptimizerConfig;
use crate::tensor::DenseTensor;

/// Network with identity activation, one encoder and one decoder layer on
/// matrix data: `Ŷ = X·W·B·Vᵀ` with `W = Uᵀ (P×k)`, `B = 𝒞 (k×k)` and
/// `V (Q×k)` the decoder factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SlTrnnModel {
    pub model: TrnnModel,
}

pub fn sl_trnn_spec(p: usize, q: usize, k: usize) -> NetworkSpec {
    NetworkSpec {
        input_shape: vec![p],
        output_shape: vec![q],
        encoder: vec![vec![k]],
        bottleneck_out: vec![k],
        decoder: vec![vec![q]],
        activation: Activation::Identity,
    }
}

/// Full-batch Adam with a plateau schedule, no standardization. Converges
/// the small matrix problems used for the PLS comparison.
pub fn sl_trnn_config(seed: u64) -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerConfig::adam(1e-2),
        batch_size: usize::MAX,
        max_epochs: 20_000,
        sample_budget: None,
        tol: 1e-9,
        patience: 400,
        seed,
        standardize: false,
        lr_schedule: LrSchedule::Plateau {
            factor: 0.5,
            patience: 50,
            threshold: 1e-4,
            min_lr: 1e-6,
        },
    }
}

impl SlTrnnModel {
    pub fn k(&self) -> usize {
        self.model.spec().bottleneck_out[0]
    }

    pub fn w(&self) -> DenseTensor {
        self.model.encoder()[0].factors()[0]
            .transpose()
            .expect("factor is a matrix")
    }

    pub fn b(&self) -> &DenseTensor {
        self.model.contraction().core()
    }

    pub fn v(&self) -> &DenseTensor {
        &self.model.decoder()[0].factors()[0]
    }

    /// `‖Y − X·W·B·Vᵀ‖²_F` in the units the model was trained in.
    pub fn objective(&self, x: &DenseTensor, y: &DenseTensor) -> Result<f64> {
        objective(x, y, &self.w(), self.b(), self.v())
    }

    pub fn predict(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.model.predict(x)
    }
}

/// Trains the three-factor linear model by gradient descent.
pub fn fit_sl_trnn(
    x: &DenseTensor,
    y: &DenseTensor,
    k: usize,
    config: &TrainConfig,
) -> Result<(SlTrnnModel, TrainReport)> {
    if x.order() != 2 || y.order() != 2 {
        return Err(TrnnError::Order(format!(
            "the single-layer linear model needs matrices, got orders {} and {}",
            x.order(),
            y.order()
        )));
    }
    let (n, p, q) = (x.shape()[0], x.shape()[1], y.shape()[1]);
    if k == 0 || k > p.min(q).min(n) {
        return Err(TrnnError::InvalidConfig(format!(
            "rank {k} must lie in 1..={}",
            p.min(q).min(n)
        )));
    }
    let mut model = init_model(&sl_trnn_spec(p, q, k), config.seed)?;
    let report = train(&mut model, x, y, config)?;
    Ok((SlTrnnModel { model }, report))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub k: usize,
    pub pls_objective: f64,
    /// One entry per seed.
    pub sl_trnn_objectives: Vec<f64>,
    pub y_norm_sq: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl EquivalenceReport {
    /// Whether every fitted objective is within `pls·(1 + rel_tol) + abs_tol·‖Y‖²`.
    pub fn holds(&self) -> bool {
        let bound = self.pls_objective * (1.0 + self.rel_tol) + self.abs_tol * self.y_norm_sq;
        self.sl_trnn_objectives.iter().all(|&o| o <= bound)
    }

    pub fn worst_ratio(&self) -> f64 {
        self.sl_trnn_objectives
            .iter()
            .map(|o| o / self.pls_objective)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Fits PLS once and the linear network once per seed on the same matrices
/// and reports both objectives. The PLS factors are a feasible point of the
/// network's objective.
pub fn pls_equivalence_check(
    x: &DenseTensor,
    y: &DenseTensor,
    k: usize,
    seeds: &[u64],
) -> Result<EquivalenceReport> {
    let pls = fit_pls(x, y, k)?;
    let pls_objective = pls.objective(x, y)?;
    let sl_trnn_objectives = seeds
        .iter()
        .map(|&s| {
            let (m, _) = fit_sl_trnn(x, y, k, &sl_trnn_config(s))?;
            m.objective(x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport {
        k,
        pls_objective,
        sl_trnn_objectives,
        y_norm_sq: y.data().iter().map(|v| v * v).sum(),
        rel_tol: 1e-3,
        abs_tol: 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{as_matrix, from_matrix};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn predict_is_the_factor_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gauss(&mut rng, 9, 5);
        let model = init_model(&sl_trnn_spec(5, 3, 2), 4).unwrap();
        let m = SlTrnnModel { model };
        let pred = as_matrix(&m.predict(&from_matrix(&x)).unwrap());
        let direct = &x * as_matrix(&m.w()) * as_matrix(m.b()) * as_matrix(m.v()).transpose();
        assert!((pred - direct).amax() < 1e-12);
    }

    #[test]
    fn identity_map_is_fitted_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = from_matrix(&gauss(&mut rng, 20, 3));
        let (m, _) = fit_sl_trnn(&x, &x, 3, &sl_trnn_config(0)).unwrap();
        assert!(m.objective(&x, &x).unwrap() < 1e-6);
    }

    #[test]
    fn rank_one_target_reaches_its_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gauss(&mut rng, 25, 4);
        let y = &x * gauss(&mut rng, 4, 1) * gauss(&mut rng, 1, 3);
        let (x, y) = (from_matrix(&x), from_matrix(&y));
        let (m, _) = fit_sl_trnn(&x, &y, 1, &sl_trnn_config(1)).unwrap();
        let ny: f64 = y.data().iter().map(|v| v * v).sum();
        assert!(m.objective(&x, &y).unwrap() < 1e-6 * ny);
    }

    #[test]
    fn rank_range_is_enforced() {
        let x = DenseTensor::from_fn(&[4, 3], |i| (i[0] + 2 * i[1]) as f64);
        assert!(fit_sl_trnn(&x, &x, 0, &sl_trnn_config(0)).is_err());
        assert!(fit_sl_trnn(&x, &x, 4, &sl_trnn_config(0)).is_err());
        let t = DenseTensor::zeros(&[4, 3, 1]);
        assert!(matches!(fit_sl_trnn(&t, &x, 1, &sl_trnn_config(0)), Err(TrnnError::Order(_))));
    }

    #[test]
    fn network_matches_or_beats_pls() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = from_matrix(&gauss(&mut rng, 20, 6));
        let y = from_matrix(&gauss(&mut rng, 20, 4));
        let r = pls_equivalence_check(&x, &y, 2, &[0, 1, 2, 3, 4]).unwrap();
        assert!(r.holds(), "{r:?}");
    }
}
