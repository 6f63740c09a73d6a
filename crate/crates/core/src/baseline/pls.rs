use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{as_matrix, from_matrix, Flattened};
use crate::error::{Result, TrnnError};
use crate::tensor::DenseTensor;

/// Partial least squares fit `Ŷ = X·W·B·Vᵀ`.
///
/// `W (P×k)` are the X-rotations (scores `T = XW`), `V (Q×k)` the Y-loadings
/// re-orthonormalized so that `VᵀV = I`, and `B (k×k)` the least-squares
/// latent regression of `YV` on `XW`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlsModel {
    pub w: DenseTensor,
    pub b: DenseTensor,
    pub v: DenseTensor,
    /// Column means removed before fitting, when centered.
    pub centering: Option<(DenseTensor, DenseTensor)>,
    pub shapes: Flattened,
}

impl PlsModel {
    pub fn components(&self) -> usize {
        self.b.shape()[0]
    }

    /// Objective `‖Y − X·W·B·Vᵀ‖²_F` on raw (uncentered) matrices.
    pub fn objective(&self, x: &DenseTensor, y: &DenseTensor) -> Result<f64> {
        objective(x, y, &self.w, &self.b, &self.v)
    }

    pub fn predict(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let mut xm = self.shapes.input_matrix(x)?;
        if let Some((mx, _)) = &self.centering {
            sub_row(&mut xm, mx.data());
        }
        let w = as_matrix(&self.w);
        let b = as_matrix(&self.b);
        let v = as_matrix(&self.v);
        let mut out = xm * w * b * v.transpose();
        if let Some((_, my)) = &self.centering {
            for mut row in out.row_iter_mut() {
                for (o, m) in row.iter_mut().zip(my.data()) {
                    *o += m;
                }
            }
        }
        self.shapes.output_tensor(&out)
    }
}

fn sub_row(m: &mut DMatrix<f64>, mean: &[f64]) {
    for mut row in m.row_iter_mut() {
        for (o, c) in row.iter_mut().zip(mean) {
            *o -= c;
        }
    }
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}

/// `‖Y − X·W·B·Vᵀ‖²_F` for order-2 `X (N×P)`, `Y (N×Q)`.
pub fn objective(x: &DenseTensor, y: &DenseTensor, w: &DenseTensor, b: &DenseTensor, v: &DenseTensor) -> Result<f64> {
    let (xm, ym) = (as_matrix(x), as_matrix(y));
    let fit = xm * as_matrix(w) * as_matrix(b) * as_matrix(v).transpose();
    if fit.shape() != ym.shape() {
        return Err(TrnnError::ShapeMismatch {
            expected: vec![ym.nrows(), ym.ncols()],
            found: vec![fit.nrows(), fit.ncols()],
        });
    }
    Ok((ym - fit).norm_squared())
}

/// PLS on matrices without centering. The data are used exactly as given.
pub fn fit_pls(x: &DenseTensor, y: &DenseTensor, k: usize) -> Result<PlsModel> {
    fit(x, y, k, false)
}

/// Centers both sides with their column means, then fits.
pub fn fit_pls_centered(x: &DenseTensor, y: &DenseTensor, k: usize) -> Result<PlsModel> {
    fit(x, y, k, true)
}

fn fit(x: &DenseTensor, y: &DenseTensor, k: usize, center: bool) -> Result<PlsModel> {
    let shapes = Flattened::of(x, y)?;
    let mut xm = shapes.input_matrix(x)?;
    let mut ym = shapes.output_matrix(y)?;
    let (n, p, q) = (xm.nrows(), xm.ncols(), ym.ncols());
    if k == 0 || k > p.min(q).min(n) {
        return Err(TrnnError::InvalidConfig(format!(
            "component count {k} must lie in 1..={}",
            p.min(q).min(n)
        )));
    }
    for (j, col) in xm.column_iter().enumerate() {
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if lo == hi {
            return Err(TrnnError::Degenerate(format!("input column {j} has zero variance")));
        }
    }
    let centering = if center {
        let (mx, my) = (column_means(&xm), column_means(&ym));
        sub_row(&mut xm, &mx);
        sub_row(&mut ym, &my);
        Some((DenseTensor::new(vec![p], mx)?, DenseTensor::new(vec![q], my)?))
    } else {
        None
    };

    let x_scale = xm.norm();
    let (mut xa, mut ya) = (xm.clone(), ym.clone());
    let mut weights = DMatrix::zeros(p, k);
    let mut x_load = DMatrix::zeros(p, k);
    let mut y_load = DMatrix::zeros(q, k);
    for a in 0..k {
        // dominant direction of the cross-covariance
        let w = dominant_direction(&(xa.transpose() * &ya));
        let t = &xa * &w;
        let tt = t.norm_squared();
        if tt.sqrt() <= 1e-12 * x_scale.max(f64::MIN_POSITIVE) {
            return Err(TrnnError::Degenerate(format!(
                "input rank is below the {k} requested components (stalled at {a})"
            )));
        }
        let pl = xa.transpose() * &t / tt;
        let cl = ya.transpose() * &t / tt;
        xa -= &t * pl.transpose();
        ya -= &t * cl.transpose();
        weights.set_column(a, &w);
        x_load.set_column(a, &pl);
        y_load.set_column(a, &cl);
    }
    // rotations R with T = X R for the undeflated X
    let ptw = x_load.transpose() * &weights;
    let ptw_inv = ptw
        .try_inverse()
        .ok_or_else(|| TrnnError::Degenerate("singular loading product".into()))?;
    let rot = &weights * ptw_inv;

    let v = orthonormal_columns(&y_load)?;
    let t = &xm * &rot;
    let target = &ym * &v;
    let b = least_squares(&t, &target)?;
    Ok(PlsModel {
        w: from_matrix(&rot),
        b: from_matrix(&b),
        v: from_matrix(&v),
        centering,
        shapes,
    })
}

/// Unit top eigenvector of `m·mᵀ`, i.e. the leading left singular vector
/// of `m`, with its largest-magnitude entry made positive.
fn dominant_direction(m: &DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(m * m.transpose());
    let (i, _) = eig.eigenvalues.argmax();
    let mut w = eig.eigenvectors.column(i).into_owned();
    if w[w.iamax()] < 0.0 {
        w.neg_mut();
    }
    w
}

/// Least-squares solution of `a·b = target` through a thin QR of `a`.
fn least_squares(a: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
        return Err(TrnnError::Degenerate("component scores are rank deficient".into()));
    }
    let rhs = qr.q().transpose() * target;
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| TrnnError::Degenerate("component scores are rank deficient".into()))
}

/// Orthonormal basis of the column span of `m` (thin QR), with signs
/// chosen so the diagonal of R is non-negative.
fn orthonormal_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m.ncols();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for j in 0..k {
        let d = r[(j, j)];
        if d.abs() <= 1e-12 * scale {
            return Err(TrnnError::Degenerate(
                "response loadings are rank deficient".into(),
            ));
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn t(m: &DMatrix<f64>) -> DenseTensor {
        from_matrix(m)
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn v_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = (gauss(&mut rng, 30, 7), gauss(&mut rng, 30, 5));
        for k in 1..=5 {
            let m = fit_pls(&t(&x), &t(&y), k).unwrap();
            let v = as_matrix(&m.v);
            let g = v.transpose() * &v;
            assert!((g - DMatrix::identity(k, k)).amax() < 1e-10);
        }
    }

    /// Noiseless latent data: `X = T·Wᵀ`, `Y = T·Vᵀ` with `k` latent columns.
    fn latent(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = gauss(rng, n, k);
        (&t * gauss(rng, p, k).transpose(), &t * gauss(rng, q, k).transpose())
    }

    #[test]
    fn recovers_noiseless_latent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=3 {
            let (x, y) = latent(&mut rng, 40, 6, 4, k);
            let m = fit_pls(&t(&x), &t(&y), k).unwrap();
            let pred = as_matrix(&m.predict(&t(&x)).unwrap());
            assert!(rel(&pred, &y) < 1e-8, "k={k}: {}", rel(&pred, &y));
        }
    }

    #[test]
    fn recovers_low_rank_map_on_whitened_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // orthonormal columns, so XᵀX = I and the weights span range(C)
        let x = gauss(&mut rng, 40, 6).qr().q();
        let c = gauss(&mut rng, 6, 2) * gauss(&mut rng, 2, 4);
        let y = &x * c;
        let m = fit_pls(&t(&x), &t(&y), 2).unwrap();
        let pred = as_matrix(&m.predict(&t(&x)).unwrap());
        assert!(rel(&pred, &y) < 1e-8, "{}", rel(&pred, &y));
    }

    #[test]
    fn single_response_loading_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = (gauss(&mut rng, 15, 3), gauss(&mut rng, 15, 1));
        let m = fit_pls(&t(&x), &t(&y), 1).unwrap();
        assert_eq!(m.v.shape(), &[1, 1]);
        assert!((m.v.data()[0].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn full_rank_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = (gauss(&mut rng, 25, 4), gauss(&mut rng, 25, 4));
        let m = fit_pls(&t(&x), &t(&y), 4).unwrap();
        let pred = as_matrix(&m.predict(&t(&x)).unwrap());
        // normal equations, solved independently of the fitter
        let beta = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
        let ols = &x * beta;
        assert!(rel(&pred, &ols) < 1e-8, "{}", rel(&pred, &ols));
    }

    #[test]
    fn centered_fit_handles_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = latent(&mut rng, 30, 5, 3, 2);
        let (x, y) = (x.add_scalar(4.0), y.add_scalar(-7.0));
        let m = fit_pls_centered(&t(&x), &t(&y), 2).unwrap();
        let pred = as_matrix(&m.predict(&t(&x)).unwrap());
        assert!(rel(&pred, &y) < 1e-8, "{}", rel(&pred, &y));
    }

    #[test]
    fn rejects_bad_requests() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (mut x, y) = (gauss(&mut rng, 10, 3), gauss(&mut rng, 10, 2));
        assert!(fit_pls(&t(&x), &t(&y), 0).is_err());
        assert!(fit_pls(&t(&x), &t(&y), 3).is_err());
        x.column_mut(1).fill(2.5);
        assert!(matches!(fit_pls(&t(&x), &t(&y), 1), Err(TrnnError::Degenerate(_))));
    }
}
