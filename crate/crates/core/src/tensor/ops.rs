use super::linalg::{gemm, gemm_strided, View};
use super::DenseTensor;
use crate::error::{Result, TrnnError};

/// Square root of the sum of squared entries.
pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn expect_matrix(m: &DenseTensor, what: &str) -> Result<(usize, usize)> {
    if m.order() != 2 {
        return Err(TrnnError::Order(format!(
            "{what} must be a matrix, got order {}",
            m.order()
        )));
    }
    Ok((m.shape()[0], m.shape()[1]))
}

/// n-mode product `t ×ₙ m` for a `J × Iₙ` matrix `m`. `mode` is 1-based.
///
/// The result has the shape of `t` with the mode-`n` extent replaced by `J`.
pub fn mode_n_product(t: &DenseTensor, m: &DenseTensor, mode: usize) -> Result<DenseTensor> {
    if mode == 0 || mode > t.order() {
        return Err(TrnnError::Order(format!(
            "mode {mode} out of range for a tensor of order {}",
            t.order()
        )));
    }
    mode_product_axis(t, m, mode - 1)
}

/// Mode product along a 0-based axis.
pub(crate) fn mode_product_axis(
    t: &DenseTensor,
    m: &DenseTensor,
    axis: usize,
) -> Result<DenseTensor> {
    let (j, i) = expect_matrix(m, "mode-product operand")?;
    let shape = t.shape();
    if shape[axis] != i {
        return Err(TrnnError::ModeMismatch {
            mode: axis + 1,
            expected: i,
            found: shape[axis],
        });
    }
    let left: usize = shape[..axis].iter().product();
    let right: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = j;
    let mut out = DenseTensor::zeros(&out_shape);
    let src = t.data();
    let dst = out.data_mut();
    if right == 1 {
        // out (left × J) = t (left × I) · mᵀ
        gemm(
            View::rm(src, left, i),
            View::rm_t(m.data(), j, i),
            0.0,
            dst,
        );
    } else if left <= right {
        for l in 0..left {
            gemm(
                View::rm(m.data(), j, i),
                View::rm(&src[l * i * right..(l + 1) * i * right], i, right),
                0.0,
                &mut dst[l * j * right..(l + 1) * j * right],
            );
        }
    } else {
        // one (left × i)·(i × j) product per trailing index
        for r in 0..right {
            let a = View {
                data: &src[r..],
                rows: left,
                cols: i,
                rs: i * right,
                cs: right,
            };
            gemm_strided(a, View::rm_t(m.data(), j, i), 0.0, &mut dst[r..], j * right, right);
        }
    }
    Ok(out)
}

/// `Σ` over every index except `axis` of `a[.., i, ..] · b[.., j, ..]`,
/// returned as an `a_axis × b_axis` matrix. This is the mode-`axis`
/// unfolding product `A₍ₖ₎ B₍ₖ₎ᵀ`.
pub(crate) fn mode_gram(a: &DenseTensor, b: &DenseTensor, axis: usize) -> Result<DenseTensor> {
    if a.order() != b.order() {
        return Err(TrnnError::Order(format!(
            "mode gram of orders {} and {}",
            a.order(),
            b.order()
        )));
    }
    for (k, (&ea, &eb)) in a.shape().iter().zip(b.shape()).enumerate() {
        if k != axis && ea != eb {
            return Err(TrnnError::ModeMismatch {
                mode: k + 1,
                expected: ea,
                found: eb,
            });
        }
    }
    let (ia, ib) = (a.shape()[axis], b.shape()[axis]);
    let left: usize = a.shape()[..axis].iter().product();
    let right: usize = a.shape()[axis + 1..].iter().product();
    let mut out = DenseTensor::zeros(&[ia, ib]);
    if right == 1 {
        gemm(
            View::rm_t(a.data(), left, ia),
            View::rm(b.data(), left, ib),
            0.0,
            out.data_mut(),
        );
    } else if left <= right {
        for l in 0..left {
            gemm(
                View::rm(&a.data()[l * ia * right..(l + 1) * ia * right], ia, right),
                View::rm_t(&b.data()[l * ib * right..(l + 1) * ib * right], ib, right),
                1.0,
                out.data_mut(),
            );
        }
    } else {
        for r in 0..right {
            let av = View {
                data: &a.data()[r..],
                rows: ia,
                cols: left,
                rs: right,
                cs: ia * right,
            };
            let bv = View {
                data: &b.data()[r..],
                rows: left,
                cols: ib,
                rs: ib * right,
                cs: right,
            };
            gemm(av, bv, 1.0, out.data_mut());
        }
    }
    Ok(out)
}

/// Einstein contraction `x ∗ c`: full summation of `x` against the leading
/// `order(x)` modes of `c`, leaving the trailing modes of `c`.
pub fn contraction(x: &DenseTensor, c: &DenseTensor) -> Result<DenseTensor> {
    let l = x.order();
    if c.order() <= l {
        return Err(TrnnError::Order(format!(
            "contraction core of order {} must exceed the operand order {l}",
            c.order()
        )));
    }
    for (k, (&ex, &ec)) in x.shape().iter().zip(c.shape()).enumerate() {
        if ex != ec {
            return Err(TrnnError::ModeMismatch {
                mode: k + 1,
                expected: ec,
                found: ex,
            });
        }
    }
    let p = x.len();
    let q: usize = c.shape()[l..].iter().product();
    let mut out = DenseTensor::zeros(&c.shape()[l..]);
    gemm(
        View::rm(x.data(), 1, p),
        View::rm(c.data(), p, q),
        0.0,
        out.data_mut(),
    );
    Ok(out)
}

/// Per-sample contraction of a batched tensor `(N, P…)` against a core
/// `(P…, Q…)`, giving `(N, Q…)`.
pub(crate) fn contract_samples(s: &DenseTensor, core: &DenseTensor) -> Result<DenseTensor> {
    let in_modes = s.order() - 1;
    if core.order() <= in_modes {
        return Err(TrnnError::Order(format!(
            "core of order {} cannot contract {in_modes} sample modes",
            core.order()
        )));
    }
    for (k, (&es, &ec)) in s.sample_shape().iter().zip(core.shape()).enumerate() {
        if es != ec {
            return Err(TrnnError::ModeMismatch {
                mode: k + 2,
                expected: ec,
                found: es,
            });
        }
    }
    let n = s.num_samples();
    let p = s.sample_len();
    let q_shape = &core.shape()[in_modes..];
    let q: usize = q_shape.iter().product();
    let mut shape = vec![n];
    shape.extend_from_slice(q_shape);
    let mut out = DenseTensor::zeros(&shape);
    gemm(
        View::rm(s.data(), n, p),
        View::rm(core.data(), p, q),
        0.0,
        out.data_mut(),
    );
    Ok(out)
}

/// Multilinear product `core ×₁ U₁ ×₂ U₂ ⋯ ×_N U_N` with `U_k` of shape
/// `I_k × r_k`.
pub fn tucker_reconstruct(core: &DenseTensor, factors: &[DenseTensor]) -> Result<DenseTensor> {
    if factors.len() != core.order() {
        return Err(TrnnError::Order(format!(
            "{} factors for a core of order {}",
            factors.len(),
            core.order()
        )));
    }
    factors
        .iter()
        .enumerate()
        .try_fold(core.clone(), |acc, (k, u)| mode_product_axis(&acc, u, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::increment_index;

    fn t(shape: &[usize], data: &[f64]) -> DenseTensor {
        DenseTensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    fn random(shape: &[usize], seed: u64) -> DenseTensor {
        let mut r = lcg(seed);
        DenseTensor::from_fn(shape, |_| r())
    }

    // Brute-force index-formula oracle for the mode product.
    fn mode_oracle(x: &DenseTensor, m: &DenseTensor, mode: usize) -> DenseTensor {
        let a = mode - 1;
        let mut shape = x.shape().to_vec();
        shape[a] = m.shape()[0];
        DenseTensor::from_fn(&shape, |idx| {
            let mut src = idx.to_vec();
            (0..x.shape()[a])
                .map(|i| {
                    src[a] = i;
                    x.get(&src).unwrap() * m.at2(idx[a], i)
                })
                .sum()
        })
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&DenseTensor::zeros(&[3, 4, 2])), 0.0);
        assert_eq!(frobenius_norm(&t(&[2, 2], &[1., 1., 1., 1.])), 2.0);
        let v = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let oracle: f64 = (1..=6).map(|k| (k * k) as f64).sum();
        assert_eq!(oracle, 91.0);
        assert!((frobenius_norm(&v) - 91f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mode_product_examples() {
        let x = random(&[3, 4, 2], 1);
        assert_eq!(mode_n_product(&x, &DenseTensor::identity(4), 2).unwrap(), x);

        let x = t(&[2, 2], &[1., 2., 3., 4.]);
        let m = t(&[1, 2], &[1., 1.]);
        let r = mode_n_product(&x, &m, 1).unwrap();
        assert_eq!(r.shape(), &[1, 2]);
        assert_eq!(r.data(), &[4., 6.]);

        let x = random(&[2, 3, 4], 2);
        let m = random(&[5, 3], 3);
        assert_eq!(mode_n_product(&x, &m, 2).unwrap().shape(), &[2, 5, 4]);
    }

    #[test]
    fn mode_product_errors_name_the_mode() {
        let x = DenseTensor::zeros(&[2, 3, 4]);
        let m = DenseTensor::zeros(&[5, 4]);
        match mode_n_product(&x, &m, 2) {
            Err(TrnnError::ModeMismatch {
                mode: 2,
                expected: 4,
                found: 3,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(mode_n_product(&x, &m, 0).is_err());
        assert!(mode_n_product(&x, &m, 4).is_err());
    }

    #[test]
    fn mode_products_match_oracle_on_every_mode() {
        let x = random(&[3, 4, 5, 2], 7);
        for mode in 1..=4 {
            let m = random(&[3, x.shape()[mode - 1]], 11 + mode as u64);
            let got = mode_n_product(&x, &m, mode).unwrap();
            let want = mode_oracle(&x, &m, mode);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn contraction_examples() {
        // selector core
        let x = t(&[3], &[7., 8., 9.]);
        let c = DenseTensor::from_fn(&[3, 2], |i| if i == [2, 1] { 1.0 } else { 0.0 });
        assert_eq!(contraction(&x, &c).unwrap().data(), &[0.0, 9.0]);

        let x = t(&[2, 2], &[1., 2., 3., 4.]);
        let c = t(&[2, 2, 1], &[1., 0., 0., 1.]);
        let z = contraction(&x, &c).unwrap();
        assert_eq!(z.shape(), &[1]);
        assert_eq!(z.data(), &[5.0]);

        let z = contraction(&DenseTensor::zeros(&[2, 3]), &DenseTensor::zeros(&[2, 3, 4, 5]));
        assert_eq!(z.unwrap().shape(), &[4, 5]);
    }

    #[test]
    fn contraction_errors() {
        let x = DenseTensor::zeros(&[2, 3]);
        assert!(matches!(
            contraction(&x, &DenseTensor::zeros(&[2, 3])),
            Err(TrnnError::Order(_))
        ));
        assert!(matches!(
            contraction(&x, &DenseTensor::zeros(&[2, 4, 5])),
            Err(TrnnError::ModeMismatch { mode: 2, .. })
        ));
    }

    #[test]
    fn tucker_examples() {
        let core = random(&[2, 3], 5);
        let ids = [DenseTensor::identity(2), DenseTensor::identity(3)];
        assert_eq!(tucker_reconstruct(&core, &ids).unwrap(), core);

        // outer product oracle: 2·u1·u2ᵀ
        let core = t(&[1, 1], &[2.0]);
        let u1 = t(&[2, 1], &[1., 2.]);
        let u2 = t(&[2, 1], &[1., 1.]);
        let r = tucker_reconstruct(&core, &[u1, u2]).unwrap();
        assert_eq!(r.data(), &[2., 2., 4., 4.]);

        let core = random(&[2, 2, 2], 9);
        let fs: Vec<_> = (0..3).map(|k| random(&[3 + k, 2], 20 + k as u64)).collect();
        let fwd = tucker_reconstruct(&core, &fs).unwrap();
        let rev = [2usize, 0, 1].iter().fold(core.clone(), |acc, &k| {
            mode_product_axis(&acc, &fs[k], k).unwrap()
        });
        for (a, b) in fwd.data().iter().zip(rev.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn mode_gram_matches_nested_sum() {
        let a = random(&[2, 3, 4], 31);
        let b = random(&[2, 5, 4], 32);
        let g = mode_gram(&a, &b, 1).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let mut s = 0.0;
                let mut idx = vec![0usize; 3];
                for _ in 0..a.len() {
                    if idx[1] == 0 {
                        let (mut ia, mut ib) = (idx.clone(), idx.clone());
                        ia[1] = i;
                        ib[1] = j;
                        s += a.get(&ia).unwrap() * b.get(&ib).unwrap();
                    }
                    increment_index(&mut idx, a.shape());
                }
                assert!((g.at2(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contract_samples_is_per_sample_contraction() {
        let s = random(&[3, 2, 2], 41);
        let core = random(&[2, 2, 3], 42);
        let z = contract_samples(&s, &core).unwrap();
        assert_eq!(z.shape(), &[3, 3]);
        for i in 0..3 {
            let si = s.select_samples(&[i]).unwrap().reshape(&[2, 2]).unwrap();
            let zi = contraction(&si, &core).unwrap();
            for q in 0..3 {
                assert!((z.at2(i, q) - zi.data()[q]).abs() < 1e-14);
            }
        }
    }
}
