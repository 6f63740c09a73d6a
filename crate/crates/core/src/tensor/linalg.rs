//! Thin strided GEMM wrapper.
//!
//! Small products run through a plain triple loop; anything larger goes to
//! `matrixmultiply`, which packs and blocks.

/// A read-only strided matrix view.
#[derive(Clone, Copy, Debug)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    /// Contiguous row-major `rows × cols` view.
    pub fn rm(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    /// Transposed view of contiguous row-major `rows × cols` data, i.e. a
    /// `cols × rows` matrix.
    pub fn rm_t(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows: cols,
            cols: rows,
            rs: 1,
            cs: cols,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "strided view out of bounds");
        }
    }
}

const SMALL: usize = 2048;

/// `out (m×n, row-major, contiguous) = beta·out + a·b`.
pub(crate) fn gemm(a: View<'_>, b: View<'_>, beta: f64, out: &mut [f64]) {
    assert_eq!(out.len(), a.rows * b.cols, "output buffer has the wrong size");
    gemm_strided(a, b, beta, out, b.cols, 1);
}

/// As [`gemm`] but writing `out[i·rs + j·cs]`.
pub(crate) fn gemm_strided(a: View<'_>, b: View<'_>, beta: f64, out: &mut [f64], rs: usize, cs: usize) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    a.check();
    b.check();
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rs + (n - 1) * cs < out.len(), "strided output out of bounds");
    let scale = |out: &mut [f64]| {
        for i in 0..m {
            for j in 0..n {
                let o = &mut out[i * rs + j * cs];
                *o = if beta == 0.0 { 0.0 } else { *o * beta };
            }
        }
    };
    if k == 0 {
        scale(out);
        return;
    }
    if m * k * n <= SMALL {
        scale(out);
        for i in 0..m {
            for p in 0..k {
                let aip = a.data[i * a.rs + p * a.cs];
                if aip == 0.0 {
                    continue;
                }
                let boff = p * b.rs;
                if b.cs == 1 && cs == 1 {
                    let brow = &b.data[boff..boff + n];
                    let row = &mut out[i * rs..i * rs + n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o += aip * bv;
                    }
                } else {
                    for j in 0..n {
                        out[i * rs + j * cs] += aip * b.data[boff + j * b.cs];
                    }
                }
            }
        }
        return;
    }
    // SAFETY: both views and the output were bounds-checked above against
    // their strides and extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            out.as_mut_ptr(),
            rs as isize,
            cs as isize,
        );
    }
}
