//! Row-major f64 matrix with the three dense kernels the net needs.
//!
//! Shapes follow the convention: activations are `batch x features`, layer
//! weights are `out x in`. The products are register-tiled AVX-512 kernels
//! when the CPU supports them (each streamed cache line feeds an 8x16
//! accumulator tile, which is what the single-core training budget needs),
//! with portable scalar fallbacks that compute the same sums.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dot product with eight accumulator lanes so the reduction can vectorize.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8 * 8;
    for (ca, cb) in a[..chunks].chunks_exact(8).zip(b[..chunks].chunks_exact(8)) {
        for j in 0..8 {
            acc[j] += ca[j] * cb[j];
        }
    }
    let mut tail = 0.0;
    for i in chunks..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len(), "axpy: length mismatch");
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * *xi;
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    /// Builds from nested rows; panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "from_rows: no rows");
        let cols = rows[0].len();
        let mut m = Matrix::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "from_rows: ragged row {r}");
            m.row_mut(r).copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Cache-blocked transpose.
    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        const B: usize = 16;
        for rb in (0..self.rows).step_by(B) {
            for cb in (0..self.cols).step_by(B) {
                for r in rb..(rb + B).min(self.rows) {
                    for c in cb..(cb + B).min(self.cols) {
                        out.data[c * self.rows + r] = self.data[r * self.cols + c];
                    }
                }
            }
        }
        out
    }

    /// `self (m x k) * other^T` where `other` is `n x k`.
    ///
    /// This is the forward product: `x (batch x in) . weights^T` with
    /// weights stored `out x in`.
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_nt: inner dim mismatch");
        // For a handful of rows (single-state rollout forwards) the dot
        // formulation wins; batches go through the tiled kernel on a
        // transposed copy of `other`.
        #[cfg(target_arch = "x86_64")]
        if self.rows >= 4 && simd::available() {
            let bt = other.transposed();
            let mut out = Matrix::zeros(self.rows, other.rows);
            // SAFETY: availability checked above; shapes checked here and
            // by the assert on entry.
            unsafe { simd::gemm_bcast::<false>(self, &bt, &mut out) };
            return out;
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            let out_row = out.row_mut(i);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = dot(a, other.row(j));
            }
        }
        out
    }

    /// `self (m x k) * other (k x n)`.
    ///
    /// Used for the input gradient: `dz (batch x out) . weights (out x in)`.
    pub fn matmul_nn(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul_nn: inner dim mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        #[cfg(target_arch = "x86_64")]
        if simd::available() {
            // SAFETY: feature availability checked; shapes checked above.
            unsafe { simd::gemm_bcast::<false>(self, other, &mut out) };
            return out;
        }
        for i in 0..self.rows {
            let a = self.row(i);
            let out_row = out.row_mut(i);
            for (l, &ail) in a.iter().enumerate() {
                axpy(ail, other.row(l), out_row);
            }
        }
        out
    }

    /// `self^T (k x m) * other (m x n)` where `self` is `m x k`.
    ///
    /// Used for the weight gradient: `dz^T (out x batch) . x (batch x in)`.
    pub fn matmul_tn(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_tn: outer dim mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        #[cfg(target_arch = "x86_64")]
        if simd::available() {
            // SAFETY: feature availability checked; shapes checked above.
            unsafe { simd::gemm_bcast::<true>(self, other, &mut out) };
            return out;
        }
        for b in 0..self.rows {
            let z = self.row(b);
            let x = other.row(b);
            for (o, &zbo) in z.iter().enumerate() {
                axpy(zbo, x, out.row_mut(o));
            }
        }
        out
    }

    /// Adds `bias` to every row in place.
    pub fn add_row_broadcast(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols, "bias length mismatch");
        for r in 0..self.rows {
            for (v, b) in self.row_mut(r).iter_mut().zip(bias.iter()) {
                *v += b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Explicit AVX-512 kernels. One microkernel covers both broadcast-form
/// products: `C = A . B` and `C = A^T . B`, differing only in how the
/// broadcast scalar is addressed.
#[cfg(target_arch = "x86_64")]
mod simd {
    use super::Matrix;
    use core::arch::x86_64::*;

    #[inline]
    pub fn available() -> bool {
        is_x86_feature_detected!("avx512f")
    }

    /// `C (m x n) += A' . B` over `k` terms, where `B` is `k x n` and the
    /// broadcast scalar comes from `A[(i, l)]` (`TRANS = false`, `A` is
    /// `m x k`) or `A[(l, i)]` (`TRANS = true`, `A` is `k x m`).
    ///
    /// `C` must arrive zeroed. Tiles are 8 C-rows x 16 C-columns held in
    /// zmm registers across the whole k loop; each B cache line is used 8
    /// times, which is what beats the L2-bandwidth wall.
    ///
    /// # Safety
    /// Caller must ensure AVX-512F is available and shapes agree:
    /// `c.rows x c.cols` = `m x n`, `b.rows x b.cols` = `k x n`, and `a`
    /// providing `m x k` (or `k x m`) scalars.
    #[target_feature(enable = "avx512f")]
    pub unsafe fn gemm_bcast<const TRANS: bool>(a: &Matrix, b: &Matrix, c: &mut Matrix) {
        let m = c.rows();
        let mut i = 0;
        while i + 8 <= m {
            tile_rows::<TRANS, 8>(a, b, c, i);
            i += 8;
        }
        match m - i {
            0 => {}
            1 => tile_rows::<TRANS, 1>(a, b, c, i),
            2 => tile_rows::<TRANS, 2>(a, b, c, i),
            3 => tile_rows::<TRANS, 3>(a, b, c, i),
            4 => tile_rows::<TRANS, 4>(a, b, c, i),
            5 => tile_rows::<TRANS, 5>(a, b, c, i),
            6 => tile_rows::<TRANS, 6>(a, b, c, i),
            7 => tile_rows::<TRANS, 7>(a, b, c, i),
            _ => unreachable!(),
        }
    }

    /// One band of `IB` C-rows starting at row `i`.
    #[target_feature(enable = "avx512f")]
    #[inline]
    unsafe fn tile_rows<const TRANS: bool, const IB: usize>(
        a: &Matrix,
        b: &Matrix,
        c: &mut Matrix,
        i: usize,
    ) {
        let n = c.cols();
        let k = b.rows();
        let mut j = 0;
        while j < n {
            let jt = (n - j).min(16);
            let mask0: __mmask8 = if jt >= 8 { 0xff } else { ((1u32 << jt) - 1) as u8 };
            let mask1: __mmask8 = if jt >= 16 {
                0xff
            } else if jt > 8 {
                ((1u32 << (jt - 8)) - 1) as u8
            } else {
                0
            };
            let wide = jt > 8;
            let mut acc0 = [_mm512_setzero_pd(); IB];
            let mut acc1 = [_mm512_setzero_pd(); IB];
            for l in 0..k {
                let bp = b.row(l).as_ptr().add(j);
                let b0 = _mm512_maskz_loadu_pd(mask0, bp);
                let b1 = if wide {
                    _mm512_maskz_loadu_pd(mask1, bp.add(8))
                } else {
                    _mm512_setzero_pd()
                };
                for ii in 0..IB {
                    let s = if TRANS { a.get(l, i + ii) } else { a.get(i + ii, l) };
                    let alpha = _mm512_set1_pd(s);
                    acc0[ii] = _mm512_fmadd_pd(alpha, b0, acc0[ii]);
                    if wide {
                        acc1[ii] = _mm512_fmadd_pd(alpha, b1, acc1[ii]);
                    }
                }
            }
            for ii in 0..IB {
                let cp = c.row_mut(i + ii).as_mut_ptr().add(j);
                _mm512_mask_storeu_pd(cp, mask0, acc0[ii]);
                if wide {
                    _mm512_mask_storeu_pd(cp.add(8), mask1, acc1[ii]);
                }
            }
            j += jt;
        }
    }
}
