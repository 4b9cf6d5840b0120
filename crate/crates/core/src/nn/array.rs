//! Dense row-major f64 matrices and the handful of kernels the model needs.
//!
//! The inner loops are written so LLVM vectorizes them: contiguous slices,
//! fixed-stride chunks, and independent accumulators.

use std::fmt;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Array2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Array2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Array2({}x{})", self.rows, self.cols)
    }
}

impl Array2 {
    pub fn zeros(rows: usize, cols: usize) -> Array2 {
        Array2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Array2 {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Array2 { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Array2 {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Array2 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert!(r < self.rows);
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        debug_assert!(r < self.rows);
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Array2) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of squares of all entries.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    let (a_main, a_tail) = a.split_at(chunks * 4);
    let (b_main, b_tail) = b.split_at(chunks * 4);
    for (ca, cb) in a_main.chunks_exact(4).zip(b_main.chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a_tail.iter().zip(b_tail) {
        sum += x * y;
    }
    sum
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `a (m×k) · bᵀ (n×k) -> (m×n)`; both operands are read along rows.
pub fn matmul_nt(a: &Array2, b: &Array2) -> Array2 {
    assert_eq!(a.cols, b.cols, "inner dimensions must agree");
    let mut out = Array2::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ai = a.row(i);
        let oi = out.row_mut(i);
        for j in 0..b.rows {
            oi[j] = dot(ai, b.row(j));
        }
    }
    out
}

/// `a (m×k) · b (k×n) -> (m×n)` via row-wise accumulation.
pub fn matmul_nn(a: &Array2, b: &Array2) -> Array2 {
    assert_eq!(a.cols, b.rows, "inner dimensions must agree");
    let mut out = Array2::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let ai = a.row(i);
        let oi = out.row_mut(i);
        for (k, &aik) in ai.iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, b.row(k), oi);
            }
        }
    }
    out
}

/// `w (r×c) · x (c) -> (r)`.
pub fn matvec(w: &Array2, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols, x.len(), "matrix/vector shapes must agree");
    (0..w.rows).map(|i| dot(w.row(i), x)).collect()
}

/// Accumulating variant: `out += w · x`.
pub fn matvec_into(w: &Array2, x: &[f64], out: &mut [f64]) {
    assert_eq!(w.cols, x.len());
    assert_eq!(w.rows, out.len());
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(w.row(i), x);
    }
}

/// `wᵀ (c×r) · y (r) -> (c)`.
pub fn matvec_t(w: &Array2, y: &[f64]) -> Vec<f64> {
    assert_eq!(w.rows, y.len(), "matrix/vector shapes must agree");
    let mut out = vec![0.0; w.cols];
    for (i, &yi) in y.iter().enumerate() {
        if yi != 0.0 {
            axpy(yi, w.row(i), &mut out);
        }
    }
    out
}

/// Rank-1 update: `c += x ⊗ y`.
pub fn add_outer(c: &mut Array2, x: &[f64], y: &[f64]) {
    assert_eq!(c.rows, x.len());
    assert_eq!(c.cols, y.len());
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, y, c.row_mut(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_with_naive() {
        let a = Array2::from_fn(3, 5, |r, c| (r * 5 + c) as f64 * 0.1 - 0.7);
        let b = Array2::from_fn(4, 5, |r, c| (r as f64 - c as f64) * 0.2);
        let c = matmul_nt(&a, &b);
        for i in 0..3 {
            for j in 0..4 {
                let mut expect = 0.0;
                for k in 0..5 {
                    expect += a.get(i, k) * b.get(j, k);
                }
                assert!((c.get(i, j) - expect).abs() < 1e-12);
            }
        }

        let b2 = Array2::from_fn(5, 2, |r, c| (r + 2 * c) as f64 * 0.3);
        let d = matmul_nn(&a, &b2);
        for i in 0..3 {
            for j in 0..2 {
                let mut expect = 0.0;
                for k in 0..5 {
                    expect += a.get(i, k) * b2.get(k, j);
                }
                assert!((d.get(i, j) - expect).abs() < 1e-12);
            }
        }

        let x = vec![1.0, -2.0, 0.5, 0.0, 3.0];
        let mv = matvec(&a, &x);
        for i in 0..3 {
            assert!((mv[i] - dot(a.row(i), &x)).abs() < 1e-12);
        }

        let y = vec![0.5, -1.0, 2.0];
        let mvt = matvec_t(&a, &y);
        for j in 0..5 {
            let mut expect = 0.0;
            for i in 0..3 {
                expect += a.get(i, j) * y[i];
            }
            assert!((mvt[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn outer_product_accumulates() {
        let mut c = Array2::zeros(2, 3);
        add_outer(&mut c, &[2.0, -1.0], &[1.0, 0.5, 0.0]);
        add_outer(&mut c, &[1.0, 1.0], &[0.0, 1.0, 1.0]);
        assert_eq!(c.row(0), &[2.0, 2.0, 1.0]);
        assert_eq!(c.row(1), &[-1.0, 0.5, 1.0]);
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..7).map(|i| (i * 2) as f64).collect();
        let expect: f64 = (0..7).map(|i| (i * i * 2) as f64).sum();
        assert_eq!(dot(&a, &b), expect);
    }
}
