use rayon::prelude::*;

use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Row count above which matrix products are split across the rayon pool.
const PAR_ROWS: usize = 4096;
const CHUNK_ROWS: usize = 1024;

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn select_rows(&self, index: &[u32]) -> Self {
        let mut out = Vec::with_capacity(index.len() * self.cols);
        for &i in index {
            out.extend_from_slice(self.row(i as usize));
        }
        Self {
            rows: index.len(),
            cols: self.cols,
            data: out,
        }
    }
}

/// `x · w` where `w` is a row-major `k x n` block.
pub(crate) fn matmul<T: Scalar>(x: &Matrix<T>, w: &[T], n: usize) -> Matrix<T> {
    let (m, k) = x.shape();
    debug_assert_eq!(w.len(), k * n);
    let mut out = Matrix::zeros(m, n);
    if m == 0 || n == 0 {
        return out;
    }
    let kernel = |rows: usize, xs: &[T], os: &mut [T]| unsafe {
        T::gemm(
            rows,
            k,
            n,
            T::one(),
            xs.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            n as isize,
            1,
            T::zero(),
            os.as_mut_ptr(),
            n as isize,
            1,
        )
    };
    if m >= PAR_ROWS && rayon::current_num_threads() > 1 {
        out.data
            .par_chunks_mut(CHUNK_ROWS * n)
            .zip(x.data.par_chunks(CHUNK_ROWS * k.max(1)))
            .for_each(|(os, xs)| kernel(os.len() / n, xs, os));
    } else {
        kernel(m, &x.data, &mut out.data);
    }
    out
}

/// `dy · wᵀ` for a row-major `k x n` block `w`; returns `m x k`.
pub(crate) fn matmul_transposed<T: Scalar>(dy: &Matrix<T>, w: &[T], k: usize) -> Matrix<T> {
    let (m, n) = dy.shape();
    debug_assert_eq!(w.len(), k * n);
    let mut out = Matrix::zeros(m, k);
    if m == 0 || k == 0 {
        return out;
    }
    let kernel = |rows: usize, ds: &[T], os: &mut [T]| unsafe {
        T::gemm(
            rows,
            n,
            k,
            T::one(),
            ds.as_ptr(),
            n as isize,
            1,
            w.as_ptr(),
            1,
            n as isize,
            T::zero(),
            os.as_mut_ptr(),
            k as isize,
            1,
        )
    };
    if m >= PAR_ROWS && rayon::current_num_threads() > 1 {
        out.data
            .par_chunks_mut(CHUNK_ROWS * k)
            .zip(dy.data.par_chunks(CHUNK_ROWS * n.max(1)))
            .for_each(|(os, ds)| kernel(os.len() / k, ds, os));
    } else {
        kernel(m, &dy.data, &mut out.data);
    }
    out
}

/// `acc += xᵀ · dy` where `acc` is a row-major `k x n` block.
pub(crate) fn accumulate_outer<T: Scalar>(x: &Matrix<T>, dy: &Matrix<T>, acc: &mut [T]) {
    let (m, k) = x.shape();
    let n = dy.cols();
    debug_assert_eq!(dy.rows(), m);
    debug_assert_eq!(acc.len(), k * n);
    if m == 0 {
        return;
    }
    unsafe {
        T::gemm(
            k,
            m,
            n,
            T::one(),
            x.data.as_ptr(),
            1,
            k as isize,
            dy.data.as_ptr(),
            n as isize,
            1,
            T::one(),
            acc.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|l| a.get(i, l) * b.get(l, j)).sum()
        })
    }

    #[test]
    fn products_match_naive() {
        let a = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 2.0);
        let w = Matrix::from_fn(3, 4, |i, j| (i as f64 - j as f64) * 0.25);
        assert_eq!(matmul(&a, w.as_slice(), 4), naive(&a, &w));

        let dy = Matrix::from_fn(5, 4, |i, j| (i + 2 * j) as f64 * 0.1);
        let wt = Matrix::from_fn(4, 3, |i, j| w.get(j, i));
        let dx = matmul_transposed(&dy, w.as_slice(), 3);
        assert_eq!(dx, naive(&dy, &wt));

        let mut acc = vec![1.0; 12];
        accumulate_outer(&a, &dy, &mut acc);
        let at = Matrix::from_fn(3, 5, |i, j| a.get(j, i));
        let expect = naive(&at, &dy);
        for (x, e) in acc.iter().zip(expect.as_slice()) {
            assert!((x - 1.0 - e).abs() < 1e-12);
        }
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Matrix::<f32>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
