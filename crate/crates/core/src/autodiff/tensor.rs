use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major 2-D array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "tensor of shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::full(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Tensor::full(rows, cols, 1.0)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Single-row tensor holding `values`.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    /// Builds a tensor from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Validation(format!(
                    "ragged rows: row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self.data[r * self.cols + c]);
            }
        }
        Tensor {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm_nn(self, other, &mut out);
        Ok(out)
    }

    /// Adds `other` into `self` elementwise.
    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// out += a · b, with element strides given as (row, col) for each operand.
fn gemm_strided(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), out: &mut Tensor) {
    assert_eq!(out.shape(), (m, n));
    assert!(a.0.len() >= m * k && b.0.len() >= k * n);
    // SAFETY: the operand slices hold at least m·k and k·n elements addressed
    // by the given strides, and `out` is an m×n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            1.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// out += a · b
pub(crate) fn gemm_nn(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, k) = a.shape();
    let n = b.cols;
    debug_assert_eq!(b.rows, k);
    gemm_strided(m, k, n, (&a.data, k as isize, 1), (&b.data, n as isize, 1), out);
}

/// out += a · bᵀ
pub(crate) fn gemm_nt(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, k) = a.shape();
    let n = b.rows;
    debug_assert_eq!(b.cols, k);
    gemm_strided(m, k, n, (&a.data, k as isize, 1), (&b.data, 1, k as isize), out);
}

/// out += aᵀ · b
pub(crate) fn gemm_tn(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (k, m) = a.shape();
    let n = b.cols;
    debug_assert_eq!(b.rows, k);
    gemm_strided(m, k, n, (&a.data, 1, m as isize), (&b.data, n as isize, 1), out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(Tensor::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(Tensor::from_rows(&rows).is_err());
    }

    #[test]
    fn gemm_variants_agree() {
        let a = Tensor::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.5 - 2.0);
        let b = Tensor::from_fn(4, 2, |r, c| (r as f64) - (c as f64) * 1.5);
        let ab = a.matmul(&b).unwrap();

        let mut nt = Tensor::zeros(3, 2);
        gemm_nt(&a, &b.transpose(), &mut nt);
        let mut tn = Tensor::zeros(3, 2);
        gemm_tn(&a.transpose(), &b, &mut tn);
        for i in 0..6 {
            assert!((ab.data()[i] - nt.data()[i]).abs() < 1e-12);
            assert!((ab.data()[i] - tn.data()[i]).abs() < 1e-12);
        }
    }
}
