//! Partial-correlation network inference ("PCI-surrogate").
//!
//! Pearson correlation across time, a ridge on the diagonal, then the
//! precision matrix `Θ` gives `p_ij = −Θ_ij / √(Θ_ii Θ_jj)`. The result is
//! symmetric, so it carries no edge direction.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{MultivariateSeries, WeightedDigraph};
use crate::error::{Error, Result};

pub const PCI_LABEL: &str = "PCI-surrogate";
pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub corr: Tensor,
    pub precision: Tensor,
    pub ridge: f64,
    /// Rows with zero variance; their edges are forced to 0.
    pub constant_rows: Vec<usize>,
}

fn to_tensor(m: &DMatrix<f64>) -> Tensor {
    Tensor::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn correlation_estimate(ts: &MultivariateSeries, ridge: f64) -> Result<CorrelationEstimate> {
    let (n, t) = (ts.n(), ts.t_len());
    if t < 3 {
        return Err(Error::Validation(format!("PCI needs at least 3 time points, got {t}")));
    }
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::Validation(format!("ridge must be positive, got {ridge}")));
    }
    let mut z = DMatrix::zeros(n, t);
    let mut constant_rows = Vec::new();
    for i in 0..n {
        let row = ts.values().row(i);
        let mean = row.iter().sum::<f64>() / t as f64;
        let ss: f64 = row.iter().map(|x| (x - mean) * (x - mean)).sum();
        if ss <= f64::EPSILON * f64::EPSILON * t as f64 * (1.0 + mean * mean) {
            constant_rows.push(i);
            continue;
        }
        let scale = ss.sqrt();
        for (k, x) in row.iter().enumerate() {
            z[(i, k)] = (x - mean) / scale;
        }
    }
    let mut corr = &z * z.transpose();
    for &i in &constant_rows {
        corr[(i, i)] = 1.0;
    }
    let regularized = &corr + DMatrix::identity(n, n) * ridge;
    let precision = regularized
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numeric("regularized correlation is not positive definite".into()))?;
    Ok(CorrelationEstimate {
        corr: to_tensor(&corr),
        precision: to_tensor(&precision),
        ridge,
        constant_rows,
    })
}

pub fn pci_infer(ts: &MultivariateSeries, ridge: f64) -> Result<WeightedDigraph> {
    let est = correlation_estimate(ts, ridge)?;
    if !est.constant_rows.is_empty() {
        warn!(
            "constant series rows {:?}: their partial correlations are set to 0",
            est.constant_rows
        );
    }
    let n = ts.n();
    let th = &est.precision;
    let mut a = Tensor::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-0.5 * (th.get(i, j) + th.get(j, i)) / (th.get(i, i) * th.get(j, j)).sqrt()).clamp(-1.0, 1.0)
        }
    });
    for &c in &est.constant_rows {
        for k in 0..n {
            a.set(c, k, 0.0);
            a.set(k, c, 0.0);
        }
    }
    WeightedDigraph::new(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(n: usize, t: usize, seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(n, t, |_, _| r.sample(StandardNormal))
    }

    fn series(v: Tensor) -> MultivariateSeries {
        MultivariateSeries::new(v).unwrap()
    }

    fn mean_abs_offdiag(a: &WeightedDigraph) -> f64 {
        let n = a.n();
        a.adjacency().data().iter().map(|v| v.abs()).sum::<f64>() / (n * (n - 1)) as f64
    }

    #[test]
    fn white_noise_gives_weak_edges() {
        let a = pci_infer(&series(noise(8, 500, 1)), DEFAULT_RIDGE).unwrap();
        assert!(mean_abs_offdiag(&a) < 0.1, "{}", mean_abs_offdiag(&a));
    }

    #[test]
    fn twin_series_are_strongly_linked() {
        let mut v = noise(5, 200, 2);
        for k in 0..200 {
            let x = v.get(0, k);
            v.set(3, k, x);
        }
        let a = pci_infer(&series(v), DEFAULT_RIDGE).unwrap();
        assert!(a.weight(0, 3) > 0.9, "{}", a.weight(0, 3));
    }

    #[test]
    fn symmetric_with_zero_diagonal_and_bounded() {
        let a = pci_infer(&series(noise(6, 11, 3)), DEFAULT_RIDGE).unwrap();
        assert!(a.has_zero_diagonal());
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a.weight(i, j), a.weight(j, i));
                assert!(a.weight(i, j).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn permutation_equivariant() {
        let s = series(noise(6, 40, 4));
        let perm = [3, 0, 5, 1, 4, 2];
        let a = pci_infer(&s, DEFAULT_RIDGE).unwrap().permuted(&perm);
        let b = pci_infer(&s.permuted(&perm), DEFAULT_RIDGE).unwrap();
        for (x, y) in a.adjacency().data().iter().zip(b.adjacency().data()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn positive_row_scaling_is_irrelevant() {
        let v = noise(5, 30, 5);
        let scaled = Tensor::from_fn(5, 30, |i, k| v.get(i, k) * (1.0 + 3.0 * i as f64));
        let a = pci_infer(&series(v), DEFAULT_RIDGE).unwrap();
        let b = pci_infer(&series(scaled), DEFAULT_RIDGE).unwrap();
        for (x, y) in a.adjacency().data().iter().zip(b.adjacency().data()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_row_is_isolated() {
        let mut v = noise(4, 20, 6);
        for k in 0..20 {
            v.set(2, k, 0.5);
        }
        let a = pci_infer(&series(v), DEFAULT_RIDGE).unwrap();
        for k in 0..4 {
            assert_eq!(a.weight(2, k), 0.0);
            assert_eq!(a.weight(k, 2), 0.0);
        }
        assert!(a.adjacency().is_finite());
    }

    #[test]
    fn short_or_unregularized_input_rejected() {
        assert!(pci_infer(&series(noise(3, 2, 7)), DEFAULT_RIDGE).is_err());
        assert!(pci_infer(&series(noise(3, 10, 7)), 0.0).is_err());
    }

    #[test]
    fn fewer_samples_than_nodes_still_invertible() {
        let a = pci_infer(&series(noise(50, 11, 8)), DEFAULT_RIDGE).unwrap();
        assert!(a.adjacency().is_finite());
    }
}
