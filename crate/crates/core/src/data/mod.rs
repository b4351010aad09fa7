//! Graph and series types, synthetic dataset generation, DREAM3 parsing and
//! dataset files.

mod ba;
pub mod dream3;
pub(crate) mod io;

pub use ba::{generate_ba_graph, generate_ba_graph_with, make_dataset, BaConfig, DatasetSpec};
pub use io::{
    load_dataset, load_graph_set, read_graph_document, save_dataset, save_graph_set, GraphSet,
    DATASET_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Directed weighted graph stored as an N×N matrix where entry `(i, j)` is
/// the weight of the edge from node `j` to node `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedDigraph {
    adjacency: Tensor,
}

impl WeightedDigraph {
    /// Wraps a square matrix with finite entries in `[-1, 1]`.
    pub fn new(adjacency: Tensor) -> Result<Self> {
        let (r, c) = adjacency.shape();
        if r != c || r == 0 {
            return Err(Error::Validation(format!(
                "adjacency must be square and non-empty, got {r}x{c}"
            )));
        }
        if let Some(bad) = adjacency
            .data()
            .iter()
            .find(|v| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(Error::Validation(format!(
                "edge weight {bad} outside [-1, 1]"
            )));
        }
        Ok(WeightedDigraph { adjacency })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        WeightedDigraph::new(Tensor::from_rows(rows)?)
    }

    pub fn empty(n: usize) -> Self {
        WeightedDigraph {
            adjacency: Tensor::zeros(n, n),
        }
    }

    /// Every off-diagonal entry set to `weight`.
    pub fn complete(n: usize, weight: f64) -> Self {
        WeightedDigraph {
            adjacency: Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { weight }),
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// Weight of the edge `source → target`.
    pub fn weight(&self, target: usize, source: usize) -> f64 {
        self.adjacency.get(target, source)
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.n()).all(|i| self.adjacency.get(i, i) == 0.0)
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`, i.e. `P A Pᵀ`.
    pub fn permuted(&self, perm: &[usize]) -> WeightedDigraph {
        let n = self.n();
        let mut out = Tensor::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(perm[i], perm[j], self.adjacency.get(i, j));
            }
        }
        WeightedDigraph { adjacency: out }
    }

    /// Entrywise absolute values, for comparing against unsigned gold standards.
    pub fn abs(&self) -> WeightedDigraph {
        WeightedDigraph {
            adjacency: self.adjacency.map(f64::abs),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.data().iter().filter(|w| **w != 0.0).count()
    }
}

/// N×T matrix; row `i` is the expression series of node `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSeries {
    values: Tensor,
}

impl MultivariateSeries {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Validation(format!(
                "series must have at least one node and one time point, got {:?}",
                values.shape()
            )));
        }
        if !values.is_finite() {
            return Err(Error::Validation("series contains non-finite values".into()));
        }
        Ok(MultivariateSeries { values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        MultivariateSeries::new(Tensor::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn t_len(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Values of every node at time `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.values.get(i, t)).collect()
    }

    /// Reorders rows so that node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MultivariateSeries {
        let mut out = Tensor::zeros(self.n(), self.t_len());
        for (i, &to) in perm.iter().enumerate().take(self.n()) {
            for t in 0..self.t_len() {
                out.set(to, t, self.values.get(i, t));
            }
        }
        MultivariateSeries { values: out }
    }
}

/// A series together with the graph that produced (or explains) it.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub series: MultivariateSeries,
    pub graph: WeightedDigraph,
}

impl PairedSample {
    pub fn new(series: MultivariateSeries, graph: WeightedDigraph) -> Result<Self> {
        if series.n() != graph.n() {
            return Err(Error::Validation(format!(
                "series has {} nodes but graph has {}",
                series.n(),
                graph.n()
            )));
        }
        Ok(PairedSample { series, graph })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }
}
