use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PairedSample, WeightedDigraph};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::fcm::fcm_simulate;

/// Extended Barabási–Albert growth parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaConfig {
    /// Probability that a step adds an edge between existing nodes instead of
    /// growing a new node.
    pub p_edge: f64,
    /// Size of the initial clique.
    pub initial_nodes: usize,
    /// Edges attached by every new node.
    pub edges_per_node: usize,
}

impl Default for BaConfig {
    fn default() -> Self {
        BaConfig {
            p_edge: 0.4,
            initial_nodes: 2,
            edges_per_node: 1,
        }
    }
}

/// Scale-free directed graph with `n` nodes and U[-1, 1] edge weights.
pub fn generate_ba_graph<R: Rng + ?Sized>(n: usize, p_edge: f64, rng: &mut R) -> Result<WeightedDigraph> {
    generate_ba_graph_with(
        n,
        &BaConfig {
            p_edge,
            ..BaConfig::default()
        },
        rng,
    )
}

pub fn generate_ba_graph_with<R: Rng + ?Sized>(
    n: usize,
    cfg: &BaConfig,
    rng: &mut R,
) -> Result<WeightedDigraph> {
    if n < 2 {
        return Err(Error::Validation(format!("BA graph needs n >= 2, got {n}")));
    }
    if !(cfg.p_edge > 0.0 && cfg.p_edge < 1.0) {
        return Err(Error::Validation(format!(
            "edge probability must lie in (0, 1), got {}",
            cfg.p_edge
        )));
    }
    if cfg.initial_nodes < 2 || cfg.edges_per_node == 0 || cfg.edges_per_node > cfg.initial_nodes {
        return Err(Error::Validation(format!(
            "need 2 <= initial_nodes and 1 <= edges_per_node <= initial_nodes, got {} / {}",
            cfg.initial_nodes, cfg.edges_per_node
        )));
    }

    let seed_nodes = cfg.initial_nodes.min(n);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    // every edge contributes both endpoints; uniform draws from this list
    // are degree-proportional
    let mut endpoints: Vec<usize> = Vec::new();
    for u in 0..seed_nodes {
        for v in u + 1..seed_nodes {
            add_edge(u, v, &mut edges, &mut endpoints);
        }
    }

    let mut nodes = seed_nodes;
    while nodes < n {
        let saturated = edges.len() >= nodes * (nodes - 1) / 2;
        if !saturated && rng.random::<f64>() < cfg.p_edge {
            // resample until an absent pair appears; bounded because the graph
            // is not complete
            loop {
                let u = endpoints[rng.random_range(0..endpoints.len())];
                let v = endpoints[rng.random_range(0..endpoints.len())];
                if u != v && !edges.contains(&(u.min(v), u.max(v))) {
                    add_edge(u, v, &mut edges, &mut endpoints);
                    break;
                }
            }
        } else {
            let new = nodes;
            let mut targets = BTreeSet::new();
            while targets.len() < cfg.edges_per_node.min(nodes) {
                targets.insert(endpoints[rng.random_range(0..endpoints.len())]);
            }
            for t in targets {
                add_edge(new, t, &mut edges, &mut endpoints);
            }
            nodes += 1;
        }
    }

    let mut adjacency = Tensor::zeros(n, n);
    for (u, v) in edges {
        let (source, target) = if rng.random::<bool>() { (u, v) } else { (v, u) };
        let w = rng.random_range(-1.0..=1.0);
        adjacency.set(target, source, w);
    }
    WeightedDigraph::new(adjacency)
}

fn add_edge(u: usize, v: usize, edges: &mut BTreeSet<(usize, usize)>, endpoints: &mut Vec<usize>) {
    if u != v && edges.insert((u.min(v), u.max(v))) {
        endpoints.push(u);
        endpoints.push(v);
    }
}

/// Shape of a synthetic paired dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n: usize,
    pub pairs: usize,
    pub t_len: usize,
    pub ba: BaConfig,
}

impl DatasetSpec {
    pub fn new(n: usize, pairs: usize, t_len: usize) -> Self {
        DatasetSpec {
            n,
            pairs,
            t_len,
            ba: BaConfig::default(),
        }
    }
}

/// Draws `spec.pairs` BA graphs and simulates each one from a U[0, 1]
/// initial state.
pub fn make_dataset<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Result<Vec<PairedSample>> {
    if spec.pairs == 0 {
        return Err(Error::Validation("dataset needs at least one pair".into()));
    }
    if spec.t_len == 0 {
        return Err(Error::Validation("series length must be at least 1".into()));
    }
    (0..spec.pairs)
        .map(|_| {
            let graph = generate_ba_graph_with(spec.n, &spec.ba, rng)?;
            let init: Vec<f64> = (0..spec.n).map(|_| rng.random::<f64>()).collect();
            let series = fcm_simulate(&graph, &init, spec.t_len)?;
            PairedSample::new(series, graph)
        })
        .collect()
}
