//! Discriminator: scores how well a weighted graph explains a time series.
//!
//! The series is summarized by an SRU encoder into `h_ts`. The graph goes
//! through a two-layer GCN over the thresholded, symmetrically normalized
//! adjacency with `h_ts` broadcast as every node's feature (and concatenated
//! again before the second layer and the readout). A gated sum over nodes
//! gives the graph embedding `h_g`, and a neural tensor network compares
//! `h_ts` with `h_g`:
//!
//! ```text
//! H1  = ReLU(Ã X W0)
//! H2  = Ã [H1 ‖ h_ts] W1
//! h_g = Σ_v σ(i(m_v)) ⊙ tanh(j(m_v)),   m_v = mlp([H2_v ‖ h_ts])
//! s_k = tanh(h_ts W_k h_gᵀ + V_k [h_ts ‖ h_g] + b_k),   k = 1..K
//! score = head(s)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE};
use crate::data::{MultivariateSeries, WeightedDigraph};
use crate::error::{Error, Result};
use crate::nn::{InstanceNorm, Linear, SeriesEncoder};

/// Edges with smaller absolute weight are ignored by the GCN.
pub const EDGE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub n: usize,
    pub sru_hidden: usize,
    pub sru_layers: usize,
    pub gcn_dims: [usize; 2],
    pub readout_dims: [usize; 2],
    pub graph_dim: usize,
    pub ntn_k: usize,
    pub threshold: f64,
    pub leaky_slope: f64,
    /// When set, each node's own series (first `len` points, zero padded) is
    /// appended to its input features. Breaks exact permutation invariance of
    /// the score only if node series differ, which they do in practice.
    #[serde(default)]
    pub node_series_len: Option<usize>,
}

impl DiscriminatorConfig {
    pub fn new(n: usize) -> Self {
        DiscriminatorConfig {
            n,
            sru_hidden: 32,
            sru_layers: 2,
            gcn_dims: [32, 32],
            readout_dims: [32, 64],
            graph_dim: 32,
            ntn_k: 16,
            threshold: EDGE_THRESHOLD,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            node_series_len: None,
        }
    }
}

/// Thresholded symmetric normalization `D^{-1/2} A' D^{-1/2}` of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub a_tilde: Tensor,
    /// `d_i = Σ_j |A'_ij|` after thresholding.
    pub degree: Vec<f64>,
    pub threshold: f64,
}

pub fn normalize_adjacency(g: &WeightedDigraph, threshold: f64) -> Result<NormalizedAdjacency> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Validation(format!("threshold must be >= 0, got {threshold}")));
    }
    let a = g.adjacency();
    let degree = (0..g.n())
        .map(|i| a.row(i).iter().filter(|x| x.abs() >= threshold).map(|x| x.abs()).sum())
        .collect();
    let mut tape = Tape::new();
    let av = tape.constant(a.clone());
    let norm = tape.normalize_adjacency(av, threshold)?;
    Ok(NormalizedAdjacency {
        a_tilde: tape.value(norm).clone(),
        degree,
        threshold,
    })
}

#[derive(Clone, Debug)]
struct ReadoutLayer {
    linear: Linear,
    norm: InstanceNorm,
}

/// Values produced by one discriminator pass.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorOutput {
    /// 1×1 score.
    pub score: Var,
    /// 1×K pre-head similarity scores.
    pub similarities: Var,
    /// 1×graph_dim graph embedding.
    pub h_g: Var,
    /// 1×(2·sru_hidden) series latent.
    pub h_ts: Var,
}

/// Plain-value result of [`Discriminator::discriminate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Discrimination {
    pub score: f64,
    pub h_g: Tensor,
    pub h_ts: Tensor,
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub params: ParamStore,
    encoder: SeriesEncoder,
    gcn_w0: ParamId,
    gcn_w1: ParamId,
    readout: Vec<ReadoutLayer>,
    gate: Linear,
    content: Linear,
    ntn_w: Vec<ParamId>,
    ntn_v: ParamId,
    ntn_b: ParamId,
    head: Linear,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        if config.n == 0 || config.ntn_k == 0 || config.sru_layers == 0 {
            return Err(Error::Config(format!("degenerate discriminator config {config:?}")));
        }
        let mut params = ParamStore::new();
        let encoder = SeriesEncoder::new(
            &mut params,
            "d.enc",
            config.n,
            config.sru_hidden,
            config.sru_layers,
            rng,
        );
        let ts_dim = encoder.output_dim();
        let x_dim = ts_dim + config.node_series_len.unwrap_or(0);
        let [g0, g1] = config.gcn_dims;
        let gcn_w0 = params.add_glorot("d.gcn.w0", x_dim, g0, x_dim, g0, rng);
        let gcn_w1 = params.add_glorot("d.gcn.w1", g0 + ts_dim, g1, g0 + ts_dim, g1, rng);

        let mut readout = Vec::new();
        let mut in_dim = g1 + ts_dim;
        for (i, &d) in config.readout_dims.iter().enumerate() {
            readout.push(ReadoutLayer {
                linear: Linear::new(&mut params, &format!("d.readout{i}"), in_dim, d, rng),
                norm: InstanceNorm::new(&mut params, &format!("d.readout_norm{i}"), d),
            });
            in_dim = d;
        }
        let gate = Linear::new(&mut params, "d.gate", in_dim, config.graph_dim, rng);
        let content = Linear::new(&mut params, "d.content", in_dim, config.graph_dim, rng);

        let ntn_w = (0..config.ntn_k)
            .map(|k| {
                params.add_glorot(
                    format!("d.ntn.w{k}"),
                    ts_dim,
                    config.graph_dim,
                    ts_dim,
                    config.graph_dim,
                    rng,
                )
            })
            .collect();
        let pair_dim = ts_dim + config.graph_dim;
        let ntn_v = params.add_glorot("d.ntn.v", config.ntn_k, pair_dim, pair_dim, config.ntn_k, rng);
        let ntn_b = params.add_zeros("d.ntn.b", 1, config.ntn_k);
        let head = Linear::new(&mut params, "d.head", config.ntn_k, 1, rng);

        Ok(Discriminator {
            config,
            params,
            encoder,
            gcn_w0,
            gcn_w1,
            readout,
            gate,
            content,
            ntn_w,
            ntn_v,
            ntn_b,
            head,
        })
    }

    pub fn encode(&self, tape: &mut Tape, p: &Bound, series: Var) -> Result<Var> {
        self.encoder.encode(tape, p, series)
    }

    /// Two-layer GCN node embeddings (N×gcn_dims[1]).
    pub fn gcn_forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        a_tilde: Var,
        h_ts: Var,
        series: Option<Var>,
    ) -> Result<Var> {
        let (n, m) = tape.shape(a_tilde);
        if n != m {
            return Err(Error::shape("gcn", (n, m), (m, m)));
        }
        let broadcast = tape.repeat_rows(h_ts, n)?;
        let x0 = match (self.config.node_series_len, series) {
            (Some(len), Some(s)) => {
                let t_len = tape.shape(s).1;
                let select =
                    tape.constant(Tensor::from_fn(t_len, len, |t, l| if t == l { 1.0 } else { 0.0 }));
                let own = tape.matmul(s, select)?;
                tape.concat_cols(broadcast, own)?
            }
            (Some(_), None) => {
                return Err(Error::Contract(
                    "node series features enabled but no series given".into(),
                ))
            }
            (None, _) => broadcast,
        };
        let ax = tape.matmul(a_tilde, x0)?;
        let h1 = tape.matmul(ax, p.var(self.gcn_w0))?;
        let h1 = tape.relu(h1);
        let x1 = tape.concat_cols(h1, broadcast)?;
        let ax = tape.matmul(a_tilde, x1)?;
        tape.matmul(ax, p.var(self.gcn_w1))
    }

    /// Gated sum of per-node readouts into a 1×graph_dim embedding.
    pub fn aggregate_nodes(&self, tape: &mut Tape, p: &Bound, nodes: Var, h_ts: Var) -> Result<Var> {
        let n = tape.shape(nodes).0;
        let broadcast = tape.repeat_rows(h_ts, n)?;
        let mut m = tape.concat_cols(nodes, broadcast)?;
        for layer in &self.readout {
            m = layer.linear.forward(tape, p, m)?;
            m = layer.norm.forward(tape, p, m)?;
            m = tape.leaky_relu(m, self.config.leaky_slope);
        }
        let gate = self.gate.forward(tape, p, m)?;
        let gate = tape.sigmoid(gate);
        let content = self.content.forward(tape, p, m)?;
        let content = tape.tanh(content);
        let gated = tape.mul(gate, content)?;
        Ok(tape.reduce(crate::autodiff::Reduce::SumCols, gated))
    }

    /// Neural tensor network similarity; returns (1×K scores, 1×1 head output).
    pub fn ntn_score(&self, tape: &mut Tape, p: &Bound, h_ts: Var, h_g: Var) -> Result<(Var, Var)> {
        let mut bilinear = Vec::with_capacity(self.ntn_w.len());
        for w in &self.ntn_w {
            let left = tape.matmul(h_ts, p.var(*w))?;
            bilinear.push(tape.matmul_nt(left, h_g)?);
        }
        let bilinear = tape.concat_cols_all(&bilinear)?;
        let pair = tape.concat_cols(h_ts, h_g)?;
        let linear = tape.matmul_nt(pair, p.var(self.ntn_v))?;
        let pre = tape.add(bilinear, linear)?;
        let pre = tape.add(pre, p.var(self.ntn_b))?;
        let s = tape.tanh(pre);
        let score = self.head.forward(tape, p, s)?;
        Ok((s, score))
    }

    /// Scores `adjacency` (N×N) against a series whose latent `h_ts` was
    /// already computed. `series` is only read when node series features are
    /// enabled.
    pub fn forward_with_latent(
        &self,
        tape: &mut Tape,
        p: &Bound,
        adjacency: Var,
        h_ts: Var,
        series: Option<Var>,
    ) -> Result<DiscriminatorOutput> {
        let (n, m) = tape.shape(adjacency);
        if n != self.config.n || m != self.config.n {
            return Err(Error::shape(
                "discriminate",
                (n, m),
                (self.config.n, self.config.n),
            ));
        }
        let a_tilde = tape.normalize_adjacency(adjacency, self.config.threshold)?;
        let nodes = self.gcn_forward(tape, p, a_tilde, h_ts, series)?;
        let h_g = self.aggregate_nodes(tape, p, nodes, h_ts)?;
        let (similarities, score) = self.ntn_score(tape, p, h_ts, h_g)?;
        Ok(DiscriminatorOutput {
            score,
            similarities,
            h_g,
            h_ts,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, adjacency: Var, series: Var) -> Result<DiscriminatorOutput> {
        if tape.shape(series).0 != tape.shape(adjacency).0 {
            return Err(Error::shape("discriminate", tape.shape(adjacency), tape.shape(series)));
        }
        let h_ts = self.encode(tape, p, series)?;
        self.forward_with_latent(tape, p, adjacency, h_ts, Some(series))
    }

    pub fn discriminate(&self, g: &WeightedDigraph, ts: &MultivariateSeries) -> Result<Discrimination> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let a = tape.constant(g.adjacency().clone());
        let s = tape.constant(ts.values().clone());
        let out = self.forward(&mut tape, &p, a, s)?;
        Ok(Discrimination {
            score: tape.value(out.score).item(),
            h_g: tape.value(out.h_g).clone(),
            h_ts: tape.value(out.h_ts).clone(),
        })
    }
}
