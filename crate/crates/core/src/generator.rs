//! Generator: time series (+ noise) to a weighted adjacency matrix.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamStore, Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE};
use crate::data::{MultivariateSeries, WeightedDigraph};
use crate::error::{Error, Result};
use crate::nn::{InstanceNorm, Linear, SeriesEncoder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Node count; the output layer projects to `n²` entries.
    pub n: usize,
    pub sru_hidden: usize,
    pub sru_layers: usize,
    pub noise_dim: usize,
    pub mlp_dims: Vec<usize>,
    pub leaky_slope: f64,
    pub zero_diagonal: bool,
}

impl GeneratorConfig {
    pub fn new(n: usize) -> Self {
        GeneratorConfig {
            n,
            sru_hidden: 32,
            sru_layers: 2,
            noise_dim: 32,
            mlp_dims: vec![32, 64],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            zero_diagonal: true,
        }
    }
}

/// Standard-normal noise row of width `dim`.
pub fn sample_noise<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Tensor {
    Tensor::row_vector((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

#[derive(Clone, Debug)]
struct Hidden {
    linear: Linear,
    norm: InstanceNorm,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub params: ParamStore,
    encoder: SeriesEncoder,
    hidden: Vec<Hidden>,
    output: Linear,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        if config.n == 0 || config.sru_layers == 0 || config.sru_hidden == 0 {
            return Err(Error::Config(format!("degenerate generator config {config:?}")));
        }
        let mut params = ParamStore::new();
        let encoder = SeriesEncoder::new(
            &mut params,
            "g.enc",
            config.n,
            config.sru_hidden,
            config.sru_layers,
            rng,
        );
        let mut in_dim = encoder.output_dim() + config.noise_dim;
        let mut hidden = Vec::new();
        for (i, &d) in config.mlp_dims.iter().enumerate() {
            hidden.push(Hidden {
                linear: Linear::new(&mut params, &format!("g.mlp{i}"), in_dim, d, rng),
                norm: InstanceNorm::new(&mut params, &format!("g.norm{i}"), d),
            });
            in_dim = d;
        }
        let output = Linear::new(&mut params, "g.out", in_dim, config.n * config.n, rng);
        Ok(Generator {
            config,
            params,
            encoder,
            hidden,
            output,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    /// Records the generator on `tape`. `series` is N×T, `noise` 1×noise_dim;
    /// returns the N×N adjacency.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, series: Var, noise: Var) -> Result<Var> {
        let n = self.config.n;
        if tape.shape(series).0 != n {
            return Err(Error::shape("generate", tape.shape(series), (n, n)));
        }
        if tape.shape(noise) != (1, self.config.noise_dim) {
            return Err(Error::shape("generate", tape.shape(noise), (1, self.config.noise_dim)));
        }
        let latent = self.encoder.encode(tape, p, series)?;
        let mut h = tape.concat_cols(latent, noise)?;
        for layer in &self.hidden {
            h = layer.linear.forward(tape, p, h)?;
            h = layer.norm.forward(tape, p, h)?;
            h = tape.leaky_relu(h, self.config.leaky_slope);
        }
        let flat = self.output.forward(tape, p, h)?;
        let square = tape.reshape(flat, n, n)?;
        let a = tape.tanh(square);
        if self.config.zero_diagonal {
            let mask = tape.constant(Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 }));
            tape.mul(a, mask)
        } else {
            Ok(a)
        }
    }

    pub fn generate(&self, series: &MultivariateSeries, noise: &Tensor) -> Result<WeightedDigraph> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let s = tape.constant(series.values().clone());
        let z = tape.constant(noise.clone());
        let a = self.forward(&mut tape, &p, s, z)?;
        WeightedDigraph::new(tape.value(a).clone())
    }
}
