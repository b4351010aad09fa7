//! Neural building blocks over [`ParamStore`]-held weights.
//!
//! Layers only remember [`ParamId`]s; every forward call resolves them
//! through a [`Bound`] for the current tape.

use rand::Rng;

use crate::autodiff::{Bound, ParamId, ParamStore, SruInputs, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Fully connected layer `y = x Wᵀ + b` with `W` stored out×in.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), out_dim, in_dim, in_dim, out_dim, rng);
        let b = store.add_zeros(format!("{name}.b"), 1, out_dim);
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.in_dim {
            return Err(Error::shape("linear", tape.shape(x), (self.out_dim, self.in_dim)));
        }
        let xw = tape.matmul_nt(x, p.var(self.w))?;
        tape.add(xw, p.var(self.b))
    }
}

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-sample feature standardization with learned gain and bias.
///
/// Statistics use the population variance over the feature axis of each
/// row. With a single feature the centred input is zero, so the output is
/// the bias.
#[derive(Clone, Debug)]
pub struct InstanceNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
    pub eps: f64,
}

impl InstanceNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::ones(1, dim));
        let bias = store.add_zeros(format!("{name}.bias"), 1, dim);
        InstanceNorm {
            gain,
            bias,
            dim,
            eps: INSTANCE_NORM_EPS,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.instance_norm(x, p.var(self.gain), p.var(self.bias), self.eps)
    }
}

/// One direction of a simple recurrent unit layer.
///
/// ```text
/// f_t = σ(W_f x_t + v_f ⊙ c_{t-1} + b_f)
/// c_t = f_t ⊙ c_{t-1} + (1 − f_t) ⊙ W x_t
/// r_t = σ(W_r x_t + v_r ⊙ c_{t-1} + b_r)
/// h_t = r_t ⊙ c_t + (1 − r_t) ⊙ W_h x_t
/// ```
/// with `c_0 = 0`. `W_h` is a highway projection since input and hidden
/// widths differ.
#[derive(Clone, Debug)]
pub struct SruLayer {
    pub w: ParamId,
    pub w_f: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub v_f: ParamId,
    pub v_r: ParamId,
    pub b_f: ParamId,
    pub b_r: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl SruLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut mat = |suffix: &str, rng: &mut R| {
            store.add_glorot(format!("{name}.{suffix}"), hidden, in_dim, in_dim, hidden, rng)
        };
        let w = mat("w", rng);
        let w_f = mat("w_f", rng);
        let w_r = mat("w_r", rng);
        let w_h = mat("w_h", rng);
        SruLayer {
            w,
            w_f,
            w_r,
            w_h,
            v_f: store.add_zeros(format!("{name}.v_f"), 1, hidden),
            v_r: store.add_zeros(format!("{name}.v_r"), 1, hidden),
            b_f: store.add_zeros(format!("{name}.b_f"), 1, hidden),
            b_r: store.add_zeros(format!("{name}.b_r"), 1, hidden),
            in_dim,
            hidden,
        }
    }

    /// Runs over the rows of `xs` (T×in) and returns the T×hidden states.
    /// With `reversed`, the recurrence starts at the last row; outputs are
    /// still indexed by input row.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, xs: Var, reversed: bool) -> Result<Var> {
        let (steps, cols) = tape.shape(xs);
        if steps == 0 {
            return Err(Error::Contract("SRU needs at least one time step".into()));
        }
        if cols != self.in_dim {
            return Err(Error::shape("sru", (steps, cols), (self.hidden, self.in_dim)));
        }
        let x = tape.matmul_nt(xs, p.var(self.w))?;
        let pf = tape.matmul_nt(xs, p.var(self.w_f))?;
        let f_pre = tape.add(pf, p.var(self.b_f))?;
        let pr = tape.matmul_nt(xs, p.var(self.w_r))?;
        let r_pre = tape.add(pr, p.var(self.b_r))?;
        let highway = tape.matmul_nt(xs, p.var(self.w_h))?;
        let inputs = SruInputs {
            x,
            f_pre,
            r_pre,
            highway,
            v_f: p.var(self.v_f),
            v_r: p.var(self.v_r),
        };
        tape.sru_scan(inputs, reversed)
    }
}

/// Forward and backward SRU layers over the same input.
#[derive(Clone, Debug)]
pub struct BiSruLayer {
    pub forward: SruLayer,
    pub backward: SruLayer,
}

/// Bidirectional layer output.
#[derive(Clone, Debug)]
pub struct BiSruOutput {
    /// T×(2·hidden): per-step forward‖backward hidden states.
    pub sequence: Var,
    /// Forward hidden state after the last time step.
    pub last_forward: Var,
    /// Backward hidden state after consuming the sequence in reverse (time 0).
    pub last_backward: Var,
}

impl BiSruLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        BiSruLayer {
            forward: SruLayer::new(store, &format!("{name}.fwd"), in_dim, hidden, rng),
            backward: SruLayer::new(store, &format!("{name}.bwd"), in_dim, hidden, rng),
        }
    }

    pub fn run(&self, tape: &mut Tape, p: &Bound, xs: Var) -> Result<BiSruOutput> {
        let f = self.forward.forward(tape, p, xs, false)?;
        let b = self.backward.forward(tape, p, xs, true)?;
        let steps = tape.shape(xs).0;
        Ok(BiSruOutput {
            sequence: tape.concat_cols(f, b)?,
            last_forward: tape.row(f, steps - 1)?,
            last_backward: tape.row(b, 0)?,
        })
    }
}

/// Stacked bidirectional SRU summarizing an N×T series into a single
/// `1 × 2·hidden` latent vector.
#[derive(Clone, Debug)]
pub struct SeriesEncoder {
    pub layers: Vec<BiSruLayer>,
    pub input_dim: usize,
    pub hidden: usize,
}

impl SeriesEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        depth: usize,
        rng: &mut R,
    ) -> Self {
        assert!(depth >= 1, "encoder depth must be at least 1");
        let layers = (0..depth)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { 2 * hidden };
                BiSruLayer::new(store, &format!("{name}.l{l}"), in_dim, hidden, rng)
            })
            .collect();
        SeriesEncoder {
            layers,
            input_dim,
            hidden,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `series` is N×T (one row per node). The latent is the concatenation of
    /// the last layer's final forward and final backward hidden states.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, series: Var) -> Result<Var> {
        let (n, _) = tape.shape(series);
        if n != self.input_dim {
            return Err(Error::shape(
                "encode_series",
                tape.shape(series),
                (self.input_dim, self.hidden),
            ));
        }
        let mut xs = tape.transpose(series);
        let mut last = None;
        for layer in &self.layers {
            let out = layer.run(tape, p, xs)?;
            xs = out.sequence;
            last = Some(out);
        }
        let out = last.expect("at least one layer");
        tape.concat_cols(out.last_forward, out.last_backward)
    }
}
