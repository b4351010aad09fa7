//! Fuzzy-cognitive-map dynamics.
//!
//! Each node's next value is the logistic squash of the weighted sum of its
//! in-neighbours: `x_i(t+1) = σ(Σ_j A[i][j] x_j(t))`. No clamping or
//! rescaling happens between steps.
//!
//! [`simulate_on_tape`] runs the same recurrence on a [`Tape`] so the
//! reconstruction error of a generated graph can be differentiated with
//! respect to its weights.

use crate::autodiff::{sigmoid, Tape, Tensor, Var};
use crate::data::{MultivariateSeries, WeightedDigraph};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FcmState {
    pub values: Vec<f64>,
    pub step: usize,
}

impl FcmState {
    pub fn new(values: Vec<f64>) -> Self {
        FcmState { values, step: 0 }
    }
}

pub fn fcm_step(g: &WeightedDigraph, s: &FcmState) -> Result<FcmState> {
    if s.values.len() != g.n() {
        return Err(Error::shape("fcm_step", (g.n(), g.n()), (s.values.len(), 1)));
    }
    let col = Tensor::new(s.values.len(), 1, s.values.clone())?;
    let next = g.adjacency().matmul(&col)?;
    Ok(FcmState {
        values: next.data().iter().map(|&x| sigmoid(x)).collect(),
        step: s.step + 1,
    })
}

fn check_init(n: usize, init: &[f64], t_len: usize) -> Result<()> {
    if init.len() != n {
        return Err(Error::Validation(format!(
            "initial state has {} entries for a {n}-node graph",
            init.len()
        )));
    }
    if let Some(bad) = init.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!(
            "initial value {bad} outside [0, 1]"
        )));
    }
    if t_len == 0 {
        return Err(Error::Validation("simulation length must be at least 1".into()));
    }
    Ok(())
}

/// N×T series whose first column is `init` and every later column is one
/// FCM step applied to its predecessor.
pub fn fcm_simulate(g: &WeightedDigraph, init: &[f64], t_len: usize) -> Result<MultivariateSeries> {
    let n = g.n();
    check_init(n, init, t_len)?;
    let mut values = Tensor::zeros(n, t_len);
    let mut state = FcmState::new(init.to_vec());
    for t in 0..t_len {
        if t > 0 {
            state = fcm_step(g, &state)?;
        }
        for (i, v) in state.values.iter().enumerate() {
            values.set(i, t, *v);
        }
    }
    MultivariateSeries::new(values)
}

/// Differentiable twin of [`fcm_simulate`]; `adjacency` is an N×N tape value.
/// Returns the N×T series.
pub fn simulate_on_tape(tape: &mut Tape, adjacency: Var, init: &[f64], t_len: usize) -> Result<Var> {
    let (n, m) = tape.shape(adjacency);
    if n != m {
        return Err(Error::shape("simulate", (n, m), (m, m)));
    }
    check_init(n, init, t_len)?;
    let mut cols = Vec::with_capacity(t_len);
    let mut state = tape.constant(Tensor::new(n, 1, init.to_vec())?);
    cols.push(state);
    for _ in 1..t_len {
        let pre = tape.matmul(adjacency, state)?;
        state = tape.sigmoid(pre);
        cols.push(state);
    }
    tape.concat_cols_all(&cols)
}
