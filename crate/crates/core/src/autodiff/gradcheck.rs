use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Bound, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares tape gradients of the scalar built by `f` against central
/// differences over every entry of every parameter in `store`. Returns the
/// largest relative error.
pub fn finite_diff_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var>,
{
    check(store, eps, None, f)
}

/// Like [`finite_diff_check`], but probes at most `per_param` randomly chosen
/// entries of each tensor.
pub fn finite_diff_check_sampled<F>(
    store: &mut ParamStore,
    eps: f64,
    per_param: usize,
    seed: u64,
    f: F,
) -> Result<f64>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var>,
{
    check(store, eps, Some((per_param, seed)), f)
}

fn check<F>(
    store: &mut ParamStore,
    eps: f64,
    sampling: Option<(usize, u64)>,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Contract(format!("eps must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, true);
    let out = f(&mut tape, &bound)?;
    finite_scalar(&tape, out)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = bound.grads(&tape);
    drop(tape);

    let mut rng = sampling.map(|(_, seed)| ChaCha8Rng::seed_from_u64(seed));
    let mut worst: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let entries: Vec<usize> = match (sampling, rng.as_mut()) {
            (Some((k, _)), Some(rng)) if k < len => sample(rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for e in entries {
            let orig = store.values()[pi].data()[e];
            store.values_mut()[pi].data_mut()[e] = orig + eps;
            let plus = eval(store, &mut f)?;
            store.values_mut()[pi].data_mut()[e] = orig - eps;
            let minus = eval(store, &mut f)?;
            store.values_mut()[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[e], numeric));
        }
    }
    Ok(worst)
}

fn eval<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false);
    let out = f(&mut tape, &bound)?;
    finite_scalar(&tape, out)
}

fn finite_scalar(tape: &Tape, out: Var) -> Result<f64> {
    let v = tape.value(out);
    if v.shape() != (1, 1) {
        return Err(Error::Contract(format!(
            "finite-difference target must be scalar, got {:?}",
            v.shape()
        )));
    }
    let x = v.item();
    if !x.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {x}")));
    }
    Ok(x)
}
