//! Rectified Adam.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Variance-rectification threshold on `ρ_t`.
pub const RHO_THRESHOLD: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RAdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl RAdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        RAdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn matches(&self, params: &[Tensor]) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape())
    }
}

/// Length of the approximated simple moving average at step `t`.
pub fn rho(t: u64, beta2: f64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powi(t as i32);
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

/// Rectification factor `r_t`, or `None` while `ρ_t ≤ 4` (momentum-only
/// updates).
pub fn rectification(t: u64, beta2: f64) -> Option<f64> {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let rho_t = rho(t, beta2);
    (rho_t > RHO_THRESHOLD).then(|| {
        (((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt()
    })
}

/// One update of every tensor in `params`; `t` advances once per call.
pub fn radam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut RAdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(Error::Validation(
            "optimizer state, gradients and parameters disagree in count or shape".into(),
        ));
    }
    if let Some((p, g)) = params.iter().zip(grads).find(|(p, g)| p.shape() != g.shape()) {
        return Err(Error::shape("radam_step", p.shape(), g.shape()));
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let t = state.t as i32;
    let m_corr = 1.0 / (1.0 - b1.powi(t));
    let v_corr = 1.0 / (1.0 - b2.powi(t));
    let rect = rectification(state.t, b2);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let it = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((x, &gi), (mi, vi)) in it {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi * m_corr;
            match rect {
                Some(r) => {
                    let v_hat = (*vi * v_corr).sqrt();
                    *x -= lr * r * m_hat / (v_hat + eps);
                }
                None => *x -= lr * m_hat,
            }
        }
    }
    Ok(())
}
