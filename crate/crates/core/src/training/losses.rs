//! Least-squares adversarial losses and the feature-matching generator
//! objective.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Tape, Tensor, Var};
use crate::data::{MultivariateSeries, PairedSample, WeightedDigraph};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::fcm::simulate_on_tape;
use crate::generator::Generator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanHyper {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub epochs: usize,
    pub d_steps: usize,
    pub g_steps: usize,
    pub batch: usize,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Score the generator pushes its fakes towards.
    pub g_adv_target: f64,
}

impl Default for GanHyper {
    fn default() -> Self {
        GanHyper {
            alpha: 1.0,
            beta: 0.5,
            omega: 50.0,
            lr_g: 2e-4,
            lr_d: 1e-4,
            epochs: 100,
            d_steps: 1,
            g_steps: 2,
            batch: 1,
            checkpoint_every: 10,
            g_adv_target: 1.0,
        }
    }
}

impl GanHyper {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha, self.beta, self.omega];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got {weights:?}"
            )));
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0 && self.lr_g.is_finite() && self.lr_d.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates must be positive, got {} / {}",
                self.lr_g, self.lr_d
            )));
        }
        if self.batch != 1 {
            return Err(Error::Config(format!("only batch size 1 is supported, got {}", self.batch)));
        }
        if !self.g_adv_target.is_finite() {
            return Err(Error::Config("g_adv_target must be finite".into()));
        }
        Ok(())
    }
}

/// `½ (x − target)²` for a 1×1 `x`.
fn half_square_error(tape: &mut Tape, x: Var, target: f64) -> Var {
    let d = tape.affine(x, 1.0, -target);
    let sq = tape.square(d);
    tape.scale(sq, 0.5)
}

fn check_sizes(d: &Discriminator, series: &MultivariateSeries, graphs: &[&WeightedDigraph]) -> Result<()> {
    let n = d.config.n;
    if series.n() != n {
        return Err(Error::Validation(format!(
            "series has {} nodes, model expects {n}",
            series.n()
        )));
    }
    for g in graphs {
        if g.n() != n {
            return Err(Error::Validation(format!("graph has {} nodes, model expects {n}", g.n())));
        }
    }
    Ok(())
}

/// Discriminator loss `½(D(real) − 1)² + ½ D(fake)²` recorded on `tape`.
/// `fake` is a plain value, so no gradient reaches the generator.
pub fn d_loss_on_tape(
    tape: &mut Tape,
    d: &Discriminator,
    p: &Bound,
    real: &PairedSample,
    fake: &WeightedDigraph,
) -> Result<Var> {
    check_sizes(d, &real.series, &[&real.graph, fake])?;
    let ts = tape.constant(real.series.values().clone());
    let h_ts = d.encode(tape, p, ts)?;
    let a_real = tape.constant(real.graph.adjacency().clone());
    let a_fake = tape.constant(fake.adjacency().clone());
    let on_real = d.forward_with_latent(tape, p, a_real, h_ts, Some(ts))?;
    let on_fake = d.forward_with_latent(tape, p, a_fake, h_ts, Some(ts))?;
    let lr = half_square_error(tape, on_real.score, 1.0);
    let lf = half_square_error(tape, on_fake.score, 0.0);
    tape.add(lr, lf)
}

pub fn d_loss(d: &Discriminator, real: &PairedSample, fake: &WeightedDigraph) -> Result<f64> {
    let mut tape = Tape::new();
    let p = d.params.bind(&mut tape, false);
    let l = d_loss_on_tape(&mut tape, d, &p, real, fake)?;
    Ok(tape.value(l).item())
}

/// The four weighted generator terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GLossTerms<T> {
    pub lsgan: T,
    pub alpha: T,
    pub beta: T,
    pub omega: T,
}

impl GLossTerms<Var> {
    pub fn values(&self, tape: &Tape) -> GLossTerms<f64> {
        GLossTerms {
            lsgan: tape.value(self.lsgan).item(),
            alpha: tape.value(self.alpha).item(),
            beta: tape.value(self.beta).item(),
            omega: tape.value(self.omega).item(),
        }
    }
}

impl GLossTerms<f64> {
    pub fn total(&self) -> f64 {
        self.lsgan + self.alpha + self.beta + self.omega
    }
}

/// Generator objective
/// `½(D(A_fake) − target)² + α‖h_g − h̃_g‖ + β‖h_ts − h̃_ts‖ + ω‖ts − t̃s‖`
/// where `t̃s` is the FCM simulation of `A_fake` from the first column of
/// `ts` and `h̃_ts` its discriminator encoding. Bind `dp` without gradients
/// to keep the discriminator fixed.
#[allow(clippy::too_many_arguments)]
pub fn g_loss_on_tape(
    tape: &mut Tape,
    g: &Generator,
    gp: &Bound,
    d: &Discriminator,
    dp: &Bound,
    real: &PairedSample,
    noise: &Tensor,
    hyper: &GanHyper,
) -> Result<(Var, GLossTerms<Var>)> {
    check_sizes(d, &real.series, &[&real.graph])?;
    let series = &real.series;
    let ts = tape.constant(series.values().clone());
    let z = tape.constant(noise.clone());
    let a_fake = g.forward(tape, gp, ts, z)?;
    let ts_fake = simulate_on_tape(tape, a_fake, &series.column(0), series.t_len())?;

    let h_ts = d.encode(tape, dp, ts)?;
    let a_real = tape.constant(real.graph.adjacency().clone());
    let on_real = d.forward_with_latent(tape, dp, a_real, h_ts, Some(ts))?;
    let on_fake = d.forward_with_latent(tape, dp, a_fake, h_ts, Some(ts))?;
    let h_ts_fake = d.encode(tape, dp, ts_fake)?;

    let lsgan = half_square_error(tape, on_fake.score, hyper.g_adv_target);
    let mut weighted_norm = |x: Var, y: Var, w: f64| -> Result<Var> {
        let diff = tape.sub(x, y)?;
        let norm = tape.l2_norm(diff);
        Ok(tape.scale(norm, w))
    };
    let alpha = weighted_norm(on_real.h_g, on_fake.h_g, hyper.alpha)?;
    let beta = weighted_norm(h_ts, h_ts_fake, hyper.beta)?;
    let omega = weighted_norm(ts, ts_fake, hyper.omega)?;

    let mut total = tape.add(lsgan, alpha)?;
    total = tape.add(total, beta)?;
    total = tape.add(total, omega)?;
    Ok((total, GLossTerms { lsgan, alpha, beta, omega }))
}

pub fn g_loss(
    g: &Generator,
    d: &Discriminator,
    real: &PairedSample,
    noise: &Tensor,
    hyper: &GanHyper,
) -> Result<GLossTerms<f64>> {
    let mut tape = Tape::new();
    let gp = g.params.bind(&mut tape, false);
    let dp = d.params.bind(&mut tape, false);
    let (_, terms) = g_loss_on_tape(&mut tape, g, &gp, d, &dp, real, noise, hyper)?;
    Ok(terms.values(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_check, finite_diff_check_sampled, ParamStore};
    use crate::data::{make_dataset, DatasetSpec};
    use crate::discriminator::DiscriminatorConfig;
    use crate::fcm::fcm_simulate;
    use crate::generator::{sample_noise, GeneratorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_models(n: usize, seed: u64) -> (Generator, Discriminator) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gc = GeneratorConfig::new(n);
        gc.sru_hidden = 3;
        gc.noise_dim = 2;
        gc.mlp_dims = vec![4, 5];
        let mut dc = DiscriminatorConfig::new(n);
        dc.sru_hidden = 3;
        dc.gcn_dims = [4, 3];
        dc.readout_dims = [4, 5];
        dc.graph_dim = 3;
        dc.ntn_k = 2;
        (
            Generator::new(gc, &mut rng).unwrap(),
            Discriminator::new(dc, &mut rng).unwrap(),
        )
    }

    fn sample(n: usize, t: usize, seed: u64) -> PairedSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        make_dataset(&DatasetSpec::new(n, 1, t), &mut rng).unwrap().remove(0)
    }

    #[test]
    fn d_loss_closed_forms() {
        let (_, mut d) = small_models(4, 1);
        let s = sample(4, 6, 2);
        d.params.fill(0.0);
        // all-zero parameters score every input 0
        let l = d_loss(&d, &s, &WeightedDigraph::empty(4)).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
        // a head bias of 1 scores every input 1: loss ½
        let bias = d.params.ids().find(|id| d.params.name(*id) == "d.head.b").unwrap();
        d.params.get_mut(bias).data_mut()[0] = 1.0;
        assert!((d_loss(&d, &s, &s.graph).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn d_loss_rejects_size_mismatch() {
        let (_, d) = small_models(4, 1);
        let s = sample(4, 6, 2);
        assert!(d_loss(&d, &s, &WeightedDigraph::empty(5)).is_err());
    }

    #[test]
    fn d_loss_gradient() {
        let (_, mut d) = small_models(4, 3);
        let s = sample(4, 5, 4);
        let fake = sample(4, 5, 5).graph;
        let mut params = std::mem::take(&mut d.params);
        let err = finite_diff_check_sampled(&mut params, 1e-5, 25, 6, |tape, p| {
            d_loss_on_tape(tape, &d, p, &s, &fake)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn g_loss_gradient_wrt_generator() {
        let (mut g, d) = small_models(4, 7);
        let s = sample(4, 5, 8);
        let z = sample_noise(2, &mut ChaCha8Rng::seed_from_u64(9));
        let hyper = GanHyper::default();
        let mut params = std::mem::take(&mut g.params);
        let err = finite_diff_check_sampled(&mut params, 1e-5, 25, 10, |tape, p| {
            let dp = d.params.bind(tape, false);
            Ok(g_loss_on_tape(tape, &g, p, &d, &dp, &s, &z, &hyper)?.0)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn omega_term_gradient_through_simulation() {
        let (g, d) = small_models(4, 11);
        let s = sample(4, 6, 12);
        let z = Tensor::zeros(1, 2);
        let hyper = GanHyper {
            alpha: 0.0,
            beta: 0.0,
            ..GanHyper::default()
        };
        // differentiate w.r.t. A_fake itself by substituting it as a leaf
        let mut store = ParamStore::new();
        let a = store.add("a", g.generate(&s.series, &z).unwrap().adjacency().clone());
        let err = finite_diff_check(&mut store, 1e-6, |tape, p| {
            let sim = simulate_on_tape(tape, p.var(a), &s.series.column(0), 6)?;
            let ts = tape.constant(s.series.values().clone());
            let diff = tape.sub(ts, sim)?;
            let norm = tape.l2_norm(diff);
            Ok(tape.scale(norm, hyper.omega))
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
        let terms = g_loss(&g, &d, &s, &z, &hyper).unwrap();
        assert!(terms.omega > 0.0);
        assert_eq!(terms.alpha, 0.0);
    }

    #[test]
    fn perfect_fake_zeroes_matching_terms() {
        let (_, d) = small_models(5, 13);
        let s = sample(5, 8, 14);
        // the stored series is exactly the FCM rollout of its graph
        let replay = fcm_simulate(&s.graph, &s.series.column(0), 8).unwrap();
        assert_eq!(replay.values(), s.series.values());
        let mut tape = Tape::new();
        let dp = d.params.bind(&mut tape, false);
        let ts = tape.constant(s.series.values().clone());
        let a = tape.constant(s.graph.adjacency().clone());
        let sim = simulate_on_tape(&mut tape, a, &s.series.column(0), 8).unwrap();
        let h_real = d.encode(&mut tape, &dp, ts).unwrap();
        let h_sim = d.encode(&mut tape, &dp, sim).unwrap();
        assert_eq!(tape.value(h_real), tape.value(h_sim));
        let r = d.forward_with_latent(&mut tape, &dp, a, h_real, Some(ts)).unwrap();
        let f = d.forward_with_latent(&mut tape, &dp, a, h_real, Some(ts)).unwrap();
        assert_eq!(tape.value(r.h_g), tape.value(f.h_g));
    }

    #[test]
    fn default_hyper_is_valid_and_omega_dominant() {
        let h = GanHyper::default();
        h.validate().unwrap();
        assert!(h.omega > h.alpha && h.omega > h.beta);
        assert!(GanHyper { batch: 2, ..h.clone() }.validate().is_err());
        assert!(GanHyper { lr_g: 0.0, ..h }.validate().is_err());
    }
}
