//! Adversarial training: one discriminator step then two generator steps per
//! training pair, batch size 1, RAdam on both networks.

pub mod checkpoint;
pub mod losses;
pub mod radam;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, ArchConfig, ModelCheckpoint, OptimizerState, ParamRecord, RngState,
    CHECKPOINT_VERSION,
};
pub use losses::{d_loss, d_loss_on_tape, g_loss, g_loss_on_tape, GLossTerms, GanHyper};
pub use radam::{radam_step, rectification, rho, RAdamState};

use crate::autodiff::{Tape, Tensor};
use crate::data::{MultivariateSeries, PairedSample, WeightedDigraph};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::{sample_noise, Generator};

pub const LOSS_LOG_HEADER: &str = "epoch,step,d_loss,g_loss,g_lsgan,g_alpha,g_beta,g_omega";

/// One row of the loss log: one training pair, generator terms averaged over
/// its generator steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub g_lsgan: f64,
    pub g_alpha: f64,
    pub g_beta: f64,
    pub g_omega: f64,
}

impl LossRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch, self.step, self.d_loss, self.g_loss, self.g_lsgan, self.g_alpha, self.g_beta, self.g_omega
        )
    }
}

pub fn loss_log_csv(records: &[LossRecord]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub fn write_loss_log(records: &[LossRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, loss_log_csv(records)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub hyper: GanHyper,
    pub seed: u64,
    /// Architecture override; defaults to [`ArchConfig::new`] for the
    /// dataset's `n`.
    pub arch: Option<ArchConfig>,
    /// Final checkpoint path; periodic ones go next to it as
    /// `<stem>.epoch<E>.json`.
    pub checkpoint_path: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh initialisation.
    pub resume: Option<ModelCheckpoint>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: ModelCheckpoint,
    /// Rows for the epochs run by this call.
    pub log: Vec<LossRecord>,
    pub d_updates: usize,
    pub g_updates: usize,
}

pub fn periodic_checkpoint_path(final_path: &Path, epoch: usize) -> PathBuf {
    let stem = final_path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
    final_path.with_file_name(format!("{stem}.epoch{epoch}.json"))
}

fn check_dataset(dataset: &[PairedSample]) -> Result<usize> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Validation("training set is empty".into()))?;
    let n = first.n();
    if let Some((i, s)) = dataset.iter().enumerate().find(|(_, s)| s.n() != n) {
        return Err(Error::Validation(format!(
            "training pair {i} has n = {}, pair 0 has n = {n}",
            s.n()
        )));
    }
    Ok(n)
}

struct Session {
    arch: ArchConfig,
    hyper: GanHyper,
    g: Generator,
    d: Discriminator,
    opt_g: RAdamState,
    opt_d: RAdamState,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Session {
    fn start(n: usize, opts: &TrainOptions) -> Result<Self> {
        if let Some(ck) = &opts.resume {
            ck.expect_n(n)?;
            let (g, d) = ck.models()?;
            let optim = ck.optim.clone().ok_or_else(|| {
                Error::Validation("checkpoint carries no optimizer state and cannot be resumed".into())
            })?;
            if !optim.generator.matches(g.params.values()) || !optim.discriminator.matches(d.params.values()) {
                return Err(Error::Validation("checkpoint optimizer state does not fit its parameters".into()));
            }
            return Ok(Session {
                arch: ck.arch.clone(),
                hyper: opts.hyper.clone(),
                g,
                d,
                opt_g: optim.generator,
                opt_d: optim.discriminator,
                rng: ck.rng.restore(),
                epoch: ck.epoch,
            });
        }
        let arch = opts.arch.clone().unwrap_or_else(|| ArchConfig::new(n));
        arch.validate()?;
        if arch.n != n {
            return Err(Error::Validation(format!(
                "architecture is for n = {}, dataset has n = {n}",
                arch.n
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let g = Generator::new(arch.generator.clone(), &mut rng)?;
        let d = Discriminator::new(arch.discriminator.clone(), &mut rng)?;
        Ok(Session {
            opt_g: RAdamState::new(g.params.values()),
            opt_d: RAdamState::new(d.params.values()),
            arch,
            hyper: opts.hyper.clone(),
            g,
            d,
            rng,
            epoch: 0,
        })
    }

    fn noise(&mut self) -> Tensor {
        sample_noise(self.g.config.noise_dim, &mut self.rng)
    }

    fn d_step(&mut self, sample: &PairedSample) -> Result<f64> {
        let z = self.noise();
        let fake = self.g.generate(&sample.series, &z)?;
        let mut tape = Tape::new();
        let p = self.d.params.bind(&mut tape, true);
        let loss = d_loss_on_tape(&mut tape, &self.d, &p, sample, &fake)?;
        tape.backward(loss)?;
        let grads = p.grads(&tape);
        let g_before = cfg!(debug_assertions).then(|| self.g.params.clone());
        radam_step(self.d.params.values_mut(), &grads, &mut self.opt_d, self.hyper.lr_d)?;
        if let Some(before) = g_before {
            assert_eq!(before, self.g.params, "discriminator step changed generator parameters");
        }
        finite_loss(tape.value(loss).item(), "discriminator")
    }

    fn g_step(&mut self, sample: &PairedSample) -> Result<GLossTerms<f64>> {
        let z = self.noise();
        let mut tape = Tape::new();
        let gp = self.g.params.bind(&mut tape, true);
        let dp = self.d.params.bind(&mut tape, false);
        let (loss, terms) = g_loss_on_tape(&mut tape, &self.g, &gp, &self.d, &dp, sample, &z, &self.hyper)?;
        tape.backward(loss)?;
        let grads = gp.grads(&tape);
        let d_before = cfg!(debug_assertions).then(|| self.d.params.clone());
        radam_step(self.g.params.values_mut(), &grads, &mut self.opt_g, self.hyper.lr_g)?;
        if let Some(before) = d_before {
            assert_eq!(before, self.d.params, "generator step changed discriminator parameters");
        }
        finite_loss(tape.value(loss).item(), "generator")?;
        Ok(terms.values(&tape))
    }

    fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint::capture(
            &self.arch,
            &self.hyper,
            self.epoch,
            &self.rng,
            &self.g,
            &self.d,
            Some(OptimizerState {
                generator: self.opt_g.clone(),
                discriminator: self.opt_d.clone(),
            }),
        )
    }
}

fn finite_loss(v: f64, which: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{which} loss became {v}")))
    }
}

/// Runs epochs `resume.epoch .. hyper.epochs` over `dataset`. Each epoch
/// visits every pair once in a freshly shuffled order.
pub fn train(dataset: &[PairedSample], opts: &TrainOptions) -> Result<TrainReport> {
    opts.hyper.validate()?;
    let n = check_dataset(dataset)?;
    let mut s = Session::start(n, opts)?;
    let (d_steps, g_steps) = (s.hyper.d_steps, s.hyper.g_steps);
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let (mut d_updates, mut g_updates) = (0, 0);

    while s.epoch < s.hyper.epochs {
        order.sort_unstable();
        order.shuffle(&mut s.rng);
        for (step, &idx) in order.iter().enumerate() {
            let sample = &dataset[idx];
            let mut d_total = 0.0;
            for _ in 0..d_steps {
                d_total += s.d_step(sample)?;
                d_updates += 1;
            }
            let mut acc = GLossTerms { lsgan: 0.0, alpha: 0.0, beta: 0.0, omega: 0.0 };
            for _ in 0..g_steps {
                let t = s.g_step(sample)?;
                acc.lsgan += t.lsgan;
                acc.alpha += t.alpha;
                acc.beta += t.beta;
                acc.omega += t.omega;
                g_updates += 1;
            }
            let gs = g_steps.max(1) as f64;
            let avg = GLossTerms {
                lsgan: acc.lsgan / gs,
                alpha: acc.alpha / gs,
                beta: acc.beta / gs,
                omega: acc.omega / gs,
            };
            log.push(LossRecord {
                epoch: s.epoch,
                step,
                d_loss: d_total / d_steps.max(1) as f64,
                g_loss: avg.total(),
                g_lsgan: avg.lsgan,
                g_alpha: avg.alpha,
                g_beta: avg.beta,
                g_omega: avg.omega,
            });
        }
        s.epoch += 1;
        let tail = &log[log.len() - dataset.len()..];
        let mean = |f: fn(&LossRecord) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
        info!(
            "epoch {}/{}: d_loss {:.5} g_loss {:.5}",
            s.epoch,
            s.hyper.epochs,
            mean(|r| r.d_loss),
            mean(|r| r.g_loss)
        );
        let every = s.hyper.checkpoint_every;
        if let (Some(path), true) = (&opts.checkpoint_path, every > 0 && s.epoch % every == 0) {
            save_checkpoint(&s.checkpoint(), periodic_checkpoint_path(path, s.epoch))?;
        }
    }

    let checkpoint = s.checkpoint();
    if let Some(path) = &opts.checkpoint_path {
        save_checkpoint(&checkpoint, path)?;
    }
    Ok(TrainReport {
        checkpoint,
        log,
        d_updates,
        g_updates,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZMode {
    /// All-zero noise: a deterministic canonical graph.
    #[default]
    Zeros,
    /// Fresh standard-normal noise.
    Sample,
}

pub fn infer_with<R: Rng + ?Sized>(
    g: &Generator,
    ts: &MultivariateSeries,
    z_mode: ZMode,
    rng: &mut R,
) -> Result<WeightedDigraph> {
    if ts.n() != g.n() {
        return Err(Error::Validation(format!(
            "model was trained for n = {} nodes but the series has n = {}",
            g.n(),
            ts.n()
        )));
    }
    let z = match z_mode {
        ZMode::Zeros => Tensor::zeros(1, g.config.noise_dim),
        ZMode::Sample => sample_noise(g.config.noise_dim, rng),
    };
    g.generate(ts, &z)
}

pub fn infer<R: Rng + ?Sized>(
    ckpt: &ModelCheckpoint,
    ts: &MultivariateSeries,
    z_mode: ZMode,
    rng: &mut R,
) -> Result<WeightedDigraph> {
    ckpt.expect_n(ts.n())?;
    infer_with(&ckpt.generator()?, ts, z_mode, rng)
}
