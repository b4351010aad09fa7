//! Graph distances: Hamming, Ipsen–Mikhailov (IM), their HIM combination,
//! and the quantum Jensen–Shannon distance between Laplacian density
//! matrices.
//!
//! Spectral metrics work on the undirected magnitude graph
//! `W = (|A| + |A|ᵀ) / 2` since signed Laplacians can be indefinite. No edge
//! thresholding is applied here; metrics see raw matrices.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::sync::{OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::WeightedDigraph;
use crate::error::{Error, Result};

pub const DEFAULT_GRID_STEP: f64 = 1e-3;
const GAMMA_BRACKET: (f64, f64) = (1e-4, 1.0);
const CALIBRATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Node count `gamma` was calibrated for.
    pub n: usize,
    /// Lorentzian half-width of the IM spectral densities.
    pub gamma: f64,
    /// Weight of IM relative to Hamming inside HIM.
    pub xi: f64,
    /// Trapezoid step for the IM integral.
    pub grid_step: f64,
    /// Logarithm base for von Neumann entropies.
    pub log_base: f64,
}

impl MetricConfig {
    /// Defaults with `gamma` calibrated for `n` nodes.
    pub fn calibrated(n: usize) -> Result<Self> {
        Ok(MetricConfig {
            n,
            gamma: calibrate_gamma(n)?,
            xi: 1.0,
            grid_step: DEFAULT_GRID_STEP,
            log_base: 2.0,
        })
    }

    fn check(&self, a: &WeightedDigraph, b: &WeightedDigraph) -> Result<()> {
        same_size(a, b)?;
        if a.n() != self.n {
            return Err(Error::Config(format!(
                "metric config calibrated for n = {}, graphs have n = {}",
                self.n,
                a.n()
            )));
        }
        if !(self.gamma > 0.0 && self.grid_step > 0.0 && self.xi >= 0.0) {
            return Err(Error::Config(format!("invalid metric parameters {self:?}")));
        }
        Ok(())
    }
}

fn same_size(a: &WeightedDigraph, b: &WeightedDigraph) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::Validation(format!(
            "graphs differ in size: {} vs {}",
            a.n(),
            b.n()
        )));
    }
    Ok(())
}

/// Mean absolute off-diagonal difference, divided by 2 because weights span
/// `[-1, 1]`.
pub fn hamming_distance(a: &WeightedDigraph, b: &WeightedDigraph) -> Result<f64> {
    same_size(a, b)?;
    let n = a.n();
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += (a.weight(i, j) - b.weight(i, j)).abs();
            }
        }
    }
    Ok(total / (2.0 * (n * (n - 1)) as f64))
}

fn magnitude_laplacian(g: &WeightedDigraph) -> DMatrix<f64> {
    let n = g.n();
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            0.5 * (g.weight(i, j).abs() + g.weight(j, i).abs())
        }
    });
    let mut l = -w.clone();
    for i in 0..n {
        l[(i, i)] = w.row(i).sum();
    }
    l
}

/// Ascending eigenvalues of the magnitude Laplacian, clamped at zero.
pub fn laplacian_spectrum(g: &WeightedDigraph) -> Vec<f64> {
    let eig = SymmetricEigen::new(magnitude_laplacian(g));
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Vibrational frequencies `√λ` of all but the smallest Laplacian eigenvalue.
fn frequencies(g: &WeightedDigraph) -> Vec<f64> {
    laplacian_spectrum(g).into_iter().skip(1).map(f64::sqrt).collect()
}

/// Sum of unit-mass Lorentzians on the half-line, sampled on `grid`.
fn spectral_density(freqs: &[f64], gamma: f64, grid: &[f64]) -> Vec<f64> {
    // ∫₀^∞ γ/((ω−ωᵢ)²+γ²) dω = π/2 + atan(ωᵢ/γ)
    let mass: f64 = freqs.iter().map(|w| FRAC_PI_2 + (w / gamma).atan()).sum();
    grid.iter()
        .map(|&x| {
            freqs
                .iter()
                .map(|w| gamma / ((x - w) * (x - w) + gamma * gamma))
                .sum::<f64>()
                / mass
        })
        .collect()
}

fn im_from_frequencies(fa: &[f64], fb: &[f64], gamma: f64, step: f64) -> f64 {
    let top = fa.iter().chain(fb).copied().fold(0.0, f64::max) + 3.0 * gamma;
    let points = (top / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..points).map(|k| k as f64 * step).collect();
    let da = spectral_density(fa, gamma, &grid);
    let db = spectral_density(fb, gamma, &grid);
    let sq: Vec<f64> = da.iter().zip(&db).map(|(x, y)| (x - y) * (x - y)).collect();
    let integral: f64 = sq.windows(2).map(|w| 0.5 * step * (w[0] + w[1])).sum();
    integral.sqrt()
}

/// Ipsen–Mikhailov distance, clamped to `[0, 1]` (the calibration makes the
/// empty/complete pair the unit).
pub fn ipsen_mikhailov(a: &WeightedDigraph, b: &WeightedDigraph, cfg: &MetricConfig) -> Result<f64> {
    cfg.check(a, b)?;
    if a.n() < 2 {
        return Ok(0.0);
    }
    let raw = im_from_frequencies(&frequencies(a), &frequencies(b), cfg.gamma, cfg.grid_step);
    Ok(raw.min(1.0))
}

fn gamma_cache() -> &'static RwLock<HashMap<usize, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Width `γ` for which the IM distance between the empty and the complete
/// unweighted graph on `n` nodes is 1. Found by bisection on `[1e-4, 1]` and
/// memoized per `n`.
pub fn calibrate_gamma(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Validation(format!("IM calibration needs n >= 2, got {n}")));
    }
    if let Some(g) = gamma_cache().read().expect("gamma cache poisoned").get(&n) {
        return Ok(*g);
    }
    let empty = frequencies(&WeightedDigraph::empty(n));
    let complete = frequencies(&WeightedDigraph::complete(n, 1.0));
    let excess = |gamma: f64| im_from_frequencies(&empty, &complete, gamma, DEFAULT_GRID_STEP) - 1.0;

    let (mut lo, mut hi) = GAMMA_BRACKET;
    if !(excess(lo) > 0.0 && excess(hi) < 0.0) {
        return Err(Error::Numeric(format!(
            "IM calibration for n = {n}: no root in [{lo}, {hi}]"
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let e = excess(mid);
        if e.abs() < CALIBRATION_TOL || hi - lo < 1e-15 {
            break;
        }
        if e > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    gamma_cache().write().expect("gamma cache poisoned").insert(n, mid);
    Ok(mid)
}

/// `√(H² + ξ·IM²) / √(1 + ξ)`.
pub fn him_distance(a: &WeightedDigraph, b: &WeightedDigraph, cfg: &MetricConfig) -> Result<f64> {
    let h = hamming_distance(a, b)?;
    let im = ipsen_mikhailov(a, b, cfg)?;
    Ok(combine_him(h, im, cfg.xi))
}

fn combine_him(h: f64, im: f64, xi: f64) -> f64 {
    ((h * h + xi * im * im) / (1.0 + xi)).sqrt()
}

/// `L / tr(L)`; the empty graph maps to the maximally mixed state `I / n`.
pub fn density_matrix(g: &WeightedDigraph) -> DMatrix<f64> {
    let l = magnitude_laplacian(g);
    let trace = l.trace();
    if trace <= 0.0 {
        let n = g.n();
        DMatrix::identity(n, n) / n as f64
    } else {
        l / trace
    }
}

fn von_neumann_entropy(rho: &DMatrix<f64>, log_base: f64) -> f64 {
    let eig = SymmetricEigen::new(rho.clone());
    let ln_base = log_base.ln();
    eig.eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln() / ln_base)
        .sum()
}

/// Square root of the quantum Jensen–Shannon divergence (log base 2).
pub fn qjsd_distance(a: &WeightedDigraph, b: &WeightedDigraph) -> Result<f64> {
    qjsd_with_base(a, b, 2.0)
}

fn qjsd_with_base(a: &WeightedDigraph, b: &WeightedDigraph, log_base: f64) -> Result<f64> {
    same_size(a, b)?;
    let ra = density_matrix(a);
    let rb = density_matrix(b);
    let mix = (&ra + &rb) * 0.5;
    let div = von_neumann_entropy(&mix, log_base)
        - 0.5 * (von_neumann_entropy(&ra, log_base) + von_neumann_entropy(&rb, log_base));
    Ok(div.max(0.0).sqrt().min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub him: f64,
    pub qjsd: f64,
    pub hamming: f64,
    pub im: f64,
}

pub fn score_pair(a: &WeightedDigraph, b: &WeightedDigraph, cfg: &MetricConfig) -> Result<PairScores> {
    let hamming = hamming_distance(a, b)?;
    let im = ipsen_mikhailov(a, b, cfg)?;
    Ok(PairScores {
        him: combine_him(hamming, im, cfg.xi),
        qjsd: qjsd_with_base(a, b, cfg.log_base)?,
        hamming,
        im,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pairs: Vec<PairScores>,
    pub mean_him: f64,
    pub mean_qjsd: f64,
    pub mean_hamming: f64,
    pub mean_im: f64,
    pub config: MetricConfig,
}

impl EvaluationReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:>10} {:>10} {:>10} {:>10}", "pair", "him", "qjsd", "hamming", "im");
        for (i, p) in self.pairs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
                i, p.him, p.qjsd, p.hamming, p.im
            );
        }
        let _ = writeln!(
            out,
            "{:>6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            "mean", self.mean_him, self.mean_qjsd, self.mean_hamming, self.mean_im
        );
        let _ = writeln!(
            out,
            "# n={} gamma={:.9} xi={} grid_step={} log_base={}",
            self.config.n, self.config.gamma, self.config.xi, self.config.grid_step, self.config.log_base
        );
        out
    }
}

/// Scores aligned prediction/truth lists. Pairs are scored in parallel and
/// reduced in input order.
pub fn evaluate_batch(
    preds: &[WeightedDigraph],
    truths: &[WeightedDigraph],
    cfg: &MetricConfig,
) -> Result<EvaluationReport> {
    if preds.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} ground-truth graphs",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Validation("nothing to evaluate".into()));
    }
    let pairs: Vec<PairScores> = preds
        .par_iter()
        .zip(truths.par_iter())
        .map(|(p, t)| score_pair(p, t, cfg))
        .collect::<Result<_>>()?;
    let mean = |f: fn(&PairScores) -> f64| pairs.iter().map(f).sum::<f64>() / pairs.len() as f64;
    Ok(EvaluationReport {
        mean_him: mean(|p| p.him),
        mean_qjsd: mean(|p| p.qjsd),
        mean_hamming: mean(|p| p.hamming),
        mean_im: mean(|p| p.im),
        pairs,
        config: cfg.clone(),
    })
}
