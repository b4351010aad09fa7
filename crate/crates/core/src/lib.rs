//! Time-series conditioned graph generation.
//!
//! A generator maps a multivariate time series (one row per node) to a
//! directed weighted adjacency matrix; a discriminator scores how well a
//! graph explains a series. Both are trained adversarially with least-squares
//! losses plus feature matching and a fuzzy-cognitive-map reconstruction term.
//!
//! Modules, bottom-up:
//! - [`autodiff`]: tensors and the reverse-mode tape
//! - [`nn`]: linear, instance norm, SRU encoder
//! - [`generator`], [`discriminator`]: the two networks
//! - [`fcm`]: differentiable fuzzy-cognitive-map dynamics
//! - [`data`]: graph/series types, BA synthesis, DREAM3 parsing, dataset files
//! - [`metrics`]: Hamming, Ipsen–Mikhailov, HIM and QJSD distances
//! - [`training`]: losses, RAdam, training loop, checkpoints, inference
//! - [`baseline`]: partial-correlation network estimator

pub mod autodiff;
pub mod baseline;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod fcm;
pub mod generator;
pub mod metrics;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
