//! Out-of-distribution target detection for radar Doppler profiles.
//!
//! A complex-valued variational autoencoder is trained on clutter only and
//! targets are flagged as departures from it, through the reconstruction
//! error, a KL divergence to an empirical latent null, or a Hermitian
//! Mahalanobis distance in latent space. The adaptive normalized matched
//! filter with a Tyler covariance estimate serves as the classical baseline.
//!
//! Modules, bottom up:
//!
//! - [`clx`]: complex vectors, Hermitian matrices, Cholesky solves.
//! - [`rng`]: seeded, splittable random streams.
//! - [`sigmodel`]: Gaussian and compound-Gaussian clutter, targets, the CIQ1 file format.
//! - [`cvnn`]: complex layers with Wirtinger gradients, Adam, checkpoints.
//! - [`cvae`]: the autoencoder, its ELBO and the training loop.
//! - [`scores`]: detection scores, null models and threshold calibration.
//! - [`classical`]: SCM / Tyler estimators and the ANMF statistic.
//! - [`bench`]: Monte-Carlo Pd sweeps with Wilson intervals and rankings.

pub mod bench;
pub mod classical;
pub mod clx;
pub mod cvae;
pub mod cvnn;
pub mod error;
pub mod rng;
pub mod scores;
pub mod serde_db;
pub mod sigmodel;

pub use error::{Error, Result};
