//! Synthetic radar Doppler profiles.
//!
//! A profile of `m` pulses is `x = c + b (+ α·p)` where the clutter `c` is
//! circular Gaussian with Toeplitz covariance `T(ρ)` (optionally scaled by
//! a Gamma texture for compound-Gaussian clutter), `b` is white thermal
//! noise whose power is set by the clutter-to-noise ratio, and `α·p` is a
//! target at normalized Doppler bin `d`.

pub mod iq;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::clx::{cholesky, toeplitz, Cholesky, ComplexVector, C64};
use crate::error::{invalid, Result};
use crate::rng::{domain, StreamRng, Streams};

pub use iq::{load_iq, read_iq, write_iq};

const CLUTTER_DOMAIN: u64 = domain("sigmodel/clutter");
const TARGET_DOMAIN: u64 = domain("sigmodel/target");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClutterKind {
    /// Circular Gaussian clutter.
    #[serde(rename = "cgn")]
    Gaussian,
    /// Compound Gaussian: Gaussian speckle scaled by a Gamma texture.
    #[serde(rename = "ccgn")]
    CompoundGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub m: usize,
    pub rho: f64,
    pub clutter_kind: ClutterKind,
    /// Shape `μ` of the `Γ(μ, 1/μ)` texture (unit mean).
    pub texture_shape: f64,
    /// Clutter-to-thermal-noise ratio; `inf` disables thermal noise.
    #[serde(with = "crate::serde_db")]
    pub cnr_db: f64,
    /// Target SNR; `-inf` means no target.
    #[serde(with = "crate::serde_db")]
    pub snr_db: f64,
    pub doppler_bin: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            m: 16,
            rho: 0.5,
            clutter_kind: ClutterKind::Gaussian,
            texture_shape: 1.0,
            cnr_db: 15.0,
            snr_db: f64::NEG_INFINITY,
            doppler_bin: 0,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(invalid(format!("scenario m must be >= 2, got {}", self.m)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(invalid(format!("scenario rho must satisfy |rho| < 1, got {}", self.rho)));
        }
        if !(self.texture_shape > 0.0 && self.texture_shape.is_finite()) {
            return Err(invalid(format!(
                "texture shape must be positive and finite, got {}",
                self.texture_shape
            )));
        }
        if self.cnr_db.is_nan() || self.cnr_db == f64::NEG_INFINITY {
            return Err(invalid(format!("invalid clutter-to-noise ratio {}", self.cnr_db)));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::INFINITY {
            return Err(invalid(format!("invalid SNR {}", self.snr_db)));
        }
        if self.doppler_bin >= self.m {
            return Err(invalid(format!(
                "doppler bin {} outside [0, {})",
                self.doppler_bin, self.m
            )));
        }
        Ok(())
    }

    /// Thermal noise power relative to unit per-bin clutter power.
    pub fn noise_power(&self) -> f64 {
        db_to_linear(-self.cnr_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    H0,
    H1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub signals: Vec<ComplexVector>,
    pub label: Label,
    /// Generating scenario; `None` for recorded data.
    pub scenario: Option<Scenario>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.signals.first().map(Vec::len)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Doppler steering vector `p_k = exp(2iπ·d·k/m)`.
pub fn steering_vector(m: usize, d: usize) -> Result<ComplexVector> {
    if m == 0 || d >= m {
        return Err(invalid(format!("steering vector needs 0 <= d < m, got d={d}, m={m}")));
    }
    Ok((0..m)
        .map(|k| {
            // reduce the phase index mod m so large products stay exact
            let idx = (d * k) % m;
            C64::from_polar(1.0, 2.0 * PI * idx as f64 / m as f64)
        })
        .collect())
}

/// Target amplitude `√SNR·exp(2iπφ)/√m`; `φ` is drawn uniformly on `[0,1)`
/// when not supplied.
pub fn target_amplitude<R: Rng + ?Sized>(snr_db: f64, m: usize, phase: Option<f64>, rng: &mut R) -> C64 {
    let phi = phase.unwrap_or_else(|| rng.random::<f64>());
    if snr_db == f64::NEG_INFINITY {
        return C64::new(0.0, 0.0);
    }
    let amp = (db_to_linear(snr_db) / m as f64).sqrt();
    C64::from_polar(amp, 2.0 * PI * phi)
}

/// `(g_r + i·g_i)/√2` with standard normal parts, so `E|w|² = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Precomputed clutter-plus-noise generator for one scenario.
#[derive(Debug, Clone)]
pub struct ClutterSampler {
    m: usize,
    factor: Cholesky,
    noise_std: f64,
    texture: Option<Gamma<f64>>,
}

impl ClutterSampler {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let factor = cholesky(&toeplitz(scenario.rho, scenario.m)?)?;
        let texture = match scenario.clutter_kind {
            ClutterKind::Gaussian => None,
            ClutterKind::CompoundGaussian => Some(
                Gamma::new(scenario.texture_shape, 1.0 / scenario.texture_shape)
                    .map_err(|e| invalid(format!("texture law: {e}")))?,
            ),
        };
        Ok(Self {
            m: scenario.m,
            factor,
            noise_std: scenario.noise_power().sqrt(),
            texture,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// One clutter-plus-noise profile.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ComplexVector {
        let w: Vec<C64> = (0..self.m).map(|_| complex_normal(rng)).collect();
        let scale = match &self.texture {
            Some(g) => g.sample(rng).sqrt(),
            None => 1.0,
        };
        let l = self.factor.factor();
        (0..self.m)
            .map(|i| {
                let row = l.row(i);
                let c: C64 = row[..=i].iter().zip(&w[..=i]).map(|(a, b)| a * b).sum();
                let noise = if self.noise_std > 0.0 {
                    complex_normal(rng) * self.noise_std
                } else {
                    C64::new(0.0, 0.0)
                };
                c * scale + noise
            })
            .collect()
    }
}

/// Adds `α·p` in place with a fresh uniform phase; returns `α`.
pub fn add_target<R: Rng + ?Sized>(x: &mut [C64], snr_db: f64, steering: &[C64], rng: &mut R) -> C64 {
    let alpha = target_amplitude(snr_db, x.len(), None, rng);
    for (xi, pi) in x.iter_mut().zip(steering) {
        *xi += alpha * pi;
    }
    alpha
}

fn signal_rng(scenario: &Scenario, dom: u64, index: usize) -> StreamRng {
    Streams::new(scenario.seed).child(dom, index as u64)
}

/// `n` clutter-plus-noise profiles, one child stream per signal index.
pub fn sample_clutter(scenario: &Scenario, n: usize) -> Result<SampleBatch> {
    if n == 0 {
        return Err(invalid("sample count must be positive"));
    }
    let sampler = ClutterSampler::new(scenario)?;
    let signals = (0..n)
        .map(|i| sampler.draw(&mut signal_rng(scenario, CLUTTER_DOMAIN, i)))
        .collect();
    Ok(SampleBatch {
        signals,
        label: Label::H0,
        scenario: Some(scenario.clone()),
    })
}

/// Adds a target at the scenario's Doppler bin and SNR to every signal,
/// each with an independent phase.
pub fn inject_target(batch: &SampleBatch, scenario: &Scenario) -> Result<SampleBatch> {
    scenario.validate()?;
    if batch.label != Label::H0 {
        return Err(invalid("targets are injected into H0 batches only"));
    }
    let p = steering_vector(scenario.m, scenario.doppler_bin)?;
    let mut signals = batch.signals.clone();
    for (i, x) in signals.iter_mut().enumerate() {
        if x.len() != scenario.m {
            return Err(invalid(format!(
                "signal {i} has length {}, scenario m={}",
                x.len(),
                scenario.m
            )));
        }
        add_target(x, scenario.snr_db, &p, &mut signal_rng(scenario, TARGET_DOMAIN, i));
    }
    Ok(SampleBatch {
        signals,
        label: Label::H1,
        scenario: Some(scenario.clone()),
    })
}
