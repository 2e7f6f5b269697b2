//! Non-circular Gaussian posteriors: head activations, sampling and the
//! KL divergence to the circular unit prior, each with its gradient.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clx::{ComplexVector, C64};
use crate::error::{invalid, Result};

/// Pseudo-variance shrink factor keeping `|δ| < v` strictly.
pub const DELTA_SHRINK: f64 = 1.0 - 1e-6;
/// Floor applied inside the sampling coefficients.
pub const STABILITY_EPS: f64 = 1e-8;

/// Per-component non-circular Gaussian `z ~ CN(μ, v, δ)` with
/// `E|z−μ|² = v` and `E(z−μ)² = δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPosterior {
    pub mu: ComplexVector,
    pub v: Vec<f64>,
    pub delta: ComplexVector,
}

impl LatentPosterior {
    pub fn new(mu: ComplexVector, v: Vec<f64>, delta: ComplexVector) -> Result<Self> {
        let post = Self { mu, v, delta };
        post.validate()?;
        Ok(post)
    }

    pub fn q(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.mu.len();
        if self.v.len() != q || self.delta.len() != q {
            return Err(invalid("posterior vectors must share one length"));
        }
        for (l, (&v, d)) in self.v.iter().zip(&self.delta).enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("variance {v} at component {l} is not positive")));
            }
            if d.norm() > DELTA_SHRINK * v * (1.0 + 1e-12) {
                return Err(invalid(format!("|δ| = {} exceeds the variance bound at component {l}", d.norm())));
            }
        }
        Ok(())
    }
}

/// `softplus(x) = log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `tanh(s)/s`, equal to 1 at the origin.
fn tanh_ratio(s: f64) -> f64 {
    if s < 1e-4 {
        1.0 - s * s / 3.0
    } else {
        s.tanh() / s
    }
}

/// `φ'(s)/s` for `φ(s) = tanh(s)/s`.
fn tanh_ratio_slope(s: f64) -> f64 {
    if s < 1e-3 {
        -2.0 / 3.0 + 8.0 * s * s / 15.0
    } else {
        let t = s.tanh();
        (s * (1.0 - t * t) - t) / (s * s * s)
    }
}

/// Maps raw head outputs to a valid posterior component:
/// `v = softplus(Re a)`, `δ = (1−1e-6)·v·tanh(|b|)·e^{i·arg b}`.
pub fn head_to_posterior(mu: C64, a: C64, b: C64) -> (C64, f64, C64) {
    let v = softplus(a.re);
    let u = b * tanh_ratio(b.norm());
    (mu, v, u * (DELTA_SHRINK * v))
}

/// Back-propagates `(g_v, g_δ)` through [`head_to_posterior`] to the raw
/// heads `(a, b)`.
pub fn head_backward(a: C64, b: C64, g_v: f64, g_delta: C64) -> (C64, C64) {
    let v = softplus(a.re);
    let s = b.norm();
    let phi = tanh_ratio(s);
    let u = b * phi;
    let g_v_total = g_v + (g_delta.conj() * u).re * DELTA_SHRINK;
    let g_u = g_delta * (DELTA_SHRINK * v);
    let g_b = g_u * phi + b * (tanh_ratio_slope(s) * (g_u.conj() * b).re);
    (C64::new(g_v_total * sigmoid(a.re), 0.0), g_b)
}

/// Coefficients `(k_r, k_i)` of `z = μ + k_r·ε_r + i·k_i·ε_i` that match
/// the first and second moments of `CN(μ, v, δ)`.
pub fn reparam_coefficients(v: f64, delta: C64) -> (C64, f64) {
    let d = (v + delta.re).max(STABILITY_EPS);
    let n = (v * v - delta.norm_sqr()).max(STABILITY_EPS);
    let s = (2.0 * d).sqrt();
    ((delta + v) / s, n.sqrt() / s)
}

/// One draw from the posterior using independent standard normals.
pub fn reparameterize<R: Rng + ?Sized>(post: &LatentPosterior, rng: &mut R) -> ComplexVector {
    let q = post.q();
    let er: Vec<f64> = (0..q).map(|_| StandardNormal.sample(rng)).collect();
    let ei: Vec<f64> = (0..q).map(|_| StandardNormal.sample(rng)).collect();
    reparameterize_with(post, &er, &ei)
}

/// Deterministic sampling map for given noise.
pub fn reparameterize_with(post: &LatentPosterior, er: &[f64], ei: &[f64]) -> ComplexVector {
    (0..post.q())
        .map(|l| sample_component(post.mu[l], post.v[l], post.delta[l], er[l], ei[l]))
        .collect()
}

pub(crate) fn sample_component(mu: C64, v: f64, delta: C64, er: f64, ei: f64) -> C64 {
    let (kr, ki) = reparam_coefficients(v, delta);
    mu + kr * er + C64::new(0.0, ki * ei)
}

/// Gradients `(g_μ, g_v, g_δ)` of a loss through one sampled component,
/// given `g_z`. Clipped quantities contribute no derivative.
pub fn reparam_backward(v: f64, delta: C64, er: f64, ei: f64, g_z: C64) -> (C64, f64, C64) {
    let d_raw = v + delta.re;
    let n_raw = v * v - delta.norm_sqr();
    let d_live = d_raw > STABILITY_EPS;
    let n_live = n_raw > STABILITY_EPS;
    let d = d_raw.max(STABILITY_EPS);
    let n = n_raw.max(STABILITY_EPS);
    let sqrt_n = n.sqrt();
    let inv_s = (2.0 * d).powf(-0.5);
    let inv_s3 = if d_live { (2.0 * d).powf(-1.5) } else { 0.0 };
    let g = g_z * er;
    let h = ei * g_z.im;
    let shared = inv_s3 * (g.conj() * (delta + v)).re;

    let mut g_v = g.re * inv_s - shared - h * sqrt_n * inv_s3;
    let mut g_delta = g * inv_s - shared - h * sqrt_n * inv_s3;
    if n_live {
        g_v += h * v / sqrt_n * inv_s;
        g_delta -= delta * (h * inv_s / sqrt_n);
    }
    (g_z, g_v, g_delta)
}

/// KL divergence from `CN(μ, v, δ)` to `CN(0, 1, 0)`, summed over
/// components: `Σ [−½·log(v² − |δ|²) + v − 1] + ‖μ‖²`.
pub fn kl_to_prior(post: &LatentPosterior) -> f64 {
    (0..post.q()).map(|l| kl_component(post.mu[l], post.v[l], post.delta[l])).sum()
}

pub(crate) fn kl_component(mu: C64, v: f64, delta: C64) -> f64 {
    -0.5 * (v * v - delta.norm_sqr()).ln() + v - 1.0 + mu.norm_sqr()
}

/// Gradients `(g_μ, g_v, g_δ)` of [`kl_component`].
pub(crate) fn kl_component_grad(mu: C64, v: f64, delta: C64) -> (C64, f64, C64) {
    let n = v * v - delta.norm_sqr();
    (mu * 2.0, 1.0 - v / n, delta / n)
}
