//! Detection scores built on a trained CVAE, empirical latent null models,
//! and percentile threshold calibration.
//!
//! * reconstruction: `‖x − Dec(μ(x))‖²`
//! * KL: closed-form divergence from the encoder posterior to an empirical
//!   non-circular Gaussian fitted on clutter, evaluated per component
//! * Mahalanobis: `(z − μ_ref)ᴴ Σ_ref⁻¹ (z − μ_ref)` on latent codes

mod calibrate;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clx::{cholesky, Cholesky, ComplexMatrix, ComplexVector, HermitianMatrix, C64};
use crate::cvae::{reparameterize, CvaeModel, LatentPosterior, DELTA_SHRINK};
use crate::cvnn::ComplexTensor;
use crate::error::{invalid, Error, Result};
use crate::rng::{domain, Streams};

pub use calibrate::{calibrate, decide, order_index, CalibrationRecord, NullModel, ScoreKind, Threshold, CALIBRATION_VERSION};

/// Default floor for per-sample circular variances.
pub const KL_EPS: f64 = 1e-8;
/// Relative diagonal load of the latent covariance.
pub const MAHA_REG: f64 = 1e-6;

const CHUNK: usize = 256;

/// How a latent code is taken from the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentDraw {
    /// One reparameterized draw.
    #[default]
    Sample,
    /// The posterior mean.
    Mean,
}

fn batches(xs: &[ComplexVector]) -> impl Iterator<Item = Result<ComplexTensor>> + '_ {
    xs.chunks(CHUNK).map(ComplexTensor::from_samples)
}

/// Posteriors for many inputs (running batch-norm statistics).
pub fn posteriors(model: &CvaeModel, xs: &[ComplexVector]) -> Result<Vec<LatentPosterior>> {
    let mut out = Vec::with_capacity(xs.len());
    for t in batches(xs) {
        out.extend(model.encode_batch(&t?)?);
    }
    Ok(out)
}

/// Reconstruction scores through the posterior mean.
pub fn score_mse(model: &CvaeModel, xs: &[ComplexVector]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    for t in batches(xs) {
        let t = t?;
        let xh = model.reconstruct_mean(&t)?;
        for s in 0..t.batch() {
            out.push(t.sample(s).iter().zip(xh.sample(s)).map(|(a, b)| (a - b).norm_sqr()).sum());
        }
    }
    Ok(out)
}

/// Reconstruction score averaged over `n` sampled latents.
pub fn score_mse_sampled<R: Rng + ?Sized>(model: &CvaeModel, x: &[C64], n: usize, rng: &mut R) -> Result<f64> {
    if n == 0 {
        return Err(invalid("at least one latent draw is needed"));
    }
    let post = model.encode(x)?;
    let zs: Vec<ComplexVector> = (0..n).map(|_| reparameterize(&post, rng)).collect();
    let xh = model.decode_batch(&ComplexTensor::from_samples(&zs)?)?;
    let total: f64 = (0..n).map(|s| x.iter().zip(xh.sample(s)).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()).sum();
    Ok(total / n as f64)
}

/// Empirical non-circular Gaussian of clutter posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNullKl {
    pub mu0: ComplexVector,
    /// Mean circular variance per component.
    pub sigma0: Vec<f64>,
    /// Mean pseudo-variance per component.
    pub delta0: ComplexVector,
    pub eps_clip: f64,
}

/// Circular variance `max(v − |δ|², ε)` of one posterior component.
pub fn circular_variance(v: f64, delta: C64, eps: f64) -> f64 {
    (v - delta.norm_sqr()).max(eps)
}

/// Keeps a pseudo-variance strictly inside the disc `|δ| < σ`.
fn clip_pseudo(sigma: f64, delta: C64) -> C64 {
    let bound = DELTA_SHRINK * sigma;
    let r = delta.norm();
    if r > bound {
        delta * (bound / r)
    } else {
        delta
    }
}

pub fn fit_null_kl_from(posts: &[LatentPosterior], eps: f64) -> Result<EmpiricalNullKl> {
    let first = posts.first().ok_or_else(|| invalid("cannot fit a null model on an empty set"))?;
    let q = first.q();
    let n = posts.len() as f64;
    let mut mu0 = vec![C64::new(0.0, 0.0); q];
    let mut sigma0 = vec![0.0; q];
    let mut delta0 = vec![C64::new(0.0, 0.0); q];
    for p in posts {
        if p.q() != q {
            return Err(Error::DimensionMismatch { expected: q, found: p.q() });
        }
        for l in 0..q {
            mu0[l] += p.mu[l];
            sigma0[l] += circular_variance(p.v[l], p.delta[l], eps);
            delta0[l] += p.delta[l];
        }
    }
    mu0.iter_mut().for_each(|z| *z /= n);
    sigma0.iter_mut().for_each(|s| *s /= n);
    delta0.iter_mut().for_each(|z| *z /= n);
    Ok(EmpiricalNullKl { mu0, sigma0, delta0, eps_clip: eps })
}

pub fn fit_null_kl(model: &CvaeModel, data: &[ComplexVector]) -> Result<EmpiricalNullKl> {
    fit_null_kl_from(&posteriors(model, data)?, KL_EPS)
}

/// KL divergence between two per-component non-circular Gaussians
/// `(μ, σ, δ)`, with `σ` the circular variance and `|δ| < σ`.
fn kl_block(post: (C64, f64, C64), null: (C64, f64, C64)) -> f64 {
    let (mu, s, e) = post;
    let (mu0, a, d) = null;
    let det0 = a * a - d.norm_sqr();
    let det_enc = s * s - e.norm_sqr();
    let trace = (2.0 * a * s - 2.0 * (d * e.conj()).re) / det0;
    let m = mu0 - mu;
    let mean = (2.0 * a * m.norm_sqr() - 2.0 * (d.conj() * m * m).re) / det0;
    0.5 * ((det0 / det_enc).ln() + trace + mean - 2.0)
}

impl EmpiricalNullKl {
    pub fn q(&self) -> usize {
        self.mu0.len()
    }

    /// Divergence from `post` to the null. Circular variances are floored
    /// at `eps_clip` and pseudo-variances shrunk into `|δ| < σ` so both
    /// augmented covariances stay positive definite.
    pub fn score(&self, post: &LatentPosterior) -> Result<f64> {
        if post.q() != self.q() {
            return Err(Error::DimensionMismatch { expected: self.q(), found: post.q() });
        }
        let mut total = 0.0;
        for l in 0..self.q() {
            let s = circular_variance(post.v[l], post.delta[l], self.eps_clip);
            let a = self.sigma0[l].max(self.eps_clip);
            total += kl_block(
                (post.mu[l], s, clip_pseudo(s, post.delta[l])),
                (self.mu0[l], a, clip_pseudo(a, self.delta0[l])),
            );
        }
        Ok(total.max(0.0))
    }
}

pub fn score_kl(model: &CvaeModel, null: &EmpiricalNullKl, xs: &[ComplexVector]) -> Result<Vec<f64>> {
    posteriors(model, xs)?.iter().map(|p| null.score(p)).collect()
}

/// Latent codes, one per posterior, each draw using its own generator.
pub fn latent_codes<R: Rng>(posts: &[LatentPosterior], draw: LatentDraw, rngs: &mut [R]) -> Result<Vec<ComplexVector>> {
    match draw {
        LatentDraw::Mean => Ok(posts.iter().map(|p| p.mu.clone()).collect()),
        LatentDraw::Sample => {
            if rngs.len() != posts.len() {
                return Err(invalid("one generator per posterior is required"));
            }
            Ok(posts.iter().zip(rngs.iter_mut()).map(|(p, r)| reparameterize(p, r)).collect())
        }
    }
}

/// Mean and regularized Hermitian covariance of clutter latent codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MahaRepr", into = "MahaRepr")]
pub struct EmpiricalNullMaha {
    mu_ref: ComplexVector,
    sigma_ref: HermitianMatrix,
    chol: Cholesky,
}

#[derive(Serialize, Deserialize)]
struct MahaRepr {
    mu_ref: ComplexVector,
    sigma_ref: HermitianMatrix,
}

impl TryFrom<MahaRepr> for EmpiricalNullMaha {
    type Error = Error;
    fn try_from(r: MahaRepr) -> Result<Self> {
        Self::new(r.mu_ref, r.sigma_ref)
    }
}

impl From<EmpiricalNullMaha> for MahaRepr {
    fn from(n: EmpiricalNullMaha) -> Self {
        MahaRepr { mu_ref: n.mu_ref, sigma_ref: n.sigma_ref }
    }
}

impl EmpiricalNullMaha {
    pub fn new(mu_ref: ComplexVector, sigma_ref: HermitianMatrix) -> Result<Self> {
        if sigma_ref.dim() != mu_ref.len() {
            return Err(Error::DimensionMismatch { expected: mu_ref.len(), found: sigma_ref.dim() });
        }
        let chol = cholesky(&sigma_ref)?;
        Ok(Self { mu_ref, sigma_ref, chol })
    }

    pub fn mu_ref(&self) -> &[C64] {
        &self.mu_ref
    }

    pub fn sigma_ref(&self) -> &HermitianMatrix {
        &self.sigma_ref
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn q(&self) -> usize {
        self.mu_ref.len()
    }

    pub fn score(&self, z: &[C64]) -> Result<f64> {
        if z.len() != self.q() {
            return Err(Error::DimensionMismatch { expected: self.q(), found: z.len() });
        }
        let d: ComplexVector = z.iter().zip(&self.mu_ref).map(|(a, b)| a - b).collect();
        Ok(self.chol.quad_form(&d))
    }
}

/// Sample mean and `1/(N−1)` covariance plus `λ·I`, `λ = 1e-6·trace/q`
/// (`λ = 1e-6` when the codes carry no spread at all).
pub fn fit_null_maha_from(zs: &[ComplexVector]) -> Result<EmpiricalNullMaha> {
    let first = zs.first().ok_or_else(|| invalid("cannot fit a null model on an empty set"))?;
    let q = first.len();
    if zs.len() < 2 {
        return Err(invalid("the latent covariance needs at least 2 codes"));
    }
    let n = zs.len() as f64;
    let mut mu = vec![C64::new(0.0, 0.0); q];
    for z in zs {
        if z.len() != q {
            return Err(Error::DimensionMismatch { expected: q, found: z.len() });
        }
        mu.iter_mut().zip(z).for_each(|(m, v)| *m += v);
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut cov = ComplexMatrix::zeros(q, q);
    let mut d = vec![C64::new(0.0, 0.0); q];
    for z in zs {
        d.iter_mut().zip(z.iter().zip(&mu)).for_each(|(d, (a, b))| *d = a - b);
        for i in 0..q {
            for j in i..q {
                cov[(i, j)] += d[i] * d[j].conj();
            }
        }
    }
    for i in 0..q {
        for j in i..q {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = if i == j { C64::new(v.re, 0.0) } else { v };
            cov[(j, i)] = v.conj();
        }
    }
    let trace = cov.trace().re;
    let lambda = if trace > 0.0 { MAHA_REG * trace / q as f64 } else { MAHA_REG };
    for i in 0..q {
        cov[(i, i)] += lambda;
    }
    EmpiricalNullMaha::new(mu, HermitianMatrix::new(cov)?)
}

/// Fits the Mahalanobis null on clutter; with [`LatentDraw::Sample`] each
/// sample `i` uses stream `i` of the `scores/maha-fit` domain.
pub fn fit_null_maha(model: &CvaeModel, data: &[ComplexVector], draw: LatentDraw, seed: u64) -> Result<EmpiricalNullMaha> {
    let posts = posteriors(model, data)?;
    let streams = Streams::new(seed);
    let mut rngs: Vec<_> = (0..posts.len()).map(|i| streams.child(domain("scores/maha-fit"), i as u64)).collect();
    fit_null_maha_from(&latent_codes(&posts, draw, &mut rngs)?)
}

pub fn score_maha<R: Rng>(
    model: &CvaeModel,
    null: &EmpiricalNullMaha,
    xs: &[ComplexVector],
    draw: LatentDraw,
    rngs: &mut [R],
) -> Result<Vec<f64>> {
    let posts = posteriors(model, xs)?;
    latent_codes(&posts, draw, rngs)?.iter().map(|z| null.score(z)).collect()
}
