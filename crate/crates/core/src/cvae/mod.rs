//! Complex-valued variational autoencoder.
//!
//! The encoder trunk feeds three dense heads producing the posterior mean
//! `μ`, the variance `v` (softplus of a real part) and the pseudo-variance
//! `δ` (a squashed complex value kept strictly inside `|δ| < v`). Latents
//! are sampled with a moment-matching non-circular reparameterization and
//! decoded by a mirror network built from transposed convolutions.

mod posterior;
mod train;

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clx::{ComplexVector, C64};
use crate::cvnn::checkpoint::{write_network, Checkpoint, PayloadReader};
use crate::cvnn::{ComplexTensor, Layer, LayerSpec, Mode, Network};
use crate::error::{invalid, Error, Result};
use crate::rng::{domain, Streams};

pub use posterior::{
    head_backward, head_to_posterior, kl_to_prior, reparam_backward, reparam_coefficients, reparameterize,
    reparameterize_with, softplus, LatentPosterior, DELTA_SHRINK, STABILITY_EPS,
};
pub use train::{train, write_log_csv, EpochRecord, TrainConfig, DEFAULT_DATASET_SIZE};

/// Layer stacks of the encoder trunk and the decoder. The three heads are
/// dense layers from the trunk output to `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl Architecture {
    /// Two strided convolutions with complex batch norm and ℂReLU, a dense
    /// bottleneck of width 32, and a mirrored decoder. Needs `m % 4 == 0`.
    pub fn standard(m: usize, q: usize) -> Result<Self> {
        if m == 0 || m % 4 != 0 {
            return Err(invalid(format!("the standard architecture needs m divisible by 4, got {m}")));
        }
        let flat = 16 * (m / 4);
        let encoder = vec![
            LayerSpec::ComplexConv1d { in_channels: 1, out_channels: 8, kernel: 3, stride: 2 },
            LayerSpec::ComplexBatchNorm { channels: 8 },
            LayerSpec::Crelu,
            LayerSpec::ComplexConv1d { in_channels: 8, out_channels: 16, kernel: 3, stride: 2 },
            LayerSpec::ComplexBatchNorm { channels: 16 },
            LayerSpec::Crelu,
            LayerSpec::ComplexDense { inputs: flat, outputs: 32 },
            LayerSpec::Crelu,
        ];
        let decoder = vec![
            LayerSpec::ComplexDense { inputs: q, outputs: 32 },
            LayerSpec::Crelu,
            LayerSpec::ComplexDense { inputs: 32, outputs: flat },
            LayerSpec::ComplexBatchNorm { channels: 16 },
            LayerSpec::Crelu,
            LayerSpec::ComplexConv1dTransposed { in_channels: 16, out_channels: 8, kernel: 3, stride: 2 },
            LayerSpec::ComplexBatchNorm { channels: 8 },
            LayerSpec::Crelu,
            LayerSpec::ComplexConv1dTransposed { in_channels: 8, out_channels: 1, kernel: 3, stride: 2 },
        ];
        Ok(Self { encoder, decoder })
    }
}

/// Loss components averaged over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    /// `rec + β·kl`.
    pub loss: f64,
    /// Mean `‖x − x̂‖²`.
    pub rec: f64,
    /// Mean KL divergence to the prior.
    pub kl: f64,
}

/// Standard-normal noise for one batch of latent draws, `[batch][q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentNoise {
    pub er: Vec<f64>,
    pub ei: Vec<f64>,
}

impl LatentNoise {
    pub fn draw<R: Rng + ?Sized>(batch: usize, q: usize, rng: &mut R) -> Self {
        let er = (0..batch * q).map(|_| StandardNormal.sample(rng)).collect();
        let ei = (0..batch * q).map(|_| StandardNormal.sample(rng)).collect();
        Self { er, ei }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvaeModel {
    m: usize,
    q: usize,
    beta: f64,
    encoder: Network,
    head_mu: Network,
    head_v: Network,
    head_delta: Network,
    decoder: Network,
}

/// Header stored in model checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    model: String,
    m: usize,
    q: usize,
    beta: f64,
    epoch: usize,
    architecture: Architecture,
}

const MODEL_TAG: &str = "cvae";

impl CvaeModel {
    pub fn new(arch: &Architecture, m: usize, q: usize, beta: f64, seed: u64) -> Result<Self> {
        if q == 0 {
            return Err(invalid("latent dimension must be positive"));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(invalid(format!("KL weight must be finite and non-negative, got {beta}")));
        }
        let mut rng = Streams::new(seed).child(domain("cvae/init"), 0);
        let encoder = Network::new(&arch.encoder, m, &mut rng)?;
        let hidden = encoder.output_features(m)?;
        let head = LayerSpec::ComplexDense { inputs: hidden, outputs: q };
        let head_mu = Network::new(&[head], hidden, &mut rng)?;
        let head_v = Network::new(&[head], hidden, &mut rng)?;
        let head_delta = Network::new(&[head], hidden, &mut rng)?;
        let decoder = Network::new(&arch.decoder, q, &mut rng)?;
        let out = decoder.output_features(q)?;
        if out != m {
            return Err(invalid(format!("decoder emits {out} values for inputs of length {m}")));
        }
        Ok(Self { m, q, beta, encoder, head_mu, head_v, head_delta, decoder })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { encoder: self.encoder.specs(), decoder: self.decoder.specs() }
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|n| n.param_count()).sum()
    }

    fn networks(&self) -> [&Network; 5] {
        [&self.encoder, &self.head_mu, &self.head_v, &self.head_delta, &self.decoder]
    }

    /// All layers in a fixed order (encoder, heads, decoder).
    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        [&mut self.encoder, &mut self.head_mu, &mut self.head_v, &mut self.head_delta, &mut self.decoder]
            .into_iter()
            .flat_map(|n| n.layers_mut().iter_mut())
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.networks().into_iter().flat_map(|n| n.layers().iter())
    }

    pub fn zero_grad(&mut self) {
        self.layers_mut().for_each(Layer::zero_grad);
    }

    fn check_input(&self, xs: &ComplexTensor) -> Result<()> {
        if xs.features() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, found: xs.features() });
        }
        Ok(())
    }

    /// Posterior parameters for a batch, using running batch-norm statistics.
    pub fn encode_batch(&self, xs: &ComplexTensor) -> Result<Vec<LatentPosterior>> {
        self.check_input(xs)?;
        let h = self.encoder.infer(xs)?;
        let raw = [self.head_mu.infer(&h)?, self.head_v.infer(&h)?, self.head_delta.infer(&h)?];
        if raw.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence("non-finite encoder activations".into()));
        }
        Ok((0..xs.batch()).map(|s| self.posterior_of(&raw, s)).collect())
    }

    pub fn encode(&self, x: &[C64]) -> Result<LatentPosterior> {
        let t = ComplexTensor::new(1, x.len(), x.to_vec())?;
        Ok(self.encode_batch(&t)?.remove(0))
    }

    fn posterior_of(&self, raw: &[ComplexTensor; 3], s: usize) -> LatentPosterior {
        let q = self.q;
        let (mut mu, mut v, mut delta) = (Vec::with_capacity(q), Vec::with_capacity(q), Vec::with_capacity(q));
        for l in 0..q {
            let (m, vv, d) = head_to_posterior(raw[0].sample(s)[l], raw[1].sample(s)[l], raw[2].sample(s)[l]);
            mu.push(m);
            v.push(vv);
            delta.push(d);
        }
        LatentPosterior { mu, v, delta }
    }

    pub fn decode_batch(&self, zs: &ComplexTensor) -> Result<ComplexTensor> {
        if zs.features() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, found: zs.features() });
        }
        let out = self.decoder.infer(zs)?;
        if !out.is_finite() {
            return Err(Error::Divergence("non-finite decoder output".into()));
        }
        Ok(out)
    }

    pub fn decode(&self, z: &[C64]) -> Result<ComplexVector> {
        let t = ComplexTensor::new(1, z.len(), z.to_vec())?;
        Ok(self.decode_batch(&t)?.into_data())
    }

    /// Reconstruction through the posterior mean, `x̂ = Dec(μ(x))`.
    pub fn reconstruct_mean(&self, xs: &ComplexTensor) -> Result<ComplexTensor> {
        let posts = self.encode_batch(xs)?;
        let mus: Vec<&[C64]> = posts.iter().map(|p| p.mu.as_slice()).collect();
        self.decode_batch(&ComplexTensor::from_samples(&mus)?)
    }

    /// ELBO on a batch with fixed latent noise, without gradients.
    /// Training mode uses batch statistics and updates running statistics.
    pub fn elbo_loss(&mut self, xs: &ComplexTensor, noise: &LatentNoise, mode: Mode) -> Result<LossParts> {
        Ok(self.elbo_pass(xs, noise, mode, false)?)
    }

    /// ELBO on a batch in training mode; accumulates parameter gradients.
    pub fn elbo_backward(&mut self, xs: &ComplexTensor, noise: &LatentNoise) -> Result<LossParts> {
        self.elbo_pass(xs, noise, Mode::Train, true)
    }

    fn elbo_pass(&mut self, xs: &ComplexTensor, noise: &LatentNoise, mode: Mode, grad: bool) -> Result<LossParts> {
        self.check_input(xs)?;
        let batch = xs.batch();
        let q = self.q;
        if batch == 0 {
            return Err(invalid("empty batch"));
        }
        if noise.er.len() != batch * q || noise.ei.len() != batch * q {
            return Err(invalid("latent noise does not match the batch"));
        }
        let (h, t_enc) = self.encoder.forward(xs, mode)?;
        let (rm, t_m) = self.head_mu.forward(&h, mode)?;
        let (rv, t_v) = self.head_v.forward(&h, mode)?;
        let (rd, t_d) = self.head_delta.forward(&h, mode)?;
        let raw = [rm, rv, rd];
        let posts: Vec<LatentPosterior> = (0..batch).map(|s| self.posterior_of(&raw, s)).collect();
        let mut z = ComplexTensor::zeros(batch, q);
        let mut kl = 0.0;
        for (s, p) in posts.iter().enumerate() {
            let zs = z.sample_mut(s);
            for l in 0..q {
                let k = s * q + l;
                zs[l] = posterior::sample_component(p.mu[l], p.v[l], p.delta[l], noise.er[k], noise.ei[k]);
                kl += posterior::kl_component(p.mu[l], p.v[l], p.delta[l]);
            }
        }
        let (xh, t_dec) = self.decoder.forward(&z, mode)?;
        let rec: f64 = xh.data().iter().zip(xs.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let bf = batch as f64;
        let parts = LossParts { loss: (rec + self.beta * kl) / bf, rec: rec / bf, kl: kl / bf };
        if !parts.loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss (rec {}, kl {})", parts.rec, parts.kl)));
        }
        if !grad {
            return Ok(parts);
        }

        let g_xh_data = xh.data().iter().zip(xs.data()).map(|(a, b)| (a - b) * (2.0 / bf)).collect();
        let g_xh = ComplexTensor::new(batch, self.m, g_xh_data)?;
        let g_z = self.decoder.backward(t_dec, &g_xh)?;
        let wkl = self.beta / bf;
        let mut g_raw = [ComplexTensor::zeros(batch, q), ComplexTensor::zeros(batch, q), ComplexTensor::zeros(batch, q)];
        for (s, p) in posts.iter().enumerate() {
            for l in 0..q {
                let k = s * q + l;
                let (mut gm, mut gv, mut gd) =
                    reparam_backward(p.v[l], p.delta[l], noise.er[k], noise.ei[k], g_z.sample(s)[l]);
                let (km, kv, kd) = posterior::kl_component_grad(p.mu[l], p.v[l], p.delta[l]);
                gm += km * wkl;
                gv += kv * wkl;
                gd += kd * wkl;
                let (ga, gb) = head_backward(raw[1].sample(s)[l], raw[2].sample(s)[l], gv, gd);
                g_raw[0].sample_mut(s)[l] = gm;
                g_raw[1].sample_mut(s)[l] = ga;
                g_raw[2].sample_mut(s)[l] = gb;
            }
        }
        let [g_m, g_v, g_d] = g_raw;
        let mut g_h = self.head_mu.backward(t_m, &g_m)?;
        for g in [self.head_v.backward(t_v, &g_v)?, self.head_delta.backward(t_d, &g_d)?] {
            g_h.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
        }
        self.encoder.backward(t_enc, &g_h)?;
        Ok(parts)
    }

    pub fn to_checkpoint(&self, epoch: usize) -> Result<Checkpoint> {
        let header = ModelHeader {
            model: MODEL_TAG.into(),
            m: self.m,
            q: self.q,
            beta: self.beta,
            epoch,
            architecture: self.architecture(),
        };
        let mut payload = Vec::new();
        for n in self.networks() {
            write_network(n, &mut payload);
        }
        Ok(Checkpoint { header: serde_json::to_value(header)?, payload })
    }

    /// Restores a model and the number of epochs it was trained for.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, usize)> {
        let h: ModelHeader = serde_json::from_value(ck.header.clone())
            .map_err(|e| Error::MalformedHeader(format!("checkpoint header: {e}")))?;
        if h.model != MODEL_TAG {
            return Err(Error::MalformedHeader(format!("expected a {MODEL_TAG} checkpoint, found {}", h.model)));
        }
        let mut model = Self::new(&h.architecture, h.m, h.q, h.beta, 0)?;
        let mut rd = PayloadReader::new(&ck.payload);
        for n in [
            &mut model.encoder,
            &mut model.head_mu,
            &mut model.head_v,
            &mut model.head_delta,
            &mut model.decoder,
        ] {
            *n = rd.read_network(&n.specs())?;
        }
        rd.finish()?;
        Ok((model, h.epoch))
    }

    pub fn save(&self, path: &Path, epoch: usize) -> Result<()> {
        std::fs::write(path, self.to_checkpoint(epoch)?.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, usize)> {
        Self::from_checkpoint(&Checkpoint::decode(&std::fs::read(path)?)?)
    }
}
