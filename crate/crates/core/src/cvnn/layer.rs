//! The five layer kinds and their forward / backward rules.
//!
//! Activations are batches laid out as `[batch][channel][position]`.
//! Gradients use the steepest-descent convention for real losses:
//! `g = ∂L/∂Re θ + i·∂L/∂Im θ = 2·∂L/∂θ*`. For a complex-linear map
//! `y = w·x` this gives `g_x = w*·g_y` and `g_w = g_y·x*`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::whiten::{add, apply, transpose, Eigen2, Mat2, Sym2};
use super::{ComplexTensor, Mode};
use crate::clx::C64;
use crate::error::{invalid, Error, Result};

/// Diagonal load added to every 2×2 batch-norm covariance.
pub const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    ComplexDense { inputs: usize, outputs: usize },
    ComplexConv1d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize },
    ComplexConv1dTransposed { in_channels: usize, out_channels: usize, kernel: usize, stride: usize },
    ComplexBatchNorm { channels: usize },
    Crelu,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::ComplexDense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerSpec::ComplexConv1d { in_channels, out_channels, kernel, stride }
            | LayerSpec::ComplexConv1dTransposed { in_channels, out_channels, kernel, stride } => {
                in_channels > 0 && out_channels > 0 && stride > 0 && kernel % 2 == 1
            }
            LayerSpec::ComplexBatchNorm { channels } => channels > 0,
            LayerSpec::Crelu => true,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid layer spec {self:?} (sizes must be positive, kernels odd)")))
        }
    }

    /// Number of complex parameter slots.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::ComplexDense { inputs, outputs } => outputs * inputs + outputs,
            LayerSpec::ComplexConv1d { in_channels, out_channels, kernel, .. }
            | LayerSpec::ComplexConv1dTransposed { in_channels, out_channels, kernel, .. } => {
                in_channels * out_channels * kernel + out_channels
            }
            LayerSpec::ComplexBatchNorm { channels } => 3 * channels,
            LayerSpec::Crelu => 0,
        }
    }

    /// Output feature count for a given input feature count.
    pub fn output_features(&self, features: usize) -> Result<usize> {
        let mismatch = |expected: String| Error::ShapeMismatch { expected, got: format!("{features} features") };
        match *self {
            LayerSpec::ComplexDense { inputs, outputs } => {
                if features != inputs {
                    return Err(mismatch(format!("{inputs} features")));
                }
                Ok(outputs)
            }
            LayerSpec::ComplexConv1d { in_channels, out_channels, kernel, stride } => {
                let len = channel_len(features, in_channels).ok_or_else(|| mismatch(format!("multiple of {in_channels}")))?;
                Ok(out_channels * conv_out_len(len, kernel, stride))
            }
            LayerSpec::ComplexConv1dTransposed { in_channels, out_channels, stride, .. } => {
                let len = channel_len(features, in_channels).ok_or_else(|| mismatch(format!("multiple of {in_channels}")))?;
                Ok(out_channels * len * stride)
            }
            LayerSpec::ComplexBatchNorm { channels } => {
                channel_len(features, channels).ok_or_else(|| mismatch(format!("multiple of {channels}")))?;
                Ok(features)
            }
            LayerSpec::Crelu => Ok(features),
        }
    }
}

fn channel_len(features: usize, channels: usize) -> Option<usize> {
    (features > 0 && features % channels == 0).then_some(features / channels)
}

fn conv_out_len(len: usize, kernel: usize, stride: usize) -> usize {
    let pad = (kernel - 1) / 2;
    (len + 2 * pad - kernel) / stride + 1
}

/// ℂReLU: ReLU on real and imaginary parts separately.
pub fn crelu(z: C64) -> C64 {
    C64::new(z.re.max(0.0), z.im.max(0.0))
}

/// Running statistics of one batch-norm channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnRunning {
    pub mean: [f64; 2],
    /// Covariance `(rr, ri, ii)` of real and imaginary parts.
    pub cov: [f64; 3],
}

impl Default for BnRunning {
    fn default() -> Self {
        Self { mean: [0.0; 2], cov: [1.0, 0.0, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    pub(crate) params: Vec<C64>,
    pub(crate) grads: Vec<C64>,
    pub(crate) running: Vec<BnRunning>,
}

/// Per-layer record kept by the forward pass for backward.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Input(ComplexTensor),
    BatchNorm(Vec<BnCache>),
    Crelu(ComplexTensor),
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    /// Centered inputs `d_n` (only for training-mode passes).
    centered: Vec<[f64; 2]>,
    whiten: Mat2,
    eigen: Option<Eigen2>,
    normalized: Vec<[f64; 2]>,
    len: usize,
}

impl Layer {
    /// Initializes weights with independent `N(0, 1/(2·fan_in))` real and
    /// imaginary parts, zero biases, identity batch-norm affine.
    pub fn new<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let n = spec.param_count();
        let mut params = vec![C64::new(0.0, 0.0); n];
        let mut running = Vec::new();
        let mut init_weights = |count: usize, fan_in: usize, params: &mut [C64]| {
            let normal = Normal::new(0.0, (1.0 / (2.0 * fan_in as f64)).sqrt()).expect("finite std");
            for p in params[..count].iter_mut() {
                *p = C64::new(normal.sample(rng), normal.sample(rng));
            }
        };
        match spec {
            LayerSpec::ComplexDense { inputs, outputs } => init_weights(inputs * outputs, inputs, &mut params),
            LayerSpec::ComplexConv1d { in_channels, out_channels, kernel, .. }
            | LayerSpec::ComplexConv1dTransposed { in_channels, out_channels, kernel, .. } => {
                init_weights(in_channels * out_channels * kernel, in_channels * kernel, &mut params)
            }
            LayerSpec::ComplexBatchNorm { channels } => {
                for p in params[..channels].iter_mut() {
                    *p = C64::new(1.0, 1.0);
                }
                running = vec![BnRunning::default(); channels];
            }
            LayerSpec::Crelu => {}
        }
        Ok(Self { spec, params, grads: vec![C64::new(0.0, 0.0); n], running })
    }

    /// Builds a layer from explicit parameters (weights then biases).
    pub fn with_params(spec: LayerSpec, params: Vec<C64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", spec.param_count()),
                got: format!("{}", params.len()),
            });
        }
        let running = match spec {
            LayerSpec::ComplexBatchNorm { channels } => vec![BnRunning::default(); channels],
            _ => Vec::new(),
        };
        let n = params.len();
        Ok(Self { spec, params, grads: vec![C64::new(0.0, 0.0); n], running })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[C64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [C64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[C64] {
        &self.grads
    }

    pub fn running(&self) -> &[BnRunning] {
        &self.running
    }

    pub fn running_mut(&mut self) -> &mut [BnRunning] {
        &mut self.running
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
    }

    /// Training-style forward: records a cache and, in training mode,
    /// folds batch statistics into the running statistics.
    pub(crate) fn forward(&mut self, x: &ComplexTensor, mode: Mode) -> Result<(ComplexTensor, Cache)> {
        let (out, cache, stats) = self.forward_inner(x, mode, true)?;
        for (r, b) in self.running.iter_mut().zip(&stats) {
            for k in 0..2 {
                r.mean[k] = (1.0 - BN_MOMENTUM) * r.mean[k] + BN_MOMENTUM * b.mean[k];
            }
            for k in 0..3 {
                r.cov[k] = (1.0 - BN_MOMENTUM) * r.cov[k] + BN_MOMENTUM * b.cov[k];
            }
        }
        Ok((out, cache.expect("recorded")))
    }

    /// Inference with running statistics.
    pub fn eval(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        Ok(self.forward_inner(x, Mode::Eval, false)?.0)
    }

    fn forward_inner(
        &self,
        x: &ComplexTensor,
        mode: Mode,
        record: bool,
    ) -> Result<(ComplexTensor, Option<Cache>, Vec<BnRunning>)> {
        let out_features = self.spec.output_features(x.features())?;
        let keep = |x: &ComplexTensor| record.then(|| Cache::Input(x.clone()));
        let batch = x.batch();
        match self.spec {
            LayerSpec::ComplexDense { inputs, outputs } => {
                let (w, b) = self.params.split_at(inputs * outputs);
                let mut out = Vec::with_capacity(batch * outputs);
                for s in 0..batch {
                    let xs = x.sample(s);
                    for o in 0..outputs {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        out.push(b[o] + row.iter().zip(xs).map(|(a, v)| a * v).sum::<C64>());
                    }
                }
                Ok((ComplexTensor::new(batch, out_features, out)?, keep(x), Vec::new()))
            }
            LayerSpec::ComplexConv1d { in_channels, out_channels, kernel, stride } => {
                let len = x.features() / in_channels;
                let lout = conv_out_len(len, kernel, stride);
                let pad = (kernel - 1) / 2;
                let (w, b) = self.params.split_at(in_channels * out_channels * kernel);
                let mut out = vec![C64::new(0.0, 0.0); batch * out_features];
                for s in 0..batch {
                    let xs = x.sample(s);
                    let os = &mut out[s * out_features..(s + 1) * out_features];
                    for o in 0..out_channels {
                        for t in 0..lout {
                            let mut acc = b[o];
                            for c in 0..in_channels {
                                let wk = &w[(o * in_channels + c) * kernel..][..kernel];
                                for (j, wj) in wk.iter().enumerate() {
                                    let pos = (t * stride + j) as isize - pad as isize;
                                    if pos >= 0 && (pos as usize) < len {
                                        acc += wj * xs[c * len + pos as usize];
                                    }
                                }
                            }
                            os[o * lout + t] = acc;
                        }
                    }
                }
                Ok((ComplexTensor::new(batch, out_features, out)?, keep(x), Vec::new()))
            }
            LayerSpec::ComplexConv1dTransposed { in_channels, out_channels, kernel, stride } => {
                let len = x.features() / in_channels;
                let lout = len * stride;
                let pad = (kernel - 1) / 2;
                let (w, b) = self.params.split_at(in_channels * out_channels * kernel);
                let mut out = vec![C64::new(0.0, 0.0); batch * out_features];
                for s in 0..batch {
                    let xs = x.sample(s);
                    let os = &mut out[s * out_features..(s + 1) * out_features];
                    for o in 0..out_channels {
                        os[o * lout..(o + 1) * lout].iter_mut().for_each(|v| *v = b[o]);
                    }
                    for c in 0..in_channels {
                        for t in 0..len {
                            let xv = xs[c * len + t];
                            for o in 0..out_channels {
                                let wk = &w[(c * out_channels + o) * kernel..][..kernel];
                                for (j, wj) in wk.iter().enumerate() {
                                    let pos = (t * stride + j) as isize - pad as isize;
                                    if pos >= 0 && (pos as usize) < lout {
                                        os[o * lout + pos as usize] += wj * xv;
                                    }
                                }
                            }
                        }
                    }
                }
                Ok((ComplexTensor::new(batch, out_features, out)?, keep(x), Vec::new()))
            }
            LayerSpec::ComplexBatchNorm { channels } => self.batch_norm_forward(x, channels, mode, record),
            LayerSpec::Crelu => {
                let out = x.data().iter().map(|&z| crelu(z)).collect();
                Ok((ComplexTensor::new(batch, out_features, out)?, record.then(|| Cache::Crelu(x.clone())), Vec::new()))
            }
        }
    }

    fn batch_norm_forward(
        &self,
        x: &ComplexTensor,
        channels: usize,
        mode: Mode,
        record: bool,
    ) -> Result<(ComplexTensor, Option<Cache>, Vec<BnRunning>)> {
        let batch = x.batch();
        let features = x.features();
        let len = features / channels;
        if mode == Mode::Train && batch < 2 {
            return Err(invalid("batch normalization in training mode needs a batch of at least 2"));
        }
        let n = (batch * len) as f64;
        let mut out = vec![C64::new(0.0, 0.0); batch * features];
        let mut caches = Vec::with_capacity(channels);
        let mut stats = Vec::new();
        for ch in 0..channels {
            let gamma = self.gamma(ch);
            let beta = self.params[2 * channels + ch];
            let values: Vec<[f64; 2]> = (0..batch)
                .flat_map(|s| x.sample(s)[ch * len..(ch + 1) * len].iter().map(|z| [z.re, z.im]))
                .collect();
            let (mean, cov) = match mode {
                Mode::Train => {
                    let mut mean = [0.0; 2];
                    for v in &values {
                        mean[0] += v[0];
                        mean[1] += v[1];
                    }
                    mean[0] /= n;
                    mean[1] /= n;
                    let mut cov = [0.0; 3];
                    for v in &values {
                        let (a, b) = (v[0] - mean[0], v[1] - mean[1]);
                        cov[0] += a * a;
                        cov[1] += a * b;
                        cov[2] += b * b;
                    }
                    cov.iter_mut().for_each(|c| *c /= n);
                    stats.push(BnRunning { mean, cov });
                    (mean, cov)
                }
                Mode::Eval => (self.running[ch].mean, self.running[ch].cov),
            };
            let sym = Sym2 { a: cov[0] + BN_EPS, b: cov[1], d: cov[2] + BN_EPS };
            let eigen = sym.eigen();
            let whiten = eigen.apply(|l| 1.0 / l.sqrt());
            let centered: Vec<[f64; 2]> = values.iter().map(|v| [v[0] - mean[0], v[1] - mean[1]]).collect();
            let normalized: Vec<[f64; 2]> = centered.iter().map(|d| apply(&whiten, *d)).collect();
            for (idx, y) in normalized.iter().enumerate() {
                let (s, t) = (idx / len, idx % len);
                let o = apply(&gamma, *y);
                out[s * features + ch * len + t] = C64::new(o[0] + beta.re, o[1] + beta.im);
            }
            if record {
                caches.push(BnCache {
                    centered: if mode == Mode::Train { centered } else { Vec::new() },
                    whiten,
                    eigen: (mode == Mode::Train).then_some(eigen),
                    normalized,
                    len,
                });
            }
        }
        let cache = record.then_some(Cache::BatchNorm(caches));
        Ok((ComplexTensor::new(batch, features, out)?, cache, stats))
    }

    fn gamma(&self, ch: usize) -> Mat2 {
        let channels = self.running.len();
        let diag = self.params[ch];
        let off = self.params[channels + ch].re;
        [[diag.re, off], [off, diag.im]]
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(&mut self, cache: &Cache, g: &ComplexTensor) -> Result<ComplexTensor> {
        match (self.spec, cache) {
            (LayerSpec::ComplexDense { inputs, outputs }, Cache::Input(x)) => {
                let batch = x.batch();
                let mut gx = vec![C64::new(0.0, 0.0); batch * inputs];
                let (w, _) = self.params.split_at(inputs * outputs);
                let (gw, gb) = self.grads.split_at_mut(inputs * outputs);
                for s in 0..batch {
                    let xs = x.sample(s);
                    let gs = g.sample(s);
                    let gxs = &mut gx[s * inputs..(s + 1) * inputs];
                    for o in 0..outputs {
                        let go = gs[o];
                        gb[o] += go;
                        let row = &w[o * inputs..(o + 1) * inputs];
                        let grow = &mut gw[o * inputs..(o + 1) * inputs];
                        for i in 0..inputs {
                            grow[i] += go * xs[i].conj();
                            gxs[i] += row[i].conj() * go;
                        }
                    }
                }
                ComplexTensor::new(batch, inputs, gx)
            }
            (LayerSpec::ComplexConv1d { in_channels, out_channels, kernel, stride }, Cache::Input(x)) => {
                let batch = x.batch();
                let features = x.features();
                let len = features / in_channels;
                let lout = conv_out_len(len, kernel, stride);
                let pad = (kernel - 1) / 2;
                let nw = in_channels * out_channels * kernel;
                let (w, _) = self.params.split_at(nw);
                let (gw, gb) = self.grads.split_at_mut(nw);
                let mut gx = vec![C64::new(0.0, 0.0); batch * features];
                for s in 0..batch {
                    let xs = x.sample(s);
                    let gs = g.sample(s);
                    let gxs = &mut gx[s * features..(s + 1) * features];
                    for o in 0..out_channels {
                        for t in 0..lout {
                            let go = gs[o * lout + t];
                            gb[o] += go;
                            for c in 0..in_channels {
                                let base = (o * in_channels + c) * kernel;
                                for j in 0..kernel {
                                    let pos = (t * stride + j) as isize - pad as isize;
                                    if pos >= 0 && (pos as usize) < len {
                                        let idx = c * len + pos as usize;
                                        gw[base + j] += go * xs[idx].conj();
                                        gxs[idx] += w[base + j].conj() * go;
                                    }
                                }
                            }
                        }
                    }
                }
                ComplexTensor::new(batch, features, gx)
            }
            (LayerSpec::ComplexConv1dTransposed { in_channels, out_channels, kernel, stride }, Cache::Input(x)) => {
                let batch = x.batch();
                let features = x.features();
                let len = features / in_channels;
                let lout = len * stride;
                let pad = (kernel - 1) / 2;
                let nw = in_channels * out_channels * kernel;
                let (w, _) = self.params.split_at(nw);
                let (gw, gb) = self.grads.split_at_mut(nw);
                let mut gx = vec![C64::new(0.0, 0.0); batch * features];
                for s in 0..batch {
                    let xs = x.sample(s);
                    let gs = g.sample(s);
                    let gxs = &mut gx[s * features..(s + 1) * features];
                    for o in 0..out_channels {
                        gb[o] += gs[o * lout..(o + 1) * lout].iter().sum::<C64>();
                    }
                    for c in 0..in_channels {
                        for t in 0..len {
                            let xv = xs[c * len + t];
                            let mut acc = C64::new(0.0, 0.0);
                            for o in 0..out_channels {
                                let base = (c * out_channels + o) * kernel;
                                for j in 0..kernel {
                                    let pos = (t * stride + j) as isize - pad as isize;
                                    if pos >= 0 && (pos as usize) < lout {
                                        let go = gs[o * lout + pos as usize];
                                        gw[base + j] += go * xv.conj();
                                        acc += w[base + j].conj() * go;
                                    }
                                }
                            }
                            gxs[c * len + t] = acc;
                        }
                    }
                }
                ComplexTensor::new(batch, features, gx)
            }
            (LayerSpec::ComplexBatchNorm { channels }, Cache::BatchNorm(caches)) => {
                self.batch_norm_backward(caches, channels, g)
            }
            (LayerSpec::Crelu, Cache::Crelu(x)) => {
                let gx = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(z, gz)| {
                        C64::new(if z.re > 0.0 { gz.re } else { 0.0 }, if z.im > 0.0 { gz.im } else { 0.0 })
                    })
                    .collect();
                ComplexTensor::new(x.batch(), x.features(), gx)
            }
            _ => Err(invalid("backward cache does not belong to this layer")),
        }
    }

    fn batch_norm_backward(&mut self, caches: &[BnCache], channels: usize, g: &ComplexTensor) -> Result<ComplexTensor> {
        let batch = g.batch();
        let features = g.features();
        let mut gx = vec![C64::new(0.0, 0.0); batch * features];
        for (ch, cache) in caches.iter().enumerate() {
            let len = cache.len;
            let gamma = self.gamma(ch);
            let go: Vec<[f64; 2]> = (0..batch)
                .flat_map(|s| g.sample(s)[ch * len..(ch + 1) * len].iter().map(|z| [z.re, z.im]))
                .collect();
            let mut g_beta = [0.0; 2];
            let mut g_gamma = [[0.0; 2]; 2];
            for (gn, y) in go.iter().zip(&cache.normalized) {
                g_beta[0] += gn[0];
                g_beta[1] += gn[1];
                for i in 0..2 {
                    for j in 0..2 {
                        g_gamma[i][j] += gn[i] * y[j];
                    }
                }
            }
            self.grads[ch] += C64::new(g_gamma[0][0], g_gamma[1][1]);
            self.grads[channels + ch] += C64::new(g_gamma[0][1] + g_gamma[1][0], 0.0);
            self.grads[2 * channels + ch] += C64::new(g_beta[0], g_beta[1]);

            let gy: Vec<[f64; 2]> = go.iter().map(|gn| apply(&transpose(&gamma), *gn)).collect();
            let wt = transpose(&cache.whiten);
            let gx_ch: Vec<[f64; 2]> = match &cache.eigen {
                None => gy.iter().map(|v| apply(&wt, *v)).collect(),
                Some(eigen) => {
                    let n = gy.len() as f64;
                    let mut g_w = [[0.0; 2]; 2];
                    for (v, d) in gy.iter().zip(&cache.centered) {
                        for i in 0..2 {
                            for j in 0..2 {
                                g_w[i][j] += v[i] * d[j];
                            }
                        }
                    }
                    let g_c = eigen.inv_sqrt_adjoint(&g_w);
                    // C = (1/N) Σ d dᵀ, so ∂L/∂d_n = (g_C + g_Cᵀ) d_n / N
                    let g_cs = add(&g_c, &transpose(&g_c));
                    let mut gd: Vec<[f64; 2]> = gy
                        .iter()
                        .zip(&cache.centered)
                        .map(|(v, d)| {
                            let a = apply(&wt, *v);
                            let b = apply(&g_cs, *d);
                            [a[0] + b[0] / n, a[1] + b[1] / n]
                        })
                        .collect();
                    let mut mean = [0.0; 2];
                    for v in &gd {
                        mean[0] += v[0] / n;
                        mean[1] += v[1] / n;
                    }
                    for v in gd.iter_mut() {
                        v[0] -= mean[0];
                        v[1] -= mean[1];
                    }
                    gd
                }
            };
            for (idx, v) in gx_ch.iter().enumerate() {
                let (s, t) = (idx / len, idx % len);
                gx[s * features + ch * len + t] = C64::new(v[0], v[1]);
            }
        }
        ComplexTensor::new(batch, features, gx)
    }
}
