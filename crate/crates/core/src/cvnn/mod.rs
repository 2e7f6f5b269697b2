//! A small complex-valued neural-network engine.
//!
//! Networks are plain sequences of [`Layer`]s. A training-mode forward
//! pass returns a [`Tape`] of per-layer caches; [`Network::backward`]
//! consumes it, accumulates parameter gradients and returns the gradient
//! with respect to the network input. Complex parameters are optimized as
//! pairs of reals by [`adam_step`].

mod adam;
pub mod checkpoint;
mod layer;
mod whiten;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clx::C64;
use crate::error::{invalid, Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{crelu, BnRunning, Layer, LayerSpec, BN_EPS};
pub(crate) use layer::Cache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Batch statistics, running-stat updates, caches for backward.
    Train,
    /// Running statistics; no state changes.
    Eval,
}

/// A batch of complex feature vectors, shape `[batch, features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: [usize; 2],
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(batch: usize, features: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != batch * features {
            return Err(Error::ShapeMismatch {
                expected: format!("{batch}x{features} = {} values", batch * features),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self { shape: [batch, features], data })
    }

    pub fn zeros(batch: usize, features: usize) -> Self {
        Self { shape: [batch, features], data: vec![C64::new(0.0, 0.0); batch * features] }
    }

    /// Stacks equally long samples.
    pub fn from_samples<S: AsRef<[C64]>>(samples: &[S]) -> Result<Self> {
        let features = samples.first().map(|s| s.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(samples.len() * features);
        for s in samples {
            let s = s.as_ref();
            if s.len() != features {
                return Err(Error::ShapeMismatch {
                    expected: format!("{features} features"),
                    got: format!("{}", s.len()),
                });
            }
            data.extend_from_slice(s);
        }
        Self::new(samples.len(), features, data)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn features(&self) -> usize {
        self.shape[1]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[C64] {
        &self.data[i * self.shape[1]..(i + 1) * self.shape[1]]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [C64] {
        let f = self.shape[1];
        &mut self.data[i * f..(i + 1) * f]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Caches recorded by one training-mode forward pass.
#[derive(Debug)]
pub struct Tape {
    caches: Vec<Cache>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.caches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], input_features: usize, rng: &mut R) -> Result<Self> {
        let mut features = input_features;
        for s in specs {
            features = s.output_features(features)?;
        }
        let layers = specs.iter().map(|s| Layer::new(*s, rng)).collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    pub fn output_features(&self, input_features: usize) -> Result<usize> {
        self.layers.iter().try_fold(input_features, |f, l| l.spec().output_features(f))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params().len()).sum()
    }

    /// Forward pass recording a tape. Training mode updates batch-norm
    /// running statistics.
    pub fn forward(&mut self, x: &ComplexTensor, mode: Mode) -> Result<(ComplexTensor, Tape)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in self.layers.iter_mut() {
            let (out, cache) = layer.forward(&cur, mode)?;
            caches.push(cache);
            cur = out;
        }
        Ok((cur, Tape { caches }))
    }

    /// Inference with running statistics; leaves the network untouched.
    pub fn infer(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.eval(&cur)?;
        }
        Ok(cur)
    }

    /// Accumulates parameter gradients for `grad_out = ∂L/∂output` and
    /// returns `∂L/∂input`.
    pub fn backward(&mut self, tape: Tape, grad_out: &ComplexTensor) -> Result<ComplexTensor> {
        if tape.caches.len() != self.layers.len() {
            return Err(invalid(format!(
                "tape has {} entries for a network of {} layers",
                tape.caches.len(),
                self.layers.len()
            )));
        }
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter_mut().zip(tape.caches.iter()).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }
}

#[cfg(test)]
mod tests;
