use serde::{Deserialize, Serialize};

use crate::clx::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter buffer. The real and imaginary
/// parts of each complex slot are tracked as independent reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    m: Vec<C64>,
    v: Vec<C64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![C64::new(0.0, 0.0); len], v: vec![C64::new(0.0, 0.0); len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

fn update(theta: f64, g: f64, m: &mut f64, v: &mut f64, cfg: &AdamConfig, c1: f64, c2: f64) -> f64 {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    theta - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)
}

/// One bias-corrected Adam step. Fails without touching `params` when a
/// gradient is not finite.
pub fn adam_step(params: &mut [C64], grads: &[C64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradients", params.len()),
            got: format!("{}", grads.len()),
        });
    }
    if state.m.len() != params.len() {
        *state = AdamState::new(params.len());
    }
    if let Some(i) = grads.iter().position(|g| !g.re.is_finite() || !g.im.is_finite()) {
        return Err(Error::Divergence(format!("non-finite gradient at parameter {i}")));
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        let re = update(p.re, g.re, &mut m.re, &mut v.re, cfg, c1, c2);
        let im = update(p.im, g.im, &mut m.im, &mut v.im, cfg, c1, c2);
        *p = C64::new(re, im);
    }
    Ok(())
}
