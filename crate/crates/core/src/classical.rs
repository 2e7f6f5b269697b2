//! Adaptive normalized matched filter with sample-covariance or Tyler
//! fixed-point covariance estimates from target-free secondary data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clx::{cholesky, dot_conj, norm_sqr, Cholesky, ComplexMatrix, ComplexVector, HermitianMatrix, C64};
use crate::error::{invalid, Error, Result};
use crate::sigmodel::{steering_vector, ClutterSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Scm,
    #[default]
    Tyler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub sigma_hat: HermitianMatrix,
    pub kind: EstimatorKind,
    pub iterations: usize,
    /// Relative Frobenius change of the last iteration (0 for SCM).
    pub residual: f64,
}

fn check_data(data: &[ComplexVector], min: usize) -> Result<usize> {
    let m = data.first().map(Vec::len).ok_or_else(|| invalid("no secondary data"))?;
    if m == 0 {
        return Err(invalid("secondary samples must be non-empty"));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, found: bad.len() });
    }
    if data.len() < m + min {
        return Err(invalid(format!("{} secondary samples for dimension {m}; need at least {}", data.len(), m + min)));
    }
    Ok(m)
}

/// Adds `w·x·xᴴ` to the upper triangle of `acc`.
fn add_outer_upper(acc: &mut ComplexMatrix, x: &[C64], w: f64) {
    let m = x.len();
    for i in 0..m {
        let xi = x[i] * w;
        for j in i..m {
            acc[(i, j)] += xi * x[j].conj();
        }
    }
}

fn mirror_upper(mut a: ComplexMatrix) -> Result<HermitianMatrix> {
    let m = a.rows();
    for i in 0..m {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..m {
            a[(j, i)] = a[(i, j)].conj();
        }
    }
    HermitianMatrix::new(a)
}

/// `Σ̂ = (1/K)·Σ x_k·x_kᴴ`; fails when the result is singular.
pub fn scm(data: &[ComplexVector]) -> Result<CovEstimate> {
    let m = check_data(data, 0)?;
    let mut acc = ComplexMatrix::zeros(m, m);
    let w = 1.0 / data.len() as f64;
    for x in data {
        add_outer_upper(&mut acc, x, w);
    }
    let sigma_hat = mirror_upper(acc)?;
    cholesky(&sigma_hat)?;
    Ok(CovEstimate { sigma_hat, kind: EstimatorKind::Scm, iterations: 0, residual: 0.0 })
}

/// Tyler's fixed point `Σ ← (m/K)·Σ x_k·x_kᴴ / (x_kᴴ Σ⁻¹ x_k)`, started
/// from the identity and normalized to `trace(Σ) = m` after each step.
/// Stops once the relative Frobenius change is at most `tol`.
pub fn tyler(data: &[ComplexVector], tol: f64, max_iter: usize) -> Result<CovEstimate> {
    let m = check_data(data, 1)?;
    if data.iter().any(|x| norm_sqr(x) == 0.0) {
        return Err(invalid("Tyler's estimator needs non-zero samples"));
    }
    let mut sigma = HermitianMatrix::identity(m);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let chol = cholesky(&sigma)?;
        let mut acc = ComplexMatrix::zeros(m, m);
        for x in data {
            add_outer_upper(&mut acc, x, 1.0 / chol.quad_form(x));
        }
        let next = mirror_upper(acc)?;
        let next = next.scale(m as f64 / next.trace_re());
        residual = next.as_matrix().sub(sigma.as_matrix()).frobenius_norm() / sigma.as_matrix().frobenius_norm();
        sigma = next;
        if residual <= tol {
            return Ok(CovEstimate { sigma_hat: sigma, kind: EstimatorKind::Tyler, iterations: it, residual });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual, last: Box::new(sigma) })
}

/// `Λ = |pᴴΣ̂⁻¹x|² / ((pᴴΣ̂⁻¹p)(xᴴΣ̂⁻¹x))`, in `[0, 1]`.
pub fn anmf(x: &[C64], p: &[C64], sigma_hat: &HermitianMatrix) -> Result<f64> {
    anmf_with(&cholesky(sigma_hat)?, x, p)
}

/// [`anmf`] with a precomputed factorization.
pub fn anmf_with(chol: &Cholesky, x: &[C64], p: &[C64]) -> Result<f64> {
    let m = chol.dim();
    for v in [x, p] {
        if v.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: v.len() });
        }
    }
    if norm_sqr(x) == 0.0 || norm_sqr(p) == 0.0 {
        return Err(invalid("the ANMF statistic needs non-zero x and p"));
    }
    let a = chol.forward_solve(p);
    let b = chol.forward_solve(x);
    let num = dot_conj(&a, &b).norm_sqr();
    Ok((num / (norm_sqr(&a) * norm_sqr(&b))).clamp(0.0, 1.0))
}

/// Per-trial adaptive detector: draws fresh secondary data from the
/// clutter law, estimates the covariance and evaluates the ANMF statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnmfDetector {
    pub estimator: EstimatorKind,
    /// Secondary samples per trial; `0` means `2·m`.
    pub secondary: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AnmfDetector {
    fn default() -> Self {
        Self { estimator: EstimatorKind::Tyler, secondary: 0, tol: 1e-8, max_iter: 100 }
    }
}

impl AnmfDetector {
    pub fn secondary_count(&self, m: usize) -> usize {
        if self.secondary == 0 {
            2 * m
        } else {
            self.secondary
        }
    }

    pub fn estimate(&self, data: &[ComplexVector]) -> Result<CovEstimate> {
        match self.estimator {
            EstimatorKind::Scm => scm(data),
            EstimatorKind::Tyler => tyler(data, self.tol, self.max_iter),
        }
    }

    /// Statistic for the cell `x` against Doppler bin `doppler`, with
    /// secondary data drawn from `sampler` using `rng`.
    pub fn statistic<R: Rng + ?Sized>(&self, x: &[C64], doppler: usize, sampler: &ClutterSampler, rng: &mut R) -> Result<f64> {
        let m = sampler.dim();
        let data: Vec<ComplexVector> = (0..self.secondary_count(m)).map(|_| sampler.draw(rng)).collect();
        let est = self.estimate(&data)?;
        anmf(x, &steering_vector(m, doppler)?, &est.sigma_hat)
    }
}
