//! The four detectors behind one batch-scoring interface.

use crate::classical::AnmfDetector;
use crate::clx::ComplexVector;
use crate::cvae::CvaeModel;
use crate::error::Result;
use crate::rng::StreamRng;
use crate::scores::{score_kl, score_maha, score_mse, EmpiricalNullKl, EmpiricalNullMaha, LatentDraw, ScoreKind};
use crate::sigmodel::{ClutterSampler, Scenario};

/// A scoring rule for test cells. `rngs[i]` is the private stream of cell
/// `i` for any randomness the detector needs (latent draws, secondary
/// data); larger scores mean "more likely H1".
pub trait Detector: Sync {
    fn kind(&self) -> ScoreKind;

    fn id(&self) -> String {
        self.kind().name().to_string()
    }

    fn score_batch(&self, xs: &[ComplexVector], doppler: usize, rngs: &mut [StreamRng]) -> Result<Vec<f64>>;
}

/// Reconstruction error through the posterior mean.
pub struct MseDetector {
    pub model: CvaeModel,
}

impl Detector for MseDetector {
    fn kind(&self) -> ScoreKind {
        ScoreKind::CvaeMse
    }

    fn score_batch(&self, xs: &[ComplexVector], _doppler: usize, _rngs: &mut [StreamRng]) -> Result<Vec<f64>> {
        score_mse(&self.model, xs)
    }
}

/// KL divergence of the encoder posterior to the empirical clutter null.
pub struct KlDetector {
    pub model: CvaeModel,
    pub null: EmpiricalNullKl,
}

impl Detector for KlDetector {
    fn kind(&self) -> ScoreKind {
        ScoreKind::Kl
    }

    fn score_batch(&self, xs: &[ComplexVector], _doppler: usize, _rngs: &mut [StreamRng]) -> Result<Vec<f64>> {
        score_kl(&self.model, &self.null, xs)
    }
}

/// Hermitian Mahalanobis distance of a latent code.
pub struct MahaDetector {
    pub model: CvaeModel,
    pub null: EmpiricalNullMaha,
    pub draw: LatentDraw,
}

impl Detector for MahaDetector {
    fn kind(&self) -> ScoreKind {
        ScoreKind::Mahalanobis
    }

    fn score_batch(&self, xs: &[ComplexVector], _doppler: usize, rngs: &mut [StreamRng]) -> Result<Vec<f64>> {
        score_maha(&self.model, &self.null, xs, self.draw, rngs)
    }
}

/// ANMF with fresh secondary data from the scenario's clutter law.
pub struct AnmfFpDetector {
    pub config: AnmfDetector,
    sampler: ClutterSampler,
}

impl AnmfFpDetector {
    pub fn new(config: AnmfDetector, scenario: &Scenario) -> Result<Self> {
        Ok(Self { config, sampler: ClutterSampler::new(scenario)? })
    }
}

impl Detector for AnmfFpDetector {
    fn kind(&self) -> ScoreKind {
        ScoreKind::AnmfFp
    }

    fn score_batch(&self, xs: &[ComplexVector], doppler: usize, rngs: &mut [StreamRng]) -> Result<Vec<f64>> {
        xs.iter()
            .zip(rngs.iter_mut())
            .map(|(x, rng)| self.config.statistic(x, doppler, &self.sampler, rng))
            .collect()
    }
}
