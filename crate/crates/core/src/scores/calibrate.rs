//! Percentile thresholds and the calibration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EmpiricalNullKl, EmpiricalNullMaha, LatentDraw};
use crate::classical::AnmfDetector;
use crate::error::{invalid, Error, Result};
use crate::sigmodel::{Label, Scenario};

pub const CALIBRATION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    CvaeMse,
    Kl,
    Mahalanobis,
    AnmfFp,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [ScoreKind::CvaeMse, ScoreKind::Kl, ScoreKind::Mahalanobis, ScoreKind::AnmfFp];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::CvaeMse => "cvae_mse",
            ScoreKind::Kl => "kl",
            ScoreKind::Mahalanobis => "mahalanobis",
            ScoreKind::AnmfFp => "anmf_fp",
        }
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown score kind {s:?} (expected cvae_mse, kl, mahalanobis or anmf_fp)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub target_pfa: f64,
    pub n_cal: usize,
    /// 1-based order statistic used as the threshold.
    pub order_index: usize,
    pub kind: ScoreKind,
}

impl Threshold {
    /// Fraction of `scores` strictly above the threshold.
    pub fn exceedance(&self, scores: &[f64]) -> f64 {
        scores.iter().filter(|&&s| s > self.value).count() as f64 / scores.len().max(1) as f64
    }
}

/// `k = ⌈N·(1−α)⌉`, guarding against rounding just above an integer.
pub fn order_index(n: usize, alpha: f64) -> usize {
    let x = n as f64 * (1.0 - alpha);
    ((x - 1e-9 * x.max(1.0)).ceil() as usize).clamp(1, n)
}

/// Sets `λ` to the `⌈N·(1−α)⌉`-th smallest calibration score.
pub fn calibrate(scores: &[f64], alpha: f64, kind: ScoreKind) -> Result<Threshold> {
    if scores.is_empty() {
        return Err(invalid("cannot calibrate on an empty score set"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("target false-alarm rate must lie in (0, 1), got {alpha}")));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Divergence(format!("calibration score {i} is not finite")));
    }
    let n = scores.len();
    if (n as f64) * alpha < 50.0 {
        log::warn!(
            "calibrating {kind} with {n} scores at alpha = {alpha}: only {:.1} expected exceedances (50 recommended)",
            n as f64 * alpha
        );
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = order_index(n, alpha);
    Ok(Threshold { value: sorted[k - 1], target_pfa: alpha, n_cal: n, order_index: k, kind })
}

/// `H1` iff `score > λ`.
pub fn decide(score: f64, threshold: &Threshold) -> Label {
    if score > threshold.value {
        Label::H1
    } else {
        Label::H0
    }
}

/// Fitted null model attached to a latent score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullModel {
    Kl(EmpiricalNullKl),
    Mahalanobis(EmpiricalNullMaha),
}

/// Contents of a calibration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub version: u32,
    pub threshold: Threshold,
    pub null: Option<NullModel>,
    pub latent: LatentDraw,
    pub n_fit: usize,
    pub fit_seed: u64,
    pub calibration_seed: u64,
    /// Clutter law of the fit and calibration sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    /// Checkpoint behind a learned score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Settings of the adaptive detector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anmf: Option<AnmfDetector>,
}

impl CalibrationRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rec: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if rec.version != CALIBRATION_VERSION {
            return Err(Error::MalformedHeader(format!("unsupported calibration version {}", rec.version)));
        }
        Ok(rec)
    }
}
