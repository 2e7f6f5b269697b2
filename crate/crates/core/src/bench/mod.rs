//! Monte-Carlo evaluation at a fixed false-alarm rate.
//!
//! A sweep calibrates a detector on an H0 set drawn from the scenario
//! template, then injects targets at every `(snr, doppler)` grid point and
//! counts threshold exceedances. Every cell owns three child streams
//! (clutter, target phase, detector randomness) keyed by its index, so the
//! counts do not depend on the thread count or the chunking.

mod detectors;
mod report;

#[cfg(test)]
mod tests;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clx::ComplexVector;
use crate::error::{invalid, Error, Result};
use crate::rng::{domain, StreamRng, Streams};
use crate::scores::{calibrate, Threshold};
use crate::serde_db::format_db;
use crate::sigmodel::{add_target, steering_vector, ClutterSampler, Scenario};

pub use detectors::{AnmfFpDetector, Detector, KlDetector, MahaDetector, MseDetector};
pub use report::{
    compare, compare_tables, read_csv, report_views, views_of, wilson_interval, write_csv, write_ranking_csv, Curve, DetectorReport, Estimate, GridPoint,
    Manifest, ManifestEntry, RankEntry, RankRow, View, Views, CSV_HEADER, Z95,
};

const CAL_DOMAIN: u64 = domain("bench/calibration");
const H1_DOMAIN: u64 = domain("bench/h1");
const H0_DOMAIN: u64 = domain("bench/h0");
const CLUTTER: u64 = domain("bench/clutter");
const TARGET: u64 = domain("bench/target");
const DETECTOR: u64 = domain("bench/detector");

/// Cells handed to a detector in one call.
const CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Clutter law and dimension; its `snr_db` and `doppler_bin` are
    /// ignored except that calibration cells use `doppler_bin`.
    pub scenario: Scenario,
    #[serde(with = "crate::serde_db::vec")]
    pub snr_db: Vec<f64>,
    /// Empty means every bin `0..m`.
    pub doppler_bins: Vec<usize>,
    pub trials: usize,
    pub pfa: f64,
    pub n_cal: usize,
    /// Size of the held-out H0 block used for the empirical Pfa check.
    pub h0_trials: usize,
    pub seed: u64,
    /// Common random numbers: every detector sees the same H1 clutter.
    pub crn: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            doppler_bins: Vec::new(),
            trials: 2000,
            pfa: 1e-2,
            n_cal: 5000,
            h0_trials: 10_000,
            seed: 0,
            crn: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials < 100 {
            return Err(invalid(format!("trials per grid point must be >= 100, got {}", self.trials)));
        }
        if !(self.pfa > 0.0 && self.pfa < 0.5) {
            return Err(invalid(format!("target pfa must lie in (0, 0.5), got {}", self.pfa)));
        }
        if self.n_cal == 0 {
            return Err(invalid("calibration set size must be positive"));
        }
        if self.snr_db.is_empty() {
            return Err(invalid("SNR grid is empty"));
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::INFINITY) {
            return Err(invalid(format!("invalid SNR grid value {s}")));
        }
        for (i, s) in self.snr_db.iter().enumerate() {
            if self.snr_db[..i].iter().any(|t| t.to_bits() == s.to_bits()) {
                return Err(invalid(format!("SNR {} listed twice", format_db(*s))));
            }
        }
        let m = self.scenario.m;
        for (i, &b) in self.doppler_bins.iter().enumerate() {
            if b >= m {
                return Err(invalid(format!("doppler bin {b} outside [0, {m})")));
            }
            if self.doppler_bins[..i].contains(&b) {
                return Err(invalid(format!("doppler bin {b} listed twice")));
            }
        }
        Ok(())
    }

    /// The Doppler bins actually swept.
    pub fn bins(&self) -> Vec<usize> {
        if self.doppler_bins.is_empty() {
            (0..self.scenario.m).collect()
        } else {
            self.doppler_bins.clone()
        }
    }
}

/// Seeds behind one block of cells.
#[derive(Clone, Copy)]
struct Block {
    clutter: Streams,
    detector: Streams,
}

impl Block {
    fn cell(&self, index: usize) -> (StreamRng, StreamRng, StreamRng) {
        let i = index as u64;
        (self.clutter.child(CLUTTER, i), self.clutter.child(TARGET, i), self.detector.child(DETECTOR, i))
    }
}

/// Scores `n` cells at one Doppler bin; `target` adds the H1 component.
fn score_cells(
    detector: &dyn Detector,
    sampler: &ClutterSampler,
    block: Block,
    n: usize,
    doppler: usize,
    target: Option<(f64, &[crate::clx::C64])>,
) -> Result<Vec<f64>> {
    let run_chunk = |c: usize| -> Result<Vec<f64>> {
        let range = c * CHUNK..((c + 1) * CHUNK).min(n);
        let mut xs: Vec<ComplexVector> = Vec::with_capacity(range.len());
        let mut rngs = Vec::with_capacity(range.len());
        for t in range {
            let (mut rc, mut rt, rd) = block.cell(t);
            let mut x = sampler.draw(&mut rc);
            if let Some((snr, p)) = target {
                add_target(&mut x, snr, p, &mut rt);
            }
            xs.push(x);
            rngs.push(rd);
        }
        let scores = detector.score_batch(&xs, doppler, &mut rngs)?;
        if scores.len() != xs.len() {
            return Err(invalid(format!("detector returned {} scores for {} cells", scores.len(), xs.len())));
        }
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(Error::Divergence(format!("score of cell {} is NaN", c * CHUNK + i)));
        }
        Ok(scores)
    };
    let chunks = n.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<f64>> = (0..chunks).into_par_iter().map(run_chunk).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<f64>> = (0..chunks).map(run_chunk).collect::<Result<_>>()?;
    Ok(parts.concat())
}

fn with_context(err: Error, ctx: impl FnOnce() -> String) -> Error {
    match err {
        Error::Divergence(msg) => Error::Divergence(format!("{}: {msg}", ctx())),
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{}: {msg}", ctx())),
        other => other,
    }
}

fn detector_streams(root: Streams, dom: u64, detector: &dyn Detector) -> Streams {
    root.fork(dom, domain(&detector.id()))
}

/// Scores of the detector on the `n_cal` calibration cells.
pub fn calibration_scores(cfg: &SweepConfig, detector: &dyn Detector) -> Result<Vec<f64>> {
    cfg.validate()?;
    let sampler = ClutterSampler::new(&cfg.scenario)?;
    let root = Streams::new(cfg.seed);
    let block = Block { clutter: root.fork(CAL_DOMAIN, 0), detector: detector_streams(root, CAL_DOMAIN, detector) };
    score_cells(detector, &sampler, block, cfg.n_cal, cfg.scenario.doppler_bin, None)
        .map_err(|e| with_context(e, || format!("{} calibration", detector.id())))
}

/// Threshold at `cfg.pfa` from H0 cells shared by all detectors.
pub fn calibrate_detector(cfg: &SweepConfig, detector: &dyn Detector) -> Result<Threshold> {
    calibrate(&calibration_scores(cfg, detector)?, cfg.pfa, detector.kind())
}

/// False alarms over `n` fresh H0 cells, cycling through the swept bins.
pub fn empirical_pfa(cfg: &SweepConfig, detector: &dyn Detector, threshold: &Threshold, n: usize) -> Result<Estimate> {
    cfg.validate()?;
    let sampler = ClutterSampler::new(&cfg.scenario)?;
    let root = Streams::new(cfg.seed);
    let bins = cfg.bins();
    let mut hits = 0;
    for (j, &b) in bins.iter().enumerate() {
        let count = (n + bins.len() - 1 - j) / bins.len();
        if count == 0 {
            continue;
        }
        let block = Block {
            clutter: root.fork(H0_DOMAIN, j as u64),
            detector: detector_streams(root.fork(H0_DOMAIN, j as u64), DETECTOR, detector),
        };
        let scores = score_cells(detector, &sampler, block, count, b, None)
            .map_err(|e| with_context(e, || format!("{} H0 block, doppler {b}", detector.id())))?;
        hits += scores.iter().filter(|&&s| s > threshold.value).count();
    }
    Ok(Estimate::new(hits, n))
}

/// Pd over the `snr × doppler` grid plus the held-out Pfa check.
pub fn run_sweep(cfg: &SweepConfig, detector: &dyn Detector, threshold: &Threshold) -> Result<DetectorReport> {
    cfg.validate()?;
    if threshold.kind != detector.kind() {
        return Err(invalid(format!("threshold is for {}, detector is {}", threshold.kind, detector.kind())));
    }
    let sampler = ClutterSampler::new(&cfg.scenario)?;
    let root = Streams::new(cfg.seed);
    let h1_root = if cfg.crn { root } else { detector_streams(root, H1_DOMAIN, detector) };
    let bins = cfg.bins();
    let steering: Vec<ComplexVector> =
        bins.iter().map(|&b| steering_vector(cfg.scenario.m, b)).collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(cfg.snr_db.len() * bins.len());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        for (bi, &b) in bins.iter().enumerate() {
            let family = h1_root.fork(H1_DOMAIN, (si * bins.len() + bi) as u64);
            let block = Block { clutter: family, detector: detector_streams(family, DETECTOR, detector) };
            let scores = score_cells(detector, &sampler, block, cfg.trials, b, Some((snr, &steering[bi])))
                .map_err(|e| {
                    with_context(e, || format!("{} at snr {} dB, doppler {b}", detector.id(), format_db(snr)))
                })?;
            let det = scores.iter().filter(|&&s| s > threshold.value).count();
            points.push(GridPoint::new(snr, b, det, cfg.trials));
        }
        log::info!("{}: snr {} dB done", detector.id(), format_db(snr));
    }
    let pfa_check = empirical_pfa(cfg, detector, threshold, cfg.h0_trials.max(1))?;
    let mut report = DetectorReport {
        detector: detector.id(),
        kind: detector.kind(),
        threshold: threshold.clone(),
        points,
        pfa_check,
        views: None,
    };
    report.views = report_views(&report).ok();
    Ok(report)
}

/// Calibrates and sweeps in one call.
pub fn evaluate(cfg: &SweepConfig, detector: &dyn Detector) -> Result<DetectorReport> {
    let threshold = calibrate_detector(cfg, detector)?;
    run_sweep(cfg, detector, &threshold)
}
