//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three operations are exported, each returning a JSON string:
//! a single-profile Doppler scan, a small Monte-Carlo ANMF detection
//! curve, and the threshold / confidence-interval arithmetic used by the
//! benchmark. The computations live in plain Rust functions so they can be
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use radar_ood::bench::{evaluate, wilson_interval, AnmfFpDetector, SweepConfig, Z95};
use radar_ood::classical::{anmf_with, tyler, AnmfDetector, EstimatorKind};
use radar_ood::clx::{cholesky, dot_conj, ComplexVector};
use radar_ood::rng::{domain, Streams};
use radar_ood::scores::order_index;
use radar_ood::sigmodel::{add_target, steering_vector, ClutterKind, ClutterSampler, Scenario};
use radar_ood::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SCAN_DOMAIN: u64 = domain("web/scan");

fn scenario(m: usize, rho: f64, cnr_db: f64, compound: bool, mu: f64, seed: u64) -> Result<Scenario> {
    let sc = Scenario {
        m,
        rho,
        clutter_kind: if compound { ClutterKind::CompoundGaussian } else { ClutterKind::Gaussian },
        texture_shape: mu,
        cnr_db,
        seed,
        ..Scenario::default()
    };
    sc.validate()?;
    Ok(sc)
}

#[derive(Debug, Serialize)]
pub struct Scan {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Non-adaptive periodogram `|pᴴx|²/m` per Doppler bin.
    pub periodogram: Vec<f64>,
    /// ANMF statistic per Doppler bin against one Tyler estimate.
    pub anmf: Vec<f64>,
    pub tyler_iterations: usize,
}

/// One cell of clutter (plus a target at `bin` when `snr_db` is finite),
/// scanned over every Doppler bin.
pub fn scan(sc: &Scenario, snr_db: f64, bin: usize) -> Result<Scan> {
    let sampler = ClutterSampler::new(sc)?;
    let streams = Streams::new(sc.seed);
    let mut rng = streams.child(SCAN_DOMAIN, 0);
    let mut x = sampler.draw(&mut rng);
    if snr_db.is_finite() {
        add_target(&mut x, snr_db, &steering_vector(sc.m, bin)?, &mut rng);
    }
    let mut sec_rng = streams.child(SCAN_DOMAIN, 1);
    let secondary: Vec<ComplexVector> = (0..2 * sc.m).map(|_| sampler.draw(&mut sec_rng)).collect();
    let det = AnmfDetector::default();
    let est = tyler(&secondary, det.tol, det.max_iter)?;
    let chol = cholesky(&est.sigma_hat)?;

    let mut periodogram = Vec::with_capacity(sc.m);
    let mut anmf = Vec::with_capacity(sc.m);
    for d in 0..sc.m {
        let p = steering_vector(sc.m, d)?;
        periodogram.push(dot_conj(&p, &x).norm_sqr() / sc.m as f64);
        anmf.push(anmf_with(&chol, &x, &p)?);
    }
    Ok(Scan {
        re: x.iter().map(|c| c.re).collect(),
        im: x.iter().map(|c| c.im).collect(),
        periodogram,
        anmf,
        tyler_iterations: est.iterations,
    })
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub pd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Serialize)]
pub struct DetectionCurve {
    pub threshold: f64,
    pub order_index: usize,
    pub pfa: f64,
    pub pfa_ci: (f64, f64),
    pub points: Vec<CurvePoint>,
}

/// Calibrates the ANMF detector and sweeps SNR at one Doppler bin.
pub fn detection_curve(
    sc: &Scenario,
    bin: usize,
    snr_db: &[f64],
    trials: usize,
    n_cal: usize,
    pfa: f64,
    scm: bool,
) -> Result<DetectionCurve> {
    let cfg = SweepConfig {
        scenario: sc.clone(),
        snr_db: snr_db.to_vec(),
        doppler_bins: vec![bin],
        trials,
        pfa,
        n_cal,
        h0_trials: n_cal,
        seed: sc.seed,
        crn: false,
    };
    cfg.validate()?;
    let anmf = AnmfDetector { estimator: if scm { EstimatorKind::Scm } else { EstimatorKind::Tyler }, ..Default::default() };
    let detector = AnmfFpDetector::new(anmf, sc)?;
    let report = evaluate(&cfg, &detector)?;
    Ok(DetectionCurve {
        threshold: report.threshold.value,
        order_index: report.threshold.order_index,
        pfa: report.pfa_check.rate,
        pfa_ci: (report.pfa_check.ci_lo, report.pfa_check.ci_hi),
        points: report
            .points
            .iter()
            .map(|p| CurvePoint { snr_db: p.snr_db, pd: p.pd, ci_lo: p.ci_lo, ci_hi: p.ci_hi })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct ThresholdInfo {
    /// 1-based order statistic used as the threshold.
    pub order_index: usize,
    pub expected_exceedances: f64,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn threshold_info(n_cal: usize, alpha: f64, hits: usize, trials: usize) -> Result<ThresholdInfo> {
    if n_cal == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("need n_cal > 0 and alpha in (0, 1), got {n_cal} and {alpha}")));
    }
    if trials == 0 || hits > trials {
        return Err(Error::InvalidArgument(format!("need 0 <= hits <= trials and trials > 0, got {hits}/{trials}")));
    }
    let (ci_lo, ci_hi) = wilson_interval(hits, trials, Z95);
    Ok(ThresholdInfo {
        order_index: order_index(n_cal, alpha),
        expected_exceedances: n_cal as f64 * alpha,
        rate: hits as f64 / trials as f64,
        ci_lo,
        ci_hi,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = dopplerScan)]
#[allow(clippy::too_many_arguments)]
pub fn doppler_scan_js(
    m: usize,
    rho: f64,
    cnr_db: f64,
    compound: bool,
    mu: f64,
    snr_db: f64,
    bin: usize,
    seed: u64,
) -> std::result::Result<String, JsError> {
    to_js(scenario(m, rho, cnr_db, compound, mu, seed).and_then(|sc| scan(&sc, snr_db, bin)))
}

#[wasm_bindgen(js_name = detectionCurve)]
#[allow(clippy::too_many_arguments)]
pub fn detection_curve_js(
    m: usize,
    rho: f64,
    cnr_db: f64,
    compound: bool,
    mu: f64,
    bin: usize,
    snr_db: Vec<f64>,
    trials: usize,
    n_cal: usize,
    pfa: f64,
    scm: bool,
    seed: u64,
) -> std::result::Result<String, JsError> {
    to_js(
        scenario(m, rho, cnr_db, compound, mu, seed)
            .and_then(|sc| detection_curve(&sc, bin, &snr_db, trials, n_cal, pfa, scm)),
    )
}

#[wasm_bindgen(js_name = thresholdInfo)]
pub fn threshold_info_js(n_cal: usize, alpha: f64, hits: usize, trials: usize) -> std::result::Result<String, JsError> {
    to_js(threshold_info(n_cal, alpha, hits, trials))
}
