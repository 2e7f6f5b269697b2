use super::*;
use crate::scores::ScoreKind;

/// `‖x‖²`, posing as some score kind.
struct Energy {
    id: &'static str,
}

impl Detector for Energy {
    fn kind(&self) -> ScoreKind {
        ScoreKind::CvaeMse
    }

    fn id(&self) -> String {
        self.id.to_string()
    }

    fn score_batch(&self, xs: &[ComplexVector], _doppler: usize, _rngs: &mut [StreamRng]) -> Result<Vec<f64>> {
        Ok(xs.iter().map(|x| x.iter().map(|v| v.norm_sqr()).sum()).collect())
    }
}

struct Broken;

impl Detector for Broken {
    fn kind(&self) -> ScoreKind {
        ScoreKind::Kl
    }

    fn score_batch(&self, xs: &[ComplexVector], doppler: usize, _rngs: &mut [StreamRng]) -> Result<Vec<f64>> {
        if doppler == 1 {
            Err(Error::Divergence("exploded".into()))
        } else {
            Ok(vec![0.0; xs.len()])
        }
    }
}

fn small_cfg() -> SweepConfig {
    SweepConfig {
        scenario: Scenario { m: 4, ..Scenario::default() },
        snr_db: vec![0.0, 10.0, 20.0],
        trials: 400,
        n_cal: 5000,
        h0_trials: 4000,
        seed: 11,
        ..SweepConfig::default()
    }
}

fn energy() -> Energy {
    Energy { id: "energy" }
}

#[test]
fn config_validation() {
    assert!(SweepConfig::default().validate().is_ok());
    assert_eq!(SweepConfig::default().bins(), (0..16).collect::<Vec<_>>());
    let bad = [
        SweepConfig { trials: 99, ..SweepConfig::default() },
        SweepConfig { pfa: 0.5, ..SweepConfig::default() },
        SweepConfig { pfa: 0.0, ..SweepConfig::default() },
        SweepConfig { doppler_bins: vec![16], ..SweepConfig::default() },
        SweepConfig { doppler_bins: vec![1, 1], ..SweepConfig::default() },
        SweepConfig { snr_db: vec![], ..SweepConfig::default() },
        SweepConfig { snr_db: vec![5.0, 5.0], ..SweepConfig::default() },
        SweepConfig { snr_db: vec![f64::INFINITY], ..SweepConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))), "{cfg:?}");
    }
}

#[test]
fn config_json_round_trip_with_infinite_snr() {
    let cfg = SweepConfig { snr_db: vec![f64::NEG_INFINITY, 3.0], ..SweepConfig::default() };
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains("\"-inf\""));
    let back: SweepConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
}

/// Wilson bounds solve `(p̂ − p)² = z²·p(1 − p)/n`; find the roots by bisection.
fn wilson_oracle(k: usize, n: usize) -> (f64, f64) {
    let ph = k as f64 / n as f64;
    let f = |p: f64| (ph - p).powi(2) - Z95 * Z95 * p * (1.0 - p) / n as f64;
    let root = |mut a: f64, mut b: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (f(a) > 0.0) == (f(mid) > 0.0) {
                a = mid
            } else {
                b = mid
            }
        }
        0.5 * (a + b)
    };
    let lo = if k == 0 { 0.0 } else { root(0.0, ph) };
    let hi = if k == n { 1.0 } else { root(ph, 1.0) };
    (lo, hi)
}

#[test]
fn wilson_matches_quadratic_roots() {
    for &(k, n) in &[(0, 100), (1, 100), (50, 100), (99, 100), (100, 100), (20, 2000), (1000, 2000)] {
        let (lo, hi) = wilson_interval(k, n, Z95);
        let (olo, ohi) = wilson_oracle(k, n);
        assert!((lo - olo).abs() < 1e-9 && (hi - ohi).abs() < 1e-9, "{k}/{n}: ({lo}, {hi}) vs ({olo}, {ohi})");
    }
    // ±0.022 at pd = 0.5 with 2000 trials.
    let (lo, hi) = wilson_interval(1000, 2000, Z95);
    assert!((0.5 * (hi - lo) - 0.0219).abs() < 5e-4);
}

#[test]
fn doubling_trials_halves_the_standard_error() {
    let e1 = Estimate::new(600, 2000);
    let e2 = Estimate::new(1200, 4000);
    let ratio = (e2.ci_hi - e2.ci_lo) / (e1.ci_hi - e1.ci_lo);
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01, "{ratio}");
}

#[test]
fn no_target_grid_has_pd_near_pfa() {
    let cfg = SweepConfig { snr_db: vec![f64::NEG_INFINITY], ..small_cfg() };
    let rep = evaluate(&cfg, &energy()).unwrap();
    let sigma = (cfg.pfa * (1.0 - cfg.pfa) / cfg.trials as f64).sqrt();
    for p in &rep.points {
        assert!((p.pd - cfg.pfa).abs() <= 3.0 * sigma + 1e-12, "{p:?}");
    }
    let pooled: usize = rep.points.iter().map(|p| p.detections).sum();
    let n = rep.points.len() * cfg.trials;
    let sigma = (cfg.pfa * (1.0 - cfg.pfa) / n as f64).sqrt();
    assert!((pooled as f64 / n as f64 - cfg.pfa).abs() <= 3.0 * sigma);
    let sigma = (cfg.pfa * (1.0 - cfg.pfa) / cfg.h0_trials as f64).sqrt();
    assert!((rep.pfa_check.rate - cfg.pfa).abs() <= 3.0 * sigma, "{:?}", rep.pfa_check);
}

#[test]
fn calibration_respects_order_statistic() {
    let cfg = small_cfg();
    let thr = calibrate_detector(&cfg, &energy()).unwrap();
    assert_eq!(thr.n_cal, 5000);
    assert_eq!(thr.order_index, 4950);
    let scores = calibration_scores(&cfg, &energy()).unwrap();
    assert!(thr.exceedance(&scores) <= cfg.pfa);
}

#[test]
fn pd_grows_with_snr_and_report_is_consistent() {
    let cfg = small_cfg();
    let rep = evaluate(&cfg, &energy()).unwrap();
    assert_eq!(rep.points.len(), 3 * 4);
    for p in &rep.points {
        assert_eq!(p.trials, cfg.trials);
        assert!((0.0..=1.0).contains(&p.pd));
        assert!(p.ci_lo <= p.pd && p.pd <= p.ci_hi);
    }
    for b in 0..4 {
        let pd: Vec<f64> = cfg.snr_db.iter().map(|&s| rep.point(s, b).unwrap().pd).collect();
        assert!(pd.windows(2).all(|w| w[1] >= w[0] - 0.03), "bin {b}: {pd:?}");
        assert!(pd[2] > 0.9);
    }
    assert_eq!(rep.views.as_ref(), Some(&report_views(&rep).unwrap()));
}

#[test]
fn identical_configs_give_identical_bytes_for_any_thread_count() {
    let cfg = small_cfg();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let rep = evaluate(&cfg, &energy()).unwrap();
            let mut buf = Vec::new();
            write_csv(&mut buf, &[rep]).unwrap();
            buf
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
    let other = evaluate(&SweepConfig { seed: 12, ..cfg.clone() }, &energy()).unwrap();
    let mut b = Vec::new();
    write_csv(&mut b, &[other]).unwrap();
    assert_ne!(a, b);
}

#[test]
fn crn_shares_clutter_across_detectors() {
    let a = Energy { id: "a" };
    let b = Energy { id: "b" };
    let cfg = small_cfg();
    let thr = calibrate_detector(&cfg, &a).unwrap();
    assert_eq!(thr, calibrate_detector(&cfg, &b).unwrap());
    let ra = run_sweep(&cfg, &a, &thr).unwrap();
    let rb = run_sweep(&cfg, &b, &thr).unwrap();
    assert_ne!(ra.points, rb.points);
    let crn = SweepConfig { crn: true, ..cfg };
    assert_eq!(run_sweep(&crn, &a, &thr).unwrap().points, run_sweep(&crn, &b, &thr).unwrap().points);
}

#[test]
fn errors_carry_grid_context() {
    let cfg = small_cfg();
    let thr = Threshold { value: 0.0, target_pfa: 0.01, n_cal: 1, order_index: 1, kind: ScoreKind::Kl };
    match run_sweep(&cfg, &Broken, &thr) {
        Err(Error::Divergence(msg)) => assert!(msg.contains("snr 0 dB, doppler 1") && msg.contains("exploded"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let wrong = Threshold { kind: ScoreKind::AnmfFp, ..thr };
    assert!(matches!(run_sweep(&cfg, &Broken, &wrong), Err(Error::InvalidArgument(_))));
}

fn synthetic(detector: &str, pd: &[(f64, usize, usize)]) -> DetectorReport {
    DetectorReport {
        detector: detector.into(),
        kind: ScoreKind::Kl,
        threshold: Threshold { value: 1.0, target_pfa: 0.01, n_cal: 5000, order_index: 4950, kind: ScoreKind::Kl },
        points: pd.iter().map(|&(s, b, d)| GridPoint::new(s, b, d, 1000)).collect(),
        pfa_check: Estimate::new(10, 1000),
        views: None,
    }
}

#[test]
fn views_on_two_bins_and_on_flat_grids() {
    let rep = synthetic("x", &[(0.0, 0, 100), (0.0, 1, 300), (5.0, 0, 200), (5.0, 1, 700)]);
    let v = report_views(&rep).unwrap();
    assert_eq!(v.mean_excluding_0.pd(), vec![0.3, 0.7]);
    assert_eq!(v.doppler_0.pd(), vec![0.1, 0.2]);

    let flat = synthetic("x", &[(0.0, 0, 400), (0.0, 1, 400), (0.0, 2, 400)]);
    let v = report_views(&flat).unwrap();
    assert_eq!(v.mean_excluding_0.pd(), v.doppler_0.pd());

    let pooled = synthetic("x", &[(0.0, 0, 0), (0.0, 1, 100), (0.0, 2, 300)]);
    assert_eq!(report_views(&pooled).unwrap().mean_excluding_0.pd(), vec![0.2]);

    assert!(report_views(&synthetic("x", &[(0.0, 1, 1), (0.0, 2, 1)])).is_err());
    assert!(report_views(&synthetic("x", &[(0.0, 0, 1)])).is_err());
    assert!(report_views(&synthetic("x", &[(0.0, 0, 1), (0.0, 1, 1), (5.0, 0, 1)])).is_err());
}

#[test]
fn compare_ranks_and_flags() {
    let grid = |d0: usize, d1: usize| synthetic("", &[(0.0, 0, d0), (0.0, 1, d1)]);
    let single = compare(&[DetectorReport { detector: "a".into(), ..grid(10, 20) }]).unwrap();
    assert_eq!(single.len(), 2);
    assert!(single.iter().all(|r| r.ranking.len() == 1 && r.significant.is_empty()));

    let a = DetectorReport { detector: "a".into(), ..grid(500, 500) };
    let b = DetectorReport { detector: "b".into(), ..grid(500, 500) };
    assert!(compare(&[a.clone(), b.clone()]).unwrap().iter().all(|r| r.significant.is_empty()));

    let c = DetectorReport { detector: "c".into(), ..grid(520, 900) };
    let rows = compare(&[a.clone(), c]).unwrap();
    let mean = rows.iter().find(|r| r.view == View::MeanExcluding0).unwrap();
    assert_eq!(mean.ranking[0].detector, "c");
    assert_eq!(mean.significant, vec![("c".to_string(), "a".to_string())]);
    let zero = rows.iter().find(|r| r.view == View::Doppler0).unwrap();
    assert_eq!(zero.ranking[0].detector, "c");
    assert!(zero.significant.is_empty());

    let other = DetectorReport { detector: "d".into(), ..synthetic("", &[(5.0, 0, 1), (5.0, 1, 1)]) };
    assert!(compare(&[a, other]).is_err());
    assert!(compare(&[]).is_err());
}

#[test]
fn csv_round_trip() {
    let reps = vec![
        synthetic("a", &[(f64::NEG_INFINITY, 0, 10), (0.0, 1, 20)]),
        synthetic("b", &[(f64::NEG_INFINITY, 0, 11), (0.0, 1, 21)]),
    ];
    let mut buf = Vec::new();
    write_csv(&mut buf, &reps).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    assert!(text.contains("a,-inf,0,1000,10,0.010000,"));
    let back = read_csv(&text).unwrap();
    assert_eq!(back.len(), 2);
    for ((name, pts), rep) in back.iter().zip(&reps) {
        assert_eq!(name, &rep.detector);
        for (p, q) in pts.iter().zip(&rep.points) {
            assert_eq!((p.snr_db, p.doppler_bin, p.detections, p.trials), (q.snr_db, q.doppler_bin, q.detections, q.trials));
        }
    }
    assert!(read_csv("nope\n").is_err());
    assert!(read_csv(&format!("{CSV_HEADER}\na,1,2\n")).is_err());
}

#[test]
fn manifest_serializes() {
    let rep = synthetic("a", &[(0.0, 0, 10), (0.0, 1, 20)]);
    let m = Manifest::new(&SweepConfig::default(), &[rep]);
    let back: Manifest = serde_json::from_str(&serde_json::to_string_pretty(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}
