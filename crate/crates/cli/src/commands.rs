//! The five workflow commands. Each one writes its outputs plus a
//! `*.run.json` manifest holding the resolved configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use radar_ood::bench::{
    calibration_scores, compare_tables, read_csv, run_sweep, write_csv, write_ranking_csv, AnmfFpDetector, Detector,
    DetectorReport, GridPoint, KlDetector, MahaDetector, Manifest, MseDetector, SweepConfig,
};
use radar_ood::cvae::{train, write_log_csv, Architecture, CvaeModel};
use radar_ood::scores::{
    calibrate, fit_null_kl, fit_null_maha, order_index, CalibrationRecord, NullModel, ScoreKind, CALIBRATION_VERSION,
};
use radar_ood::serde_db::format_db;
use radar_ood::sigmodel::{inject_target, load_iq, sample_clutter, Label, Scenario};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{config, io_err, CliError, CliResult, Context};

/// Where unset output paths go.
pub struct Env {
    pub out_root: PathBuf,
}

impl Env {
    fn default_path(&self, name: &str) -> PathBuf {
        self.out_root.join(name)
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn write_manifest(path: &Path, command: &str, cfg: &RunConfig, inputs: &[PathBuf], outputs: &[PathBuf]) -> CliResult<()> {
    let m = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        inputs: inputs.to_vec(),
        outputs: outputs.to_vec(),
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// `out.ciq` → `out.ciq.run.json`.
fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    output.with_file_name(name)
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        })
    }
}

fn load_model(path: &Path) -> CliResult<(CvaeModel, usize)> {
    require_file(path, "checkpoint")?;
    CvaeModel::load(path).context(|| format!("loading checkpoint {}", path.display()))
}

// ---------------------------------------------------------------------------

pub fn generate(cfg: &RunConfig, env: &Env) -> CliResult<()> {
    let sc = &cfg.scenario;
    sc.validate().context(|| "scenario".into())?;
    if cfg.generate.n == 0 {
        return Err(config("generate.n must be positive"));
    }
    if cfg.generate.label == Label::H1 && sc.snr_db == f64::NEG_INFINITY {
        return Err(config("an H1 dataset needs a finite scenario.snr_db"));
    }
    let mut batch = sample_clutter(sc, cfg.generate.n).context(|| "sampling clutter".into())?;
    if cfg.generate.label == Label::H1 {
        batch = inject_target(&batch, sc).context(|| "injecting targets".into())?;
    }
    let out = cfg.paths.dataset.clone().unwrap_or_else(|| env.default_path("dataset.ciq"));
    ensure_parent(&out)?;
    radar_ood::sigmodel::iq::save_iq(&out, &batch).map_err(|e| match e {
        radar_ood::Error::Io(source) => CliError::Io { path: out.clone(), source },
        other => CliError::Core { context: format!("writing {}", out.display()), source: other },
    })?;
    write_manifest(&manifest_path(&out), "generate", cfg, &[], std::slice::from_ref(&out))?;
    println!("wrote {} {:?} profiles (m = {}) to {}", batch.len(), batch.label, sc.m, out.display());
    Ok(())
}

// ---------------------------------------------------------------------------

fn log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("log.csv")
}

pub fn train_cmd(cfg: &RunConfig, env: &Env, resume: Option<&Path>) -> CliResult<()> {
    let tc = &cfg.train;
    tc.validate().context(|| "train".into())?;
    let dataset = cfg.paths.dataset.clone().unwrap_or_else(|| env.default_path("dataset.ciq"));
    require_file(&dataset, "dataset")?;
    let batch = load_iq(&dataset, None).context(|| format!("reading {}", dataset.display()))?;
    let m = batch.dim().ok_or_else(|| config(format!("dataset {} is empty", dataset.display())))?;

    let (mut model, start) = match resume {
        Some(path) => {
            let (model, epoch) = load_model(path)?;
            if model.q() != tc.q || model.m() != m {
                return Err(config(format!(
                    "checkpoint has m = {}, q = {}; run needs m = {m}, q = {}",
                    model.m(),
                    model.q(),
                    tc.q
                )));
            }
            (model, epoch)
        }
        None => {
            let arch = Architecture::standard(m, tc.q).context(|| "architecture".into())?;
            (CvaeModel::new(&arch, m, tc.q, tc.beta, tc.seed).context(|| "model".into())?, 0)
        }
    };
    if start >= tc.epochs {
        log::warn!("checkpoint is already at epoch {start} of {}; nothing to train", tc.epochs);
    }
    log::info!("training epochs {}..{} on {} profiles", start + 1, tc.epochs, batch.len());
    let log = train(&mut model, &batch.signals, tc, start).context(|| "training".into())?;

    let out = cfg.paths.checkpoint.clone().unwrap_or_else(|| env.default_path("model.ckpt"));
    ensure_parent(&out)?;
    let epoch = start.max(tc.epochs);
    model.save(&out, epoch).map_err(|e| match e {
        radar_ood::Error::Io(source) => CliError::Io { path: out.clone(), source },
        other => CliError::Core { context: "saving checkpoint".into(), source: other },
    })?;

    let log_file = log_path(&out);
    let mut text = Vec::new();
    write_log_csv(&mut text, &log).context(|| "training log".into())?;
    let append = resume.is_some() && log_file.is_file();
    if append {
        // Drop the header line when extending an existing log.
        let body = text.splitn(2, |&b| b == b'\n').nth(1).unwrap_or_default().to_vec();
        let mut f = fs::OpenOptions::new().append(true).open(&log_file).map_err(io_err(&log_file))?;
        f.write_all(&body).map_err(io_err(&log_file))?;
    } else {
        fs::write(&log_file, text).map_err(io_err(&log_file))?;
    }
    let mut inputs = vec![dataset];
    inputs.extend(resume.map(Path::to_path_buf));
    write_manifest(&manifest_path(&out), "train", cfg, &inputs, &[out.clone(), log_file])?;
    if let Some(last) = log.last() {
        println!(
            "epoch {}: train loss {:.5}, validation loss {:.5} (reconstruction {:.5}, KL {:.5})",
            last.epoch, last.train_loss, last.val_loss, last.rec_term, last.kl_term
        );
    }
    println!("checkpoint at epoch {epoch} written to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------

fn calibration_sweep(cfg: &RunConfig, scenario: &Scenario) -> SweepConfig {
    SweepConfig {
        scenario: scenario.clone(),
        pfa: cfg.calibrate.pfa,
        n_cal: cfg.calibrate.n_cal,
        seed: cfg.calibrate.calibration_seed,
        ..SweepConfig::default()
    }
}

pub fn calibrate_cmd(cfg: &RunConfig, env: &Env, kind: ScoreKind, out: Option<PathBuf>) -> CliResult<()> {
    let sc = &cfg.scenario;
    let cc = &cfg.calibrate;
    sc.validate().context(|| "scenario".into())?;
    let sweep = calibration_sweep(cfg, sc);
    sweep.validate().context(|| "calibrate".into())?;

    let checkpoint = match kind {
        ScoreKind::AnmfFp => None,
        _ => Some(cfg.paths.checkpoint.clone().unwrap_or_else(|| env.default_path("model.ckpt"))),
    };
    let model = match &checkpoint {
        Some(path) => {
            let (model, _) = load_model(path)?;
            if model.m() != sc.m {
                return Err(CliError::Core {
                    context: format!("checkpoint {}", path.display()),
                    source: radar_ood::Error::DimensionMismatch { expected: sc.m, found: model.m() },
                });
            }
            Some(model)
        }
        None => None,
    };
    let fit_set = || -> CliResult<Vec<_>> {
        let fit_scenario = Scenario { seed: cc.fit_seed, ..sc.clone() };
        Ok(sample_clutter(&fit_scenario, cc.n_fit).context(|| "null-model fit set".into())?.signals)
    };
    let (detector, null): (Box<dyn Detector>, Option<NullModel>) = match kind {
        ScoreKind::CvaeMse => (Box::new(MseDetector { model: model.unwrap() }), None),
        ScoreKind::Kl => {
            let model = model.unwrap();
            let null = fit_null_kl(&model, &fit_set()?).context(|| "fitting the KL null".into())?;
            (Box::new(KlDetector { model, null: null.clone() }), Some(NullModel::Kl(null)))
        }
        ScoreKind::Mahalanobis => {
            let model = model.unwrap();
            let null = fit_null_maha(&model, &fit_set()?, cc.latent, cc.fit_seed)
                .context(|| "fitting the Mahalanobis null".into())?;
            (Box::new(MahaDetector { model, null: null.clone(), draw: cc.latent }), Some(NullModel::Mahalanobis(null)))
        }
        ScoreKind::AnmfFp => {
            (Box::new(AnmfFpDetector::new(cc.anmf.clone(), sc).context(|| "ANMF detector".into())?), None)
        }
    };
    let scores = calibration_scores(&sweep, detector.as_ref()).context(|| format!("scoring {kind}"))?;
    let threshold = calibrate(&scores, cc.pfa, kind).context(|| "calibration".into())?;

    // Order statistics two binomial standard deviations either side of k
    // show how much λ would move under a different calibration seed.
    let n = scores.len();
    let mut sorted = scores;
    sorted.sort_by(f64::total_cmp);
    let spread = (2.0 * (n as f64 * cc.pfa * (1.0 - cc.pfa)).sqrt()).ceil() as usize;
    let k = order_index(n, cc.pfa);
    let band = (sorted[k.saturating_sub(spread).max(1) - 1], sorted[(k + spread).min(n) - 1]);

    let record = CalibrationRecord {
        version: CALIBRATION_VERSION,
        threshold: threshold.clone(),
        null,
        latent: cc.latent,
        n_fit: if matches!(kind, ScoreKind::Kl | ScoreKind::Mahalanobis) { cc.n_fit } else { 0 },
        fit_seed: cc.fit_seed,
        calibration_seed: cc.calibration_seed,
        scenario: Some(sc.clone()),
        model: checkpoint.clone(),
        anmf: (kind == ScoreKind::AnmfFp).then(|| cc.anmf.clone()),
    };
    let out = out.unwrap_or_else(|| env.default_path(&format!("calibration_{kind}.json")));
    ensure_parent(&out)?;
    record.save(&out).map_err(|e| match e {
        radar_ood::Error::Io(source) => CliError::Io { path: out.clone(), source },
        other => CliError::Core { context: "writing calibration".into(), source: other },
    })?;
    write_manifest(&manifest_path(&out), "calibrate", cfg, &checkpoint.into_iter().collect::<Vec<_>>(), std::slice::from_ref(&out))?;
    println!(
        "{kind}: lambda = {:.6e} (order statistic {} of {}, alpha = {}); seed-to-seed band [{:.6e}, {:.6e}]",
        threshold.value, threshold.order_index, threshold.n_cal, threshold.target_pfa, band.0, band.1
    );
    println!("calibration written to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------

fn same_clutter_law(a: &Scenario, b: &Scenario) -> bool {
    a.m == b.m
        && a.rho == b.rho
        && a.clutter_kind == b.clutter_kind
        && a.texture_shape == b.texture_shape
        && a.cnr_db.to_bits() == b.cnr_db.to_bits()
}

fn build_detector(record: &CalibrationRecord, cfg: &RunConfig, path: &Path) -> CliResult<Box<dyn Detector>> {
    let kind = record.threshold.kind;
    let model = || -> CliResult<CvaeModel> {
        let ckpt = record.model.as_ref().ok_or_else(|| config(format!("{}: no checkpoint recorded", path.display())))?;
        Ok(load_model(ckpt)?.0)
    };
    let mismatch = || config(format!("{}: null model does not match score kind {kind}", path.display()));
    Ok(match kind {
        ScoreKind::CvaeMse => Box::new(MseDetector { model: model()? }),
        ScoreKind::Kl => match &record.null {
            Some(NullModel::Kl(null)) => Box::new(KlDetector { model: model()?, null: null.clone() }),
            _ => return Err(mismatch()),
        },
        ScoreKind::Mahalanobis => match &record.null {
            Some(NullModel::Mahalanobis(null)) => {
                Box::new(MahaDetector { model: model()?, null: null.clone(), draw: record.latent })
            }
            _ => return Err(mismatch()),
        },
        ScoreKind::AnmfFp => Box::new(
            AnmfFpDetector::new(record.anmf.clone().unwrap_or_default(), &cfg.scenario)
                .context(|| "ANMF detector".into())?,
        ),
    })
}

pub fn evaluate(cfg: &RunConfig, env: &Env) -> CliResult<()> {
    let cals = &cfg.paths.calibration;
    if cals.is_empty() {
        return Err(config("evaluate needs at least one calibration file (--calibration or paths.calibration)"));
    }
    let sw = &cfg.sweep;
    let mut sweep = SweepConfig {
        scenario: cfg.scenario.clone(),
        snr_db: sw.snr_db.clone(),
        doppler_bins: sw.doppler_bins.clone(),
        trials: sw.trials,
        h0_trials: sw.h0_trials,
        seed: sw.seed,
        crn: sw.crn,
        ..SweepConfig::default()
    };
    sweep.validate().context(|| "sweep".into())?;
    let mut reports: Vec<DetectorReport> = Vec::new();
    for path in cals {
        require_file(path, "calibration file")?;
        let record = CalibrationRecord::load(path).context(|| format!("reading {}", path.display()))?;
        if let Some(sc) = &record.scenario {
            if !same_clutter_law(sc, &cfg.scenario) {
                log::warn!("{} was calibrated on a different clutter law than the sweep scenario", path.display());
            }
        }
        let detector = build_detector(&record, cfg, path)?;
        if reports.iter().any(|r| r.detector == detector.id()) {
            return Err(config(format!("two calibration files for detector {}", detector.id())));
        }
        sweep.pfa = record.threshold.target_pfa;
        sweep.n_cal = record.threshold.n_cal;
        log::info!("sweeping {}", detector.id());
        let report = run_sweep(&sweep, detector.as_ref(), &record.threshold)
            .context(|| format!("evaluating {}", detector.id()))?;
        reports.push(report);
    }

    let dir = cfg.paths.report_dir.clone().unwrap_or_else(|| env.default_path("report"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut outputs = Vec::new();
    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: radar_ood::Error| CliError::Core { context: format!("writing {}", p.display()), source: e }
    };
    for r in &reports {
        let path = dir.join(format!("{}.csv", r.detector));
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(r)).map_err(csv_err(&path))?;
        fs::write(&path, buf).map_err(io_err(&path))?;
        outputs.push(path);
    }
    let manifest_file = dir.join("manifest.json");
    let manifest = Manifest::new(&sweep, &reports);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| config(e.to_string()))?;
    fs::write(&manifest_file, text + "\n").map_err(io_err(&manifest_file))?;
    outputs.push(manifest_file);
    if reports.len() > 1 {
        let rows = radar_ood::bench::compare(&reports).context(|| "ranking".into())?;
        let path = dir.join("ranking.csv");
        let mut buf = Vec::new();
        write_ranking_csv(&mut buf, &rows).map_err(csv_err(&path))?;
        fs::write(&path, buf).map_err(io_err(&path))?;
        outputs.push(path);
    }
    write_manifest(&dir.join("run.json"), "evaluate", cfg, cals, &outputs)?;

    for r in &reports {
        let curve = match &r.views {
            Some(v) => v
                .mean_excluding_0
                .points
                .iter()
                .zip(&v.mean_excluding_0.snr_db)
                .map(|(e, s)| format!("{}:{:.3}", format_db(*s), e.rate))
                .collect::<Vec<_>>()
                .join(" "),
            None => String::from("(no views: grid lacks bin 0 or another bin)"),
        };
        println!("{:<12} lambda {:.4e}  Pfa {:.4}  Pd {curve}", r.detector, r.threshold.value, r.pfa_check.rate);
    }
    println!("reports written to {}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn compare_cmd(cfg: &RunConfig, env: &Env) -> CliResult<()> {
    let inputs = &cfg.paths.reports;
    if inputs.is_empty() {
        return Err(config("compare needs at least one report CSV"));
    }
    let mut tables: Vec<(String, Vec<GridPoint>)> = Vec::new();
    for path in inputs {
        require_file(path, "report")?;
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        for (name, points) in read_csv(&text).context(|| format!("reading {}", path.display()))? {
            if tables.iter().any(|(n, _)| n == &name) {
                return Err(config(format!("detector {name} appears in more than one report")));
            }
            tables.push((name, points));
        }
    }
    let borrowed: Vec<(&str, &[GridPoint])> = tables.iter().map(|(n, p)| (n.as_str(), p.as_slice())).collect();
    let rows = compare_tables(&borrowed).context(|| "compare".into())?;
    let out = cfg.paths.comparison.clone().unwrap_or_else(|| env.default_path("comparison.csv"));
    ensure_parent(&out)?;
    let mut buf = Vec::new();
    write_ranking_csv(&mut buf, &rows).context(|| "ranking table".into())?;
    fs::write(&out, &buf).map_err(io_err(&out))?;
    write_manifest(&manifest_path(&out), "compare", cfg, inputs, std::slice::from_ref(&out))?;
    for r in &rows {
        let order: Vec<String> = r.ranking.iter().map(|e| format!("{} {:.3}", e.detector, e.estimate.rate)).collect();
        let gaps: Vec<String> = r.significant.iter().map(|(a, b)| format!("{a} > {b}")).collect();
        println!(
            "{:>5} dB {:<17} {}{}",
            format_db(r.snr_db),
            r.view.name(),
            order.join(", "),
            if gaps.is_empty() { String::new() } else { format!("  [significant: {}]", gaps.join("; ")) }
        );
    }
    println!("comparison written to {}", out.display());
    Ok(())
}
