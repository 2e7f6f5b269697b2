//! Run configuration: TOML file, then `--set` overrides, then flags.

use std::path::{Path, PathBuf};

use radar_ood::classical::AnmfDetector;
use radar_ood::cvae::TrainConfig;
use radar_ood::scores::LatentDraw;
use radar_ood::sigmodel::{Label, Scenario};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{config, io_err, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub generate: GenerateSection,
    pub train: TrainConfig,
    pub calibrate: CalibrateSection,
    pub sweep: SweepSection,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            generate: GenerateSection::default(),
            train: TrainConfig::default(),
            calibrate: CalibrateSection::default(),
            sweep: SweepSection::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub n: usize,
    /// `H1` adds a target at the scenario's SNR and Doppler bin.
    pub label: Label,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { n: radar_ood::cvae::DEFAULT_DATASET_SIZE, label: Label::H0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    /// Clutter profiles used to fit latent null models.
    pub n_fit: usize,
    pub n_cal: usize,
    pub pfa: f64,
    pub latent: LatentDraw,
    pub fit_seed: u64,
    pub calibration_seed: u64,
    pub anmf: AnmfDetector,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            n_fit: 5000,
            n_cal: 5000,
            pfa: 1e-2,
            latent: LatentDraw::Sample,
            fit_seed: 1,
            calibration_seed: 2,
            anmf: AnmfDetector::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(with = "radar_ood::serde_db::vec")]
    pub snr_db: Vec<f64>,
    /// Empty means every bin.
    pub doppler_bins: Vec<usize>,
    pub trials: usize,
    pub h0_trials: usize,
    pub seed: u64,
    pub crn: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = radar_ood::bench::SweepConfig::default();
        Self {
            snr_db: d.snr_db,
            doppler_bins: d.doppler_bins,
            trials: d.trials,
            h0_trials: d.h0_trials,
            seed: 3,
            crn: d.crn,
        }
    }
}

/// File locations. Unset outputs fall back to names under the output root.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub calibration: Vec<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub comparison: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `q = 12`, `β = 100`: the reconstruction-score model.
    Reconstruction,
    /// `q = 32`, `β = 1e-3`: the latent-score model.
    Latent,
}

impl Preset {
    fn train_config(self) -> TrainConfig {
        match self {
            Preset::Reconstruction => TrainConfig::reconstruction(),
            Preset::Latent => TrainConfig::latent(),
        }
    }
}

/// Sets `a.b.c = value`; `value` is parsed as TOML, or taken as a string.
pub fn apply_override(table: &mut Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config(format!("override {assignment:?} is not of the form key=value")))?;
    let value = match format!("v = {}", raw.trim()).parse::<Table>() {
        Ok(mut t) if t.len() == 1 => t.remove("v").unwrap(),
        _ => Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config(format!("invalid override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| config(format!("override key {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads the optional file, applies overrides and resolves the training
/// training preset (flag, else `train.preset`) underneath explicit
/// `[train]` keys.
pub fn load(path: Option<&Path>, overrides: &[String], preset: Option<Preset>) -> CliResult<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            text.parse::<Table>().map_err(|e| config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut train = match table.remove("train") {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(config("[train] must be a table")),
        None => Table::new(),
    };
    let named = match train.remove("preset") {
        Some(v) => Some(Preset::deserialize(v).map_err(|e| config(format!("train.preset: {e}")))?),
        None => None,
    };
    let base = preset.or(named).unwrap_or(Preset::Reconstruction).train_config();
    let mut merged = Table::try_from(&base).map_err(|e| config(e.to_string()))?;
    merged.extend(train);
    table.insert("train".into(), Value::Table(merged));
    let cfg: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| config(e.message().to_string()))?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> CliResult<String> {
    toml::to_string_pretty(cfg).map_err(|e| config(e.to_string()))
}
