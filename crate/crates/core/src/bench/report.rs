//! Sweep results, the two reporting views, rankings and output files.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SweepConfig;
use crate::error::{invalid, Result};
use crate::scores::{ScoreKind, Threshold};
use crate::serde_db::format_db;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub hits: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Estimate {
    pub fn new(hits: usize, trials: usize) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(hits, trials, Z95);
        Self { hits, trials, rate: hits as f64 / trials.max(1) as f64, ci_lo, ci_hi }
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(with = "crate::serde_db")]
    pub snr_db: f64,
    pub doppler_bin: usize,
    pub detections: usize,
    pub trials: usize,
    pub pd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl GridPoint {
    pub fn new(snr_db: f64, doppler_bin: usize, detections: usize, trials: usize) -> Self {
        let e = Estimate::new(detections, trials);
        Self { snr_db, doppler_bin, detections, trials, pd: e.rate, ci_lo: e.ci_lo, ci_hi: e.ci_hi }
    }
}

/// One curve: a value per SNR grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    #[serde(with = "crate::serde_db::vec")]
    pub snr_db: Vec<f64>,
    pub points: Vec<Estimate>,
}

impl Curve {
    pub fn pd(&self) -> Vec<f64> {
        self.points.iter().map(|e| e.rate).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Views {
    /// Detections pooled over Doppler bins other than 0.
    pub mean_excluding_0: Curve,
    pub doppler_0: Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub detector: String,
    pub kind: ScoreKind,
    pub threshold: Threshold,
    /// Row-major over `(snr, doppler)` in configuration order.
    pub points: Vec<GridPoint>,
    /// Held-out false alarms on fresh clutter.
    pub pfa_check: Estimate,
    pub views: Option<Views>,
}

impl DetectorReport {
    pub fn snr_grid(&self) -> Vec<f64> {
        snr_grid(&self.points)
    }

    pub fn bins(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.points.iter().map(|p| p.doppler_bin).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn point(&self, snr_db: f64, bin: usize) -> Option<&GridPoint> {
        find(&self.points, snr_db, bin).ok()
    }
}

/// Mean over Doppler bins `1..` (pooled counts) and the bin-0 row.
pub fn report_views(report: &DetectorReport) -> Result<Views> {
    views_of(&report.points)
}

fn snr_grid(points: &[GridPoint]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in points {
        if !out.iter().any(|s| s.to_bits() == p.snr_db.to_bits()) {
            out.push(p.snr_db);
        }
    }
    out
}

fn find(points: &[GridPoint], snr_db: f64, bin: usize) -> Result<&GridPoint> {
    points
        .iter()
        .find(|p| p.snr_db.to_bits() == snr_db.to_bits() && p.doppler_bin == bin)
        .ok_or_else(|| invalid(format!("missing grid point ({} dB, bin {bin})", format_db(snr_db))))
}

/// [`report_views`] on a bare table of grid points.
pub fn views_of(points: &[GridPoint]) -> Result<Views> {
    let mut bins: Vec<usize> = points.iter().map(|p| p.doppler_bin).collect();
    bins.sort_unstable();
    bins.dedup();
    if !bins.contains(&0) {
        return Err(invalid("the Doppler-0 view needs bin 0 in the grid"));
    }
    if !bins.iter().any(|&b| b != 0) {
        return Err(invalid("the mean view needs at least one non-zero Doppler bin"));
    }
    let snr = snr_grid(points);
    let mut mean = Vec::with_capacity(snr.len());
    let mut zero = Vec::with_capacity(snr.len());
    for &s in &snr {
        let (mut hits, mut trials) = (0, 0);
        for &b in bins.iter().filter(|&&b| b != 0) {
            let p = find(points, s, b)?;
            hits += p.detections;
            trials += p.trials;
        }
        mean.push(Estimate::new(hits, trials));
        let p0 = find(points, s, 0)?;
        zero.push(Estimate::new(p0.detections, p0.trials));
    }
    Ok(Views {
        mean_excluding_0: Curve { snr_db: snr.clone(), points: mean },
        doppler_0: Curve { snr_db: snr, points: zero },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    MeanExcluding0,
    Doppler0,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::MeanExcluding0 => "mean_excluding_0",
            View::Doppler0 => "doppler_0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub detector: String,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    #[serde(with = "crate::serde_db")]
    pub snr_db: f64,
    pub view: View,
    /// Detectors by decreasing Pd (ties keep input order).
    pub ranking: Vec<RankEntry>,
    /// Adjacent pairs `(better, worse)` with disjoint 95% intervals.
    pub significant: Vec<(String, String)>,
}

/// Ranks detectors per SNR and view. All reports must share one grid.
pub fn compare(reports: &[DetectorReport]) -> Result<Vec<RankRow>> {
    let tables: Vec<(&str, &[GridPoint])> = reports.iter().map(|r| (r.detector.as_str(), r.points.as_slice())).collect();
    compare_tables(&tables)
}

/// [`compare`] on `(detector, grid points)` tables, e.g. read back from CSV.
pub fn compare_tables(tables: &[(&str, &[GridPoint])]) -> Result<Vec<RankRow>> {
    let (first_name, first) = tables.first().ok_or_else(|| invalid("nothing to compare"))?;
    let key = |pts: &[GridPoint]| pts.iter().map(|p| (p.snr_db.to_bits(), p.doppler_bin, p.trials)).collect::<Vec<_>>();
    let grid = key(first);
    for (name, pts) in tables {
        if key(pts) != grid {
            return Err(invalid(format!("report {name} uses a different grid than {first_name}")));
        }
    }
    let views: Vec<Views> = tables.iter().map(|(_, pts)| views_of(pts)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, &snr) in views[0].doppler_0.snr_db.iter().enumerate() {
        for view in [View::MeanExcluding0, View::Doppler0] {
            let mut ranking: Vec<RankEntry> = tables
                .iter()
                .zip(&views)
                .map(|((name, _), v)| {
                    let curve = match view {
                        View::MeanExcluding0 => &v.mean_excluding_0,
                        View::Doppler0 => &v.doppler_0,
                    };
                    RankEntry { detector: name.to_string(), estimate: curve.points[i] }
                })
                .collect();
            ranking.sort_by(|a, b| b.estimate.rate.total_cmp(&a.estimate.rate));
            let significant = ranking
                .windows(2)
                .filter(|w| w[0].estimate.rate > w[1].estimate.rate && !w[0].estimate.overlaps(&w[1].estimate))
                .map(|w| (w[0].detector.clone(), w[1].detector.clone()))
                .collect();
            rows.push(RankRow { snr_db: snr, view, ranking, significant });
        }
    }
    Ok(rows)
}

/// Ranking rows as CSV, one line per `(snr, view, rank)`. `gap` marks a
/// detector whose 95% interval lies strictly above the next one's.
pub fn write_ranking_csv<W: Write>(mut w: W, rows: &[RankRow]) -> Result<()> {
    writeln!(w, "snr_db,view,rank,detector,pd,ci_lo,ci_hi,gap")?;
    for r in rows {
        let view = r.view.name();
        for (k, e) in r.ranking.iter().enumerate() {
            let gap = r.significant.iter().any(|(a, _)| a == &e.detector);
            writeln!(
                w,
                "{},{view},{},{},{:.6},{:.6},{:.6},{gap}",
                format_db(r.snr_db),
                k + 1,
                e.detector,
                e.estimate.rate,
                e.estimate.ci_lo,
                e.estimate.ci_hi
            )?;
        }
    }
    Ok(())
}

pub const CSV_HEADER: &str = "detector,snr_db,doppler_bin,trials,detections,pd,ci_lo,ci_hi";

/// The per-point table of one or more reports.
pub fn write_csv<W: Write>(mut w: W, reports: &[DetectorReport]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        for p in &r.points {
            writeln!(
                w,
                "{},{},{},{},{},{:.6},{:.6},{:.6}",
                r.detector,
                format_db(p.snr_db),
                p.doppler_bin,
                p.trials,
                p.detections,
                p.pd,
                p.ci_lo,
                p.ci_hi
            )?;
        }
    }
    Ok(())
}

/// Reads back a table written by [`write_csv`], grouped by detector.
pub fn read_csv(text: &str) -> Result<Vec<(String, Vec<GridPoint>)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(invalid("unexpected report header"));
    }
    let mut out: Vec<(String, Vec<GridPoint>)> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || invalid(format!("malformed report row {}", n + 2));
        if f.len() != 8 {
            return Err(bad());
        }
        let snr = match f[1] {
            "inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            s => s.parse().map_err(|_| bad())?,
        };
        let bin = f[2].parse().map_err(|_| bad())?;
        let trials = f[3].parse().map_err(|_| bad())?;
        let det = f[4].parse().map_err(|_| bad())?;
        let point = GridPoint::new(snr, bin, det, trials);
        match out.iter_mut().find(|(d, _)| d == f[0]) {
            Some((_, pts)) => pts.push(point),
            None => out.push((f[0].to_string(), vec![point])),
        }
    }
    Ok(out)
}

/// Everything needed to reproduce and interpret a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SweepConfig,
    pub detectors: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub detector: String,
    pub threshold: Threshold,
    pub empirical_pfa: Estimate,
    pub views: Option<Views>,
}

impl Manifest {
    pub fn new(config: &SweepConfig, reports: &[DetectorReport]) -> Self {
        Self {
            config: config.clone(),
            detectors: reports
                .iter()
                .map(|r| ManifestEntry {
                    detector: r.detector.clone(),
                    threshold: r.threshold.clone(),
                    empirical_pfa: r.pfa_check,
                    views: r.views.clone(),
                })
                .collect(),
        }
    }
}
