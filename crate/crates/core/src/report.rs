//! End-to-end analysis runs: configuration, preprocessing, and report files.

use crate::analytic::{band_phases, AnalyticSeries};
use crate::baselines::{build_design, fit_logistic, DesignInputs, LogisticOptions, PredictorKind};
use crate::circstats::{
    band_scan_detailed, phase_to_clock_hours, rayleigh_test_montecarlo, rose_histogram, BandScan,
    ScanConfig,
};
use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::filtering::BandSpec;
use crate::io::{read_events_csv, read_series_csv, write_text};
use crate::spectral::{welch_psd, PsdEstimate, WelchParams};
use crate::timeseries::{
    contiguous_segments, interpolate_gaps, resample_to_grid_aligned, shift_daily, zscore,
    Aggregator, RegularSeries, DAY, MINUTE,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn default_step_minutes() -> i64 {
    60
}
fn default_ibi_gap() -> usize {
    6
}
fn default_sleep_gap() -> usize {
    2
}
fn default_bands() -> Vec<BandSpec> {
    BandSpec::standard_scan()
}
fn default_order() -> usize {
    2
}
fn default_rose_bins() -> usize {
    12
}
fn default_draws() -> usize {
    100_000
}
fn default_output() -> PathBuf {
    PathBuf::from("cyclephase-out")
}

/// Every knob of an analysis run. Defaults follow the published processing:
/// hourly grid, gaps up to 6 h (signal) or 2 days (sleep) interpolated,
/// the circadian band plus six multi-day bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ibi_path: PathBuf,
    pub events_path: PathBuf,
    #[serde(default)]
    pub sleep_path: Option<PathBuf>,
    #[serde(default)]
    pub timezone_offset_minutes: i64,
    #[serde(default = "default_step_minutes")]
    pub step_minutes: i64,
    #[serde(default = "default_ibi_gap")]
    pub ibi_max_gap_hours: usize,
    #[serde(default = "default_sleep_gap")]
    pub sleep_max_gap_days: usize,
    #[serde(default = "default_bands")]
    pub bands: Vec<BandSpec>,
    /// `None` picks [`WelchParams::default_for`] the analysed segment.
    #[serde(default)]
    pub welch: Option<WelchParams>,
    #[serde(default = "default_order")]
    pub filter_order: usize,
    /// `None` means half a grid step.
    #[serde(default)]
    pub mapping_tolerance_minutes: Option<i64>,
    #[serde(default = "default_rose_bins")]
    pub rose_bins: usize,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo draws for the resampled Rayleigh p; 0 disables it.
    #[serde(default = "default_draws")]
    pub montecarlo_draws: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(ibi_path: impl Into<PathBuf>, events_path: impl Into<PathBuf>) -> Self {
        Self {
            ibi_path: ibi_path.into(),
            events_path: events_path.into(),
            sleep_path: None,
            timezone_offset_minutes: 0,
            step_minutes: default_step_minutes(),
            ibi_max_gap_hours: default_ibi_gap(),
            sleep_max_gap_days: default_sleep_gap(),
            bands: default_bands(),
            welch: None,
            filter_order: default_order(),
            mapping_tolerance_minutes: None,
            rose_bins: default_rose_bins(),
            seed: 0,
            montecarlo_draws: default_draws(),
            output_dir: default_output(),
        }
    }

    pub fn step_seconds(&self) -> i64 {
        self.step_minutes * MINUTE
    }

    pub fn tz_offset_seconds(&self) -> i64 {
        self.timezone_offset_minutes * MINUTE
    }

    pub fn scan_config(&self) -> ScanConfig {
        ScanConfig {
            filter_order: self.filter_order,
            mapping_tolerance: self.mapping_tolerance_minutes.map(|m| m * MINUTE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_minutes <= 0 {
            return Err(Error::data("step_minutes must be positive"));
        }
        if self.bands.is_empty() {
            return Err(Error::data("at least one band is required"));
        }
        if self.rose_bins < 4 {
            return Err(Error::data("rose_bins must be at least 4"));
        }
        if self.montecarlo_draws != 0 && self.montecarlo_draws < 10_000 {
            return Err(Error::data("montecarlo_draws must be 0 or at least 10000"));
        }
        if matches!(self.mapping_tolerance_minutes, Some(m) if m < 0) {
            return Err(Error::data("mapping tolerance must be non-negative"));
        }
        for band in &self.bands {
            BandSpec::new(band.low_period, band.high_period, band.label.clone())?;
        }
        Ok(())
    }

    /// Parses either a bare config or a `run_manifest.json` (which embeds one).
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct ManifestView {
            config: RunConfig,
        }
        match serde_json::from_str::<RunConfig>(text) {
            Ok(c) => Ok(c),
            Err(config_err) => serde_json::from_str::<ManifestView>(text)
                .map(|m| m.config)
                .map_err(|_| Error::data(format!("invalid config JSON: {config_err}"))),
        }
    }
}

/// Loaded, gridded, gap-filled and z-scored inputs.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub ibi: RegularSeries,
    pub events: EventSet,
    /// Next-day-assigned, z-scored daily sleep score.
    pub sleep: Option<RegularSeries>,
}

pub fn prepare_ibi(config: &RunConfig) -> Result<RegularSeries> {
    let raw = read_series_csv(&config.ibi_path, "ibi", "ms", config.tz_offset_seconds())?;
    let grid = resample_to_grid_aligned(&raw, config.step_seconds(), Aggregator::Mean, 0)?;
    let max_gap = (config.ibi_max_gap_hours as i64 * 3600 / config.step_seconds()) as usize;
    zscore(&interpolate_gaps(&grid, max_gap))
}

pub fn prepare_sleep(config: &RunConfig) -> Result<Option<RegularSeries>> {
    let Some(path) = &config.sleep_path else {
        return Ok(None);
    };
    let raw = read_series_csv(path, "sleep", "score", config.tz_offset_seconds())?;
    // daily bins start at local midnight
    let daily = resample_to_grid_aligned(&raw, DAY, Aggregator::Mean, config.tz_offset_seconds())?;
    let filled = interpolate_gaps(&daily, config.sleep_max_gap_days);
    Ok(Some(zscore(&shift_daily(&filled, 1)?)?))
}

pub fn prepare(config: &RunConfig) -> Result<PreparedData> {
    config.validate()?;
    let events = read_events_csv(&config.events_path, config.tz_offset_seconds())?;
    Ok(PreparedData {
        ibi: prepare_ibi(config)?,
        events,
        sleep: prepare_sleep(config)?,
    })
}

/// Welch PSD of the longest contiguous stretch of the prepared signal.
pub fn compute_psd(series: &RegularSeries, welch: Option<WelchParams>) -> Result<PsdEstimate> {
    let longest = contiguous_segments(series)
        .into_iter()
        .max_by_key(|s| (s.length, std::cmp::Reverse(s.start_index)))
        .ok_or_else(|| Error::data("signal has no present values"))?;
    let values = longest.values(series);
    let params = welch.unwrap_or_else(|| WelchParams::default_for(values.len(), series.step()));
    welch_psd(&values, series.step(), &params)
}

pub fn psd_csv(psd: &PsdEstimate) -> String {
    let mut out = String::from("period_days,frequency_cpd,power\n");
    for (&f, &p) in psd.frequencies.iter().zip(&psd.power) {
        if f > 0.0 {
            writeln!(out, "{},{},{}", 1.0 / f, f, p).unwrap();
        }
    }
    out
}

/// One band's entry in `bandscan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub band: String,
    pub low_period_days: f64,
    pub high_period_days: f64,
    pub n: usize,
    #[serde(rename = "R")]
    pub resultant_length: Option<f64>,
    pub circular_mean_rad: Option<f64>,
    pub circular_mean_clock_hours: Option<f64>,
    pub p: Option<f64>,
    pub p_fdr: Option<f64>,
    pub p_montecarlo: Option<f64>,
    pub n_edge_flagged: usize,
    pub n_excluded: usize,
    pub n_segments: usize,
    pub rose_counts: Vec<usize>,
}

pub fn band_report(scan: &BandScan, config: &RunConfig, band_index: usize) -> Result<BandReport> {
    let r = &scan.result;
    let phases = scan.mapping.phases();
    let clock = match (r.circular_mean, r.band.is_circadian()) {
        (Some(mean), true) => {
            phase_to_clock_hours(&scan.analytic, mean, config.tz_offset_seconds())
        }
        _ => None,
    };
    let p_montecarlo = match r.resultant_length {
        Some(rl) if config.montecarlo_draws > 0 && r.n >= 3 => Some(rayleigh_test_montecarlo(
            r.n,
            rl,
            config.montecarlo_draws,
            config.seed.wrapping_add(band_index as u64),
        )?),
        _ => None,
    };
    Ok(BandReport {
        band: r.band.label.clone(),
        low_period_days: r.band.low_period,
        high_period_days: r.band.high_period,
        n: r.n,
        resultant_length: r.resultant_length,
        circular_mean_rad: r.circular_mean,
        circular_mean_clock_hours: clock,
        p: r.rayleigh_p,
        p_fdr: r.fdr_adjusted_p,
        p_montecarlo,
        n_edge_flagged: r.n_edge_flagged,
        n_excluded: r.n_excluded,
        n_segments: r.n_segments,
        rose_counts: rose_histogram(&phases, config.rose_bins),
    })
}

/// Band label made safe for file names.
pub fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn phases_csv(scan: &BandScan) -> String {
    let mut out = String::from("event_timestamp,phase_rad,amplitude,sample_offset_s,edge_flag\n");
    for s in &scan.mapping.mapped {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.event_time,
            s.phase,
            s.amplitude,
            s.sample_offset,
            u8::from(s.edge_flagged)
        )
        .unwrap();
    }
    out
}

pub fn rose_csv(counts: &[usize]) -> String {
    let width = 2.0 * PI / counts.len() as f64;
    let mut out = String::from("bin_start_rad,bin_end_rad,count\n");
    for (i, c) in counts.iter().enumerate() {
        let lo = -PI + i as f64 * width;
        writeln!(out, "{},{},{}", lo, lo + width, c).unwrap();
    }
    out
}

/// Per-sample phase dump: `timestamp,phase_rad,amplitude,edge_flag`.
pub fn phase_dump_csv(analytic: &[AnalyticSeries]) -> String {
    let mut out = String::from("timestamp,phase_rad,amplitude,edge_flag\n");
    for series in analytic {
        for i in 0..series.len() {
            writeln!(
                out,
                "{},{},{},{}",
                series.time_at(i),
                series.phase[i],
                series.amplitude[i],
                u8::from(series.edge[i])
            )
            .unwrap();
        }
    }
    out
}

/// Polar rose histogram with the mean resultant vector drawn as an arrow.
/// Phase 0 points right and angles grow counter-clockwise; wedge radius is
/// proportional to count, and the arrow length is `R` times the outer radius.
pub fn emit_rose_svg(
    rose_counts: &[usize],
    mean_phase: Option<f64>,
    resultant_length: f64,
) -> String {
    const SIZE: f64 = 320.0;
    const C: f64 = SIZE / 2.0;
    const OUTER: f64 = 140.0;
    let bins = rose_counts.len().max(1);
    let width = 2.0 * PI / bins as f64;
    let max_count = rose_counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let point = |r: f64, a: f64| (C + r * a.cos(), C - r * a.sin());

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r##"<circle cx="{C}" cy="{C}" r="{OUTER}" fill="none" stroke="#999" stroke-width="1"/>"##
    )
    .unwrap();
    for (i, &count) in rose_counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let r = OUTER * count as f64 / max_count;
        let a0 = -PI + i as f64 * width;
        let (x0, y0) = point(r, a0);
        let (x1, y1) = point(r, a0 + width);
        let large = u8::from(width > PI);
        writeln!(
            svg,
            r##"<path class="wedge" data-bin="{i}" data-count="{count}" data-radius="{r:.6}" d="M {C:.3} {C:.3} L {x0:.3} {y0:.3} A {r:.3} {r:.3} 0 {large} 0 {x1:.3} {y1:.3} Z" fill="#4c78a8" fill-opacity="0.7" stroke="#1f3b5a"/>"##
        )
        .unwrap();
    }
    if let Some(mean) = mean_phase {
        let (x, y) = point(OUTER * resultant_length, mean);
        writeln!(
            svg,
            r##"<line class="resultant" data-angle="{mean:.9}" data-length="{resultant_length:.9}" x1="{C:.3}" y1="{C:.3}" x2="{x:.3}" y2="{y:.3}" stroke="#d62728" stroke-width="3"/>"##
        )
        .unwrap();
        writeln!(
            svg,
            r##"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="#d62728"/>"##
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="8" y="{:.0}" font-family="sans-serif" font-size="12">R = {resultant_length:.3}</text>"#,
        SIZE - 8.0
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub predictor: PredictorKind,
    pub coefficients: Vec<f64>,
    pub auc: f64,
    pub n_rows: usize,
    pub n_positive: usize,
    pub converged: bool,
}

/// Fits one predictor; the circadian phase comes from the first circadian band.
pub fn run_baseline(
    data: &PreparedData,
    config: &RunConfig,
    kind: PredictorKind,
) -> Result<BaselineReport> {
    let circadian = config
        .bands
        .iter()
        .find(|b| b.is_circadian())
        .cloned()
        .unwrap_or_else(|| BandSpec::standard_scan().remove(0));
    let analytic = if kind == PredictorKind::CircadianPhase {
        band_phases(&data.ibi, &circadian, config.filter_order)?
    } else {
        Vec::new()
    };
    let inputs = DesignInputs {
        grid: &data.ibi,
        analytic: &analytic,
        sleep: data.sleep.as_ref(),
        events: &data.events,
        tz_offset_seconds: config.tz_offset_seconds(),
    };
    let design = build_design(&inputs, kind)?;
    let fit = fit_logistic(&design, &LogisticOptions::default())?;
    Ok(BaselineReport {
        predictor: kind,
        coefficients: fit.coefficients,
        auc: fit.auc,
        n_rows: design.rows.len(),
        n_positive: design.n_positive(),
        converged: fit.converged,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    /// SHA-256 of each input file, keyed by role.
    pub input_sha256: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::numerical(format!("JSON serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

/// Writes the band scan outputs and returns the reports.
pub fn write_bandscan(
    data: &PreparedData,
    config: &RunConfig,
    outputs: &mut Vec<String>,
) -> Result<Vec<BandReport>> {
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let scans = band_scan_detailed(
        &data.ibi,
        &data.events,
        &config.bands,
        &config.scan_config(),
    )?;
    let mut reports = Vec::with_capacity(scans.len());
    for (i, scan) in scans.iter().enumerate() {
        let report = band_report(scan, config, i)?;
        let label = file_label(&report.band);
        let files = [
            (format!("phases_{label}.csv"), phases_csv(scan)),
            (format!("rose_{label}.csv"), rose_csv(&report.rose_counts)),
            (
                format!("rose_{label}.svg"),
                emit_rose_svg(
                    &report.rose_counts,
                    report.circular_mean_rad,
                    report.resultant_length.unwrap_or(0.0),
                ),
            ),
        ];
        for (name, text) in files {
            write_text(&dir.join(&name), &text)?;
            outputs.push(name);
        }
        reports.push(report);
    }
    write_text(&dir.join("bandscan.json"), &to_json(&reports)?)?;
    outputs.push("bandscan.json".into());
    Ok(reports)
}

pub fn write_psd(
    data: &PreparedData,
    config: &RunConfig,
    outputs: &mut Vec<String>,
) -> Result<PsdEstimate> {
    ensure_dir(&config.output_dir)?;
    let psd = compute_psd(&data.ibi, config.welch)?;
    write_text(&config.output_dir.join("psd.csv"), &psd_csv(&psd))?;
    write_text(
        &config.output_dir.join("psd_params.json"),
        &to_json(&psd.params)?,
    )?;
    outputs.extend(["psd.csv".to_string(), "psd_params.json".to_string()]);
    Ok(psd)
}

pub fn write_baselines(
    data: &PreparedData,
    config: &RunConfig,
    outputs: &mut Vec<String>,
) -> Result<Vec<BaselineReport>> {
    ensure_dir(&config.output_dir)?;
    let mut kinds = vec![PredictorKind::ClockTime, PredictorKind::CircadianPhase];
    if data.sleep.is_some() {
        kinds.push(PredictorKind::SleepScore);
    }
    let reports = kinds
        .into_iter()
        .map(|k| run_baseline(data, config, k))
        .collect::<Result<Vec<_>>>()?;
    write_text(
        &config.output_dir.join("baselines.json"),
        &to_json(&reports)?,
    )?;
    outputs.push("baselines.json".into());
    Ok(reports)
}

pub fn write_manifest(config: &RunConfig, outputs: &[String]) -> Result<()> {
    let mut hashes = BTreeMap::new();
    hashes.insert("ibi".to_string(), sha256_file(&config.ibi_path)?);
    hashes.insert("events".to_string(), sha256_file(&config.events_path)?);
    if let Some(sleep) = &config.sleep_path {
        hashes.insert("sleep".to_string(), sha256_file(sleep)?);
    }
    let mut outputs = outputs.to_vec();
    outputs.push("run_manifest.json".into());
    let manifest = RunManifest {
        tool: "cyclephase".into(),
        version: VERSION.into(),
        config: config.clone(),
        input_sha256: hashes,
        outputs,
    };
    write_text(
        &config.output_dir.join("run_manifest.json"),
        &to_json(&manifest)?,
    )
}

/// Summary returned by [`run_report`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub psd: PsdEstimate,
    pub bands: Vec<BandReport>,
    pub baselines: Vec<BaselineReport>,
    pub outputs: Vec<String>,
}

/// The full analysis: PSD, band scan, baselines and manifest, all written
/// into `config.output_dir`. Output bytes depend only on the config and inputs.
pub fn run_report(config: &RunConfig) -> Result<RunSummary> {
    let data = prepare(config)?;
    let mut outputs = Vec::new();
    let psd = write_psd(&data, config, &mut outputs)?;
    let bands = write_bandscan(&data, config, &mut outputs)?;
    let baselines = write_baselines(&data, config, &mut outputs)?;
    write_manifest(config, &outputs)?;
    outputs.push("run_manifest.json".into());
    Ok(RunSummary {
        psd,
        bands,
        baselines,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_processing() {
        let c = RunConfig::new("a", "b");
        assert_eq!(c.step_seconds(), 3600);
        assert_eq!(c.ibi_max_gap_hours, 6);
        assert_eq!(c.sleep_max_gap_days, 2);
        assert_eq!(c.rose_bins, 12);
        assert_eq!(c.bands.len(), 7);
        assert_eq!((c.bands[0].low_period, c.bands[0].high_period), (0.8, 1.2));
        assert_eq!(c.filter_order, 2);
        // serde defaults agree with the constructor
        let parsed = RunConfig::from_json(r#"{"ibi_path": "a", "events_path": "b"}"#).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(
            RunConfig::from_json(r#"{"ibi_path": "a", "events_path": "b", "nope": 1}"#).is_err()
        );
    }

    #[test]
    fn rose_svg_uniform_wedges_equal() {
        let svg = emit_rose_svg(&[3; 12], None, 0.0);
        let radii: Vec<&str> = svg
            .match_indices("data-radius=\"")
            .map(|(i, m)| {
                let rest = &svg[i + m.len()..];
                &rest[..rest.find('"').unwrap()]
            })
            .collect();
        assert_eq!(radii.len(), 12);
        assert!(radii.iter().all(|r| *r == radii[0]));
        assert!(!svg.contains("resultant"));
    }

    #[test]
    fn rose_svg_single_bin_with_arrow() {
        let mut counts = vec![0; 12];
        counts[7] = 5;
        // bin 7 spans [-pi + 7 pi/6, -pi + 8 pi/6)
        let mean = -PI + 7.5 * PI / 6.0;
        let svg = emit_rose_svg(&counts, Some(mean), 1.0);
        assert_eq!(svg.matches("class=\"wedge\"").count(), 1);
        assert!(svg.contains("data-bin=\"7\""));
        assert!(svg.contains("class=\"resultant\""));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn file_labels_are_safe() {
        assert_eq!(file_label("0.8-1.2"), "0.8-1.2");
        assert_eq!(file_label("a b/c"), "a_b_c");
    }
}
