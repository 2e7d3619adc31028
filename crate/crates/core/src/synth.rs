//! Synthetic rhythms and phase-locked events with known ground truth.

use crate::analytic::AnalyticSeries;
use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::filtering::BandSpec;
use crate::timeseries::{contiguous_segments, RegularSeries, Timestamp, DAY, HOUR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;

const SERIES_STREAM: u64 = 0;
const EVENT_STREAM: u64 = 1;
const SLEEP_STREAM: u64 = 2;
const MAX_ATTEMPTS: usize = 50_000_000;

/// `amplitude * cos(2 pi t / period + initial_phase)`, with `t` in days from the series start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub period_days: f64,
    pub amplitude: f64,
    pub initial_phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingSpan {
    pub start_day: f64,
    pub length_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub start: Timestamp,
    pub duration_days: f64,
    /// Grid step in seconds.
    pub step: i64,
    pub components: Vec<Component>,
    pub noise_sd: f64,
    #[serde(default)]
    pub missing_spec: Vec<MissingSpan>,
    pub event_count: usize,
    /// Component whose phase the events lock to; `None` draws events uniformly in time.
    pub lock_band_index: Option<usize>,
    pub vonmises_mu: f64,
    pub vonmises_kappa: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 176 days of hourly data with a unit circadian rhythm, 29 events.
    fn default() -> Self {
        Self {
            start: 1_704_067_200, // 2024-01-01T00:00:00Z
            duration_days: 176.0,
            step: HOUR,
            components: vec![Component {
                period_days: 1.0,
                amplitude: 1.0,
                initial_phase: 0.0,
            }],
            noise_sd: 0.5,
            missing_spec: Vec::new(),
            event_count: 29,
            lock_band_index: Some(0),
            vonmises_mu: 0.0,
            vonmises_kappa: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_days > 0.0) {
            return Err(Error::data("synthetic duration must be positive"));
        }
        if self.step <= 0 {
            return Err(Error::data("synthetic step must be positive"));
        }
        if !(self.vonmises_kappa >= 0.0) {
            return Err(Error::data("von Mises kappa must be non-negative"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::data("noise_sd must be non-negative"));
        }
        if let Some(i) = self.lock_band_index {
            if i >= self.components.len() {
                return Err(Error::data(format!(
                    "lock_band_index {i} names no component"
                )));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        ((self.duration_days * DAY as f64) / self.step as f64)
            .round()
            .max(1.0) as usize
    }

    fn days_at(&self, index: usize) -> f64 {
        index as f64 * self.step as f64 / DAY as f64
    }

    fn missing_mask(&self) -> Vec<bool> {
        let n = self.n_samples();
        let mut mask = vec![false; n];
        for span in &self.missing_spec {
            let first = (span.start_day * DAY as f64 / self.step as f64).round() as i64;
            let len = (span.length_hours * HOUR as f64 / self.step as f64).round() as i64;
            for i in first.max(0)..(first + len).min(n as i64) {
                mask[i as usize] = true;
            }
        }
        mask
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Sum of the configured components plus Gaussian noise, with the missing
/// spans blanked. Bit-identical for a given config.
pub fn gen_series(config: &SynthConfig) -> Result<RegularSeries> {
    config.validate()?;
    let mut rng = config.rng(SERIES_STREAM);
    let mask = config.missing_mask();
    let values = (0..config.n_samples())
        .map(|i| {
            let t = config.days_at(i);
            let signal: f64 = config
                .components
                .iter()
                .map(|c| c.amplitude * (2.0 * PI * t / c.period_days + c.initial_phase).cos())
                .sum();
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * config.noise_sd;
            (!mask[i]).then_some(signal + noise)
        })
        .collect();
    RegularSeries::new(config.start, config.step, values, "synthetic")
}

/// Exact phase and amplitude of one component over the covered samples.
pub fn truth_phase(config: &SynthConfig, component: usize) -> Result<Vec<AnalyticSeries>> {
    config.validate()?;
    let c = config
        .components
        .get(component)
        .ok_or_else(|| Error::data(format!("no component {component}")))?;
    let band = BandSpec::new(0.9 * c.period_days, 1.1 * c.period_days, "truth")?;
    let mask = config.missing_mask();
    let coverage = RegularSeries::new(
        config.start,
        config.step,
        mask.iter().map(|&m| (!m).then_some(0.0)).collect(),
        "mask",
    )?;
    Ok(contiguous_segments(&coverage)
        .into_iter()
        .map(|seg| {
            let idx = seg.start_index..seg.end_index();
            let phase = idx
                .clone()
                .map(|i| {
                    let raw = 2.0 * PI * config.days_at(i) / c.period_days + c.initial_phase;
                    (raw + PI).rem_euclid(2.0 * PI) - PI
                })
                .collect();
            AnalyticSeries {
                start: seg.start_time(&coverage),
                step: config.step,
                phase,
                amplitude: vec![c.amplitude.abs(); seg.length],
                band: band.clone(),
                edge: vec![false; seg.length],
                low_confidence: vec![false; seg.length],
            }
        })
        .collect())
}

/// Draws `event_count` distinct samples by rejection: a uniformly chosen
/// covered sample is accepted with probability `exp(kappa (cos(phi - mu) - 1))`,
/// so accepted phases follow a von Mises law on the grid. Each event lands
/// up to half a step after its sample, so nearest-sample mapping recovers it.
pub fn gen_locked_events(config: &SynthConfig, truth: &[AnalyticSeries]) -> Result<EventSet> {
    config.validate()?;
    if config.event_count == 0 {
        return Err(Error::data("event_count must be at least 1"));
    }
    let candidates: Vec<(Timestamp, f64)> = truth
        .iter()
        .flat_map(|s| (0..s.len()).map(move |i| (s.time_at(i), s.phase[i])))
        .collect();
    if candidates.is_empty() {
        return Err(Error::data("no covered samples to place events on"));
    }
    if candidates.len() < config.event_count {
        return Err(Error::data("more events requested than covered samples"));
    }
    let mut rng = config.rng(EVENT_STREAM);
    let kappa = config.vonmises_kappa;
    let max_jitter = (config.step / 2 - 1).max(0);
    let mut chosen = BTreeSet::new();
    let mut attempts = 0;
    while chosen.len() < config.event_count {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::numerical(
                "rejection sampling for events did not finish",
            ));
        }
        let (t, phase) = candidates[rng.gen_range(0..candidates.len())];
        let accept = (kappa * ((phase - config.vonmises_mu).cos() - 1.0)).exp();
        if rng.gen::<f64>() < accept && !chosen.contains(&t) {
            chosen.insert(t);
        }
    }
    let onsets = chosen
        .into_iter()
        .map(|t| t + rng.gen_range(0..=max_jitter))
        .collect();
    EventSet::new(onsets, "synthetic")
}

/// Events for `config`: locked to `lock_band_index` when set, otherwise uniform
/// over the covered samples.
pub fn gen_events(config: &SynthConfig) -> Result<EventSet> {
    match config.lock_band_index {
        Some(i) => gen_locked_events(config, &truth_phase(config, i)?),
        None => {
            // uniform: any component's coverage will do, kappa forced to zero
            let uniform = SynthConfig {
                vonmises_kappa: 0.0,
                components: vec![Component {
                    period_days: 1.0,
                    amplitude: 0.0,
                    initial_phase: 0.0,
                }],
                lock_band_index: Some(0),
                ..config.clone()
            };
            gen_locked_events(&uniform, &truth_phase(&uniform, 0)?)
        }
    }
}

/// Daily standard-normal scores unrelated to anything else, for a
/// no-signal sleep predictor.
pub fn gen_sleep_series(config: &SynthConfig) -> Result<RegularSeries> {
    config.validate()?;
    let mut rng = config.rng(SLEEP_STREAM);
    let start = config.start.div_euclid(DAY) * DAY;
    let n_days = (config.duration_days.ceil() as usize).max(1);
    let values = (0..n_days)
        .map(|_| Some(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    RegularSeries::new(start, DAY, values, "score")
}
