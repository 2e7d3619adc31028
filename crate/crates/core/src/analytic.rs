//! Analytic signal, instantaneous phase and amplitude.

use crate::error::{Error, Result};
use crate::filtering::{design_bandpass, eligible_segments, filtfilt, BandSpec};
use crate::timeseries::{contiguous_segments, RegularSeries, Timestamp, DAY};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Amplitudes below this fraction of the segment maximum get a low-confidence phase.
pub const LOW_CONFIDENCE_RATIO: f64 = 1e-9;

/// Instantaneous phase and amplitude over one contiguous segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSeries {
    pub start: Timestamp,
    pub step: i64,
    /// Radians in `[-pi, pi]`.
    pub phase: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub band: BandSpec,
    /// Samples within half the slowest band period of either segment end.
    pub edge: Vec<bool>,
    pub low_confidence: Vec<bool>,
}

impl AnalyticSeries {
    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn time_at(&self, index: usize) -> Timestamp {
        self.start + index as i64 * self.step
    }

    pub fn end(&self) -> Timestamp {
        self.time_at(self.len())
    }
}

/// `x + i H{x}` via the frequency domain: negative frequencies zeroed,
/// positive ones doubled, DC and Nyquist kept.
pub fn analytic_signal(values: &[f64]) -> Vec<Complex64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let weight = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= weight;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv_n);
    buf
}

/// Phase and amplitude of the analytic signal of band-limited `values`.
pub fn hilbert_analytic(
    values: &[f64],
    start: Timestamp,
    step: i64,
    band: &BandSpec,
) -> Result<AnalyticSeries> {
    if values.is_empty() {
        return Err(Error::data("analytic signal of an empty segment"));
    }
    let z = analytic_signal(values);
    let amplitude: Vec<f64> = z.iter().map(|c| c.norm()).collect();
    let max_amp = amplitude.iter().copied().fold(0.0, f64::max);
    let floor = LOW_CONFIDENCE_RATIO * max_amp;
    let mut low_confidence = Vec::with_capacity(z.len());
    let phase = z
        .iter()
        .zip(&amplitude)
        .map(|(c, &a)| {
            low_confidence.push(a <= floor);
            if a == 0.0 {
                0.0
            } else {
                c.arg()
            }
        })
        .collect();

    let n = values.len();
    let edge_len = ((band.high_period * DAY as f64 / 2.0) / step as f64).ceil() as usize;
    let edge = (0..n).map(|i| i < edge_len || i + edge_len >= n).collect();
    Ok(AnalyticSeries {
        start,
        step,
        phase,
        amplitude,
        band: band.clone(),
        edge,
        low_confidence,
    })
}

/// Band-limited phase of every eligible contiguous segment of `series`:
/// each segment is mean-centred, zero-phase filtered, then passed through
/// [`hilbert_analytic`].
pub fn band_phases(
    series: &RegularSeries,
    band: &BandSpec,
    order: usize,
) -> Result<Vec<AnalyticSeries>> {
    let coeffs = design_bandpass(band, series.step(), order)?;
    let segments = eligible_segments(&contiguous_segments(series), band, series.step());
    segments
        .iter()
        .map(|seg| {
            let mut values = seg.values(series);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.iter_mut().for_each(|v| *v -= mean);
            let filtered = filtfilt(&coeffs, &values)?;
            hilbert_analytic(&filtered, seg.start_time(series), series.step(), band)
        })
        .collect()
}
