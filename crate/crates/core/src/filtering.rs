//! Butterworth bandpass design and zero-phase forward-backward filtering.
//!
//! The filter is designed from the analog lowpass prototype, moved to the
//! requested band with the lowpass-to-bandpass substitution, and mapped to
//! the z-plane with a pre-warped bilinear transform. It is always run as a
//! cascade of second-order sections: at hourly sampling the multi-day bands
//! have normalized edges near 1e-3 cycles/sample, where an expanded
//! direct-form polynomial loses most of its precision.

use crate::error::{Error, Result};
use crate::timeseries::{Segment, DAY};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A band of oscillation periods, in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_period: f64,
    pub high_period: f64,
    pub label: String,
}

impl BandSpec {
    pub fn new(low_period: f64, high_period: f64, label: impl Into<String>) -> Result<Self> {
        if !(low_period > 0.0 && low_period < high_period && high_period.is_finite()) {
            return Err(Error::data(format!(
                "invalid band {low_period}..{high_period}: need 0 < low < high"
            )));
        }
        Ok(Self {
            low_period,
            high_period,
            label: label.into(),
        })
    }

    /// Parses `lo:hi` (days); the label becomes `lo-hi`.
    pub fn parse(text: &str) -> Result<Self> {
        let (lo, hi) = text
            .split_once(':')
            .ok_or_else(|| Error::data(format!("band '{text}' is not of the form lo:hi")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::data(format!("band '{text}': '{s}' is not a number")))
        };
        Self::new(
            parse(lo)?,
            parse(hi)?,
            format!("{}-{}", lo.trim(), hi.trim()),
        )
    }

    /// The circadian band followed by the six exploratory multi-day bands.
    pub fn standard_scan() -> Vec<BandSpec> {
        [
            (0.8, 1.2, "0.8-1.2"),
            (2.0, 5.0, "2-5"),
            (3.0, 7.0, "3-7"),
            (5.0, 9.0, "5-9"),
            (7.0, 14.0, "7-14"),
            (10.0, 20.0, "10-20"),
            (14.0, 28.0, "14-28"),
        ]
        .into_iter()
        .map(|(lo, hi, label)| BandSpec::new(lo, hi, label).unwrap())
        .collect()
    }

    /// Whether the band contains the 1-day period.
    pub fn is_circadian(&self) -> bool {
        self.low_period <= 1.0 && 1.0 <= self.high_period
    }

    /// Lower and upper corner frequencies in cycles/day.
    pub fn corner_frequencies(&self) -> (f64, f64) {
        (1.0 / self.high_period, 1.0 / self.low_period)
    }
}

/// One second-order section `b0 + b1 z^-1 + b2 z^-2 / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Direct-form II transposed pass over `values`, starting from `state`.
    fn run(&self, values: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in values.iter_mut() {
            let x = *v;
            let y = b0 * x + state[0];
            state[0] = b1 * x - a1 * y + state[1];
            state[1] = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// A designed bandpass filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IirCoefficients {
    /// Expanded numerator, for inspection and testing only.
    pub numerator: Vec<f64>,
    /// Expanded denominator with `denominator[0] == 1`.
    pub denominator: Vec<f64>,
    pub order: usize,
    pub band: BandSpec,
    /// Sample spacing in seconds.
    pub sample_step: i64,
    pub sections: Vec<Biquad>,
    #[serde(skip)]
    pub poles: Vec<Complex64>,
}

impl IirCoefficients {
    /// Samples per day.
    pub fn sample_rate(&self) -> f64 {
        DAY as f64 / self.sample_step as f64
    }

    /// Complex response of the cascade at `freq` cycles/day.
    pub fn response(&self, freq: f64) -> Complex64 {
        let omega = 2.0 * PI * freq / self.sample_rate();
        let z_inv = Complex64::from_polar(1.0, -omega);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude(&self, freq: f64) -> f64 {
        self.response(freq).norm()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Total number of padding samples added at each end by [`filtfilt`].
    pub fn pad_length(&self) -> usize {
        3 * (2 * self.order)
    }

    /// Steady-state initial conditions of each section for a unit step input.
    fn step_initial_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let gain = s.dc_gain();
                let state = [scale * (gain - s.b[0]), scale * (s.b[2] - s.a[2] * gain)];
                scale *= gain;
                state
            })
            .collect()
    }

    fn run_cascade(&self, values: &mut [f64]) {
        let x0 = values[0];
        for (section, zi) in self.sections.iter().zip(self.step_initial_state()) {
            // each section sees a constant input x0 * (product of earlier gains)
            section.run(values, [zi[0] * x0, zi[1] * x0]);
        }
    }
}

fn polymul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Designs a digital Butterworth bandpass of the given prototype order whose
/// -3 dB corners sit at `1/high_period` and `1/low_period` cycles/day.
pub fn design_bandpass(band: &BandSpec, sample_step: i64, order: usize) -> Result<IirCoefficients> {
    if !(1..=4).contains(&order) {
        return Err(Error::data(format!("filter order {order} outside 1..=4")));
    }
    if sample_step <= 0 {
        return Err(Error::data("sample step must be positive"));
    }
    let fs = DAY as f64 / sample_step as f64;
    let (f_lo, f_hi) = band.corner_frequencies();
    if f_hi >= fs / 2.0 {
        return Err(Error::data(format!(
            "band {} has an edge at or above Nyquist ({} cycles/day)",
            band.label,
            fs / 2.0
        )));
    }

    // pre-warped analog corners (rad/day)
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (w_lo, w_hi) = (warp(f_lo), warp(f_hi));
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let mut analog_poles = Vec::with_capacity(2 * order);
    for m in 0..order {
        let theta = PI * (2 * m + 1 + order) as f64 / (2 * order) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        let half = proto * (bw / 2.0);
        let root = (half * half - w0_sq).sqrt();
        analog_poles.push(half + root);
        analog_poles.push(half - root);
    }

    // bilinear map; zeros at s = 0 land on z = 1, zeros at infinity on z = -1
    let k2 = 2.0 * fs;
    let digital_poles: Vec<Complex64> = analog_poles.iter().map(|&s| (k2 + s) / (k2 - s)).collect();
    let denom_prod: Complex64 = analog_poles.iter().map(|&s| k2 - s).product();
    let gain = (bw.powi(order as i32) * k2.powi(order as i32) / denom_prod).re;

    let pole_pairs = pair_conjugates(&digital_poles)?;
    let section_gain = gain.abs().powf(1.0 / order as f64);
    let sections: Vec<Biquad> = pole_pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, q))| {
            let g = if i == 0 {
                section_gain * gain.signum()
            } else {
                section_gain
            };
            Biquad {
                b: [g, 0.0, -g],
                a: [1.0, -(p + q).re, (p * q).re],
            }
        })
        .collect();

    let max_radius = digital_poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(max_radius < 1.0) {
        return Err(Error::numerical(format!(
            "band {} produced an unstable filter (pole radius {max_radius})",
            band.label
        )));
    }

    let (numerator, denominator) = sections
        .iter()
        .fold((vec![1.0], vec![1.0]), |(num, den), s| {
            (polymul(&num, &s.b), polymul(&den, &s.a))
        });
    Ok(IirCoefficients {
        numerator,
        denominator,
        order,
        band: band.clone(),
        sample_step,
        sections,
        poles: digital_poles,
    })
}

/// Groups poles into conjugate pairs; real poles are paired with each other.
fn pair_conjugates(poles: &[Complex64]) -> Result<Vec<(Complex64, Complex64)>> {
    let tol = 1e-12;
    let mut pairs = Vec::new();
    let mut reals: Vec<Complex64> = Vec::new();
    for &p in poles {
        if p.im.abs() <= tol * p.norm().max(1.0) {
            reals.push(Complex64::new(p.re, 0.0));
        } else if p.im > 0.0 {
            pairs.push((p, p.conj()));
        }
    }
    reals.sort_by(|a, b| a.re.total_cmp(&b.re));
    if reals.len() % 2 == 1 || pairs.len() * 2 + reals.len() != poles.len() {
        return Err(Error::numerical("poles do not form conjugate pairs"));
    }
    pairs.extend(reals.chunks(2).map(|c| (c[0], c[1])));
    Ok(pairs)
}

/// Zero-phase filtering: odd-reflection padding of `3 * 2 * order` samples at
/// each end, a forward pass, a backward pass, and the padding stripped again.
/// Each pass starts from the steady-state response to its first input sample.
pub fn filtfilt(coeffs: &IirCoefficients, values: &[f64]) -> Result<Vec<f64>> {
    let min_len = 3 * (2 * coeffs.order + 1);
    if values.len() <= min_len {
        return Err(Error::data(format!(
            "segment too short for padding ({} samples, need more than {min_len})",
            values.len()
        )));
    }
    let pad = coeffs.pad_length();
    let n = values.len();
    let first = values[0];
    let last = values[n - 1];

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * first - values[k]));
    ext.extend_from_slice(values);
    ext.extend((1..=pad).map(|k| 2.0 * last - values[n - 1 - k]));

    coeffs.run_cascade(&mut ext);
    ext.reverse();
    coeffs.run_cascade(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Keeps segments spanning at least three cycles of the band's slowest period.
pub fn eligible_segments(segments: &[Segment], band: &BandSpec, step: i64) -> Vec<Segment> {
    let min_duration = 3.0 * band.high_period * DAY as f64;
    segments
        .iter()
        .filter(|s| s.duration(step) as f64 >= min_duration)
        .copied()
        .collect()
}
