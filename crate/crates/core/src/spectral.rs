//! Welch power spectral density and dominant-period screening.

use crate::error::{Error, Result};
use crate::timeseries::DAY;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    #[default]
    Constant,
    Linear,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchParams {
    /// Samples per segment.
    pub segment_length: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap_fraction: f64,
    pub window: Window,
    pub detrend: Detrend,
}

impl WelchParams {
    /// 60 days of samples (or the whole input when shorter), 50% overlap,
    /// Hann window, constant detrend.
    pub fn default_for(n_samples: usize, step: i64) -> Self {
        let sixty_days = (60 * DAY / step) as usize;
        Self {
            segment_length: sixty_days.min(n_samples),
            overlap_fraction: 0.5,
            window: Window::Hann,
            detrend: Detrend::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 8 {
            return Err(Error::data("Welch segment_length must be at least 8"));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::data("Welch overlap_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    fn hop(&self) -> usize {
        let overlap = (self.overlap_fraction * self.segment_length as f64).floor() as usize;
        (self.segment_length - overlap).max(1)
    }
}

/// One-sided PSD; frequencies in cycles/day, power in units² per cycle/day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub params: WelchParams,
    /// Number of averaged segments.
    pub n_segments: usize,
}

impl PsdEstimate {
    pub fn bin_width(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0) - self.frequencies[0]
    }

    /// Trapezoidal integral over the full one-sided band.
    pub fn integral(&self) -> f64 {
        self.frequencies
            .windows(2)
            .zip(self.power.windows(2))
            .map(|(f, p)| 0.5 * (f[1] - f[0]) * (p[0] + p[1]))
            .sum()
    }

    /// Index of the global power maximum (ties toward lower index).
    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.power.iter().enumerate() {
            if p > self.power[best] {
                best = i;
            }
        }
        best
    }
}

fn window_coefficients(window: Window, n: usize) -> Vec<f64> {
    match window {
        // periodic Hann, the usual choice for spectral averaging
        Window::Hann => (0..n)
            .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
            .collect(),
    }
}

fn detrend_in_place(values: &mut [f64], detrend: Detrend) {
    let n = values.len() as f64;
    match detrend {
        Detrend::None => {}
        Detrend::Constant => {
            let mean = values.iter().sum::<f64>() / n;
            values.iter_mut().for_each(|v| *v -= mean);
        }
        Detrend::Linear => {
            let x_mean = (n - 1.0) / 2.0;
            let y_mean = values.iter().sum::<f64>() / n;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (i, &y) in values.iter().enumerate() {
                let dx = i as f64 - x_mean;
                sxy += dx * (y - y_mean);
                sxx += dx * dx;
            }
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            for (i, v) in values.iter_mut().enumerate() {
                *v -= y_mean + slope * (i as f64 - x_mean);
            }
        }
    }
}

/// Welch estimate: averaged modified periodograms of windowed, overlapping,
/// detrended segments, scaled as a one-sided density.
pub fn welch_psd(values: &[f64], step: i64, params: &WelchParams) -> Result<PsdEstimate> {
    params.validate()?;
    if step <= 0 {
        return Err(Error::data("sample step must be positive"));
    }
    let seg_len = params.segment_length;
    if values.len() < seg_len {
        return Err(Error::data(format!(
            "input of {} samples is shorter than one Welch segment ({seg_len})",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("Welch input contains non-finite values"));
    }

    let fs = DAY as f64 / step as f64; // samples per day
    let window = window_coefficients(params.window, seg_len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let n_freqs = seg_len / 2 + 1;
    let hop = params.hop();
    let n_segments = (values.len() - seg_len) / hop + 1;

    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let mut buffer = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut scratch = vec![0.0; seg_len];
    let mut accum = vec![0.0; n_freqs];
    for s in 0..n_segments {
        let offset = s * hop;
        scratch.copy_from_slice(&values[offset..offset + seg_len]);
        detrend_in_place(&mut scratch, params.detrend);
        for ((b, x), w) in buffer.iter_mut().zip(&scratch).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buffer);
        for (a, b) in accum.iter_mut().zip(&buffer) {
            *a += b.norm_sqr();
        }
    }

    let scale = 1.0 / (fs * window_power * n_segments as f64);
    let nyquist_bin = seg_len.is_multiple_of(2).then_some(seg_len / 2);
    let power = accum
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || Some(k) == nyquist_bin {
                1.0
            } else {
                2.0
            };
            p * scale * one_sided
        })
        .collect();
    let frequencies = (0..n_freqs)
        .map(|k| k as f64 * fs / seg_len as f64)
        .collect();
    Ok(PsdEstimate {
        frequencies,
        power,
        params: *params,
        n_segments,
    })
}

/// Period (days) and power of the strongest bin whose period lies in
/// `[low_days, high_days]`; ties go to the shorter period.
pub fn dominant_period(psd: &PsdEstimate, period_range: (f64, f64)) -> Result<(f64, f64)> {
    let (low, high) = period_range;
    let mut best: Option<(f64, f64)> = None;
    for (&f, &p) in psd.frequencies.iter().zip(&psd.power) {
        if f <= 0.0 {
            continue;
        }
        let period = 1.0 / f;
        if period < low || period > high {
            continue;
        }
        match best {
            Some((bp, bpow)) if p < bpow || (p == bpow && period >= bp) => {}
            _ => best = Some((period, p)),
        }
    }
    best.ok_or_else(|| {
        Error::data(format!(
            "period range {low}..{high} days contains no frequency bin"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::HOUR;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Direct O(n²) DFT modified periodogram, the independent oracle.
    fn direct_periodogram(x: &[f64], fs: f64) -> Vec<f64> {
        let n = x.len();
        let w = window_coefficients(Window::Hann, n);
        let u: f64 = w.iter().map(|v| v * v).sum();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, (&xj, &wj)) in x.iter().zip(&w).enumerate() {
                    let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                    re += xj * wj * ang.cos();
                    im += xj * wj * ang.sin();
                }
                let scale = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                    1.0
                } else {
                    2.0
                };
                scale * (re * re + im * im) / (fs * u)
            })
            .collect()
    }

    fn sinusoid(days: usize, period_days: f64) -> Vec<f64> {
        (0..days * 24)
            .map(|i| (2.0 * PI * i as f64 / (24.0 * period_days)).sin())
            .collect()
    }

    #[test]
    fn zero_input_zero_power() {
        let x = vec![0.0; 500];
        let psd = welch_psd(&x, HOUR, &WelchParams::default_for(x.len(), HOUR)).unwrap();
        assert!(psd.power.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn defaults_cap_segment_at_sixty_days() {
        assert_eq!(
            WelchParams::default_for(176 * 24, HOUR).segment_length,
            1440
        );
        assert_eq!(WelchParams::default_for(100, HOUR).segment_length, 100);
    }

    #[test]
    fn matches_direct_periodogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..301).map(|_| StandardNormal.sample(&mut rng)).collect();
        let params = WelchParams {
            segment_length: x.len(),
            overlap_fraction: 0.0,
            window: Window::Hann,
            detrend: Detrend::None,
        };
        let psd = welch_psd(&x, HOUR, &params).unwrap();
        let oracle = direct_periodogram(&x, 24.0);
        assert_eq!(psd.power.len(), oracle.len());
        for (a, b) in psd.power.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn sinusoid_peak_near_one_day() {
        let x = sinusoid(176, 1.0);
        let psd = welch_psd(&x, HOUR, &WelchParams::default_for(x.len(), HOUR)).unwrap();
        let peak = psd.frequencies[psd.peak_index()];
        assert!((peak - 1.0).abs() <= psd.bin_width());
        let (period, _) = dominant_period(&psd, (0.5, 2.0)).unwrap();
        assert!((period - 1.0).abs() < 0.02);
    }

    #[test]
    fn restricted_range_returns_secondary_maximum() {
        let x: Vec<f64> = sinusoid(176, 1.0)
            .iter()
            .zip(sinusoid(176, 7.5))
            .map(|(a, b)| a + 0.3 * b)
            .collect();
        let psd = welch_psd(&x, HOUR, &WelchParams::default_for(x.len(), HOUR)).unwrap();
        let (period, _) = dominant_period(&psd, (2.0, 14.0)).unwrap();
        assert!((period - 7.5).abs() < 1.0, "{period}");
        assert!(dominant_period(&psd, (1000.0, 2000.0)).is_err());
    }

    #[test]
    fn white_noise_integrates_to_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        let runs = 20;
        for _ in 0..runs {
            let x: Vec<f64> = (0..176 * 24)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let psd = welch_psd(&x, HOUR, &WelchParams::default_for(x.len(), HOUR)).unwrap();
            total += psd.integral();
        }
        let mean = total / runs as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn linear_detrend_removes_ramp() {
        let x: Vec<f64> = (0..64).map(|i| 3.0 + 0.5 * i as f64).collect();
        let params = WelchParams {
            segment_length: 64,
            overlap_fraction: 0.0,
            window: Window::Hann,
            detrend: Detrend::Linear,
        };
        let psd = welch_psd(&x, HOUR, &params).unwrap();
        assert!(psd.power.iter().all(|&p| p < 1e-20));
    }

    #[test]
    fn rejects_short_input_and_bad_params() {
        let params = WelchParams::default_for(100, HOUR);
        assert!(welch_psd(&[0.0; 50], HOUR, &params).is_err());
        let bad = WelchParams {
            overlap_fraction: 1.0,
            ..params
        };
        assert!(welch_psd(&[0.0; 100], HOUR, &bad).is_err());
    }
}
