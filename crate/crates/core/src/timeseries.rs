//! Irregular and gridded time series.
//!
//! Timestamps are whole seconds since the Unix epoch (UTC). A [`RegularSeries`]
//! stores one optional value per grid slot so missingness stays explicit all
//! the way through the pipeline.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const MINUTE: i64 = 60;
pub const HOUR: i64 = 3600;
pub const DAY: i64 = 86_400;

/// Time-ordered samples at arbitrary instants.
#[derive(Debug, Clone, PartialEq)]
pub struct IrregularSeries {
    samples: Vec<(Timestamp, f64)>,
    unit: String,
}

impl IrregularSeries {
    /// Builds a series, rejecting non-increasing timestamps and non-finite values.
    pub fn new(samples: Vec<(Timestamp, f64)>, unit: impl Into<String>) -> Result<Self> {
        for (i, &(t, v)) in samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(format!("non-finite value at sample {i}")));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::data(format!(
                    "timestamps not strictly increasing at sample {i}"
                )));
            }
        }
        Ok(Self {
            samples,
            unit: unit.into(),
        })
    }

    pub fn samples(&self) -> &[(Timestamp, f64)] {
        &self.samples
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A uniformly gridded series; slot `i` sits at `start + i * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularSeries {
    start: Timestamp,
    step: i64,
    values: Vec<Option<f64>>,
    unit: String,
}

impl RegularSeries {
    pub fn new(
        start: Timestamp,
        step: i64,
        values: Vec<Option<f64>>,
        unit: impl Into<String>,
    ) -> Result<Self> {
        if step <= 0 {
            return Err(Error::data("grid step must be positive"));
        }
        if values.is_empty() {
            return Err(Error::data("regular series must have at least one slot"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite value in regular series"));
        }
        Ok(Self {
            start,
            step,
            values,
            unit: unit.into(),
        })
    }

    /// Convenience constructor for a fully present series.
    pub fn from_values(
        start: Timestamp,
        step: i64,
        values: &[f64],
        unit: impl Into<String>,
    ) -> Result<Self> {
        Self::new(
            start,
            step,
            values.iter().copied().map(Some).collect(),
            unit,
        )
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> Timestamp {
        self.start + index as i64 * self.step
    }

    /// Timestamp one step past the last slot.
    pub fn end(&self) -> Timestamp {
        self.time_at(self.values.len())
    }

    /// Index of the slot whose interval `[t, t + step)` contains `time`.
    pub fn slot_containing(&self, time: Timestamp) -> Option<usize> {
        if time < self.start {
            return None;
        }
        let idx = ((time - self.start) / self.step) as usize;
        (idx < self.values.len()).then_some(idx)
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    fn with_values(&self, values: Vec<Option<f64>>) -> Self {
        Self {
            start: self.start,
            step: self.step,
            values,
            unit: self.unit.clone(),
        }
    }
}

/// A maximal run of present values inside a [`RegularSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start_index: usize,
    pub length: usize,
}

impl Segment {
    pub fn end_index(&self) -> usize {
        self.start_index + self.length
    }

    /// Values covered by the segment. Panics if the segment does not belong to `parent`.
    pub fn values(&self, parent: &RegularSeries) -> Vec<f64> {
        parent.values[self.start_index..self.end_index()]
            .iter()
            .map(|v| v.expect("segment covers a missing value"))
            .collect()
    }

    pub fn start_time(&self, parent: &RegularSeries) -> Timestamp {
        parent.time_at(self.start_index)
    }

    /// Duration in seconds.
    pub fn duration(&self, step: i64) -> i64 {
        self.length as i64 * step
    }
}

/// Within-bin aggregation used by [`resample_to_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
}

impl Aggregator {
    fn apply(self, bin: &mut [f64]) -> f64 {
        match self {
            Aggregator::Mean => bin.iter().sum::<f64>() / bin.len() as f64,
            Aggregator::Median => {
                bin.sort_by(f64::total_cmp);
                let mid = bin.len() / 2;
                if bin.len().is_multiple_of(2) {
                    0.5 * (bin[mid - 1] + bin[mid])
                } else {
                    bin[mid]
                }
            }
        }
    }
}

/// Bins samples onto a grid whose origin is the first timestamp truncated
/// down to a multiple of `step`. Empty bins are missing.
pub fn resample_to_grid(
    input: &IrregularSeries,
    step: i64,
    aggregator: Aggregator,
) -> Result<RegularSeries> {
    resample_to_grid_aligned(input, step, aggregator, 0)
}

/// Like [`resample_to_grid`], but bin boundaries fall on multiples of `step`
/// in the clock shifted by `offset_seconds` (e.g. local midnight for daily bins).
pub fn resample_to_grid_aligned(
    input: &IrregularSeries,
    step: i64,
    aggregator: Aggregator,
    offset_seconds: i64,
) -> Result<RegularSeries> {
    if input.is_empty() {
        return Err(Error::data("no samples"));
    }
    if step <= 0 {
        return Err(Error::data("grid step must be positive"));
    }
    let first = input.samples[0].0;
    let last = input.samples[input.len() - 1].0;
    let start = (first + offset_seconds).div_euclid(step) * step - offset_seconds;
    let n_bins = ((last - start) / step + 1) as usize;

    let mut values = Vec::with_capacity(n_bins);
    let mut bin: Vec<f64> = Vec::new();
    let mut samples = input.samples.iter().peekable();
    for i in 0..n_bins {
        let bin_end = start + (i as i64 + 1) * step;
        bin.clear();
        while let Some(&&(t, v)) = samples.peek() {
            if t >= bin_end {
                break;
            }
            bin.push(v);
            samples.next();
        }
        values.push((!bin.is_empty()).then(|| aggregator.apply(&mut bin)));
    }
    RegularSeries::new(start, step, values, input.unit.clone())
}

/// Fills interior runs of at most `max_gap` missing slots by linear
/// interpolation between the bounding present values. Runs touching either
/// end of the series are left missing.
pub fn interpolate_gaps(series: &RegularSeries, max_gap: usize) -> RegularSeries {
    let mut values = series.values.clone();
    let mut i = 0;
    while i < values.len() {
        if values[i].is_some() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < values.len() && values[i].is_none() {
            i += 1;
        }
        let run_len = i - run_start;
        if run_start == 0 || i == values.len() || run_len > max_gap {
            continue;
        }
        let left = values[run_start - 1].unwrap();
        let right = values[i].unwrap();
        let span = (run_len + 1) as f64;
        for k in 0..run_len {
            let frac = (k + 1) as f64 / span;
            values[run_start + k] = Some(left + frac * (right - left));
        }
    }
    series.with_values(values)
}

/// Mean and population standard deviation of the present values.
pub fn present_mean_std(series: &RegularSeries) -> Result<(f64, f64)> {
    let present: Vec<f64> = series.values.iter().flatten().copied().collect();
    if present.len() < 2 {
        return Err(Error::data("z-score needs at least 2 present values"));
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Standardizes present values with one mean and population standard
/// deviation computed over the whole series.
pub fn zscore(series: &RegularSeries) -> Result<RegularSeries> {
    let (mean, sd) = present_mean_std(series)?;
    if !(sd > 0.0) || sd <= f64::EPSILON * mean.abs() {
        return Err(Error::data("constant signal"));
    }
    let values = series
        .values
        .iter()
        .map(|v| v.map(|x| (x - mean) / sd))
        .collect();
    Ok(series.with_values(values))
}

/// Moves each daily value `shift_days` slots later. Vacated slots become
/// missing; values pushed past either end are dropped.
pub fn shift_daily(series: &RegularSeries, shift_days: i64) -> Result<RegularSeries> {
    if series.step != DAY {
        return Err(Error::data(format!(
            "shift_daily requires a daily step, got {} s",
            series.step
        )));
    }
    let n = series.len() as i64;
    let values = (0..n)
        .map(|i| {
            let src = i - shift_days;
            if (0..n).contains(&src) {
                series.values[src as usize]
            } else {
                None
            }
        })
        .collect();
    Ok(series.with_values(values))
}

/// Maximal runs of present values, in temporal order.
pub fn contiguous_segments(series: &RegularSeries) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut run_start = None;
    for (i, v) in series.values.iter().enumerate() {
        match (v.is_some(), run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                out.push(Segment {
                    start_index: s,
                    length: i - s,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        out.push(Segment {
            start_index: s,
            length: series.len() - s,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: Vec<Option<f64>>) -> RegularSeries {
        RegularSeries::new(0, HOUR, values, "ms").unwrap()
    }

    #[test]
    fn grid_aligned_input_is_identity() {
        let t0 = 1_700_000_000 / HOUR * HOUR;
        let samples: Vec<_> = (0..48).map(|i| (t0 + i * HOUR, 700.0 + i as f64)).collect();
        let input = IrregularSeries::new(samples.clone(), "ms").unwrap();
        let grid = resample_to_grid(&input, HOUR, Aggregator::Mean).unwrap();
        assert_eq!(grid.start(), t0);
        assert_eq!(grid.len(), 48);
        for (i, (_, v)) in samples.iter().enumerate() {
            assert_eq!(grid.values()[i], Some(*v));
        }
    }

    #[test]
    fn bin_mean_of_two_samples() {
        let t0 = 1_700_000_000 / HOUR * HOUR;
        let input =
            IrregularSeries::new(vec![(t0 + 600, 800.0), (t0 + 2400, 820.0)], "ms").unwrap();
        let grid = resample_to_grid(&input, HOUR, Aggregator::Mean).unwrap();
        assert_eq!(grid.values(), &[Some(810.0)]);
    }

    #[test]
    fn median_aggregator_and_empty_bins() {
        let input = IrregularSeries::new(
            vec![(0, 1.0), (10, 5.0), (20, 2.0), (2 * HOUR + 5, 4.0)],
            "ms",
        )
        .unwrap();
        let grid = resample_to_grid(&input, HOUR, Aggregator::Median).unwrap();
        assert_eq!(grid.values(), &[Some(2.0), None, Some(4.0)]);
    }

    #[test]
    fn hourly_grid_has_24_slots_per_day() {
        let samples: Vec<_> = (0..(2 * 24 * 60))
            .map(|m| (m as i64 * MINUTE + 17, 800.0))
            .collect();
        let input = IrregularSeries::new(samples, "ms").unwrap();
        let grid = resample_to_grid(&input, HOUR, Aggregator::Mean).unwrap();
        assert_eq!(grid.len(), 48);
        assert_eq!(grid.present_count(), 48);
    }

    #[test]
    fn aligned_grid_uses_offset_origin() {
        // UTC+2: local midnight is 22:00 UTC of the previous day
        let offset = 2 * HOUR;
        let input = IrregularSeries::new(vec![(DAY + HOUR, 1.0)], "score").unwrap();
        let grid = resample_to_grid_aligned(&input, DAY, Aggregator::Mean, offset).unwrap();
        assert_eq!(grid.start(), DAY - offset);
    }

    #[test]
    fn empty_input_is_rejected() {
        let input = IrregularSeries::new(vec![], "ms").unwrap();
        let err = resample_to_grid(&input, HOUR, Aggregator::Mean).unwrap_err();
        assert!(err.to_string().contains("no samples"));
    }

    #[test]
    fn irregular_invariants() {
        assert!(IrregularSeries::new(vec![(5, 1.0), (5, 2.0)], "ms").is_err());
        assert!(IrregularSeries::new(vec![(5, f64::NAN)], "ms").is_err());
        assert!(RegularSeries::new(0, 0, vec![Some(1.0)], "ms").is_err());
        assert!(RegularSeries::new(0, 1, vec![], "ms").is_err());
    }

    #[test]
    fn interpolates_single_gap() {
        let out = interpolate_gaps(&series(vec![Some(1.0), None, Some(3.0)]), 1);
        assert_eq!(out.values(), &[Some(1.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn long_gap_untouched() {
        let mut v = vec![Some(1.0)];
        v.extend(std::iter::repeat_n(None, 7));
        v.push(Some(9.0));
        let s = series(v);
        assert_eq!(interpolate_gaps(&s, 6), s);
        // a gap of exactly six is filled
        let mut v = vec![Some(0.0)];
        v.extend(std::iter::repeat_n(None, 6));
        v.push(Some(7.0));
        let out = interpolate_gaps(&series(v), 6);
        let expected: Vec<_> = (0..8).map(|i| Some(i as f64)).collect();
        assert_eq!(out.values(), expected.as_slice());
    }

    #[test]
    fn boundary_gaps_untouched() {
        let s = series(vec![None, Some(1.0), Some(2.0), None]);
        assert_eq!(interpolate_gaps(&s, 6), s);
    }

    #[test]
    fn zscore_two_values() {
        let out = zscore(&series(vec![Some(0.0), Some(2.0)])).unwrap();
        assert_eq!(out.values(), &[Some(-1.0), Some(1.0)]);
    }

    #[test]
    fn zscore_ignores_missing() {
        let out = zscore(&series(vec![Some(0.0), None, Some(2.0)])).unwrap();
        assert_eq!(out.values(), &[Some(-1.0), None, Some(1.0)]);
    }

    #[test]
    fn zscore_errors() {
        let err = zscore(&series(vec![Some(3.0), Some(3.0)])).unwrap_err();
        assert!(err.to_string().contains("constant signal"));
        assert!(zscore(&series(vec![Some(3.0), None])).is_err());
    }

    #[test]
    fn shift_daily_moves_forward() {
        let s = RegularSeries::from_values(0, DAY, &[1.0, 2.0, 3.0], "score").unwrap();
        let out = shift_daily(&s, 1).unwrap();
        assert_eq!(out.values(), &[None, Some(1.0), Some(2.0)]);
        assert_eq!(shift_daily(&s, 0).unwrap(), s);
        assert!(shift_daily(&series(vec![Some(1.0)]), 1).is_err());
    }

    #[test]
    fn segments_by_inspection() {
        let s = series(vec![Some(1.0), Some(1.0), None, Some(1.0)]);
        assert_eq!(
            contiguous_segments(&s),
            vec![
                Segment {
                    start_index: 0,
                    length: 2
                },
                Segment {
                    start_index: 3,
                    length: 1
                }
            ]
        );
        assert!(contiguous_segments(&series(vec![None, None])).is_empty());
        let full = series(vec![Some(0.0); 10]);
        assert_eq!(contiguous_segments(&full).len(), 1);
        assert_eq!(contiguous_segments(&full)[0].length, 10);
    }

    fn pattern() -> impl Strategy<Value = Vec<Option<f64>>> {
        prop::collection::vec(prop::option::weighted(0.6, -100.0..100.0f64), 1..80)
    }

    proptest! {
        #[test]
        fn interpolation_respects_limits(values in pattern(), max_gap in 0usize..8) {
            let s = series(values.clone());
            let out = interpolate_gaps(&s, max_gap);
            for (a, b) in values.iter().zip(out.values()) {
                if let Some(a) = a {
                    prop_assert_eq!(Some(*a), *b);
                }
            }
            // every filled run was short and interior
            for seg_gap in gaps(&values) {
                let filled = out.values()[seg_gap.0..seg_gap.0 + seg_gap.1].iter().all(|v| v.is_some());
                let untouched = out.values()[seg_gap.0..seg_gap.0 + seg_gap.1].iter().all(|v| v.is_none());
                prop_assert!(filled || untouched);
                if filled {
                    prop_assert!(seg_gap.1 <= max_gap);
                    prop_assert!(seg_gap.0 > 0 && seg_gap.0 + seg_gap.1 < values.len());
                }
            }
        }

        #[test]
        fn zscore_standardizes(values in prop::collection::vec(-1e3..1e3f64, 2..60)) {
            let s = RegularSeries::from_values(0, HOUR, &values, "ms").unwrap();
            if let Ok(z) = zscore(&s) {
                let (m, sd) = present_mean_std(&z).unwrap();
                prop_assert!(m.abs() < 1e-12);
                prop_assert!((sd - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn segments_disjoint_ordered_maximal(values in pattern()) {
            let s = series(values.clone());
            let segs = contiguous_segments(&s);
            let mut covered = vec![false; values.len()];
            for w in segs.windows(2) {
                prop_assert!(w[0].end_index() < w[1].start_index);
            }
            for seg in &segs {
                prop_assert!(seg.length > 0);
                if seg.start_index > 0 {
                    prop_assert!(values[seg.start_index - 1].is_none());
                }
                if seg.end_index() < values.len() {
                    prop_assert!(values[seg.end_index()].is_none());
                }
                for c in &mut covered[seg.start_index..seg.end_index()] {
                    *c = true;
                }
            }
            for (v, c) in values.iter().zip(&covered) {
                prop_assert_eq!(v.is_some(), *c);
            }
        }
    }

    fn gaps(values: &[Option<f64>]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < values.len() {
            if values[i].is_none() {
                let s = i;
                while i < values.len() && values[i].is_none() {
                    i += 1;
                }
                out.push((s, i - s));
            } else {
                i += 1;
            }
        }
        out
    }
}
