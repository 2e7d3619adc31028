//! Event onsets and their mapping onto band-limited phase.

use crate::analytic::AnalyticSeries;
use crate::error::{Error, Result};
use crate::filtering::BandSpec;
use crate::timeseries::Timestamp;
use serde::{Deserialize, Serialize};

/// Strictly increasing event onset times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    onsets: Vec<Timestamp>,
    pub label: String,
}

impl EventSet {
    pub fn new(onsets: Vec<Timestamp>, label: impl Into<String>) -> Result<Self> {
        if let Some(i) = onsets.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "event onsets not strictly increasing at event {}",
                i + 1
            )));
        }
        Ok(Self {
            onsets,
            label: label.into(),
        })
    }

    pub fn onsets(&self) -> &[Timestamp] {
        &self.onsets
    }

    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }
}

/// An event placed on the nearest phase estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub event_time: Timestamp,
    pub phase: f64,
    pub amplitude: f64,
    pub band: BandSpec,
    /// Event time minus matched sample time, seconds.
    pub sample_offset: i64,
    pub edge_flagged: bool,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseMapping {
    pub mapped: Vec<PhaseSample>,
    pub excluded: Vec<Timestamp>,
}

impl PhaseMapping {
    pub fn phases(&self) -> Vec<f64> {
        self.mapped.iter().map(|s| s.phase).collect()
    }

    pub fn n_edge_flagged(&self) -> usize {
        self.mapped.iter().filter(|s| s.edge_flagged).count()
    }
}

/// Nearest sample to `time` within one series, ties toward the earlier sample.
fn nearest_in(series: &AnalyticSeries, time: Timestamp) -> Option<(usize, i64)> {
    if series.is_empty() {
        return None;
    }
    let last = series.len() - 1;
    let idx = if time <= series.start {
        0
    } else {
        let below = ((time - series.start) / series.step) as usize;
        if below >= last {
            last
        } else {
            let d_below = time - series.time_at(below);
            let d_above = series.time_at(below + 1) - time;
            if d_above < d_below {
                below + 1
            } else {
                below
            }
        }
    };
    Some((idx, time - series.time_at(idx)))
}

/// Matches each event to the closest sample across all segments. Events whose
/// closest sample is more than `tolerance` seconds away are excluded.
pub fn map_events_to_phase(
    events: &EventSet,
    analytic: &[AnalyticSeries],
    tolerance: i64,
) -> PhaseMapping {
    let mut out = PhaseMapping::default();
    for &t in events.onsets() {
        let mut best: Option<(&AnalyticSeries, usize, i64)> = None;
        for series in analytic {
            let Some((idx, offset)) = nearest_in(series, t) else {
                continue;
            };
            let better = match best {
                None => true,
                Some((b, bi, bo)) => {
                    offset.abs() < bo.abs()
                        || (offset.abs() == bo.abs() && series.time_at(idx) < b.time_at(bi))
                }
            };
            if better {
                best = Some((series, idx, offset));
            }
        }
        match best {
            Some((series, idx, offset)) if offset.abs() <= tolerance => {
                out.mapped.push(PhaseSample {
                    event_time: t,
                    phase: series.phase[idx],
                    amplitude: series.amplitude[idx],
                    band: series.band.clone(),
                    sample_offset: offset,
                    edge_flagged: series.edge[idx],
                    low_confidence: series.low_confidence[idx],
                })
            }
            _ => out.excluded.push(t),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::HOUR;
    use proptest::prelude::*;

    fn segment(start: Timestamp, n: usize) -> AnalyticSeries {
        AnalyticSeries {
            start,
            step: HOUR,
            phase: (0..n).map(|i| i as f64 * 0.01).collect(),
            amplitude: vec![1.0; n],
            band: BandSpec::new(0.8, 1.2, "c").unwrap(),
            edge: (0..n).map(|i| i == 0).collect(),
            low_confidence: vec![false; n],
        }
    }

    #[test]
    fn event_on_grid_sample() {
        let events = EventSet::new(vec![5 * HOUR], "e").unwrap();
        let m = map_events_to_phase(&events, &[segment(0, 10)], HOUR / 2);
        assert_eq!(m.mapped.len(), 1);
        assert_eq!(m.mapped[0].sample_offset, 0);
        assert_eq!(m.mapped[0].phase, 0.05);
    }

    #[test]
    fn event_in_gap_is_excluded() {
        let segs = [segment(0, 10), segment(100 * HOUR, 10)];
        let events = EventSet::new(vec![50 * HOUR, 101 * HOUR], "e").unwrap();
        let m = map_events_to_phase(&events, &segs, HOUR / 2);
        assert_eq!(m.excluded, vec![50 * HOUR]);
        assert_eq!(m.mapped.len(), 1);
        assert_eq!(m.mapped[0].phase, 0.01);
    }

    #[test]
    fn ties_break_toward_earlier_sample() {
        let events = EventSet::new(vec![3 * HOUR + HOUR / 2], "e").unwrap();
        let m = map_events_to_phase(&events, &[segment(0, 10)], HOUR / 2);
        assert_eq!(m.mapped[0].sample_offset, HOUR / 2);
        assert_eq!(m.mapped[0].phase, 0.03);

        // tie across two segments: last sample of the first vs first of the second
        let segs = [segment(11 * HOUR, 5), segment(0, 10)];
        let events = EventSet::new(vec![9 * HOUR + HOUR], "e").unwrap();
        let m = map_events_to_phase(&events, &segs, 100 * HOUR);
        assert_eq!(m.mapped[0].sample_offset, HOUR);
    }

    #[test]
    fn edge_flag_is_carried() {
        let events = EventSet::new(vec![0], "e").unwrap();
        let m = map_events_to_phase(&events, &[segment(0, 10)], 0);
        assert!(m.mapped[0].edge_flagged);
        assert_eq!(m.n_edge_flagged(), 1);
    }

    #[test]
    fn event_set_must_increase() {
        assert!(EventSet::new(vec![3, 3], "e").is_err());
        assert!(EventSet::new(vec![], "e").unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn mapping_partitions_events(
            mut times in prop::collection::btree_set(-50i64 * HOUR..400 * HOUR, 0..40),
            tol in 0i64..(3 * HOUR),
        ) {
            let onsets: Vec<i64> = std::mem::take(&mut times).into_iter().collect();
            let events = EventSet::new(onsets.clone(), "e").unwrap();
            let segs = [segment(0, 100), segment(200 * HOUR, 50)];
            let m = map_events_to_phase(&events, &segs, tol);
            prop_assert_eq!(m.mapped.len() + m.excluded.len(), onsets.len());
            for s in &m.mapped {
                prop_assert!(s.sample_offset.abs() <= tol);
            }
        }
    }
}
