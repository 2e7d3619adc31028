//! CSV ingestion and emission.
//!
//! Timestamps are either epoch seconds or ISO-8601, detected from the first
//! data row and required to be uniform within a file. ISO values carrying an
//! offset (`Z`, `+02:00`) are exact; naive date-times and bare dates are read
//! as local time at the dataset's fixed UTC offset.

use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::timeseries::{IrregularSeries, RegularSeries, Timestamp};
use chrono::{DateTime, NaiveDate, NaiveDateTime};
use std::fs::File;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeFormat {
    Epoch,
    Iso,
}

fn parse_epoch(field: &str) -> Option<Timestamp> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(|v| v.round() as i64)
}

fn parse_iso(field: &str, tz_offset_seconds: i64) -> Option<Timestamp> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(field, fmt) {
            return Some(naive.and_utc().timestamp() - tz_offset_seconds);
        }
    }
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() - tz_offset_seconds)
}

fn detect(field: &str, tz_offset_seconds: i64) -> Option<TimeFormat> {
    if parse_epoch(field).is_some() {
        Some(TimeFormat::Epoch)
    } else if parse_iso(field, tz_offset_seconds).is_some() {
        Some(TimeFormat::Iso)
    } else {
        None
    }
}

fn parse_with(format: TimeFormat, field: &str, tz_offset_seconds: i64) -> Option<Timestamp> {
    match format {
        TimeFormat::Epoch => parse_epoch(field),
        TimeFormat::Iso => parse_iso(field, tz_offset_seconds),
    }
}

fn open(path: &Path, what: &str) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Data(format!("{what} file not found: {}", path.display()))
        } else {
            Error::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads the header and checks it is a header, not data.
fn check_header(
    reader: &mut csv::Reader<File>,
    path: &Path,
    columns: usize,
    tz_offset_seconds: i64,
) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(parse_err(path, 1, "empty file: header row required"));
    }
    if header.len() != columns {
        return Err(parse_err(
            path,
            1,
            format!("expected {columns} column(s), header has {}", header.len()),
        ));
    }
    if detect(&header[0], tz_offset_seconds).is_some() {
        return Err(parse_err(
            path,
            1,
            "header row required (first row looks like data)",
        ));
    }
    Ok(())
}

/// Reads a `timestamp,value` CSV into an irregular series.
pub fn read_series_csv(
    path: &Path,
    what: &str,
    unit: &str,
    tz_offset_seconds: i64,
) -> Result<IrregularSeries> {
    let mut reader = open(path, what)?;
    check_header(&mut reader, path, 2, tz_offset_seconds)?;
    let mut format = None;
    let mut samples: Vec<(Timestamp, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let ts_field = &record[0];
        let fmt = match format {
            Some(f) => f,
            None => {
                let f = detect(ts_field, tz_offset_seconds).ok_or_else(|| {
                    parse_err(path, line, format!("unrecognized timestamp '{ts_field}'"))
                })?;
                format = Some(f);
                f
            }
        };
        let t = parse_with(fmt, ts_field, tz_offset_seconds).ok_or_else(|| {
            parse_err(
                path,
                line,
                format!("timestamp '{ts_field}' does not match the file's format ({fmt:?})"),
            )
        })?;
        let value_field = &record[1];
        if value_field.is_empty() {
            return Err(parse_err(path, line, "empty value (omit the row instead)"));
        }
        let value: f64 = value_field
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(path, line, format!("invalid value '{value_field}'")))?;
        if let Some(&(prev, _)) = samples.last() {
            if t <= prev {
                return Err(parse_err(
                    path,
                    line,
                    "timestamps must be strictly increasing",
                ));
            }
        }
        samples.push((t, value));
    }
    IrregularSeries::new(samples, unit)
}

/// Reads a single-column `onset_timestamp` CSV.
pub fn read_events_csv(path: &Path, tz_offset_seconds: i64) -> Result<EventSet> {
    let mut reader = open(path, "events")?;
    check_header(&mut reader, path, 1, tz_offset_seconds)?;
    let mut format = None;
    let mut onsets: Vec<Timestamp> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = &record[0];
        let fmt = match format {
            Some(f) => f,
            None => {
                let f = detect(field, tz_offset_seconds).ok_or_else(|| {
                    parse_err(path, line, format!("unrecognized timestamp '{field}'"))
                })?;
                format = Some(f);
                f
            }
        };
        let t = parse_with(fmt, field, tz_offset_seconds).ok_or_else(|| {
            parse_err(
                path,
                line,
                format!("timestamp '{field}' does not match the file's format"),
            )
        })?;
        if let Some(&prev) = onsets.last() {
            if t <= prev {
                return Err(parse_err(
                    path,
                    line,
                    "event onsets must be strictly increasing",
                ));
            }
        }
        onsets.push(t);
    }
    EventSet::new(onsets, path.display().to_string())
}

pub(crate) fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    create(path)?
        .write_all(text.as_bytes())
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
}

/// Writes present values of a gridded series as `timestamp,value` with epoch
/// seconds; missing slots are omitted, matching [`read_series_csv`].
pub fn write_series_csv(path: &Path, series: &RegularSeries) -> Result<()> {
    let mut out = String::from("timestamp,value\n");
    for (i, v) in series.values().iter().enumerate() {
        if let Some(v) = v {
            out.push_str(&format!("{},{}\n", series.time_at(i), v));
        }
    }
    write_text(path, &out)
}

pub fn write_events_csv(path: &Path, events: &EventSet) -> Result<()> {
    let mut out = String::from("onset_timestamp\n");
    for t in events.onsets() {
        out.push_str(&format!("{t}\n"));
    }
    write_text(path, &out)
}
