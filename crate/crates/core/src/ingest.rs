//! Time-sliced trade records: parsing, trade-count reconstruction, timestamp
//! randomization and calibration windows.
//!
//! Input CSV schema: `slice_start_s,side,v_report_mm,v_total_mm` with side
//! `B` or `S` and volumes in whole millions.

use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::SECONDS_PER_DAY;
use crate::error::{domain, HawkesError, Result};
use crate::events::EventSeries;
use crate::simulator::rng_from_seed;

pub const SLICE_WIDTH: f64 = 0.1;
pub const SECONDS_PER_HOUR: f64 = 3_600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "B")]
    Buy,
    #[serde(rename = "S")]
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSliceRecord {
    pub slice_start_s: f64,
    pub side: Side,
    pub v_report_mm: u64,
    pub v_total_mm: u64,
}

impl TimeSliceRecord {
    fn check(&self) -> std::result::Result<(), String> {
        let k = self.slice_start_s / SLICE_WIDTH;
        if !(self.slice_start_s >= 0.0 && (k - k.round()).abs() < 1e-6) {
            return Err(format!("slice start {} is not a non-negative multiple of 0.1 s", self.slice_start_s));
        }
        if self.v_total_mm < self.v_report_mm {
            return Err(format!(
                "total volume {} is below the reported trade volume {}",
                self.v_total_mm, self.v_report_mm
            ));
        }
        Ok(())
    }
}

/// Trades in a slice: none, one when the totals agree, and two whenever the
/// total exceeds the reported trade (the "add one trade" rule). A slice
/// with volume but no reported trade counts as one trade.
pub fn reconstruct_trades(record: &TimeSliceRecord) -> Result<usize> {
    let (rep, tot) = (record.v_report_mm, record.v_total_mm);
    if tot < rep {
        return Err(HawkesError::MalformedRecord {
            line: 0,
            message: format!("total volume {tot} is below the reported trade volume {rep}"),
        });
    }
    Ok(match (rep, tot) {
        (_, 0) => 0,
        (0, _) => 1,
        (r, t) if r == t => 1,
        _ => 2,
    })
}

/// Reads and validates records. Line numbers count the header as line 1.
pub fn parse_slices<R: Read>(reader: R) -> Result<Vec<TimeSliceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = ["slice_start_s", "side", "v_report_mm", "v_total_mm"];
    let headers = rdr.headers().map_err(|e| HawkesError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(HawkesError::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out: Vec<TimeSliceRecord> = Vec::new();
    for row in rdr.deserialize::<TimeSliceRecord>() {
        let rec = row.map_err(|e| HawkesError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = out.len() + 2;
        rec.check().map_err(|message| HawkesError::MalformedRecord { line, message })?;
        if let Some(prev) = out.last() {
            if rec.slice_start_s < prev.slice_start_s {
                return Err(HawkesError::Ordering { line });
            }
            if rec.slice_start_s == prev.slice_start_s
                && out.iter().rev().take_while(|p| p.slice_start_s == rec.slice_start_s).any(|p| p.side == rec.side)
            {
                return Err(HawkesError::MalformedRecord {
                    line,
                    message: "duplicate (slice, side) record".into(),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_slices<W: Write>(writer: W, records: &[TimeSliceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| domain(format!("csv write failed: {e}"));
    if records.is_empty() {
        w.write_record(["slice_start_s", "side", "v_report_mm", "v_total_mm"]).map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `(slice_start, trade_count)` for one side, skipping empty slices.
pub fn slice_counts(records: &[TimeSliceRecord], side: Side) -> Result<Vec<(f64, usize)>> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate().filter(|(_, r)| r.side == side) {
        let count = reconstruct_trades(r).map_err(|_| HawkesError::MalformedRecord {
            line: i + 2,
            message: "total volume below reported volume".into(),
        })?;
        if count > 0 {
            out.push((r.slice_start_s, count));
        }
    }
    Ok(out)
}

/// Places each trade uniformly inside its slice `[start, start + width)`,
/// redrawing collisions, and returns the sorted series on `[0, horizon]`.
pub fn randomize_timestamps(slices: &[(f64, usize)], width: f64, horizon: f64, seed: u64) -> Result<EventSeries> {
    if !(width > 0.0) {
        return Err(domain(format!("slice width must be positive, got {width}")));
    }
    let mut rng = rng_from_seed(seed);
    let total: usize = slices.iter().map(|s| s.1).sum();
    let mut times = Vec::with_capacity(total);
    for &(start, count) in slices {
        if count == 0 {
            continue;
        }
        let end = (start + width).min(horizon);
        if !(start >= 0.0 && start < end) {
            return Err(domain(format!("slice at {start} lies outside [0, {horizon})")));
        }
        let first = times.len();
        while times.len() < first + count {
            let t = start + rng.random::<f64>() * (end - start);
            if t < start || t >= end || times[first..].contains(&t) {
                continue;
            }
            times.push(t);
        }
        times[first..].sort_by(f64::total_cmp);
    }
    times.sort_by(f64::total_cmp);
    EventSeries::new(times, horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hourly,
    Daily,
    /// Tuesday+Wednesday and Wednesday+Thursday pairs.
    TwoDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub min_events: usize,
}

impl WindowSpec {
    pub fn new(kind: WindowKind) -> Self {
        Self { kind, min_events: 200 }
    }
}

/// Calendar anchor: time zero is midnight at the start of `start_date`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub start_date: NaiveDate,
}

impl Calendar {
    pub fn date_of_day(&self, day: usize) -> NaiveDate {
        self.start_date + Duration::days(day as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub label: String,
    pub start: f64,
    pub events: EventSeries,
}

/// Cuts `events` into windows, keeping those with more than `min_events`.
pub fn make_windows(events: &EventSeries, calendar: &Calendar, spec: &WindowSpec) -> Result<Vec<Window>> {
    let horizon = events.horizon();
    let n_days = (horizon / SECONDS_PER_DAY).ceil() as usize;
    let mut spans: Vec<(String, f64, f64)> = Vec::new();
    match spec.kind {
        WindowKind::Hourly => {
            let n_hours = (horizon / SECONDS_PER_HOUR).ceil() as usize;
            for h in 0..n_hours {
                let day = h / 24;
                let label = format!("{}T{:02}", calendar.date_of_day(day), h % 24);
                spans.push((label, h as f64 * SECONDS_PER_HOUR, ((h + 1) as f64 * SECONDS_PER_HOUR).min(horizon)));
            }
        }
        WindowKind::Daily => {
            for d in 0..n_days {
                let start = d as f64 * SECONDS_PER_DAY;
                spans.push((calendar.date_of_day(d).to_string(), start, (start + SECONDS_PER_DAY).min(horizon)));
            }
        }
        WindowKind::TwoDay => {
            for d in 0..n_days.saturating_sub(1) {
                let date = calendar.date_of_day(d);
                if !matches!(date.weekday(), Weekday::Tue | Weekday::Wed) {
                    continue;
                }
                let start = d as f64 * SECONDS_PER_DAY;
                let end = start + 2.0 * SECONDS_PER_DAY;
                if end > horizon + 1e-9 {
                    continue;
                }
                spans.push((format!("{}_{}", date, calendar.date_of_day(d + 1)), start, end.min(horizon)));
            }
        }
    }
    let mut out = Vec::new();
    for (label, start, end) in spans {
        if end <= start {
            continue;
        }
        let w = events.window(start, end)?;
        if w.len() > spec.min_events {
            out.push(Window { label, start, events: w });
        }
    }
    Ok(out)
}
