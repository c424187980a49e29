//! Event timestamps over an observation window `[0, T]`.
//!
//! CSV form: a `# T=<horizon>` comment line, a `t_seconds` header, then one
//! timestamp per line.

use std::io::{BufRead, Write};

use crate::error::{domain, HawkesError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EventSeries {
    times: Vec<f64>,
    horizon: f64,
}

impl EventSeries {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        if let Some(t) = times.iter().find(|t| !(0.0..=horizon).contains(*t)) {
            return Err(domain(format!("event time {t} outside [0, {horizon}]")));
        }
        if let Some(i) = times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(domain(format!(
                "event times must be strictly increasing (index {}: {} >= {})",
                i + 1,
                times[i],
                times[i + 1]
            )));
        }
        Ok(Self { times, horizon })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn into_times(self) -> Vec<f64> {
        self.times
    }

    /// Events in `[start, end)`, shifted so `start` becomes 0.
    pub fn window(&self, start: f64, end: f64) -> Result<Self> {
        let lo = self.times.partition_point(|&t| t < start);
        let hi = self.times.partition_point(|&t| t < end);
        let times = self.times[lo..hi].iter().map(|t| t - start).collect();
        Self::new(times, end - start)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# T={}", self.horizon)?;
        writeln!(w, "t_seconds")?;
        for t in &self.times {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut horizon = None;
        let mut header_seen = false;
        let mut times = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("T=") {
                    let t: f64 = v.trim().parse().map_err(|_| HawkesError::Parse {
                        line: line_no,
                        message: format!("bad horizon `{v}`"),
                    })?;
                    horizon = Some(t);
                }
                continue;
            }
            if !header_seen {
                if line != "t_seconds" {
                    return Err(HawkesError::Parse {
                        line: line_no,
                        message: format!("expected header `t_seconds`, found `{line}`"),
                    });
                }
                header_seen = true;
                continue;
            }
            let t: f64 = line.parse().map_err(|_| HawkesError::Parse {
                line: line_no,
                message: format!("bad timestamp `{line}`"),
            })?;
            times.push(t);
        }
        let horizon = horizon.ok_or(HawkesError::Parse {
            line: 1,
            message: "missing `# T=<horizon>` comment".into(),
        })?;
        Self::new(times, horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validation() {
        assert!(EventSeries::new(vec![0.0, 1.0, 2.0], 2.0).is_ok());
        assert!(EventSeries::new(vec![1.0, 1.0], 2.0).is_err());
        assert!(EventSeries::new(vec![3.0], 2.0).is_err());
        assert!(EventSeries::new(vec![], 0.0).is_err());
    }

    #[test]
    fn windowing_reorigins() {
        let e = EventSeries::new(vec![0.5, 1.5, 2.5, 3.0], 4.0).unwrap();
        let w = e.window(1.0, 3.0).unwrap();
        assert_eq!(w.times(), &[0.5, 1.5]);
        assert_eq!(w.horizon(), 2.0);
    }

    #[test]
    fn csv_errors() {
        let missing_t = "t_seconds\n1.0\n";
        assert!(EventSeries::read_csv(missing_t.as_bytes()).is_err());
        let bad = "# T=10\nt_seconds\n1.0\nabc\n";
        match EventSeries::read_csv(bad.as_bytes()) {
            Err(HawkesError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(mut ts in prop::collection::vec(0.0f64..1e5, 0..50)) {
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let e = EventSeries::new(ts, 1e5).unwrap();
            let mut buf = Vec::new();
            e.write_csv(&mut buf).unwrap();
            let back = EventSeries::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
