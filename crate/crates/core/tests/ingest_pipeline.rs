use chrono::NaiveDate;

use hawkes_core::experiments::degrade_resolution;
use hawkes_core::ingest::{
    make_windows, parse_slices, reconstruct_trades, slice_counts, write_slices, Calendar, Side, TimeSliceRecord,
    WindowKind, WindowSpec,
};
use hawkes_core::EventSeries;

fn records() -> Vec<TimeSliceRecord> {
    let mut out = Vec::new();
    for i in 0..50u64 {
        let t = (i * 7) as f64 * 0.1;
        out.push(TimeSliceRecord { slice_start_s: t, side: Side::Buy, v_report_mm: 1 + i % 3, v_total_mm: 1 + i % 3 + i % 2 });
        if i % 5 == 0 {
            out.push(TimeSliceRecord { slice_start_s: t, side: Side::Sell, v_report_mm: 0, v_total_mm: 2 });
        }
    }
    out
}

#[test]
fn csv_round_trip_preserves_records() {
    let recs = records();
    let mut buf = Vec::new();
    write_slices(&mut buf, &recs).unwrap();
    let back = parse_slices(buf.as_slice()).unwrap();
    assert_eq!(back, recs);
}

#[test]
fn counts_follow_cleaning_rule() {
    let recs = records();
    let buys = slice_counts(&recs, Side::Buy).unwrap();
    let expected: usize = recs
        .iter()
        .filter(|r| r.side == Side::Buy)
        .map(|r| reconstruct_trades(r).unwrap())
        .sum();
    assert_eq!(buys.iter().map(|s| s.1).sum::<usize>(), expected);
    // 25 slices with extra volume carry two trades
    assert_eq!(expected, 25 + 25 * 2);
    let sells = slice_counts(&recs, Side::Sell).unwrap();
    assert_eq!(sells.len(), 10);
    assert!(sells.iter().all(|s| s.1 == 1));
}

#[test]
fn malformed_input_is_rejected() {
    let bad_header = "start,side,rep,tot\n0.0,B,1,1\n";
    assert!(parse_slices(bad_header.as_bytes()).is_err());
    let unordered = "slice_start_s,side,v_report_mm,v_total_mm\n0.2,B,1,1\n0.1,B,1,1\n";
    assert!(parse_slices(unordered.as_bytes()).is_err());
    let off_grid = "slice_start_s,side,v_report_mm,v_total_mm\n0.15,B,1,1\n";
    assert!(parse_slices(off_grid.as_bytes()).is_err());
}

#[test]
fn degradation_keeps_events_in_their_slice() {
    let times: Vec<f64> = (0..400).map(|i| i as f64 * 0.037 + 0.001).collect();
    let events = EventSeries::new(times.clone(), 20.0).unwrap();
    let out = degrade_resolution(&events, 0.1, 5).unwrap();
    assert_eq!(out.len(), events.len());
    let slice_of = |v: &[f64]| {
        let mut s: Vec<i64> = v.iter().map(|t| (t / 0.1).floor() as i64).collect();
        s.sort();
        s
    };
    assert_eq!(slice_of(out.times()), slice_of(&times));
}

#[test]
fn windows_cover_calendar() {
    // Monday 2024-01-01 through Friday, one event every 60 s
    let horizon = 5.0 * 86_400.0;
    let times: Vec<f64> = (0..7_200).map(|i| i as f64 * 60.0 + 1.0).collect();
    let events = EventSeries::new(times, horizon).unwrap();
    let cal = Calendar { start_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() };

    let daily = make_windows(&events, &cal, &WindowSpec::new(WindowKind::Daily)).unwrap();
    let labels: Vec<_> = daily.iter().map(|w| w.label.as_str()).collect();
    assert_eq!(labels, ["2024-01-01", "2024-01-02", "2024-01-03", "2024-01-04", "2024-01-05"]);
    assert!(daily.iter().all(|w| w.events.len() == 1_440));

    let pairs = make_windows(&events, &cal, &WindowSpec::new(WindowKind::TwoDay)).unwrap();
    let labels: Vec<_> = pairs.iter().map(|w| w.label.as_str()).collect();
    assert_eq!(labels, ["2024-01-02_2024-01-03", "2024-01-03_2024-01-04"]);

    let mut spec = WindowSpec::new(WindowKind::Hourly);
    spec.min_events = 59;
    let hourly = make_windows(&events, &cal, &spec).unwrap();
    assert_eq!(hourly.len(), 120);
    assert_eq!(hourly[25].label, "2024-01-02T01");
    spec.min_events = 60;
    assert!(make_windows(&events, &cal, &spec).unwrap().is_empty());
}
