use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use tclflex::battery::{PowerUnit, SignalSeries, SignalUnit};
use tclflex::ingest::*;
use tclflex::market::PriceSeries;
use tclflex::tcl::AmbientSeries;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/malformed")
}

fn kind_of(name: &str) -> DatasetKind {
    if name.starts_with("temperature") {
        DatasetKind::Temperature
    } else if name.starts_with("prices") {
        DatasetKind::Prices
    } else {
        DatasetKind::RegulationSignal
    }
}

fn located(e: &IngestError) -> bool {
    match e {
        IngestError::Parse { line, .. }
        | IngestError::Gap { line, .. }
        | IngestError::Duplicate { line, .. }
        | IngestError::Spacing { line, .. }
        | IngestError::NonFinite { line, .. }
        | IngestError::Range { line, .. } => *line > 0,
        IngestError::Schema { .. } | IngestError::Invalid { .. } => true,
        IngestError::Io { .. } | IngestError::Model { .. } => false,
    }
}

#[test]
fn every_malformed_fixture_is_rejected_with_a_location() {
    let mut seen = 0;
    for entry in std::fs::read_dir(corpus()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        match load_csv(kind_of(&name), &path) {
            Ok(_) => panic!("{name} was accepted"),
            Err(e) => {
                assert!(located(&e), "{name}: {e}");
                assert!(e.to_string().contains(&name), "{e}");
            }
        }
        seen += 1;
    }
    assert!(seen >= 15);
}

#[test]
fn out_of_range_signal_names_its_row() {
    let err = load_signal(&corpus().join("signal_out_of_range.csv")).unwrap_err();
    assert!(matches!(err, IngestError::Range { line: 4, .. }), "{err}");
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 32,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn temperature_round_trip(values in prop::collection::vec(-40.0..60.0f64, 1..300), offset in 0i64..10_000) {
        let dir = tempfile::tempdir().unwrap();
        let start = Utc.with_ymd_and_hms(2013, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(offset);
        let series = AmbientSeries::new(start, 1.0, values).unwrap();
        let path = dir.path().join("t.csv");
        write_file(&path, |w| write_temperature_csv(w, &series)).unwrap();
        let (_, back) = load_temperature(&path).unwrap();
        prop_assert_eq!(back, series);
    }

    #[test]
    fn price_round_trip(rows in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 0.0..1.0f64, 0.0..1.0f64), 1..100)) {
        let dir = tempfile::tempdir().unwrap();
        let start = Utc.with_ymd_and_hms(2013, 6, 1, 0, 0, 0).unwrap();
        let prices = PriceSeries::new(
            start,
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3).collect(),
        ).unwrap();
        let path = dir.path().join("p.csv");
        write_file(&path, |w| write_price_csv(w, &prices)).unwrap();
        let (_, back) = load_prices(&path).unwrap();
        prop_assert_eq!(back, prices);
    }

    #[test]
    fn signal_round_trip(
        samples in prop::collection::vec(-1.0..=1.0f64, 2..500),
        step_s in prop::sample::select(vec![1.0, 2.0, 4.0, 60.0]),
        unit in prop::sample::select(vec![
            SignalUnit::Normalized,
            SignalUnit::Power(PowerUnit::Kw),
            SignalUnit::Power(PowerUnit::Mw),
            SignalUnit::Power(PowerUnit::Gw),
        ]),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let signal = SignalSeries::new(step_s / 3600.0, samples, unit).unwrap();
        let path = dir.path().join("s.csv");
        write_file(&path, |w| write_signal_csv(w, &signal)).unwrap();
        let (_, back) = load_signal(&path).unwrap();
        prop_assert_eq!(back.unit, signal.unit);
        prop_assert_eq!(&back.samples, &signal.samples);
        prop_assert!((back.step - signal.step).abs() <= 1e-15 * signal.step);
    }
}
