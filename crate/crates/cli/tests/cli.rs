use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tclflex(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclflex"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_input_exits_with_2_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("prices.csv");
    fs::write(
        &bad,
        "timestamp_utc,ru_cap,rd_cap,ru_mil,rd_mil\n2013-06-01T00:00:00Z,1,2,-3,4\n",
    )
    .unwrap();
    let o = tclflex(&["validate", "--prices", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("prices.csv"));
    assert!(stderr(&o).contains("prices.csv:2"), "{}", stderr(&o));
}

#[test]
fn missing_required_inputs_are_validation_failures() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tclflex(&["capacity"], dir.path()).status.code(), Some(2));
    assert_eq!(tclflex(&["revenue"], dir.path()).status.code(), Some(2));
    let fleet = dir.path().join("fleet.toml");
    fs::write(&fleet, "households_total = 1.0\nunknown = 3\n").unwrap();
    let o = tclflex(
        &["capacity", "--fleet", fleet.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn power_signal_is_rejected_by_energy_requirement() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("s.csv");
    fs::write(&sig, "# unit=mw\nt_seconds,value\n0,1\n4,2\n").unwrap();
    let o = tclflex(
        &["energy-requirement", "--signal", sig.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("normalized"));
}

#[test]
fn non_finite_parameter_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = tclflex(
        &[
            "track",
            "--ambient",
            "nan",
            "--units",
            "5",
            "--hours",
            "0.01",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn validate_only_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = tclflex(&["energy-requirement", "--validate-only"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn fixed_ambient_fleet_needs_no_temperatures() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tclflex::config::FleetConfig::typical();
    cfg.classes.retain(|c| c.fixed_ambient.is_some());
    cfg.cities.clear();
    let fleet = dir.path().join("fleet.toml");
    fs::write(&fleet, cfg.to_toml()).unwrap();
    let o = tclflex(
        &["capacity", "--fleet", fleet.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("capacity_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# tclflex capacity config_hash="));
    assert!(summary.contains("water_heater_peak,0.21"));
    assert!(!summary.contains("ac_peak"));
}

#[test]
fn seed_and_config_change_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let header = |seed: &str, alphas: &str| {
        let out = dir.path().join(format!("{seed}-{alphas}"));
        let o = tclflex(
            &["energy-requirement", "--seed", seed, "--alphas", alphas],
            &out,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let text = fs::read_to_string(out.join("energy_requirement.csv")).unwrap();
        text.lines().next().unwrap().to_string()
    };
    let base = header("1", "0.25");
    assert!(base.ends_with("seed=1"));
    assert_ne!(base, header("2", "0.25"));
    let other = header("1", "0.5");
    assert_ne!(
        base.split("config_hash=").nth(1),
        other.split("config_hash=").nth(1)
    );
}

#[test]
fn help_documents_schemas_and_exit_codes() {
    let o = Command::new(env!("CARGO_BIN_EXE_tclflex"))
        .arg("--help")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "timestamp_utc,temp_c",
        "ru_cap,rd_cap,ru_mil,rd_mil",
        "t_seconds,value",
        "normalized=true",
        "Exit codes",
    ] {
        assert!(text.contains(needle), "{needle}");
    }
}

#[test]
fn coarse_signals_are_held_onto_the_control_grid() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("s.csv");
    let rows: String = (0..60)
        .map(|k| format!("{},{}\n", k * 8, if k % 2 == 0 { 50 } else { -50 }))
        .collect();
    fs::write(&sig, format!("# unit=kw\nt_seconds,value\n{rows}")).unwrap();
    let o = tclflex(
        &["track", "--signal", sig.to_str().unwrap(), "--units", "100"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("track_trace.csv")).unwrap();
    assert_eq!(
        trace.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 120
    );

    fs::write(&sig, "t_seconds,value\n0,1\n3,2\n").unwrap();
    let o = tclflex(&["track", "--signal", sig.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
