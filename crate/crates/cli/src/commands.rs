use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tclflex::battery::{
    battery_from_fleet, is_admissible, max_energy_requirement, PowerUnit, SignalSeries, SignalUnit,
    Violation,
};
use tclflex::config::{FleetConfig, DEFAULT_FLEET};
use tclflex::dispatch::{
    accuracy, free_run, track as run_track, write_trace_csv, DispatchConfig, Population,
    ACCURACY_WINDOW_SECONDS, CONTROL_STEP_SECONDS,
};
use tclflex::economics::{
    comparison_table, default_technologies, parse_technologies, tcl_cost_figures,
};
use tclflex::fleet::{hourly_flexibility, summary_stats, CityProfile, FlexibilitySeries};
use tclflex::ingest::synth::{
    default_cities, study_start, synth_prices, synth_regulation_signal, synth_temperature,
    HOURS_PER_YEAR,
};
use tclflex::ingest::{
    load_prices, load_signal, load_temperature, sha256_hex, write_price_csv, write_signal_csv,
    write_temperature_csv, Dataset,
};
use tclflex::market::{
    award_from_flexibility, revenue as settle, write_hourly_csv, PriceSeries, RevenueReport,
    StreamRevenue,
};
use tclflex::tcl::AmbientSeries;

use crate::output::Emitter;
use crate::{Common, CompareArgs, EnergyArgs, Failure, RevenueArgs, TrackArgs};

const DEFAULT_TRACK_AMBIENT: f64 = 32.0;

/// Accumulates everything that determines a command's results.
struct Fingerprint(String);

impl Fingerprint {
    fn new(command: &str, c: &Common) -> Self {
        Self(format!("command={command}\nseed={}\n", c.seed))
    }

    fn add(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key}={value}");
    }

    fn dataset(&mut self, label: &str, d: &Dataset) {
        self.add(label, &d.checksum);
    }

    fn emitter(&self, command: &'static str, c: &Common) -> Emitter {
        Emitter::new(command, c.seed, &c.out, &self.0)
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn load_fleet(c: &Common, fp: &mut Fingerprint) -> Result<FleetConfig, Failure> {
    let text = match &c.fleet {
        Some(p) => read_input(p)?,
        None => DEFAULT_FLEET.to_string(),
    };
    let fleet = FleetConfig::parse(&text).map_err(|e| match &c.fleet {
        Some(p) => Failure::Validation(format!("{}: {e}", p.display())),
        None => Failure::from(e),
    })?;
    fp.add("fleet", fleet.to_toml());
    Ok(fleet)
}

struct Cities {
    profiles: Vec<CityProfile>,
    label: String,
}

/// City temperature series from `--temps`, or a placeholder when no class needs them.
fn load_cities(
    c: &Common,
    fleet: &FleetConfig,
    hours: Option<usize>,
    fp: &mut Fingerprint,
) -> Result<Cities, Failure> {
    if !fleet.needs_temperatures() {
        let hours = hours.unwrap_or(HOURS_PER_YEAR);
        let ambient = AmbientSeries::new(study_start(), 1.0, vec![0.0; hours])?;
        fp.add("placeholder_hours", hours);
        return Ok(Cities {
            profiles: vec![CityProfile {
                name: "fixed".into(),
                households: 1.0,
                ambient,
            }],
            label: "fixed ambient".into(),
        });
    }
    let dir = c.temps.as_ref().ok_or_else(|| {
        Failure::Validation(
            "--temps is required: a device class follows outdoor temperature".into(),
        )
    })?;
    if fleet.cities.is_empty() {
        return Err(Failure::Validation(
            "fleet config lists no [[city]] entries".into(),
        ));
    }
    let mut profiles = Vec::with_capacity(fleet.cities.len());
    for city in &fleet.cities {
        let (dataset, ambient) = load_temperature(&city.temperature_path(dir))?;
        fp.dataset(&format!("temps.{}", city.name), &dataset);
        profiles.push(CityProfile {
            name: city.name.clone(),
            households: city.households,
            ambient,
        });
    }
    let first = &profiles[0].ambient;
    for p in &profiles[1..] {
        if p.ambient.len() != first.len() || p.ambient.start != first.start {
            return Err(Failure::Validation(format!(
                "temperature series of {} does not cover the same hours as {}",
                p.name, profiles[0].name
            )));
        }
    }
    let names: Vec<&str> = profiles.iter().map(|p| p.name.as_str()).collect();
    let mut label = names.join("/");
    if dir
        .to_string_lossy()
        .replace('\\', "/")
        .contains("fixtures/synthetic")
    {
        label.push_str(" (synthetic)");
    }
    Ok(Cities { profiles, label })
}

fn load_price_file(c: &Common, fp: &mut Fingerprint) -> Result<Option<PriceSeries>, Failure> {
    match &c.prices {
        None => Ok(None),
        Some(p) => {
            let (d, prices) = load_prices(p)?;
            fp.dataset("prices", &d);
            Ok(Some(prices))
        }
    }
}

fn load_signal_file(c: &Common, fp: &mut Fingerprint) -> Result<Option<SignalSeries>, Failure> {
    match &c.signal {
        None => Ok(None),
        Some(p) => {
            let (d, s) = load_signal(p)?;
            fp.dataset("signal", &d);
            Ok(Some(s))
        }
    }
}

fn validated_only(c: &Common) -> bool {
    if c.validate_only {
        println!("inputs valid");
    }
    c.validate_only
}

fn kw_to(unit: PowerUnit) -> f64 {
    PowerUnit::Kw.factor_to(unit)
}

fn flexibility(fleet: &FleetConfig, cities: &Cities) -> Result<FlexibilitySeries, Failure> {
    Ok(hourly_flexibility(
        &fleet.to_classes(),
        &cities.profiles,
        fleet.households_total,
    )?)
}

pub fn capacity(c: &Common) -> Result<(), Failure> {
    let mut fp = Fingerprint::new("capacity", c);
    let fleet = load_fleet(c, &mut fp)?;
    let cities = load_cities(c, &fleet, None, &mut fp)?;
    if validated_only(c) {
        return Ok(());
    }
    let series = flexibility(&fleet, &cities)?;
    let summary = summary_stats(&series)?;
    let out = fp.emitter("capacity", c);
    let (mw, gw) = (kw_to(PowerUnit::Mw), kw_to(PowerUnit::Gw));
    let start = cities.profiles[0].ambient.start;

    let hourly = out.emit("capacity_hourly.csv", |w| {
        write!(w, "timestamp_utc")?;
        for class in &series.classes {
            let k = class.kind.name();
            write!(w, ",{k}_up_mw,{k}_down_mw,{k}_energy_mwh")?;
        }
        writeln!(w, ",total_up_mw,total_down_mw,total_energy_mwh")?;
        for h in 0..series.hours() {
            let t = start + chrono::Duration::hours(h as i64);
            write!(w, "{}", tclflex::ingest::format_timestamp(&t))?;
            for class in &series.classes {
                write!(
                    w,
                    ",{:.3},{:.3},{:.3}",
                    class.reg_up[h] * mw,
                    class.reg_down[h] * mw,
                    class.energy[h] * mw
                )?;
            }
            writeln!(
                w,
                ",{:.3},{:.3},{:.3}",
                series.total_up[h] * mw,
                series.total_down[h] * mw,
                series.total_energy[h] * mw
            )?;
        }
        Ok(())
    })?;
    let summary_path = out.emit("capacity_summary.csv", |w| {
        writeln!(w, "# profile={}", cities.label)?;
        writeln!(w, "row,reg_up_gw,reg_down_gw,energy_gwh,dissipation_per_h")?;
        for p in &summary.peaks {
            writeln!(
                w,
                "{}_peak,{:.4},{:.4},{:.4},{}",
                p.kind.name(),
                p.peak_up * gw,
                p.peak_down * gw,
                p.peak_energy * gw,
                p.dissipation
            )?;
        }
        writeln!(
            w,
            "total_min,{:.4},{:.4},{:.4},",
            summary.min_total_up * gw,
            summary.min_total_down * gw,
            summary.min_total_energy * gw
        )
    })?;
    println!("{}\n{}", hourly.display(), summary_path.display());
    Ok(())
}

/// Bring a kW signal onto the 4 s control grid.
fn to_control_grid(u: SignalSeries) -> Result<SignalSeries, Failure> {
    let ratio = u.step * 3600.0 / CONTROL_STEP_SECONDS;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 {
        return Err(Failure::Validation(format!(
            "signal step {} s is not a whole multiple of the {CONTROL_STEP_SECONDS} s control step",
            u.step * 3600.0
        )));
    }
    Ok(u.refined(factor as usize))
}

pub fn track(c: &Common, a: &TrackArgs) -> Result<(), Failure> {
    let mut fp = Fingerprint::new("track", c);
    let fleet = load_fleet(c, &mut fp)?;
    fp.add("args", format!("{a:?}"));
    let class = fleet.class(a.class).ok_or_else(|| {
        Failure::Validation(format!("fleet config has no `{}` class", a.class.name()))
    })?;
    if a.units == 0 {
        return Err(Failure::Validation("--units must be positive".into()));
    }
    let loaded = load_signal_file(c, &mut fp)?;
    if validated_only(c) {
        return Ok(());
    }
    let ambient = a
        .ambient
        .or(class.fixed_ambient)
        .unwrap_or(DEFAULT_TRACK_AMBIENT);
    let params = class.ranges.midpoint();
    let battery = battery_from_fleet(&params, ambient, a.units as f64)?.battery;

    let signal = loaded.unwrap_or_else(|| synth_regulation_signal(c.seed, a.hours.unwrap_or(1.0)));
    let amplitude =
        match signal.unit {
            SignalUnit::Normalized => Some(a.amplitude_kw.unwrap_or(
                a.amplitude_fraction * battery.charge_limit.min(battery.discharge_limit),
            )),
            SignalUnit::Power(_) => None,
        };
    let mut u = match (signal.unit, amplitude) {
        (SignalUnit::Power(unit), _) => signal.scaled(unit.factor_to(PowerUnit::Kw), PowerUnit::Kw),
        (SignalUnit::Normalized, Some(amp)) => signal.scaled(amp, PowerUnit::Kw),
        (SignalUnit::Normalized, None) => {
            unreachable!("normalized signals always get an amplitude")
        }
    };
    u = to_control_grid(u)?;
    if let Some(h) = a.hours {
        let keep = (h * 3600.0 / CONTROL_STEP_SECONDS).round() as usize;
        if keep == 0 {
            return Err(Failure::Validation(
                "--hours is shorter than one control step".into(),
            ));
        }
        u.samples.truncate(keep);
    }
    let admissibility = is_admissible(&battery, &u)?;

    let population = |seed: u64| -> Result<Population, Failure> {
        let pop = if a.heterogeneous {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let params = (0..a.units)
                .map(|_| class.ranges.sample(&mut rng))
                .collect();
            Population::from_params(params, ambient, seed)?
        } else {
            Population::homogeneous(params, a.units, ambient, seed)?
        };
        Ok(if a.disturbance_std > 0.0 {
            pop.with_disturbance(a.disturbance_std, seed.wrapping_add(1))?
        } else {
            pop
        })
    };
    let config = DispatchConfig {
        control_step_seconds: CONTROL_STEP_SECONDS,
        min_dwell_seconds: a.min_dwell,
        delay_steps: a.delay_steps,
    };
    let run = run_track(&mut population(c.seed)?, &u, &config)?;
    let free = free_run(&mut population(c.seed)?, u.len(), CONTROL_STEP_SECONDS)?;
    let window_steps = (ACCURACY_WINDOW_SECONDS / CONTROL_STEP_SECONDS).round() as usize;
    let acc = if run.steps.len() >= window_steps {
        Some(accuracy(&run.steps, CONTROL_STEP_SECONDS)?)
    } else {
        None
    };
    let scored = acc.as_ref().map_or(&[][..], |a| &a.windows[..]);

    let out = fp.emitter("track", c);
    let trace = out.emit("track_trace.csv", |w| write_trace_csv(w, &run.steps))?;
    let windows = out.emit("track_accuracy.csv", |w| {
        writeln!(
            w,
            "window_start_s,length_s,sum_abs_setpoint_kw,sum_abs_error_kw,score"
        )?;
        for win in scored {
            writeln!(
                w,
                "{},{},{},{},{:.6}",
                win.start_seconds,
                win.length_seconds,
                win.sum_abs_setpoint,
                win.sum_abs_error,
                win.score
            )?;
        }
        Ok(())
    })?;
    let summary = out.emit("track_summary.txt", |w| {
        writeln!(w, "class = {}", a.class.name())?;
        writeln!(w, "units = {}", a.units)?;
        writeln!(w, "ambient_c = {ambient}")?;
        writeln!(w, "battery_capacity_kwh = {:.4}", battery.capacity)?;
        writeln!(w, "battery_charge_limit_kw = {:.4}", battery.charge_limit)?;
        writeln!(
            w,
            "battery_discharge_limit_kw = {:.4}",
            battery.discharge_limit
        )?;
        writeln!(w, "battery_dissipation_per_h = {}", battery.dissipation)?;
        if let Some(amp) = amplitude {
            writeln!(w, "signal_amplitude_kw = {amp:.4}")?;
        }
        writeln!(w, "steps = {}", u.len())?;
        writeln!(w, "admissible = {}", admissibility.admissible)?;
        let first = match admissibility.first_violation {
            None => "none".to_string(),
            Some(Violation::Power { index, value }) => {
                format!("power at step {index} ({value:.3} kW)")
            }
            Some(Violation::Energy { index, soc }) => {
                format!("energy at step {index} (soc {soc:.3} kWh)")
            }
        };
        writeln!(w, "first_battery_violation = {first}")?;
        writeln!(w, "peak_soc_kwh = {:.4}", admissibility.peak_soc)?;
        writeln!(w, "scored_windows = {}", scored.len())?;
        if let Some(acc) = &acc {
            writeln!(w, "min_window_accuracy = {:.6}", acc.min_score())?;
            writeln!(w, "aggregate_accuracy = {:.6}", acc.aggregate)?;
        }
        writeln!(w, "temperature_violations = {}", run.violations.len())?;
        writeln!(
            w,
            "cycles_per_unit_day_regulated = {:.4}",
            run.cycles_per_unit_day()
        )?;
        writeln!(
            w,
            "cycles_per_unit_day_free = {:.4}",
            free.cycles_per_unit_day()
        )?;
        if free.mode_changes > 0 {
            writeln!(
                w,
                "cycle_ratio = {:.4}",
                run.cycles_per_unit_day() / free.cycles_per_unit_day()
            )
        } else {
            writeln!(w, "cycle_ratio = n/a")
        }
    })?;
    println!(
        "{}\n{}\n{}",
        trace.display(),
        windows.display(),
        summary.display()
    );
    Ok(())
}

fn sum_reports(reports: &[RevenueReport], hours: usize) -> RevenueReport {
    let hourly: Vec<StreamRevenue> = (0..hours)
        .map(|h| {
            reports.iter().fold(StreamRevenue::default(), |acc, r| {
                let x = r.hourly[h];
                StreamRevenue {
                    cap_up: acc.cap_up + x.cap_up,
                    cap_down: acc.cap_down + x.cap_down,
                    mileage_up: acc.mileage_up + x.mileage_up,
                    mileage_down: acc.mileage_down + x.mileage_down,
                }
            })
        })
        .collect();
    let total = reports
        .iter()
        .fold(StreamRevenue::default(), |acc, r| StreamRevenue {
            cap_up: acc.cap_up + r.total.cap_up,
            cap_down: acc.cap_down + r.total.cap_down,
            mileage_up: acc.mileage_up + r.total.mileage_up,
            mileage_down: acc.mileage_down + r.total.mileage_down,
        });
    RevenueReport { hourly, total }
}

pub fn revenue(c: &Common, a: &RevenueArgs) -> Result<(), Failure> {
    let mut fp = Fingerprint::new("revenue", c);
    let fleet = load_fleet(c, &mut fp)?;
    fp.add("args", format!("{a:?}"));
    let prices = load_price_file(c, &mut fp)?
        .ok_or_else(|| Failure::Validation("--prices is required".into()))?;
    let cities = load_cities(c, &fleet, Some(prices.len()), &mut fp)?;
    let ambient = &cities.profiles[0].ambient;
    if ambient.len() != prices.len() || ambient.start != prices.start {
        return Err(Failure::Validation(format!(
            "temperatures ({} h from {}) and prices ({} h from {}) cover different hours",
            ambient.len(),
            ambient.start,
            prices.len(),
            prices.start
        )));
    }
    let accuracy = a.accuracy.unwrap_or(fleet.accuracy);
    let multiplier = a.mileage_multiplier.unwrap_or(fleet.mileage_multiplier);
    if validated_only(c) {
        return Ok(());
    }
    let series = flexibility(&fleet, &cities)?;
    let mut reports = Vec::with_capacity(series.classes.len());
    for class in &series.classes {
        reports.push(settle(
            &award_from_flexibility(class, multiplier, accuracy)?,
            &prices,
        )?);
    }
    let fleet_report = sum_reports(&reports, prices.len());

    let out = fp.emitter("revenue", c);
    let summary = out.emit("revenue_summary.csv", |w| {
        writeln!(w, "# accuracy={accuracy} mileage_multiplier={multiplier} hours={}", prices.len())?;
        writeln!(
            w,
            "class,installed_units,cap_up_usd,cap_down_usd,mileage_up_usd,mileage_down_usd,total_usd,\
             per_unit_cap_up_usd,per_unit_cap_down_usd,per_unit_mileage_up_usd,per_unit_mileage_down_usd,per_unit_total_usd"
        )?;
        for (class, report) in series.classes.iter().zip(&reports) {
            let t = report.total;
            write!(
                w,
                "{},{:.0},{:.2},{:.2},{:.2},{:.2},{:.2}",
                class.kind.name(),
                class.installed_units,
                t.cap_up,
                t.cap_down,
                t.mileage_up,
                t.mileage_down,
                t.total()
            )?;
            match report.per_unit(class.installed_units) {
                Some(p) => writeln!(
                    w,
                    ",{:.4},{:.4},{:.4},{:.4},{:.4}",
                    p.cap_up,
                    p.cap_down,
                    p.mileage_up,
                    p.mileage_down,
                    p.total()
                )?,
                None => writeln!(w, ",,,,,")?,
            }
        }
        let t = fleet_report.total;
        writeln!(
            w,
            "fleet,,{:.2},{:.2},{:.2},{:.2},{:.2},,,,,",
            t.cap_up,
            t.cap_down,
            t.mileage_up,
            t.mileage_down,
            t.total()
        )
    })?;
    let hourly = out.emit("revenue_hourly.csv", |w| write_hourly_csv(w, &fleet_report))?;
    println!("{}\n{}", summary.display(), hourly.display());
    Ok(())
}

pub fn energy_requirement(c: &Common, a: &EnergyArgs) -> Result<(), Failure> {
    let mut fp = Fingerprint::new("energy-requirement", c);
    fp.add("args", format!("{a:?}"));
    let signal = match load_signal_file(c, &mut fp)? {
        Some(s) => s,
        None => {
            fp.add("signal", "synthetic 24 h");
            synth_regulation_signal(c.seed, 24.0)
        }
    };
    if signal.unit != SignalUnit::Normalized {
        return Err(Failure::Validation(format!(
            "energy-requirement needs a normalized signal (`# normalized=true`), found {}",
            signal.unit
        )));
    }
    if a.alphas.is_empty() || a.amplitudes.is_empty() {
        return Err(Failure::Validation(
            "--alphas and --amplitudes need at least one value".into(),
        ));
    }
    if validated_only(c) {
        return Ok(());
    }
    let mut rows = Vec::with_capacity(a.alphas.len() * a.amplitudes.len());
    for &alpha in &a.alphas {
        for &amp in &a.amplitudes {
            rows.push((alpha, amp, max_energy_requirement(alpha, amp, &signal)?));
        }
    }
    let out = fp.emitter("energy-requirement", c);
    let path = out.emit("energy_requirement.csv", |w| {
        writeln!(w, "# signal_hours={}", signal.duration())?;
        writeln!(w, "alpha_per_h,amplitude_mw,max_energy_mwh")?;
        for (alpha, amp, e) in &rows {
            writeln!(w, "{alpha},{amp},{e:.4}")?;
        }
        Ok(())
    })?;
    println!("{}", path.display());
    Ok(())
}

pub fn compare(c: &Common, a: &CompareArgs) -> Result<(), Failure> {
    let mut fp = Fingerprint::new("compare", c);
    let fleet = load_fleet(c, &mut fp)?;
    let techs = match &a.technologies {
        Some(p) => {
            let text = read_input(p)?;
            fp.add("technologies", sha256_hex(text.as_bytes()));
            parse_technologies(&text)
                .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
        }
        None => default_technologies(),
    };
    let cities = load_cities(c, &fleet, None, &mut fp)?;
    if validated_only(c) {
        return Ok(());
    }
    let series = flexibility(&fleet, &cities)?;
    let mut figures = Vec::with_capacity(series.classes.len());
    for (class, cfg) in series.classes.iter().zip(&fleet.classes) {
        let profile = match cfg.fixed_ambient {
            Some(t) => format!("fixed {t} °C"),
            None => cities.label.clone(),
        };
        figures.push(tcl_cost_figures(class, &profile, &cfg.capital_cost)?);
    }
    let report = comparison_table(&figures, &techs)?;
    let out = fp.emitter("compare", c);
    let csv = out.emit("cost_comparison.csv", |w| report.write_csv(w))?;
    let text = out.emit("cost_comparison.txt", |w| {
        w.write_all(report.to_text().as_bytes())
    })?;
    println!("{}\n{}", csv.display(), text.display());
    Ok(())
}

fn describe(d: &Dataset) {
    println!(
        "{}: {} ({} rows, step {} s, sha256 {})",
        d.kind,
        d.path.display(),
        d.horizon,
        d.step_hours * 3600.0,
        d.checksum
    );
}

pub fn validate(c: &Common) -> Result<(), Failure> {
    let mut fp = Fingerprint::new("validate", c);
    let fleet = load_fleet(c, &mut fp)?;
    println!(
        "fleet: {} ({} classes, {} cities)",
        c.fleet
            .as_ref()
            .map_or("built-in".into(), |p| p.display().to_string()),
        fleet.classes.len(),
        fleet.cities.len()
    );
    if let Some(dir) = &c.temps {
        for city in &fleet.cities {
            describe(&load_temperature(&city.temperature_path(dir))?.0);
        }
    }
    if let Some(p) = &c.prices {
        describe(&load_prices(p)?.0);
    }
    if let Some(p) = &c.signal {
        let (d, s) = load_signal(p)?;
        describe(&d);
        println!("  unit: {}", s.unit);
    }
    println!("inputs valid");
    Ok(())
}

pub fn synth(c: &Common) -> Result<(), Failure> {
    let fp = Fingerprint::new("synth", c);
    if validated_only(c) {
        return Ok(());
    }
    let out = fp.emitter("synth", c);
    let start = study_start();
    for (i, city) in default_cities().iter().enumerate() {
        let series = synth_temperature(
            city,
            c.seed.wrapping_add(1 + i as u64),
            start,
            HOURS_PER_YEAR,
        );
        out.emit(
            &format!("fixtures/synthetic/temps/{}.csv", city.name),
            |w| write_temperature_csv(w, &series),
        )?;
    }
    out.emit("fixtures/synthetic/prices.csv", |w| {
        write_price_csv(w, &synth_prices(start, HOURS_PER_YEAR))
    })?;
    out.emit("fixtures/synthetic/regulation_signal.csv", |w| {
        write_signal_csv(w, &synth_regulation_signal(c.seed, 24.0))
    })?;
    println!("{}", c.out.join("fixtures/synthetic").display());
    Ok(())
}
