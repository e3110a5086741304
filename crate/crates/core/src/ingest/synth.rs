//! Deterministic synthetic stand-ins for historical temperature, price and
//! regulation-signal data. Everything lands under `fixtures/synthetic/` so it
//! cannot be mistaken for measured data.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{write_file, write_price_csv, write_signal_csv, write_temperature_csv, IngestError};
use crate::battery::{GeneralizedBattery, PowerUnit, SignalSeries, SignalUnit};
use crate::market::PriceSeries;
use crate::tcl::AmbientSeries;

/// Year-average regulation MCPs, $/MW: capacity up, capacity down, mileage up, mileage down.
pub const AVERAGE_PRICES: [f64; 4] = [4.61, 3.43, 0.069, 0.130];
pub const HOURS_PER_YEAR: usize = 8760;
pub const SIGNAL_STEP_SECONDS: f64 = 4.0;

pub fn study_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2013, 6, 1, 0, 0, 0).unwrap()
}

/// Annual plus diurnal sinusoidal climate for one city.
#[derive(Debug, Clone, PartialEq)]
pub struct CityClimate {
    pub name: String,
    pub households: f64,
    /// °C
    pub annual_mean: f64,
    pub annual_amplitude: f64,
    pub diurnal_amplitude: f64,
    /// Day of year with the warmest mean.
    pub warmest_day: f64,
    /// Std of the AR(1) weather noise, °C.
    pub noise_std: f64,
}

/// Five California cities with household counts from the 2011 census and
/// rough, non-historical climate shapes.
pub fn default_cities() -> Vec<CityClimate> {
    let city = |name: &str, households: f64, mean: f64, annual: f64, diurnal: f64| CityClimate {
        name: name.into(),
        households,
        annual_mean: mean,
        annual_amplitude: annual,
        diurnal_amplitude: diurnal,
        warmest_day: 200.0,
        noise_std: 1.5,
    };
    vec![
        city("SA", 558_807.0, 16.5, 8.5, 8.0),
        city("SF", 380_971.0, 14.5, 3.0, 3.5),
        city("BF", 288_342.0, 19.0, 10.0, 8.0),
        city("LA", 3_462_202.0, 18.5, 4.5, 5.0),
        city("SD", 1_176_718.0, 18.0, 4.0, 4.0),
    ]
}

/// Hourly temperatures: annual cosine + diurnal cosine (peak 15:00) + AR(1) noise.
pub fn synth_temperature(
    city: &CityClimate,
    seed: u64,
    start: DateTime<Utc>,
    hours: usize,
) -> AmbientSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let phi: f64 = 0.9;
    let innovation = city.noise_std * (1.0 - phi * phi).sqrt();
    let mut noise = 0.0;
    let values = (0..hours)
        .map(|h| {
            let t = start + Duration::hours(h as i64);
            let day = t.ordinal0() as f64 + t.hour() as f64 / 24.0;
            let annual =
                city.annual_amplitude * (2.0 * PI * (day - city.warmest_day) / 365.0).cos();
            let diurnal =
                city.diurnal_amplitude * (2.0 * PI * (t.hour() as f64 - 15.0) / 24.0).cos();
            noise = phi * noise + innovation * normal.sample(&mut rng);
            city.annual_mean + annual + diurnal + noise
        })
        .collect();
    AmbientSeries::new(start, 1.0, values).expect("finite synthetic temperatures")
}

/// Flat prices at the year-average MCPs.
pub fn synth_prices(start: DateTime<Utc>, hours: usize) -> PriceSeries {
    PriceSeries::flat(start, hours, AVERAGE_PRICES).expect("valid flat prices")
}

/// Zero-mean, band-limited, normalized regulation trace at 4 s.
///
/// A handful of sinusoids with whole numbers of cycles over the horizon plus
/// two AR(1)-filtered noise components (time constants ≈ 2 min and ≈ 20 min);
/// the sample mean is removed and the result scaled to peak |r| = 1.
pub fn synth_regulation_signal(seed: u64, hours: f64) -> SignalSeries {
    let step_h = SIGNAL_STEP_SECONDS / 3600.0;
    let n = (hours / step_h).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let phase = Uniform::new(0.0, 2.0 * PI).expect("phase range");
    let cycles = Uniform::new_inclusive(6u32, 240u32).expect("cycle range");
    let tones: Vec<(f64, f64, f64)> = (0..6)
        .map(|i| {
            let k = cycles.sample(&mut rng) as f64;
            let amp = 1.0 / (1.0 + i as f64);
            (2.0 * PI * k / (n as f64), phase.sample(&mut rng), amp)
        })
        .collect();
    let ar = |tau_s: f64| (-SIGNAL_STEP_SECONDS / tau_s).exp();
    let (fast, slow) = (ar(120.0), ar(1200.0));
    let (mut x_fast, mut x_slow) = (0.0, 0.0);
    let mut raw: Vec<f64> = (0..n)
        .map(|k| {
            x_fast = fast * x_fast + (1.0 - fast * fast).sqrt() * normal.sample(&mut rng);
            x_slow = slow * x_slow + (1.0 - slow * slow).sqrt() * normal.sample(&mut rng);
            let tonal: f64 = tones
                .iter()
                .map(|(w, p, a)| a * (w * k as f64 + p).sin())
                .sum();
            0.6 * tonal + 0.5 * x_fast + 0.8 * x_slow
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    raw.iter_mut().for_each(|v| *v -= mean);
    let peak = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    raw.iter_mut()
        .for_each(|v| *v = (*v / peak).clamp(-1.0, 1.0));
    SignalSeries::new(step_h, raw, SignalUnit::Normalized).expect("normalized synthetic signal")
}

/// Random tracking test signal in kW at 4 s: one dominant sinusoid plus two
/// weaker ones (weights ≤ 0.2), periods 5–30 min.
///
/// Peak amplitude is drawn in `[lo, hi] × min(n₋, n₊)`; the caller checks
/// admissibility against the battery. The dominant tone keeps every 15 min
/// window well above the per-unit switching granularity.
pub fn synth_tracking_signal(
    seed: u64,
    battery: &GeneralizedBattery,
    hours: f64,
    amplitude_fraction: [f64; 2],
) -> SignalSeries {
    let battery = battery.to_unit(PowerUnit::Kw);
    let step_h = SIGNAL_STEP_SECONDS / 3600.0;
    let n = (hours / step_h).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = battery.charge_limit.min(battery.discharge_limit);
    let [lo, hi] = amplitude_fraction;
    let peak = limit
        * if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|i| {
            let period_h = rng.random_range(5.0..=30.0) / 60.0;
            let weight = if i == 0 {
                1.0
            } else {
                rng.random_range(0.0..=0.2)
            };
            (2.0 * PI / period_h, rng.random_range(0.0..2.0 * PI), weight)
        })
        .collect();
    let weight: f64 = tones.iter().map(|t| t.2).sum();
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 * step_h;
            peak / weight
                * tones
                    .iter()
                    .map(|(w, p, a)| a * (w * t + p).sin())
                    .sum::<f64>()
        })
        .collect();
    SignalSeries::new(step_h, samples, SignalUnit::Power(PowerUnit::Kw)).expect("finite signal")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSet {
    pub root: PathBuf,
    pub temperatures: Vec<(String, PathBuf)>,
    pub prices: PathBuf,
    pub signal: PathBuf,
}

/// Write temperature files (one per city), a flat price file and a 24 h signal
/// under `<out_dir>/fixtures/synthetic/`.
pub fn synth_fixtures(
    seed: u64,
    cities: &[CityClimate],
    out_dir: &Path,
) -> Result<FixtureSet, IngestError> {
    let root = out_dir.join("fixtures").join("synthetic");
    let start = study_start();
    let mut temperatures = Vec::with_capacity(cities.len());
    for (i, city) in cities.iter().enumerate() {
        let series =
            synth_temperature(city, seed.wrapping_add(1 + i as u64), start, HOURS_PER_YEAR);
        let path = root.join("temps").join(format!("{}.csv", city.name));
        write_file(&path, |w| write_temperature_csv(w, &series))?;
        temperatures.push((city.name.clone(), path));
    }
    let prices = root.join("prices.csv");
    write_file(&prices, |w| {
        write_price_csv(w, &synth_prices(start, HOURS_PER_YEAR))
    })?;
    let signal = root.join("regulation_signal.csv");
    write_file(&signal, |w| {
        write_signal_csv(w, &synth_regulation_signal(seed, 24.0))
    })?;
    Ok(FixtureSet {
        root,
        temperatures,
        prices,
        signal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_prices, load_signal, load_temperature, sha256_hex};

    #[test]
    fn signal_is_zero_mean_and_nontrivial() {
        let s = synth_regulation_signal(7, 24.0);
        assert_eq!(s.len(), 21_600);
        let mean = s.samples.iter().sum::<f64>() / s.len() as f64;
        let mean_abs = s.samples.iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 1e-3, "{mean}");
        assert!(mean_abs > 0.05, "{mean_abs}");
        assert!(s.samples.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cities = default_cities();
        let fa = synth_fixtures(11, &cities[..2], a.path()).unwrap();
        let fb = synth_fixtures(11, &cities[..2], b.path()).unwrap();
        let digest = |p: &Path| sha256_hex(&std::fs::read(p).unwrap());
        assert_eq!(digest(&fa.signal), digest(&fb.signal));
        assert_eq!(digest(&fa.prices), digest(&fb.prices));
        for ((_, pa), (_, pb)) in fa.temperatures.iter().zip(&fb.temperatures) {
            assert_eq!(digest(pa), digest(pb));
        }
        assert!(fa.root.ends_with("fixtures/synthetic"));
    }

    #[test]
    fn fixtures_load_back_and_prices_average_correctly() {
        let dir = tempfile::tempdir().unwrap();
        let f = synth_fixtures(3, &default_cities()[..1], dir.path()).unwrap();
        let (_, temps) = load_temperature(&f.temperatures[0].1).unwrap();
        assert_eq!(temps.len(), HOURS_PER_YEAR);
        let (_, prices) = load_prices(&f.prices).unwrap();
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let means = [
            avg(&prices.cap_up),
            avg(&prices.cap_down),
            avg(&prices.mileage_up),
            avg(&prices.mileage_down),
        ];
        for (m, e) in means.iter().zip(AVERAGE_PRICES) {
            assert!((m - e).abs() < 1e-12);
        }
        let (_, sig) = load_signal(&f.signal).unwrap();
        assert_eq!(sig.unit, SignalUnit::Normalized);
        assert_eq!(sig.len(), 21_600);
    }

    #[test]
    fn climates_differ_between_cities() {
        let cities = default_cities();
        let mean = |c: &CityClimate| {
            let s = synth_temperature(c, 1, study_start(), HOURS_PER_YEAR);
            let max = s.values.iter().cloned().fold(f64::MIN, f64::max);
            max
        };
        assert!(mean(&cities[2]) > mean(&cities[1]));
    }
}
