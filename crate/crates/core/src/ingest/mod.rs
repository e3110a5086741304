//! Loading and validation of external time series.
//!
//! Schemas (all timestamps ISO-8601 UTC, temperatures °C, prices $/MW):
//!
//! - temperature: `timestamp_utc,temp_c`, hourly, no gaps
//! - prices: `timestamp_utc,ru_cap,rd_cap,ru_mil,rd_mil`, hourly, no gaps
//! - regulation signal: `t_seconds,value`, uniform spacing; leading comment
//!   directives `# normalized=true` (samples must lie in [−1, 1]) or
//!   `# unit=kw|mw|gw` for power-valued traces (default kW)
//!
//! Lines starting with `#` are comments. Every rejection names the file line.

pub mod synth;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::battery::{PowerUnit, SignalSeries, SignalUnit};
use crate::error::ModelError;
use crate::market::PriceSeries;
use crate::tcl::AmbientSeries;

pub const TEMPERATURE_HEADER: [&str; 2] = ["timestamp_utc", "temp_c"];
pub const PRICE_HEADER: [&str; 5] = ["timestamp_utc", "ru_cap", "rd_cap", "ru_mil", "rd_mil"];
pub const SIGNAL_HEADER: [&str; 2] = ["t_seconds", "value"];

/// Spacing tolerance for signal timestamps, seconds.
const SIGNAL_SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: header must be `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: gap, missing timestamp {expected}")]
    Gap {
        path: PathBuf,
        line: u64,
        expected: String,
    },
    #[error("{path}:{line}: duplicate timestamp {timestamp}")]
    Duplicate {
        path: PathBuf,
        line: u64,
        timestamp: String,
    },
    #[error("{path}:{line}: timestamp {timestamp} is out of order or off the declared step")]
    Spacing {
        path: PathBuf,
        line: u64,
        timestamp: String,
    },
    #[error("{path}:{line}: non-finite value in column `{column}`")]
    NonFinite {
        path: PathBuf,
        line: u64,
        column: String,
    },
    #[error("{path}:{line}: value {value} in column `{column}` is out of range ({reason})")]
    Range {
        path: PathBuf,
        line: u64,
        column: String,
        value: f64,
        reason: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Temperature,
    Prices,
    RegulationSignal,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Temperature => "temperature",
            DatasetKind::Prices => "prices",
            DatasetKind::RegulationSignal => "regulation_signal",
        })
    }
}

/// Provenance of a validated input file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub path: PathBuf,
    /// Number of data rows.
    pub horizon: usize,
    pub step_hours: f64,
    /// SHA-256 of the raw bytes, hex.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Series {
    Temperature(AmbientSeries),
    Prices(PriceSeries),
    Signal(SignalSeries),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Source<'a> {
    path: &'a Path,
    text: String,
}

impl Source<'_> {
    fn parse_err(&self, line: u64, message: impl Into<String>) -> IngestError {
        IngestError::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Leading `# key=value` directives.
    fn directives(&self) -> Vec<(String, String)> {
        self.text
            .lines()
            .take_while(|l| l.trim_start().starts_with('#') || l.trim().is_empty())
            .filter_map(|l| {
                let body = l.trim_start().trim_start_matches('#').trim();
                body.split_once('=')
                    .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_ascii_lowercase()))
            })
            .collect()
    }

    /// Parsed rows with their 1-based file line numbers, after checking the header.
    fn records(&self, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(self.text.as_bytes());
        let found = reader
            .headers()
            .map_err(|e| self.parse_err(1, e.to_string()))?
            .clone();
        if found.iter().ne(header.iter().copied()) {
            return Err(IngestError::Schema {
                path: self.path.to_path_buf(),
                expected: header.join(","),
                found: found.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                self.parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(self.parse_err(
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            rows.push((line, rec));
        }
        if rows.is_empty() {
            return Err(IngestError::Invalid {
                path: self.path.to_path_buf(),
                message: "no data rows".into(),
            });
        }
        Ok(rows)
    }

    fn number(&self, line: u64, column: &str, raw: &str) -> Result<f64, IngestError> {
        let v: f64 = raw.parse().map_err(|_| {
            self.parse_err(
                line,
                format!("`{raw}` in column `{column}` is not a number"),
            )
        })?;
        if !v.is_finite() {
            return Err(IngestError::NonFinite {
                path: self.path.to_path_buf(),
                line,
                column: column.into(),
            });
        }
        Ok(v)
    }

    fn model_err(&self, source: ModelError) -> IngestError {
        IngestError::Model {
            path: self.path.to_path_buf(),
            source,
        }
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_timestamp(src: &Source, line: u64, raw: &str) -> Result<DateTime<Utc>, IngestError> {
    let t = DateTime::parse_from_rfc3339(raw)
        .map_err(|e| src.parse_err(line, format!("bad timestamp `{raw}`: {e}")))?;
    if t.offset().local_minus_utc() != 0 {
        return Err(src.parse_err(line, format!("timestamp `{raw}` is not UTC")));
    }
    Ok(t.with_timezone(&Utc))
}

/// Hourly timestamps with no gaps or duplicates; returns the start.
fn check_hourly(
    src: &Source,
    stamps: &[(u64, DateTime<Utc>)],
) -> Result<DateTime<Utc>, IngestError> {
    let step = Duration::hours(1);
    for pair in stamps.windows(2) {
        let ((_, prev), (line, t)) = (pair[0], pair[1]);
        let expected = prev + step;
        if t == prev {
            return Err(IngestError::Duplicate {
                path: src.path.to_path_buf(),
                line,
                timestamp: format_timestamp(&t),
            });
        }
        if t > expected && (t - prev).num_seconds() % 3600 == 0 {
            return Err(IngestError::Gap {
                path: src.path.to_path_buf(),
                line,
                expected: format_timestamp(&expected),
            });
        }
        if t != expected {
            return Err(IngestError::Spacing {
                path: src.path.to_path_buf(),
                line,
                timestamp: format_timestamp(&t),
            });
        }
    }
    Ok(stamps[0].1)
}

fn read_source(path: &Path) -> Result<(Source<'_>, String), IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let checksum = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| IngestError::Invalid {
        path: path.to_path_buf(),
        message: format!("not UTF-8: {e}"),
    })?;
    Ok((Source { path, text }, checksum))
}

fn parse_temperature(src: &Source) -> Result<AmbientSeries, IngestError> {
    let rows = src.records(&TEMPERATURE_HEADER)?;
    let mut stamps = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        stamps.push((*line, parse_timestamp(src, *line, &rec[0])?));
        values.push(src.number(*line, "temp_c", &rec[1])?);
    }
    let start = check_hourly(src, &stamps)?;
    AmbientSeries::new(start, 1.0, values).map_err(|e| src.model_err(e))
}

fn parse_prices(src: &Source) -> Result<PriceSeries, IngestError> {
    let rows = src.records(&PRICE_HEADER)?;
    let mut stamps = Vec::with_capacity(rows.len());
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (line, rec) in &rows {
        stamps.push((*line, parse_timestamp(src, *line, &rec[0])?));
        for (j, col) in cols.iter_mut().enumerate() {
            let name = PRICE_HEADER[j + 1];
            let v = src.number(*line, name, &rec[j + 1])?;
            if v < 0.0 {
                return Err(IngestError::Range {
                    path: src.path.to_path_buf(),
                    line: *line,
                    column: name.into(),
                    value: v,
                    reason: "prices must be >= 0".into(),
                });
            }
            col.push(v);
        }
    }
    let start = check_hourly(src, &stamps)?;
    let [a, b, c, d] = cols;
    PriceSeries::new(start, a, b, c, d).map_err(|e| src.model_err(e))
}

fn parse_signal(src: &Source) -> Result<SignalSeries, IngestError> {
    let mut normalized = false;
    let mut unit = PowerUnit::Kw;
    for (key, value) in src.directives() {
        match (key.as_str(), value.as_str()) {
            ("normalized", "true") => normalized = true,
            ("normalized", "false") => normalized = false,
            ("unit", "kw") => unit = PowerUnit::Kw,
            ("unit", "mw") => unit = PowerUnit::Mw,
            ("unit", "gw") => unit = PowerUnit::Gw,
            ("normalized" | "unit", other) => {
                return Err(IngestError::Invalid {
                    path: src.path.to_path_buf(),
                    message: format!("unsupported directive `{key}={other}`"),
                })
            }
            _ => {}
        }
    }
    let rows = src.records(&SIGNAL_HEADER)?;
    if rows.len() < 2 {
        return Err(IngestError::Invalid {
            path: src.path.to_path_buf(),
            message: "a signal needs at least two rows to define its step".into(),
        });
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut samples = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        times.push((*line, src.number(*line, "t_seconds", &rec[0])?));
        let v = src.number(*line, "value", &rec[1])?;
        if normalized && v.abs() > 1.0 {
            return Err(IngestError::Range {
                path: src.path.to_path_buf(),
                line: *line,
                column: "value".into(),
                value: v,
                reason: "declared normalized=true, must lie in [-1, 1]".into(),
            });
        }
        samples.push(v);
    }
    let step = times[1].1 - times[0].1;
    if step <= 0.0 {
        let (line, t) = times[1];
        return Err(if step == 0.0 {
            IngestError::Duplicate {
                path: src.path.to_path_buf(),
                line,
                timestamp: t.to_string(),
            }
        } else {
            IngestError::Spacing {
                path: src.path.to_path_buf(),
                line,
                timestamp: t.to_string(),
            }
        });
    }
    let t0 = times[0].1;
    for (k, &(line, t)) in times.iter().enumerate().skip(1) {
        let expected = t0 + k as f64 * step;
        let prev = times[k - 1].1;
        if (t - expected).abs() <= SIGNAL_SPACING_TOLERANCE {
            continue;
        }
        return Err(if (t - prev).abs() <= SIGNAL_SPACING_TOLERANCE {
            IngestError::Duplicate {
                path: src.path.to_path_buf(),
                line,
                timestamp: t.to_string(),
            }
        } else if t > expected {
            IngestError::Gap {
                path: src.path.to_path_buf(),
                line,
                expected: format!("{expected}"),
            }
        } else {
            IngestError::Spacing {
                path: src.path.to_path_buf(),
                line,
                timestamp: t.to_string(),
            }
        });
    }
    let unit = if normalized {
        SignalUnit::Normalized
    } else {
        SignalUnit::Power(unit)
    };
    SignalSeries::new(step / 3600.0, samples, unit).map_err(|e| src.model_err(e))
}

/// Load and validate one file of the given kind.
pub fn load_csv(kind: DatasetKind, path: &Path) -> Result<(Dataset, Series), IngestError> {
    let (src, checksum) = read_source(path)?;
    let (series, horizon, step_hours) = match kind {
        DatasetKind::Temperature => {
            let s = parse_temperature(&src)?;
            let (n, step) = (s.len(), s.step_hours);
            (Series::Temperature(s), n, step)
        }
        DatasetKind::Prices => {
            let s = parse_prices(&src)?;
            let n = s.len();
            (Series::Prices(s), n, 1.0)
        }
        DatasetKind::RegulationSignal => {
            let s = parse_signal(&src)?;
            let (n, step) = (s.len(), s.step);
            (Series::Signal(s), n, step)
        }
    };
    Ok((
        Dataset {
            kind,
            path: path.to_path_buf(),
            horizon,
            step_hours,
            checksum,
        },
        series,
    ))
}

pub fn load_temperature(path: &Path) -> Result<(Dataset, AmbientSeries), IngestError> {
    match load_csv(DatasetKind::Temperature, path)? {
        (d, Series::Temperature(s)) => Ok((d, s)),
        _ => unreachable!("temperature loader returns temperature series"),
    }
}

pub fn load_prices(path: &Path) -> Result<(Dataset, PriceSeries), IngestError> {
    match load_csv(DatasetKind::Prices, path)? {
        (d, Series::Prices(s)) => Ok((d, s)),
        _ => unreachable!("price loader returns price series"),
    }
}

pub fn load_signal(path: &Path) -> Result<(Dataset, SignalSeries), IngestError> {
    match load_csv(DatasetKind::RegulationSignal, path)? {
        (d, Series::Signal(s)) => Ok((d, s)),
        _ => unreachable!("signal loader returns signal series"),
    }
}

pub fn write_temperature_csv<W: Write>(mut out: W, series: &AmbientSeries) -> io::Result<()> {
    writeln!(out, "{}", TEMPERATURE_HEADER.join(","))?;
    for (h, v) in series.values.iter().enumerate() {
        let t = series.start
            + Duration::seconds((h as f64 * series.step_hours * 3600.0).round() as i64);
        writeln!(out, "{},{v}", format_timestamp(&t))?;
    }
    Ok(())
}

pub fn write_price_csv<W: Write>(mut out: W, prices: &PriceSeries) -> io::Result<()> {
    writeln!(out, "{}", PRICE_HEADER.join(","))?;
    for h in 0..prices.len() {
        let t = prices.start + Duration::hours(h as i64);
        writeln!(
            out,
            "{},{},{},{},{}",
            format_timestamp(&t),
            prices.cap_up[h],
            prices.cap_down[h],
            prices.mileage_up[h],
            prices.mileage_down[h]
        )?;
    }
    Ok(())
}

pub fn write_signal_csv<W: Write>(mut out: W, signal: &SignalSeries) -> io::Result<()> {
    match signal.unit {
        SignalUnit::Normalized => writeln!(out, "# normalized=true")?,
        SignalUnit::Power(u) => writeln!(out, "# unit={}", u.to_string().to_ascii_lowercase())?,
    }
    writeln!(out, "{}", SIGNAL_HEADER.join(","))?;
    let step_seconds = signal.step * 3600.0;
    for (k, v) in signal.samples.iter().enumerate() {
        writeln!(out, "{},{v}", k as f64 * step_seconds)?;
    }
    Ok(())
}

/// Write through a buffered file, creating parent directories.
pub fn write_file<F>(path: &Path, body: F) -> Result<(), IngestError>
where
    F: FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
{
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = io::BufWriter::new(file);
    body(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}
