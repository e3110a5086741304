//! Capital cost per kW and per kWh of TCL flexibility, and comparison with
//! reference storage technologies.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, ModelError};
use crate::fleet::{ClassSeries, DeviceKind};

/// Reference technology data shipped with the crate.
pub const DEFAULT_TECHNOLOGIES: &str = include_str!("../data/storage_technologies.toml");
pub const TECHNOLOGY_DATA_VERSION: u32 = 1;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Range {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.lo * k, self.hi * k)
    }

    fn label(&self, digits: usize) -> String {
        let fmt = |v: f64| group_thousands(v, digits);
        if self.lo == self.hi {
            fmt(self.lo)
        } else {
            format!("{}-{}", fmt(self.lo), fmt(self.hi))
        }
    }
}

fn group_thousands(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    let (int, frac) = s
        .split_once('.')
        .map_or((s.as_str(), None), |(i, f)| (i, Some(f)));
    let (sign, int) = int.strip_prefix('-').map_or(("", int), |i| ("-", i));
    let mut grouped = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    match frac {
        Some(f) => format!("{sign}{grouped}.{f}"),
        None => format!("{sign}{grouped}"),
    }
}

/// Per-unit instrumentation cost range, $/unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapitalCost {
    pub lo: f64,
    pub hi: f64,
}

impl CapitalCost {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ModelError> {
        let c = Self { lo, hi };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_non_negative("capital cost lo", self.lo)?;
        check_non_negative("capital cost hi", self.hi)?;
        if self.lo > self.hi {
            return Err(ModelError::InvalidParameter {
                name: "capital cost",
                reason: format!("lo {} > hi {}", self.lo, self.hi),
            });
        }
        Ok(())
    }

    /// Metering, control and telemetry retrofit cost per unit.
    pub fn typical(kind: DeviceKind) -> Self {
        match kind {
            DeviceKind::Ac | DeviceKind::HeatPump => Self {
                lo: 100.0,
                hi: 250.0,
            },
            DeviceKind::WaterHeater | DeviceKind::Refrigerator => Self {
                lo: 50.0,
                hi: 100.0,
            },
        }
    }

    fn over(&self, denominator: f64) -> Option<Range> {
        (denominator > 0.0 && denominator.is_finite())
            .then(|| Range::new(self.lo / denominator, self.hi / denominator))
    }
}

/// $/kW and $/kWh figures for one class; `None` where the class never offers flexibility.
#[derive(Debug, Clone, PartialEq)]
pub struct TclCostFigures {
    pub kind: DeviceKind,
    /// Temperature profile the figures assume (city name, "fixed 20 °C", ...).
    pub profile: String,
    pub per_kw_up: Option<Range>,
    pub per_kw_down: Option<Range>,
    pub per_kwh: Option<Range>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().fold(0.0, |a, x| a + x) / v.len() as f64
    }
}

/// Divide the per-unit capital cost by per-unit average limits over the horizon.
pub fn tcl_cost_figures(
    class: &ClassSeries,
    profile: &str,
    cost: &CapitalCost,
) -> Result<TclCostFigures, ModelError> {
    cost.validate()?;
    let per_unit = |v: &[f64]| {
        if class.installed_units > 0.0 {
            mean(v) / class.installed_units
        } else {
            0.0
        }
    };
    Ok(TclCostFigures {
        kind: class.kind,
        profile: profile.to_string(),
        per_kw_up: cost.over(per_unit(&class.reg_up)),
        per_kw_down: cost.over(per_unit(&class.reg_down)),
        per_kwh: cost.over(per_unit(&class.energy)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageTech {
    pub name: String,
    pub maturity: String,
    pub cycles_per_year: String,
    pub round_trip_efficiency: Range,
    pub cost_per_kwh: Range,
    pub cost_per_kw: Range,
    #[serde(default)]
    pub source: String,
}

impl StorageTech {
    fn validate(&self) -> Result<(), ModelError> {
        for (name, r) in [
            ("cost_per_kwh", self.cost_per_kwh),
            ("cost_per_kw", self.cost_per_kw),
            ("round_trip_efficiency", self.round_trip_efficiency),
        ] {
            check_non_negative(name, r.lo)?;
            if r.lo > r.hi {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("{}: range [{}, {}] is reversed", self.name, r.lo, r.hi),
                });
            }
        }
        let eff = self.round_trip_efficiency;
        if eff.lo <= 0.0 || eff.hi > 1.1 {
            return Err(ModelError::InvalidParameter {
                name: "round_trip_efficiency",
                reason: format!("{}: must lie in (0, 1.1]", self.name),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct TechnologyFile {
    version: u32,
    technology: Vec<StorageTech>,
}

/// Parse a versioned technology table.
pub fn parse_technologies(text: &str) -> Result<Vec<StorageTech>, ModelError> {
    let file: TechnologyFile = toml::from_str(text).map_err(|e| ModelError::InvalidParameter {
        name: "technology file",
        reason: e.to_string(),
    })?;
    if file.version != TECHNOLOGY_DATA_VERSION {
        return Err(ModelError::InvalidParameter {
            name: "technology file",
            reason: format!(
                "unsupported version {} (expected {TECHNOLOGY_DATA_VERSION})",
                file.version
            ),
        });
    }
    for t in &file.technology {
        t.validate()?;
    }
    Ok(file.technology)
}

pub fn default_technologies() -> Vec<StorageTech> {
    parse_technologies(DEFAULT_TECHNOLOGIES).expect("bundled technology table is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowSource {
    Reference,
    /// TCL row, labelled by its assumed temperature profile.
    Tcl {
        profile: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub name: String,
    pub source: RowSource,
    pub maturity: String,
    pub cycles_per_year: String,
    pub round_trip_efficiency: Range,
    pub per_kwh: Option<Range>,
    pub per_kw_up: Option<Range>,
    pub per_kw_down: Option<Range>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

/// Merge TCL figures with reference technologies, sorted by lower $/kWh bound.
pub fn comparison_table(
    tcl: &[TclCostFigures],
    techs: &[StorageTech],
) -> Result<CostReport, ModelError> {
    if techs.is_empty() {
        return Err(ModelError::Empty("reference technologies"));
    }
    let mut rows: Vec<CostRow> = techs
        .iter()
        .map(|t| CostRow {
            name: t.name.clone(),
            source: RowSource::Reference,
            maturity: t.maturity.clone(),
            cycles_per_year: t.cycles_per_year.clone(),
            round_trip_efficiency: t.round_trip_efficiency,
            per_kwh: Some(t.cost_per_kwh),
            per_kw_up: Some(t.cost_per_kw),
            per_kw_down: Some(t.cost_per_kw),
        })
        .collect();
    rows.extend(tcl.iter().map(|f| CostRow {
        name: f.kind.name().to_string(),
        source: RowSource::Tcl {
            profile: f.profile.clone(),
        },
        maturity: "R&D".into(),
        cycles_per_year: "nominal".into(),
        round_trip_efficiency: Range::new(1.0, 1.0),
        per_kwh: f.per_kwh,
        per_kw_up: f.per_kw_up,
        per_kw_down: f.per_kw_down,
    }));
    rows.sort_by(|a, b| {
        let key = |r: &CostRow| r.per_kwh.map_or(f64::INFINITY, |x| x.lo);
        key(a).total_cmp(&key(b)).then_with(|| a.name.cmp(&b.name))
    });
    Ok(CostReport { rows })
}

fn opt_label(r: Option<Range>) -> String {
    r.map_or_else(|| "unavailable".into(), |r| r.label(0))
}

impl CostRow {
    fn profile(&self) -> &str {
        match &self.source {
            RowSource::Reference => "",
            RowSource::Tcl { profile } => profile,
        }
    }

    fn per_kw_label(&self) -> (String, String) {
        (opt_label(self.per_kw_up), opt_label(self.per_kw_down))
    }
}

impl CostReport {
    /// CSV with one row per technology; missing figures are empty fields.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "technology,profile,maturity,cycles_per_year,efficiency_lo,efficiency_hi,\
             usd_per_kwh_lo,usd_per_kwh_hi,usd_per_kw_up_lo,usd_per_kw_up_hi,\
             usd_per_kw_down_lo,usd_per_kw_down_hi"
        )?;
        let pair =
            |r: Option<Range>| r.map_or_else(|| ",".to_string(), |r| format!("{},{}", r.lo, r.hi));
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},\"{}\",{},{},{},{},{}",
                r.name,
                r.profile(),
                r.maturity,
                r.cycles_per_year,
                r.round_trip_efficiency.lo,
                r.round_trip_efficiency.hi,
                pair(r.per_kwh),
                pair(r.per_kw_up),
                pair(r.per_kw_down),
            )?;
        }
        Ok(())
    }

    /// Aligned-column text table.
    pub fn to_text(&self) -> String {
        let header = [
            "Technology",
            "Profile",
            "Maturity",
            "Cycles/year",
            "Efficiency",
            "Cost ($/kWh)",
            "Cost ($/kW) RU",
            "Cost ($/kW) RD",
        ];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                let (up, down) = r.per_kw_label();
                let eff = r.round_trip_efficiency.scaled(100.0).label(0) + "%";
                [
                    r.name.clone(),
                    r.profile().to_string(),
                    r.maturity.clone(),
                    r.cycles_per_year.clone(),
                    eff,
                    opt_label(r.per_kwh),
                    up,
                    down,
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut text = String::new();
        let mut line = |cells: Vec<&str>| {
            let parts: Vec<String> = cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(text, "{}", parts.join("  ").trim_end());
        };
        line(header.to_vec());
        line(
            widths
                .iter()
                .map(|&w| &"----------------------------------------"[..w.min(40)])
                .collect(),
        );
        for row in &body {
            line(row.iter().map(String::as_str).collect());
        }
        text
    }
}
