//! Fleet configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::economics::CapitalCost;
use crate::error::{check_non_negative, check_positive, ModelError};
use crate::fleet::{DeviceClass, DeviceKind, ParticipationCurve, TclRanges};
use crate::market::{DEFAULT_ACCURACY, DEFAULT_MILEAGE_MULTIPLIER};

pub const DEFAULT_FLEET: &str = include_str!("../data/fleet_default.toml");
pub const DEFAULT_HOUSEHOLDS: f64 = 13.7e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub kind: DeviceKind,
    pub saturation_rate: f64,
    pub ranges: TclRanges,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participation: Option<ParticipationCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_ambient: Option<f64>,
    pub capital_cost: CapitalCost,
}

impl ClassConfig {
    pub fn typical(kind: DeviceKind) -> Self {
        Self {
            kind,
            saturation_rate: kind.typical_saturation(),
            ranges: kind.typical_ranges(),
            participation: kind.default_participation(),
            fixed_ambient: kind.typical_fixed_ambient(),
            capital_cost: CapitalCost::typical(kind),
        }
    }

    pub fn to_class(&self) -> DeviceClass {
        DeviceClass {
            kind: self.kind,
            params: self.ranges.midpoint(),
            saturation_rate: self.saturation_rate,
            fixed_ambient: self.fixed_ambient,
            participation: self.participation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityConfig {
    pub name: String,
    pub households: f64,
    /// Temperature CSV; relative paths resolve against `--temps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temps: Option<PathBuf>,
}

impl CityConfig {
    /// `<dir>/<temps or name.csv>`.
    pub fn temperature_path(&self, dir: &Path) -> PathBuf {
        match &self.temps {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => dir.join(p),
            None => dir.join(format!("{}.csv", self.name)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub households_total: f64,
    pub mileage_multiplier: f64,
    pub accuracy: f64,
    #[serde(default, rename = "class")]
    pub classes: Vec<ClassConfig>,
    #[serde(default, rename = "city")]
    pub cities: Vec<CityConfig>,
}

impl FleetConfig {
    /// All four classes with typical parameters over the five default cities.
    pub fn typical() -> Self {
        Self {
            households_total: DEFAULT_HOUSEHOLDS,
            mileage_multiplier: DEFAULT_MILEAGE_MULTIPLIER,
            accuracy: DEFAULT_ACCURACY,
            classes: DeviceKind::ALL
                .into_iter()
                .map(ClassConfig::typical)
                .collect(),
            cities: crate::ingest::synth::default_cities()
                .into_iter()
                .map(|c| CityConfig {
                    name: c.name,
                    households: c.households,
                    temps: None,
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ModelError::InvalidParameter {
            name: "fleet config",
            reason: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fleet config serializes")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_non_negative("households_total", self.households_total)?;
        check_non_negative("mileage_multiplier", self.mileage_multiplier)?;
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(ModelError::InvalidParameter {
                name: "accuracy",
                reason: format!("{} not in [0, 1]", self.accuracy),
            });
        }
        let mut seen = Vec::new();
        for c in &self.classes {
            if seen.contains(&c.kind) {
                return Err(ModelError::InvalidParameter {
                    name: "class",
                    reason: format!("duplicate class {}", c.kind.name()),
                });
            }
            seen.push(c.kind);
            c.ranges.validate()?;
            c.to_class().validate()?;
            c.capital_cost.validate()?;
        }
        for city in &self.cities {
            check_positive("households", city.households)?;
        }
        Ok(())
    }

    pub fn to_classes(&self) -> Vec<DeviceClass> {
        self.classes.iter().map(ClassConfig::to_class).collect()
    }

    pub fn class(&self, kind: DeviceKind) -> Option<&ClassConfig> {
        self.classes.iter().find(|c| c.kind == kind)
    }

    /// Whether any class needs city temperature series.
    pub fn needs_temperatures(&self) -> bool {
        self.classes.iter().any(|c| c.fixed_ambient.is_none())
    }
}
