//! State-level fleets: saturation-based device counts, temperature-dependent
//! participation, household-weighted city aggregation and hourly flexibility.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{battery_from_fleet, ClusterBattery};
use crate::error::{check_finite, check_non_negative, check_positive, ModelError};
use crate::tcl::{AmbientSeries, LoadKind, TclParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Ac,
    HeatPump,
    WaterHeater,
    Refrigerator,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 4] = [
        DeviceKind::Ac,
        DeviceKind::HeatPump,
        DeviceKind::WaterHeater,
        DeviceKind::Refrigerator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::Ac => "ac",
            DeviceKind::HeatPump => "heat_pump",
            DeviceKind::WaterHeater => "water_heater",
            DeviceKind::Refrigerator => "refrigerator",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Typical parameter ranges for residential units.
    pub fn typical_ranges(self) -> TclRanges {
        match self {
            DeviceKind::Ac => TclRanges {
                capacitance: [1.5, 2.5],
                resistance: [1.5, 2.5],
                rated_power: [4.0, 7.2],
                cop: [2.5, 2.5],
                setpoint: [18.0, 27.0],
                deadband: [0.125, 0.5],
                kind: LoadKind::Cooling,
            },
            DeviceKind::HeatPump => TclRanges {
                capacitance: [1.5, 2.5],
                resistance: [1.5, 2.5],
                rated_power: [4.0, 7.2],
                cop: [3.5, 3.5],
                setpoint: [15.0, 24.0],
                deadband: [0.125, 0.5],
                kind: LoadKind::Heating,
            },
            DeviceKind::WaterHeater => TclRanges {
                capacitance: [0.2, 0.6],
                resistance: [100.0, 140.0],
                rated_power: [4.0, 5.0],
                cop: [1.0, 1.0],
                setpoint: [43.0, 54.0],
                deadband: [1.0, 2.0],
                kind: LoadKind::Heating,
            },
            DeviceKind::Refrigerator => TclRanges {
                capacitance: [0.4, 0.8],
                resistance: [80.0, 100.0],
                rated_power: [0.1, 0.5],
                cop: [2.0, 2.0],
                setpoint: [1.7, 3.3],
                deadband: [0.5, 1.0],
                kind: LoadKind::Cooling,
            },
        }
    }

    /// Fraction of households owning the device (California survey figures).
    pub fn typical_saturation(self) -> f64 {
        match self {
            DeviceKind::Ac => 0.465,
            DeviceKind::HeatPump => 0.01,
            DeviceKind::WaterHeater => 0.065,
            DeviceKind::Refrigerator => 1.223,
        }
    }

    /// Indoor units see a fixed 20 °C ambient.
    pub fn typical_fixed_ambient(self) -> Option<f64> {
        match self {
            DeviceKind::WaterHeater | DeviceKind::Refrigerator => Some(20.0),
            _ => None,
        }
    }

    /// Assumed participation curves; the AC and heat-pump shapes are configuration, not data.
    pub fn default_participation(self) -> Option<ParticipationCurve> {
        match self {
            DeviceKind::Ac => Some(ParticipationCurve {
                p_min: 0.0,
                p_max: 1.0,
                midpoint: 25.0,
                slope: 0.5,
                direction: Direction::Increasing,
            }),
            DeviceKind::HeatPump => Some(ParticipationCurve {
                p_min: 0.0,
                p_max: 1.0,
                midpoint: 10.0,
                slope: 0.5,
                direction: Direction::Decreasing,
            }),
            _ => None,
        }
    }
}

/// Closed parameter ranges `[lo, hi]` for a device population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclRanges {
    pub capacitance: [f64; 2],
    pub resistance: [f64; 2],
    pub rated_power: [f64; 2],
    pub cop: [f64; 2],
    pub setpoint: [f64; 2],
    pub deadband: [f64; 2],
    pub kind: LoadKind,
}

fn mid([lo, hi]: [f64; 2]) -> f64 {
    0.5 * (lo + hi)
}

fn draw<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

impl TclRanges {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, [lo, hi]) in [
            ("capacitance", self.capacitance),
            ("resistance", self.resistance),
            ("rated_power", self.rated_power),
            ("cop", self.cop),
            ("setpoint", self.setpoint),
            ("deadband", self.deadband),
        ] {
            check_finite(name, lo)?;
            check_finite(name, hi)?;
            if lo > hi {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("range [{lo}, {hi}] is reversed"),
                });
            }
        }
        self.midpoint().validate()
    }

    /// Cluster means: the midpoint of every range.
    pub fn midpoint(&self) -> TclParams {
        TclParams {
            capacitance: mid(self.capacitance),
            resistance: mid(self.resistance),
            rated_power: mid(self.rated_power),
            cop: mid(self.cop),
            setpoint: mid(self.setpoint),
            deadband: mid(self.deadband),
            kind: self.kind,
        }
    }

    /// One unit drawn uniformly from every range.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TclParams {
        TclParams {
            capacitance: draw(rng, self.capacitance),
            resistance: draw(rng, self.resistance),
            rated_power: draw(rng, self.rated_power),
            cop: draw(rng, self.cop),
            setpoint: draw(rng, self.setpoint),
            deadband: draw(rng, self.deadband),
            kind: self.kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Inverse-tangent participation fraction versus ambient temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipationCurve {
    pub p_min: f64,
    pub p_max: f64,
    /// °C
    pub midpoint: f64,
    /// °C⁻¹
    pub slope: f64,
    pub direction: Direction,
}

impl ParticipationCurve {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_non_negative("p_min", self.p_min)?;
        check_non_negative("p_max", self.p_max)?;
        if self.p_min > self.p_max || self.p_max > 1.0 {
            return Err(ModelError::InvalidParameter {
                name: "participation",
                reason: format!(
                    "need 0 <= p_min <= p_max <= 1, got [{}, {}]",
                    self.p_min, self.p_max
                ),
            });
        }
        check_finite("midpoint", self.midpoint)?;
        check_positive("slope", self.slope)?;
        Ok(())
    }

    pub fn participation(&self, ambient: f64) -> f64 {
        let sign = match self.direction {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        };
        let s = (sign * self.slope * (ambient - self.midpoint)).atan() / PI + 0.5;
        (self.p_min + (self.p_max - self.p_min) * s).clamp(self.p_min, self.p_max)
    }
}

/// Free-function form of [`ParticipationCurve::participation`].
pub fn participation(curve: &ParticipationCurve, ambient: f64) -> f64 {
    curve.participation(ambient)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceClass {
    pub kind: DeviceKind,
    /// Cluster-mean parameters.
    pub params: TclParams,
    /// Devices per household; may exceed 1.
    pub saturation_rate: f64,
    /// When set, the class ignores city temperatures and participation.
    pub fixed_ambient: Option<f64>,
    /// `None` means every installed unit participates.
    pub participation: Option<ParticipationCurve>,
}

impl DeviceClass {
    /// Class built from typical ranges (midpoints), saturation, and default curve.
    pub fn typical(kind: DeviceKind) -> Self {
        Self {
            kind,
            params: kind.typical_ranges().midpoint(),
            saturation_rate: kind.typical_saturation(),
            fixed_ambient: kind.typical_fixed_ambient(),
            participation: kind.default_participation(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.params.validate()?;
        check_non_negative("saturation_rate", self.saturation_rate)?;
        if let Some(t) = self.fixed_ambient {
            check_finite("fixed_ambient", t)?;
        }
        if let Some(curve) = &self.participation {
            curve.validate()?;
        }
        Ok(())
    }

    pub fn installed_units(&self, households_total: f64) -> f64 {
        households_total * self.saturation_rate
    }

    fn participating(&self, ambient: f64) -> f64 {
        self.participation
            .as_ref()
            .map_or(1.0, |c| c.participation(ambient))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityProfile {
    pub name: String,
    pub households: f64,
    pub ambient: AmbientSeries,
}

/// Household-share weights; they sum to one.
pub fn city_weights(cities: &[CityProfile]) -> Result<Vec<f64>, ModelError> {
    if cities.is_empty() {
        return Err(ModelError::Empty("city list"));
    }
    for c in cities {
        check_positive("households", c.households)?;
    }
    let total: f64 = cities.iter().map(|c| c.households).sum();
    Ok(cities.iter().map(|c| c.households / total).collect())
}

/// Hourly battery limits of one device class, in kW and kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSeries {
    pub kind: DeviceKind,
    pub installed_units: f64,
    pub dissipation: f64,
    /// `n₋` per hour.
    pub reg_up: Vec<f64>,
    /// `n₊` per hour.
    pub reg_down: Vec<f64>,
    /// `C` per hour.
    pub energy: Vec<f64>,
}

impl ClassSeries {
    pub fn len(&self) -> usize {
        self.reg_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reg_up.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexibilitySeries {
    pub classes: Vec<ClassSeries>,
    pub total_up: Vec<f64>,
    pub total_down: Vec<f64>,
    pub total_energy: Vec<f64>,
}

impl FlexibilitySeries {
    pub fn hours(&self) -> usize {
        self.total_up.len()
    }

    pub fn class(&self, kind: DeviceKind) -> Option<&ClassSeries> {
        self.classes.iter().find(|c| c.kind == kind)
    }
}

/// Household-weighted hourly flexibility for each class and for the fleet.
pub fn hourly_flexibility(
    classes: &[DeviceClass],
    cities: &[CityProfile],
    households_total: f64,
) -> Result<FlexibilitySeries, ModelError> {
    check_non_negative("households_total", households_total)?;
    let weights = city_weights(cities)?;
    let hours = cities[0].ambient.len();
    for c in cities {
        if c.ambient.len() != hours {
            return Err(ModelError::LengthMismatch {
                what: format!("ambient series of {}", c.name),
                expected: hours,
                found: c.ambient.len(),
            });
        }
    }

    let mut series = Vec::with_capacity(classes.len());
    for class in classes {
        class.validate()?;
        let installed = class.installed_units(households_total);
        let mut reg_up = Vec::with_capacity(hours);
        let mut reg_down = Vec::with_capacity(hours);
        let mut energy = Vec::with_capacity(hours);
        if let Some(ambient) = class.fixed_ambient {
            let b = battery_from_fleet(&class.params, ambient, installed)?.battery;
            reg_up.resize(hours, b.charge_limit);
            reg_down.resize(hours, b.discharge_limit);
            energy.resize(hours, b.capacity);
        } else {
            for h in 0..hours {
                let (mut up, mut down, mut cap) = (0.0, 0.0, 0.0);
                for (city, w) in cities.iter().zip(&weights) {
                    let t = city.ambient.values[h];
                    let ClusterBattery { battery: b, .. } =
                        battery_from_fleet(&class.params, t, installed * class.participating(t))?;
                    up += w * b.charge_limit;
                    down += w * b.discharge_limit;
                    cap += w * b.capacity;
                }
                reg_up.push(up);
                reg_down.push(down);
                energy.push(cap);
            }
        }
        series.push(ClassSeries {
            kind: class.kind,
            installed_units: installed,
            dissipation: class.params.dissipation_rate(),
            reg_up,
            reg_down,
            energy,
        });
    }

    let sum = |pick: fn(&ClassSeries) -> &Vec<f64>| -> Vec<f64> {
        (0..hours)
            .map(|h| series.iter().fold(0.0, |acc, c| acc + pick(c)[h]))
            .collect()
    };
    let total_up = sum(|c| &c.reg_up);
    let total_down = sum(|c| &c.reg_down);
    let total_energy = sum(|c| &c.energy);
    Ok(FlexibilitySeries {
        classes: series,
        total_up,
        total_down,
        total_energy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPeak {
    pub kind: DeviceKind,
    pub peak_up: f64,
    pub peak_down: f64,
    pub peak_energy: f64,
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexibilitySummary {
    pub peaks: Vec<ClassPeak>,
    pub min_total_up: f64,
    pub min_total_down: f64,
    pub min_total_energy: f64,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Per-class peaks and fleet-total minima over the horizon (kW / kWh).
pub fn summary_stats(series: &FlexibilitySeries) -> Result<FlexibilitySummary, ModelError> {
    if series.hours() == 0 {
        return Err(ModelError::Empty("flexibility series"));
    }
    let peaks = series
        .classes
        .iter()
        .map(|c| ClassPeak {
            kind: c.kind,
            peak_up: max_of(&c.reg_up),
            peak_down: max_of(&c.reg_down),
            peak_energy: max_of(&c.energy),
            dissipation: c.dissipation,
        })
        .collect();
    Ok(FlexibilitySummary {
        peaks,
        min_total_up: min_of(&series.total_up),
        min_total_down: min_of(&series.total_down),
        min_total_energy: min_of(&series.total_energy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn city(name: &str, households: f64, temps: Vec<f64>) -> CityProfile {
        CityProfile {
            name: name.into(),
            households,
            ambient: AmbientSeries::new(
                Utc.with_ymd_and_hms(2013, 6, 1, 0, 0, 0).unwrap(),
                1.0,
                temps,
            )
            .unwrap(),
        }
    }

    #[test]
    fn curve_midpoint_and_asymptotes() {
        let c = DeviceKind::Ac.default_participation().unwrap();
        assert!((c.participation(25.0) - 0.5).abs() < 1e-15);
        assert!((c.participation(1e9) - 1.0).abs() < 1e-6);
        assert!(c.participation(-1e9) < 1e-6);
        let expected = 0.5 + 5.0_f64.atan() / PI;
        assert!((c.participation(35.0) - expected).abs() < 1e-15);
        assert!((c.participation(35.0) - 0.937).abs() < 5e-4);
        let hp = DeviceKind::HeatPump.default_participation().unwrap();
        assert!(hp.participation(0.0) > hp.participation(20.0));
    }

    #[test]
    fn invalid_curve_rejected() {
        let mut c = DeviceKind::Ac.default_participation().unwrap();
        c.p_min = 0.8;
        c.p_max = 0.2;
        assert!(c.validate().is_err());
        c.p_min = 0.0;
        c.p_max = 0.5;
        c.slope = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn midpoints_reproduce_time_constants() {
        let ac = DeviceKind::Ac.typical_ranges().midpoint();
        assert_eq!(ac.capacitance, 2.0);
        assert_eq!(ac.deadband, 0.3125);
        assert_eq!(ac.rated_power, 5.6);
        assert!((ac.dissipation_rate() - 0.25).abs() < 1e-15);
        let wh = DeviceKind::WaterHeater.typical_ranges().midpoint();
        assert!((wh.dissipation_rate() - 0.0208).abs() < 1e-4);
        let fr = DeviceKind::Refrigerator.typical_ranges().midpoint();
        assert!((fr.dissipation_rate() - 0.0185).abs() < 1e-4);
    }

    #[test]
    fn weights_are_scale_free() {
        let a = vec![city("x", 1.0, vec![20.0]), city("y", 3.0, vec![20.0])];
        let b = vec![city("x", 1000.0, vec![20.0]), city("y", 3000.0, vec![20.0])];
        let wa = city_weights(&a).unwrap();
        assert_eq!(wa, city_weights(&b).unwrap());
        assert!((wa.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(city_weights(&[]).is_err());
    }

    #[test]
    fn fixed_ambient_classes_are_constant() {
        let classes = vec![
            DeviceClass::typical(DeviceKind::WaterHeater),
            DeviceClass::typical(DeviceKind::Refrigerator),
        ];
        let cities = vec![city("a", 1.0, vec![5.0, 30.0, 40.0])];
        let flex = hourly_flexibility(&classes, &cities, 13.7e6).unwrap();
        for c in &flex.classes {
            assert!(c
                .reg_up
                .iter()
                .all(|v| v.to_bits() == c.reg_up[0].to_bits()));
            assert!(c
                .energy
                .iter()
                .all(|v| v.to_bits() == c.energy[0].to_bits()));
        }
        let wh = flex.class(DeviceKind::WaterHeater).unwrap();
        assert!((wh.reg_up[0] / 1e6 - 0.21).abs() / 0.21 < 0.01);
        assert!((wh.reg_down[0] / 1e6 - 3.79).abs() / 3.79 < 0.01);
        assert!((wh.energy[0] / 1e6 - 0.53).abs() / 0.53 < 0.01);
        let summary = summary_stats(&flex).unwrap();
        let expected = (0.2375 * 0.065 + 0.0972222 * 1.223) * 13.7e6;
        assert!((summary.min_total_up - expected).abs() / expected < 1e-5);
    }

    #[test]
    fn zero_participation_gives_zero_flexibility() {
        let mut ac = DeviceClass::typical(DeviceKind::Ac);
        ac.participation = Some(ParticipationCurve {
            p_min: 0.0,
            p_max: 0.0,
            midpoint: 25.0,
            slope: 0.5,
            direction: Direction::Increasing,
        });
        let cities = vec![city("a", 1.0, vec![30.0, 35.0])];
        let flex = hourly_flexibility(&[ac], &cities, 1e6).unwrap();
        assert!(flex.total_up.iter().all(|&v| v == 0.0));
        assert!(flex.total_energy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_city_lengths_rejected() {
        let cities = vec![city("a", 1.0, vec![20.0; 3]), city("b", 1.0, vec![20.0; 4])];
        let err = hourly_flexibility(&[DeviceClass::typical(DeviceKind::Ac)], &cities, 1.0);
        assert!(matches!(err, Err(ModelError::LengthMismatch { .. })));
        assert!(hourly_flexibility(&[], &[], 1.0).is_err());
    }

    #[test]
    fn totals_are_class_sums() {
        let classes: Vec<_> = DeviceKind::ALL
            .into_iter()
            .map(DeviceClass::typical)
            .collect();
        let cities = vec![
            city("a", 2.0, vec![10.0, 25.0, 38.0]),
            city("b", 1.0, vec![5.0, 18.0, 30.0]),
        ];
        let flex = hourly_flexibility(&classes, &cities, 13.7e6).unwrap();
        for h in 0..3 {
            let up: f64 = flex.classes.iter().fold(0.0, |a, c| a + c.reg_up[h]);
            assert_eq!(up, flex.total_up[h]);
        }
        let s = summary_stats(&flex).unwrap();
        assert_eq!(s.peaks.len(), 4);
        assert_eq!(s.peaks[0].peak_up, max_of(&flex.classes[0].reg_up));
    }
}
