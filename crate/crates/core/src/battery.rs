//! Generalized battery abstraction of a TCL population.
//!
//! A signal `u(t)` (power drawn above baseline) belongs to the battery
//! `(C, n₋, n₊, α)` when `−n₋ ≤ u ≤ n₊` and the state of charge of
//! `ẋ = −αx − u, x(0) = 0` stays within `|x| ≤ C`. Note the sign: drawing
//! above baseline (`u > 0`) lowers `x`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_non_negative, check_positive, ModelError};
use crate::tcl::{linearized_baseline, Saturation, TclParams};

/// Power unit shared by a battery and the signals applied to it; energy is unit·h.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerUnit {
    Kw,
    Mw,
    Gw,
}

impl PowerUnit {
    fn kw_per_unit(self) -> f64 {
        match self {
            PowerUnit::Kw => 1.0,
            PowerUnit::Mw => 1e3,
            PowerUnit::Gw => 1e6,
        }
    }

    /// Factor converting a value in `self` into `target`.
    pub fn factor_to(self, target: PowerUnit) -> f64 {
        self.kw_per_unit() / target.kw_per_unit()
    }
}

impl fmt::Display for PowerUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PowerUnit::Kw => "kW",
            PowerUnit::Mw => "MW",
            PowerUnit::Gw => "GW",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedBattery {
    /// Energy capacity `C` in unit·h.
    pub capacity: f64,
    /// `n₋`: how far the draw may drop below baseline (regulation up).
    pub charge_limit: f64,
    /// `n₊`: how far the draw may rise above baseline (regulation down).
    pub discharge_limit: f64,
    /// `α`, h⁻¹.
    pub dissipation: f64,
    pub unit: PowerUnit,
}

impl GeneralizedBattery {
    pub fn new(
        capacity: f64,
        charge_limit: f64,
        discharge_limit: f64,
        dissipation: f64,
        unit: PowerUnit,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            capacity: check_non_negative("capacity", capacity)?,
            charge_limit: check_non_negative("charge_limit", charge_limit)?,
            discharge_limit: check_non_negative("discharge_limit", discharge_limit)?,
            dissipation: check_non_negative("dissipation", dissipation)?,
            unit,
        })
    }

    pub fn regulation_up(&self) -> f64 {
        self.charge_limit
    }

    pub fn regulation_down(&self) -> f64 {
        self.discharge_limit
    }

    pub fn to_unit(&self, unit: PowerUnit) -> Self {
        let k = self.unit.factor_to(unit);
        Self {
            capacity: self.capacity * k,
            charge_limit: self.charge_limit * k,
            discharge_limit: self.discharge_limit * k,
            dissipation: self.dissipation,
            unit,
        }
    }
}

/// What a signal's samples are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalUnit {
    /// Dimensionless, declared to lie in [−1, 1].
    Normalized,
    Power(PowerUnit),
}

impl fmt::Display for SignalUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalUnit::Normalized => f.write_str("normalized"),
            SignalUnit::Power(u) => u.fmt(f),
        }
    }
}

/// Uniformly sampled, sample-and-hold signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    /// Sample spacing in hours.
    pub step: f64,
    pub samples: Vec<f64>,
    pub unit: SignalUnit,
}

impl SignalSeries {
    pub fn new(step: f64, samples: Vec<f64>, unit: SignalUnit) -> Result<Self, ModelError> {
        check_positive("step", step)?;
        if samples.is_empty() {
            return Err(ModelError::Empty("signal"));
        }
        for (index, &value) in samples.iter().enumerate() {
            check_finite("signal sample", value)?;
            if unit == SignalUnit::Normalized && value.abs() > 1.0 {
                return Err(ModelError::OutOfRange { index, value });
            }
        }
        Ok(Self {
            step,
            samples,
            unit,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.step * self.samples.len() as f64
    }

    /// Multiply a normalized signal by `amplitude` to get a power signal.
    pub fn scaled(&self, amplitude: f64, unit: PowerUnit) -> Self {
        Self {
            step: self.step,
            samples: self.samples.iter().map(|v| v * amplitude).collect(),
            unit: SignalUnit::Power(unit),
        }
    }

    /// Repeat every sample `factor` times (same signal on a finer grid).
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            step: self.step / factor as f64,
            samples: self
                .samples
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, factor))
                .collect(),
            unit: self.unit,
        }
    }
}

/// Per-step decay `e^(−α·dt)` and input gain `(1 − e^(−α·dt))/α`.
pub fn integrator_coefficients(dissipation: f64, dt: f64) -> (f64, f64) {
    let z = dissipation * dt;
    let decay = (-z).exp();
    let gain = if z < 1e-8 {
        dt * (1.0 - z / 2.0 + z * z / 6.0)
    } else {
        (1.0 - decay) / dissipation
    };
    (decay, gain)
}

fn integrate(dissipation: f64, step: f64, samples: &[f64], x0: f64) -> Vec<f64> {
    let (decay, gain) = integrator_coefficients(dissipation, step);
    let mut x = Vec::with_capacity(samples.len() + 1);
    let mut current = x0;
    x.push(current);
    for &u in samples {
        current = current * decay - u * gain;
        x.push(current);
    }
    x
}

/// State of charge at every grid point `k·dt`, `k = 0..=len`, under sample-and-hold `u`.
pub fn soc_trajectory(
    batt: &GeneralizedBattery,
    u: &SignalSeries,
    x0: f64,
) -> Result<Vec<f64>, ModelError> {
    if u.unit != SignalUnit::Power(batt.unit) {
        return Err(ModelError::UnitMismatch {
            battery: batt.unit.to_string(),
            signal: u.unit.to_string(),
        });
    }
    check_finite("x0", x0)?;
    Ok(integrate(batt.dissipation, u.step, &u.samples, x0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    /// Sample `index` of the signal is outside `[−n₋, n₊]`.
    Power { index: usize, value: f64 },
    /// Grid point `index` (time `index·dt`) has `|x| > C`.
    Energy { index: usize, soc: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    pub first_violation: Option<Violation>,
    /// Largest `|x|` over the grid.
    pub peak_soc: f64,
}

/// Check a signal against the battery's power and energy limits.
pub fn is_admissible(
    batt: &GeneralizedBattery,
    u: &SignalSeries,
) -> Result<Admissibility, ModelError> {
    let x = soc_trajectory(batt, u, 0.0)?;
    let peak_soc = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let power = u
        .samples
        .iter()
        .position(|&v| v > batt.discharge_limit || v < -batt.charge_limit)
        .map(|index| Violation::Power {
            index,
            value: u.samples[index],
        });
    let energy = x
        .iter()
        .position(|v| v.abs() > batt.capacity)
        .map(|index| Violation::Energy {
            index,
            soc: x[index],
        });
    // Sample k drives x from grid point k to k + 1, so a power breach at
    // sample k precedes an energy breach at grid point k + 1.
    let first_violation = match (power, energy) {
        (
            Some(p @ Violation::Power { index: pi, .. }),
            Some(e @ Violation::Energy { index: ei, .. }),
        ) => {
            if pi < ei {
                Some(p)
            } else {
                Some(e)
            }
        }
        (p, e) => p.or(e),
    };
    Ok(Admissibility {
        admissible: first_violation.is_none(),
        first_violation,
        peak_soc,
    })
}

/// Battery of `count` identical loads at constant ambient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterBattery {
    /// In kW / kWh.
    pub battery: GeneralizedBattery,
    /// Per-unit linearized baseline, kW.
    pub baseline_power: f64,
    pub saturation: Saturation,
}

/// Battery parameters for a homogeneous cluster:
/// `C = NΔ/b`, `n₋ = N·P_o`, `n₊ = N(Pm − P_o)`, `α = a`, with `P_o` linearized.
pub fn battery_from_fleet(
    params: &TclParams,
    ambient: f64,
    count: f64,
) -> Result<ClusterBattery, ModelError> {
    params.validate()?;
    check_finite("ambient", ambient)?;
    check_non_negative("count", count)?;
    let (baseline, saturation) = linearized_baseline(params, ambient);
    let battery = GeneralizedBattery {
        capacity: count * params.deadband / params.power_gain(),
        charge_limit: count * baseline,
        discharge_limit: count * (params.rated_power - baseline),
        dissipation: params.dissipation_rate(),
        unit: PowerUnit::Kw,
    };
    Ok(ClusterBattery {
        battery,
        baseline_power: baseline,
        saturation,
    })
}

/// Heterogeneous fleet approximated by homogeneous clusters.
///
/// Capacities and power limits add; each cluster keeps its own dissipation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusteredBattery {
    pub clusters: Vec<GeneralizedBattery>,
}

impl ClusteredBattery {
    pub fn push(&mut self, battery: GeneralizedBattery) {
        self.clusters.push(battery.to_unit(PowerUnit::Kw));
    }

    /// Component-wise sums `(C, n₋, n₊)` in kW / kWh.
    pub fn totals(&self) -> (f64, f64, f64) {
        self.clusters
            .iter()
            .fold((0.0, 0.0, 0.0), |(c, lo, hi), b| {
                (c + b.capacity, lo + b.charge_limit, hi + b.discharge_limit)
            })
    }

    pub fn dissipation_rates(&self) -> Vec<f64> {
        self.clusters.iter().map(|b| b.dissipation).collect()
    }
}

/// Largest `|x|` when `ẋ = −αx − amplitude·r(t)` is driven by a normalized signal from rest.
pub fn max_energy_requirement(
    dissipation: f64,
    amplitude: f64,
    r: &SignalSeries,
) -> Result<f64, ModelError> {
    check_non_negative("dissipation", dissipation)?;
    check_positive("amplitude", amplitude)?;
    if r.unit != SignalUnit::Normalized {
        return Err(ModelError::InvalidParameter {
            name: "r",
            reason: format!("signal must be normalized, found {}", r.unit),
        });
    }
    if let Some((index, &value)) = r.samples.iter().enumerate().find(|(_, v)| v.abs() > 1.0) {
        return Err(ModelError::OutOfRange { index, value });
    }
    let scaled: Vec<f64> = r.samples.iter().map(|v| amplitude * v).collect();
    let x = integrate(dissipation, r.step, &scaled, 0.0);
    Ok(x.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}
