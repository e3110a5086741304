//! Hybrid thermal/switching dynamics of a single thermostatically controlled load.
//!
//! Between switching events the temperature obeys the affine ODE
//! `dθ/dt = a(θa − θ) − s·b·Pm·q + w` (s = +1 for cooling, −1 for heating),
//! so every segment is integrated in closed form and the switching instants
//! are located exactly on the analytic trajectory.

use chrono::{DateTime, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_positive, ModelError};

/// Documented integration tolerance on temperature (°C).
pub const TEMPERATURE_TOLERANCE: f64 = 1e-6;

/// Cap on switching events inside one call to [`advance`].
const MAX_EVENTS_PER_STEP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    Cooling,
    Heating,
}

impl LoadKind {
    /// +1 when running the unit lowers the temperature, −1 when it raises it.
    pub fn sign(self) -> f64 {
        match self {
            LoadKind::Cooling => 1.0,
            LoadKind::Heating => -1.0,
        }
    }
}

/// Physical parameters of one load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclParams {
    /// Thermal capacitance, kWh/°C.
    pub capacitance: f64,
    /// Thermal resistance, °C/kW.
    pub resistance: f64,
    /// Rated electrical power, kW.
    pub rated_power: f64,
    /// Coefficient of performance.
    pub cop: f64,
    /// Temperature setpoint, °C.
    pub setpoint: f64,
    /// Half-width of the deadband, °C.
    pub deadband: f64,
    pub kind: LoadKind,
}

impl TclParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("capacitance", self.capacitance)?;
        check_positive("resistance", self.resistance)?;
        check_positive("rated_power", self.rated_power)?;
        check_positive("cop", self.cop)?;
        check_finite("setpoint", self.setpoint)?;
        check_positive("deadband", self.deadband)?;
        Ok(())
    }

    /// `a = 1/(C·R)`, h⁻¹.
    pub fn dissipation_rate(&self) -> f64 {
        1.0 / (self.capacitance * self.resistance)
    }

    /// `b = η/C`, °C per kWh of electrical energy.
    pub fn power_gain(&self) -> f64 {
        self.cop / self.capacitance
    }

    pub fn lower(&self) -> f64 {
        self.setpoint - self.deadband
    }

    pub fn upper(&self) -> f64 {
        self.setpoint + self.deadband
    }

    /// Position inside the band scaled to [0, 1], oriented so that 1 means
    /// "about to switch ON" and 0 means "about to switch OFF".
    pub fn margin(&self, temperature: f64) -> f64 {
        let width = 2.0 * self.deadband;
        match self.kind {
            LoadKind::Cooling => (temperature - self.lower()) / width,
            LoadKind::Heating => (self.upper() - temperature) / width,
        }
    }

    /// Temperature the affine dynamics relax towards in the given mode.
    pub fn equilibrium(&self, ambient: f64, on: bool, disturbance: f64) -> f64 {
        let drive = if on {
            -self.kind.sign() * self.power_gain() * self.rated_power
        } else {
            0.0
        };
        ambient + (drive + disturbance) / self.dissipation_rate()
    }

    /// Hysteretic local control: the mode flips only at the band edges.
    pub fn thermostat(&self, temperature: f64, on: bool) -> bool {
        let eps = 1e-12 * (1.0 + self.setpoint.abs());
        let at_upper = temperature >= self.upper() - eps;
        let at_lower = temperature <= self.lower() + eps;
        match self.kind {
            LoadKind::Cooling if at_upper => true,
            LoadKind::Cooling if at_lower => false,
            LoadKind::Heating if at_lower => true,
            LoadKind::Heating if at_upper => false,
            _ => on,
        }
    }

    pub fn in_band(&self, temperature: f64, tolerance: f64) -> bool {
        temperature >= self.lower() - tolerance && temperature <= self.upper() + tolerance
    }
}

/// Instantaneous state of one load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclState {
    /// °C
    pub temperature: f64,
    pub on: bool,
    /// hours
    pub clock: f64,
}

impl TclState {
    pub fn new(temperature: f64, on: bool) -> Self {
        Self {
            temperature,
            on,
            clock: 0.0,
        }
    }
}

/// Hourly (or otherwise uniformly stepped) ambient temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientSeries {
    pub start: DateTime<Utc>,
    pub step_hours: f64,
    pub values: Vec<f64>,
}

impl AmbientSeries {
    pub fn new(
        start: DateTime<Utc>,
        step_hours: f64,
        values: Vec<f64>,
    ) -> Result<Self, ModelError> {
        check_positive("step_hours", step_hours)?;
        if values.is_empty() {
            return Err(ModelError::Empty("ambient series"));
        }
        for v in &values {
            check_finite("ambient temperature", *v)?;
        }
        Ok(Self {
            start,
            step_hours,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample-and-hold lookup at `t` hours after the start; clamps past the end.
    pub fn at(&self, t_hours: f64) -> f64 {
        let idx = (t_hours / self.step_hours).floor().max(0.0) as usize;
        self.values[idx.min(self.values.len() - 1)]
    }
}

/// Result of advancing one load over an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: TclState,
    /// Hours spent ON during the interval.
    pub on_time: f64,
    /// Mode changes made by the local thermostat during the interval.
    pub switches: u32,
}

fn relax(equilibrium: f64, start: f64, rate: f64, duration: f64) -> f64 {
    equilibrium + (start - equilibrium) * (-rate * duration).exp()
}

/// Advance the hybrid dynamics by `dt` hours with a constant disturbance `w` (°C/h).
pub fn advance(
    params: &TclParams,
    state: &TclState,
    ambient: f64,
    dt: f64,
    disturbance: f64,
) -> Result<StepOutcome, ModelError> {
    check_finite("temperature", state.temperature)?;
    check_finite("clock", state.clock)?;
    check_finite("ambient", ambient)?;
    check_finite("disturbance", disturbance)?;
    check_positive("dt", dt)?;

    let rate = params.dissipation_rate();
    let mut theta = state.temperature;
    let mut on = params.thermostat(theta, state.on);
    let mut switches = u32::from(on != state.on);
    let mut on_time = 0.0;
    let mut remaining = dt;

    for _ in 0..MAX_EVENTS_PER_STEP {
        let eq = params.equilibrium(ambient, on, disturbance);
        // Next band edge in the direction of motion, if the trajectory reaches it.
        let boundary = if eq > theta && theta < params.upper() && eq > params.upper() {
            Some(params.upper())
        } else if eq < theta && theta > params.lower() && eq < params.lower() {
            Some(params.lower())
        } else {
            None
        };
        let hit = boundary.map(|b| (b, ((theta - eq) / (b - eq)).ln() / rate));
        match hit {
            Some((b, tau)) if tau < remaining => {
                if on {
                    on_time += tau;
                }
                remaining -= tau;
                theta = b;
                let next = params.thermostat(theta, on);
                if next != on {
                    switches += 1;
                    on = next;
                } else {
                    // Edge reached in a mode that does not toggle there: leave the band.
                    theta = relax(eq, theta, rate, remaining);
                    if on {
                        on_time += remaining;
                    }
                    remaining = 0.0;
                    break;
                }
            }
            _ => {
                theta = relax(eq, theta, rate, remaining);
                if on {
                    on_time += remaining;
                }
                remaining = 0.0;
                break;
            }
        }
    }
    if remaining > 0.0 {
        let eq = params.equilibrium(ambient, on, disturbance);
        theta = relax(eq, theta, rate, remaining);
        if on {
            on_time += remaining;
        }
    }

    Ok(StepOutcome {
        state: TclState {
            temperature: theta,
            on,
            clock: state.clock + dt,
        },
        on_time,
        switches,
    })
}

/// Advance one step and return only the new state.
pub fn step_tcl(
    params: &TclParams,
    state: &TclState,
    ambient: f64,
    dt: f64,
    disturbance: f64,
) -> Result<TclState, ModelError> {
    advance(params, state, ambient, dt, disturbance).map(|o| o.state)
}

/// Run `steps` steps of length `dt` at constant ambient and return every state
/// (including the initial one).
pub fn simulate(
    params: &TclParams,
    initial: TclState,
    ambient: f64,
    dt: f64,
    steps: usize,
) -> Result<(Vec<TclState>, f64), ModelError> {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial);
    let mut on_time = 0.0;
    let mut state = initial;
    for _ in 0..steps {
        let out = advance(params, &state, ambient, dt, 0.0)?;
        on_time += out.on_time;
        state = out.state;
        states.push(state);
    }
    Ok((states, on_time))
}

/// Where the ambient puts the linearized baseline relative to `[0, Pm]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    None,
    /// Baseline clamped to 0: the unit never needs to run.
    Idle,
    /// Baseline clamped to the rated power: the unit runs continuously.
    Full,
}

/// Whether the unit actually cycles at the given ambient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Cycling,
    AlwaysOff,
    AlwaysOn,
}

/// Average power over an ON/OFF cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyCycle {
    /// `Pm·T_on/(T_on + T_off)` from the exact transit times, kW.
    pub exact: f64,
    /// `a·|θa − θr|/b` clamped to `[0, Pm]`, kW.
    pub linearized: f64,
    /// Hours per ON phase (infinite when the unit never turns off).
    pub on_time: f64,
    /// Hours per OFF phase (infinite when the unit never turns on).
    pub off_time: f64,
    pub regime: Regime,
    pub saturation: Saturation,
}

impl DutyCycle {
    pub fn period(&self) -> f64 {
        self.on_time + self.off_time
    }
}

fn transit_time(from: f64, to: f64, equilibrium: f64, rate: f64) -> f64 {
    let start = from - equilibrium;
    let end = to - equilibrium;
    if start * end > 0.0 && end.abs() < start.abs() {
        (start / end).ln() / rate
    } else {
        f64::INFINITY
    }
}

/// Linearized baseline `a·s·(θa − θr)/b`, clamped to `[0, Pm]`.
pub fn linearized_baseline(params: &TclParams, ambient: f64) -> (f64, Saturation) {
    let raw = params.dissipation_rate() * params.kind.sign() * (ambient - params.setpoint)
        / params.power_gain();
    if raw < 0.0 {
        (0.0, Saturation::Idle)
    } else if raw > params.rated_power {
        (params.rated_power, Saturation::Full)
    } else {
        (raw, Saturation::None)
    }
}

/// Exact and linearized duty-cycle power at constant ambient with no disturbance.
///
/// Loads that never cycle are reported through [`Regime`] with power 0 or `Pm`.
pub fn duty_cycle_power(params: &TclParams, ambient: f64) -> Result<DutyCycle, ModelError> {
    params.validate()?;
    check_finite("ambient", ambient)?;
    let rate = params.dissipation_rate();
    let eq_off = params.equilibrium(ambient, false, 0.0);
    let eq_on = params.equilibrium(ambient, true, 0.0);
    let (lo, hi) = (params.lower(), params.upper());
    let (off_time, on_time) = match params.kind {
        LoadKind::Cooling => (
            transit_time(lo, hi, eq_off, rate),
            transit_time(hi, lo, eq_on, rate),
        ),
        LoadKind::Heating => (
            transit_time(hi, lo, eq_off, rate),
            transit_time(lo, hi, eq_on, rate),
        ),
    };
    let (linearized, saturation) = linearized_baseline(params, ambient);
    let (exact, regime) = match (on_time.is_finite(), off_time.is_finite()) {
        (true, true) => (
            params.rated_power * on_time / (on_time + off_time),
            Regime::Cycling,
        ),
        (false, true) => (params.rated_power, Regime::AlwaysOn),
        (true, false) => (0.0, Regime::AlwaysOff),
        (false, false) => {
            if linearized >= 0.5 * params.rated_power {
                (params.rated_power, Regime::AlwaysOn)
            } else {
                (0.0, Regime::AlwaysOff)
            }
        }
    };
    Ok(DutyCycle {
        exact,
        linearized,
        on_time,
        off_time,
        regime,
        saturation,
    })
}

/// State at fractional position `phase ∈ [0, 1)` along the steady-state limit
/// cycle, measured from the start of the OFF phase.
///
/// Non-cycling loads are placed at `lower + phase·2Δ` in their permanent mode.
pub fn cycle_state(params: &TclParams, ambient: f64, phase: f64) -> Result<TclState, ModelError> {
    let duty = duty_cycle_power(params, ambient)?;
    let phase = phase.rem_euclid(1.0);
    let in_band = params.lower() + phase * 2.0 * params.deadband;
    match duty.regime {
        Regime::AlwaysOn => return Ok(TclState::new(in_band, true)),
        Regime::AlwaysOff => return Ok(TclState::new(in_band, false)),
        Regime::Cycling => {}
    }
    let rate = params.dissipation_rate();
    let (off_start, on_start) = match params.kind {
        LoadKind::Cooling => (params.lower(), params.upper()),
        LoadKind::Heating => (params.upper(), params.lower()),
    };
    let elapsed = phase * duty.period();
    let state = if elapsed < duty.off_time {
        let eq = params.equilibrium(ambient, false, 0.0);
        TclState::new(relax(eq, off_start, rate, elapsed), false)
    } else {
        let eq = params.equilibrium(ambient, true, 0.0);
        TclState::new(relax(eq, on_start, rate, elapsed - duty.off_time), true)
    };
    Ok(state)
}

/// Zero-mean Gaussian disturbance on `dθ/dt`, drawn once per step.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDisturbance {
    normal: Normal<f64>,
}

impl GaussianDisturbance {
    /// `std` in °C/h.
    pub fn new(std: f64) -> Result<Self, ModelError> {
        crate::error::check_non_negative("disturbance std", std)?;
        let normal = Normal::new(0.0, std).map_err(|e| ModelError::InvalidParameter {
            name: "disturbance std",
            reason: e.to_string(),
        })?;
        Ok(Self { normal })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.normal.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ac() -> TclParams {
        TclParams {
            capacitance: 2.0,
            resistance: 2.0,
            rated_power: 5.6,
            cop: 2.5,
            setpoint: 22.5,
            deadband: 0.3125,
            kind: LoadKind::Cooling,
        }
    }

    fn water_heater() -> TclParams {
        TclParams {
            capacitance: 0.4,
            resistance: 120.0,
            rated_power: 4.5,
            cop: 1.0,
            setpoint: 48.5,
            deadband: 1.5,
            kind: LoadKind::Heating,
        }
    }

    fn fridge() -> TclParams {
        TclParams {
            capacitance: 0.6,
            resistance: 90.0,
            rated_power: 0.3,
            cop: 2.0,
            setpoint: 2.5,
            deadband: 0.75,
            kind: LoadKind::Cooling,
        }
    }

    #[test]
    fn cooling_unit_switches_on_at_upper_edge() {
        let p = ac();
        let s = TclState::new(p.upper(), false);
        let next = step_tcl(&p, &s, 32.0, 1.0 / 900.0, 0.0).unwrap();
        assert!(next.on);
        assert!(next.temperature < p.upper());
    }

    #[test]
    fn off_equilibrium_is_a_fixed_point() {
        let p = ac();
        let s = TclState::new(22.5, false);
        let next = step_tcl(&p, &s, 22.5, 0.5, 0.0).unwrap();
        assert_eq!(next.temperature, 22.5);
        assert!(!next.on);
        assert_eq!(next.clock, 0.5);
    }

    #[test]
    fn rejects_bad_step_and_non_finite_inputs() {
        let p = ac();
        let s = TclState::new(22.5, false);
        assert!(step_tcl(&p, &s, 32.0, 0.0, 0.0).is_err());
        assert!(step_tcl(&p, &s, 32.0, -1.0, 0.0).is_err());
        assert!(step_tcl(&p, &s, f64::NAN, 1.0, 0.0).is_err());
        let bad = TclState::new(f64::INFINITY, false);
        assert!(step_tcl(&p, &bad, 32.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn long_run_average_matches_linearized_baseline() {
        let p = ac();
        let ambient = 32.0;
        let dt = 1.0 / 900.0;
        let steps = 48 * 900;
        let start = cycle_state(&p, ambient, 0.3).unwrap();
        let (states, on_time) = simulate(&p, start, ambient, dt, steps).unwrap();
        let mean_power = p.rated_power * on_time / (steps as f64 * dt);
        let oracle = p.dissipation_rate() * (ambient - p.setpoint) / p.power_gain();
        assert!(
            (mean_power / oracle - 1.0).abs() < 0.02,
            "{mean_power} vs {oracle}"
        );
        for s in &states {
            assert!(p.in_band(s.temperature, TEMPERATURE_TOLERANCE));
        }
    }

    #[test]
    fn symmetric_cycle_gives_half_rated_power() {
        // b·Pm/a = 2(θa − θr) makes ON and OFF transits mirror images.
        let mut p = ac();
        let span = p.power_gain() * p.rated_power / p.dissipation_rate();
        let ambient = p.setpoint + span / 2.0;
        let d = duty_cycle_power(&p, ambient).unwrap();
        assert!((d.on_time - d.off_time).abs() < 1e-12);
        assert!((d.exact - p.rated_power / 2.0).abs() < 1e-12);
        p.kind = LoadKind::Heating;
        let d = duty_cycle_power(&p, p.setpoint - span / 2.0).unwrap();
        assert!((d.exact - p.rated_power / 2.0).abs() < 1e-12);
    }

    #[test]
    fn table_means_give_expected_linearized_baselines() {
        let wh = duty_cycle_power(&water_heater(), 20.0).unwrap();
        assert!((wh.linearized - 0.2375).abs() < 1e-12);
        assert!((0.89e6 * wh.linearized / 1e6 - 0.21).abs() / 0.21 < 0.01);
        let fr = duty_cycle_power(&fridge(), 20.0).unwrap();
        let expected = (17.5 / 54.0) / (2.0 / 0.6);
        assert!((fr.linearized - expected).abs() < 1e-12);
        assert!((fr.linearized - 0.0972).abs() < 1e-4);
        assert!((16.75e6 * fr.linearized / 1e6 - 1.63).abs() / 1.63 < 0.01);
    }

    #[test]
    fn saturated_ambient_is_flagged_not_an_error() {
        let p = ac();
        let cold = duty_cycle_power(&p, 15.0).unwrap();
        assert_eq!(cold.regime, Regime::AlwaysOff);
        assert_eq!(cold.saturation, Saturation::Idle);
        assert_eq!(cold.exact, 0.0);
        let hot = duty_cycle_power(&p, 60.0).unwrap();
        assert_eq!(hot.regime, Regime::AlwaysOn);
        assert_eq!(hot.saturation, Saturation::Full);
        assert_eq!(hot.exact, p.rated_power);
        assert_eq!(hot.linearized, p.rated_power);
    }

    #[test]
    fn heating_unit_cycles_inside_band() {
        let p = water_heater();
        let start = cycle_state(&p, 20.0, 0.0).unwrap();
        let (states, _) = simulate(&p, start, 20.0, 0.05, 24 * 20 * 4).unwrap();
        assert!(states.iter().any(|s| s.on) && states.iter().any(|s| !s.on));
        for s in &states {
            assert!(p.in_band(s.temperature, TEMPERATURE_TOLERANCE));
        }
    }

    #[test]
    fn cycle_state_lies_on_limit_cycle() {
        let p = ac();
        let d = duty_cycle_power(&p, 32.0).unwrap();
        let s0 = cycle_state(&p, 32.0, 0.0).unwrap();
        assert!(!s0.on && (s0.temperature - p.lower()).abs() < 1e-12);
        // Advancing from phase φ by a fraction of the period lands on phase φ + δ.
        let s = cycle_state(&p, 32.0, 0.1).unwrap();
        let later = step_tcl(&p, &s, 32.0, 0.5 * d.period(), 0.0).unwrap();
        let expected = cycle_state(&p, 32.0, 0.6).unwrap();
        assert_eq!(later.on, expected.on);
        assert!((later.temperature - expected.temperature).abs() < 1e-9);
    }

    #[test]
    fn disturbance_with_zero_std_is_zero() {
        use rand::SeedableRng;
        let d = GaussianDisturbance::new(0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert_eq!(d.sample(&mut rng), 0.0);
        assert!(GaussianDisturbance::new(-1.0).is_err());
    }
}
