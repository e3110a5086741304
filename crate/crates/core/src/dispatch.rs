//! Priority-stack dispatch of a simulated TCL population against a regulation
//! signal, plus the 15-minute tracking-accuracy score.
//!
//! At every control instant the units are ranked by their normalized
//! temperature margin and the error is taken against each unit's predicted
//! mean power over the coming step, so thermostat switches that will happen
//! inside the step are compensated in advance. When the fleet must draw more, the OFF units closest to
//! switching ON are turned on first; when it must draw less, the ON units
//! closest to switching OFF are turned off first. Units whose local thermostat
//! would immediately undo the command are never toggled, so the comfort band
//! holds by construction.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::battery::{PowerUnit, SignalSeries, SignalUnit};
use crate::error::{check_finite, check_non_negative, check_positive, ModelError};
use crate::tcl::{
    advance, cycle_state, duty_cycle_power, GaussianDisturbance, TclParams, TclState,
    TEMPERATURE_TOLERANCE,
};

pub const CONTROL_STEP_SECONDS: f64 = 4.0;
pub const ACCURACY_WINDOW_SECONDS: f64 = 900.0;
/// Fraction of a step command that counts as "reached".
pub const RAMP_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub params: TclParams,
    pub state: TclState,
    /// Exact duty-cycle power at the population ambient, kW.
    pub baseline: f64,
    /// Hours at which the controller last toggled this unit.
    last_command: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub units: Vec<Unit>,
    /// °C, held constant over a run.
    pub ambient: f64,
    disturbance: Option<(GaussianDisturbance, ChaCha8Rng)>,
}

impl Population {
    /// `count` identical units placed uniformly at random along the limit cycle.
    pub fn homogeneous(
        params: TclParams,
        count: usize,
        ambient: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        Self::from_params(vec![params; count], ambient, seed)
    }

    /// One unit per parameter set, each at a uniformly drawn cycle phase.
    pub fn from_params(
        params: Vec<TclParams>,
        ambient: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        use rand::Rng;
        check_finite("ambient", ambient)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let units = params
            .into_iter()
            .map(|p| {
                let phase: f64 = rng.random();
                Ok(Unit {
                    params: p,
                    state: cycle_state(&p, ambient, phase)?,
                    baseline: duty_cycle_power(&p, ambient)?.exact,
                    last_command: None,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Self {
            units,
            ambient,
            disturbance: None,
        })
    }

    /// Add a zero-mean Gaussian disturbance (°C/h) drawn per unit and step.
    pub fn with_disturbance(mut self, std: f64, seed: u64) -> Result<Self, ModelError> {
        self.disturbance = Some((
            GaussianDisturbance::new(std)?,
            ChaCha8Rng::seed_from_u64(seed),
        ));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// `Σ P_o`, kW.
    pub fn baseline(&self) -> f64 {
        self.units.iter().fold(0.0, |acc, u| acc + u.baseline)
    }

    /// `Σ q·Pm`, kW.
    pub fn consumption(&self) -> f64 {
        self.units.iter().fold(0.0, |acc, u| {
            if u.state.on {
                acc + u.params.rated_power
            } else {
                acc
            }
        })
    }

    /// Draw above baseline, kW.
    pub fn deviation(&self) -> f64 {
        self.consumption() - self.baseline()
    }

    /// All-OFF / all-ON deviation bounds, kW.
    pub fn envelope(&self) -> (f64, f64) {
        let rated: f64 = self
            .units
            .iter()
            .fold(0.0, |acc, u| acc + u.params.rated_power);
        let base = self.baseline();
        (-base, rated - base)
    }

    /// Count of units that have left their band by more than the tolerance.
    pub fn band_violations(&self) -> usize {
        self.units
            .iter()
            .filter(|u| !u.params.in_band(u.state.temperature, TEMPERATURE_TOLERANCE))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchConfig {
    pub control_step_seconds: f64,
    /// Minimum time between two controller toggles of the same unit; off by default.
    pub min_dwell_seconds: Option<f64>,
    /// Setpoints reach the fleet this many control steps late.
    pub delay_steps: usize,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self {
            control_step_seconds: CONTROL_STEP_SECONDS,
            min_dwell_seconds: None,
            delay_steps: 0,
        }
    }
}

/// One control instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchStep {
    pub t_seconds: f64,
    /// Commanded draw above baseline, kW.
    pub setpoint: f64,
    /// Mean of `Σ q·Pm − Σ P_o` over the step, thermostat switching included, kW.
    pub achieved: f64,
    pub toggles: u32,
    /// Units found outside their band at the end of this step.
    pub violations: u32,
}

impl DispatchStep {
    pub fn error(&self) -> f64 {
        self.setpoint - self.achieved
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureViolation {
    pub t_seconds: f64,
    pub unit: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub steps: Vec<DispatchStep>,
    pub violations: Vec<TemperatureViolation>,
    /// Every mode change, commanded or thermostatic.
    pub mode_changes: u64,
    pub units: usize,
    pub hours: f64,
}

impl TrackingRun {
    /// Full ON/OFF cycles per unit per day.
    pub fn cycles_per_unit_day(&self) -> f64 {
        if self.units == 0 || self.hours <= 0.0 {
            return 0.0;
        }
        self.mode_changes as f64 / 2.0 / self.units as f64 / (self.hours / 24.0)
    }
}

fn step_seconds_of(u: &SignalSeries) -> f64 {
    u.step * 3600.0
}

/// Mean power of one unit over the next `dt` hours from `state`, disturbance-free.
fn predicted_power(
    unit: &Unit,
    state: &TclState,
    ambient: f64,
    dt: f64,
) -> Result<f64, ModelError> {
    Ok(advance(&unit.params, state, ambient, dt, 0.0)?.on_time * unit.params.rated_power / dt)
}

/// Pick and apply the toggles that bring the predicted mean deviation over
/// the coming step closest to `setpoint`.
fn rank_and_toggle(
    pop: &mut Population,
    setpoint: f64,
    now: f64,
    config: &DispatchConfig,
) -> Result<u32, ModelError> {
    let dt = config.control_step_seconds / 3600.0;
    let ambient = pop.ambient;
    let predicted = pop
        .units
        .par_iter()
        .map(|u| predicted_power(u, &u.state, ambient, dt))
        .collect::<Result<Vec<f64>, ModelError>>()?;
    let mut error = setpoint - (predicted.iter().sum::<f64>() - pop.baseline());
    let want_on = error > 0.0;
    let dwell = config.min_dwell_seconds.map(|s| s / 3600.0);
    let mut stack: Vec<(f64, usize)> = pop
        .units
        .iter()
        .enumerate()
        .filter(|(_, u)| u.state.on != want_on)
        .filter(|(_, u)| u.params.thermostat(u.state.temperature, want_on) == want_on)
        .filter(|(_, u)| match (dwell, u.last_command) {
            (Some(d), Some(last)) => now - last >= d - 1e-12,
            _ => true,
        })
        .map(|(i, u)| (u.params.margin(u.state.temperature), i))
        .collect();
    if want_on {
        stack.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    } else {
        stack.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut toggles = 0;
    for (_, i) in stack {
        if error.abs() <= pop.units[i].params.rated_power / 2.0 {
            break;
        }
        let unit = &pop.units[i];
        let toggled = TclState {
            on: want_on,
            ..unit.state
        };
        let delta = predicted_power(unit, &toggled, ambient, dt)? - predicted[i];
        if (error - delta).abs() >= error.abs() {
            continue;
        }
        let unit = &mut pop.units[i];
        unit.state.on = want_on;
        unit.last_command = Some(now);
        error -= delta;
        toggles += 1;
    }
    Ok(toggles)
}

struct Advanced {
    mode_changes: u64,
    violations: Vec<TemperatureViolation>,
    /// Mean deviation from baseline over the interval, kW.
    mean_deviation: f64,
}

/// Advance every unit by `dt` hours.
fn advance_all(pop: &mut Population, dt: f64, t_end_seconds: f64) -> Result<Advanced, ModelError> {
    let disturbances: Vec<f64> = match &mut pop.disturbance {
        Some((d, rng)) => (0..pop.units.len()).map(|_| d.sample(rng)).collect(),
        None => vec![0.0; pop.units.len()],
    };
    let ambient = pop.ambient;
    let outcomes: Vec<_> = pop
        .units
        .par_iter()
        .zip(disturbances.par_iter())
        .map(|(u, &w)| advance(&u.params, &u.state, ambient, dt, w))
        .collect();
    let mut changes = 0u64;
    let mut violations = Vec::new();
    let mut energy = 0.0;
    for (i, (unit, outcome)) in pop.units.iter_mut().zip(outcomes).enumerate() {
        let outcome = outcome?;
        changes += u64::from(outcome.switches);
        energy += outcome.on_time * unit.params.rated_power;
        unit.state = outcome.state;
        if !unit
            .params
            .in_band(unit.state.temperature, TEMPERATURE_TOLERANCE)
        {
            violations.push(TemperatureViolation {
                t_seconds: t_end_seconds,
                unit: i,
                temperature: unit.state.temperature,
            });
        }
    }
    Ok(Advanced {
        mode_changes: changes,
        violations,
        mean_deviation: energy / dt - pop.baseline(),
    })
}

fn check_signal(u: &SignalSeries, config: &DispatchConfig) -> Result<(), ModelError> {
    check_positive("control_step_seconds", config.control_step_seconds)?;
    if let Some(d) = config.min_dwell_seconds {
        check_non_negative("min_dwell_seconds", d)?;
    }
    if u.unit != SignalUnit::Power(PowerUnit::Kw) {
        return Err(ModelError::UnitMismatch {
            battery: PowerUnit::Kw.to_string(),
            signal: u.unit.to_string(),
        });
    }
    if (step_seconds_of(u) - config.control_step_seconds).abs() > 1e-6 {
        return Err(ModelError::InvalidParameter {
            name: "signal step",
            reason: format!(
                "signal step {} s differs from control step {} s",
                step_seconds_of(u),
                config.control_step_seconds
            ),
        });
    }
    Ok(())
}

/// Track `u` (kW above baseline, one sample per control step) with the population.
pub fn track(
    pop: &mut Population,
    u: &SignalSeries,
    config: &DispatchConfig,
) -> Result<TrackingRun, ModelError> {
    check_signal(u, config)?;
    let dt = config.control_step_seconds / 3600.0;
    let mut steps = Vec::with_capacity(u.len());
    let mut violations = Vec::new();
    let mut mode_changes = 0u64;
    for k in 0..u.len() {
        let t = k as f64 * config.control_step_seconds;
        let setpoint = if k >= config.delay_steps {
            u.samples[k - config.delay_steps]
        } else {
            0.0
        };
        let toggles = rank_and_toggle(pop, setpoint, k as f64 * dt, config)?;
        mode_changes += u64::from(toggles);
        let step = advance_all(pop, dt, t + config.control_step_seconds)?;
        mode_changes += step.mode_changes;
        steps.push(DispatchStep {
            t_seconds: t,
            setpoint,
            achieved: step.mean_deviation,
            toggles,
            violations: step.violations.len() as u32,
        });
        violations.extend(step.violations);
    }
    Ok(TrackingRun {
        steps,
        violations,
        mode_changes,
        units: pop.len(),
        hours: u.duration(),
    })
}

/// Let the population run under its own thermostats (no regulation).
pub fn free_run(
    pop: &mut Population,
    steps: usize,
    step_seconds: f64,
) -> Result<TrackingRun, ModelError> {
    check_positive("step_seconds", step_seconds)?;
    let dt = step_seconds / 3600.0;
    let mut out = Vec::with_capacity(steps);
    let mut violations = Vec::new();
    let mut mode_changes = 0;
    for k in 0..steps {
        let t = k as f64 * step_seconds;
        let step = advance_all(pop, dt, t + step_seconds)?;
        mode_changes += step.mode_changes;
        out.push(DispatchStep {
            t_seconds: t,
            setpoint: 0.0,
            achieved: step.mean_deviation,
            toggles: 0,
            violations: step.violations.len() as u32,
        });
        violations.extend(step.violations);
    }
    Ok(TrackingRun {
        steps: out,
        violations,
        mode_changes,
        units: pop.len(),
        hours: steps as f64 * dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyWindow {
    pub start_seconds: f64,
    pub length_seconds: f64,
    pub sum_abs_setpoint: f64,
    pub sum_abs_error: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub windows: Vec<AccuracyWindow>,
    /// Same ratio over all complete windows together.
    pub aggregate: f64,
}

impl AccuracyReport {
    pub fn min_score(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| w.score)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(Σ|setpoint| − Σ|error|)/Σ|setpoint|`, floored at 0; 1 when nothing was commanded.
pub fn accuracy_score(sum_abs_setpoint: f64, sum_abs_error: f64) -> f64 {
    if sum_abs_setpoint > 0.0 {
        ((sum_abs_setpoint - sum_abs_error) / sum_abs_setpoint).max(0.0)
    } else {
        1.0
    }
}

/// Score every complete 15-minute window; a trailing partial window is ignored.
pub fn accuracy(steps: &[DispatchStep], step_seconds: f64) -> Result<AccuracyReport, ModelError> {
    check_positive("step_seconds", step_seconds)?;
    if steps.is_empty() {
        return Err(ModelError::Empty("dispatch steps"));
    }
    let per_window = (ACCURACY_WINDOW_SECONDS / step_seconds).round().max(1.0) as usize;
    if steps.len() < per_window {
        return Err(ModelError::LengthMismatch {
            what: "dispatch steps (one accuracy window)".into(),
            expected: per_window,
            found: steps.len(),
        });
    }
    let mut windows = Vec::new();
    let (mut total_sp, mut total_err) = (0.0, 0.0);
    for chunk in steps.chunks_exact(per_window) {
        let sp = chunk.iter().fold(0.0, |a, s| a + s.setpoint.abs());
        let err = chunk.iter().fold(0.0, |a, s| a + s.error().abs());
        total_sp += sp;
        total_err += err;
        windows.push(AccuracyWindow {
            start_seconds: chunk[0].t_seconds,
            length_seconds: per_window as f64 * step_seconds,
            sum_abs_setpoint: sp,
            sum_abs_error: err,
            score: accuracy_score(sp, err),
        });
    }
    Ok(AccuracyReport {
        windows,
        aggregate: accuracy_score(total_sp, total_err),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampResult {
    /// End of the first control step whose mean deviation reaches 95% of the
    /// target, if one did within ten minutes.
    pub seconds: Option<f64>,
    pub achieved: f64,
}

/// Time for a step command of `target` kW to be met, simulated on a copy of the fleet.
pub fn ramp_check(
    pop: &Population,
    target: f64,
    config: &DispatchConfig,
) -> Result<RampResult, ModelError> {
    check_finite("target", target)?;
    let (min, max) = pop.envelope();
    if target < min || target > max {
        return Err(ModelError::BeyondEnvelope { target, min, max });
    }
    if target == 0.0 {
        return Ok(RampResult {
            seconds: Some(0.0),
            achieved: pop.deviation(),
        });
    }
    let mut fleet = pop.clone();
    let dt = config.control_step_seconds / 3600.0;
    let max_steps = (600.0 / config.control_step_seconds).ceil() as usize;
    let mut achieved = fleet.deviation();
    for k in 0..max_steps {
        let now = k as f64 * dt;
        rank_and_toggle(&mut fleet, target, now, config)?;
        achieved =
            advance_all(&mut fleet, dt, now * 3600.0 + config.control_step_seconds)?.mean_deviation;
        if achieved / target >= RAMP_THRESHOLD {
            return Ok(RampResult {
                seconds: Some((k + 1) as f64 * config.control_step_seconds),
                achieved,
            });
        }
    }
    Ok(RampResult {
        seconds: None,
        achieved,
    })
}

/// Write `t_seconds,setpoint_kw,achieved_kw,toggles,violations` rows.
pub fn write_trace_csv<W: Write>(mut out: W, steps: &[DispatchStep]) -> io::Result<()> {
    writeln!(out, "t_seconds,setpoint_kw,achieved_kw,toggles,violations")?;
    for s in steps {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.t_seconds, s.setpoint, s.achieved, s.toggles, s.violations
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcl::LoadKind;

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

    fn kw_signal(samples: Vec<f64>) -> SignalSeries {
        SignalSeries::new(
            CONTROL_STEP_SECONDS / 3600.0,
            samples,
            SignalUnit::Power(PowerUnit::Kw),
        )
        .unwrap()
    }

    fn step(setpoint: f64, achieved: f64) -> DispatchStep {
        DispatchStep {
            t_seconds: 0.0,
            setpoint,
            achieved,
            toggles: 0,
            violations: 0,
        }
    }

    #[test]
    fn perfect_tracking_scores_one() {
        let steps: Vec<_> = (0..450)
            .map(|k| step((k as f64).sin(), (k as f64).sin()))
            .collect();
        let r = accuracy(&steps, 4.0).unwrap();
        assert_eq!(r.windows.len(), 2);
        assert!(r.windows.iter().all(|w| w.score == 1.0));
    }

    #[test]
    fn no_response_scores_zero() {
        let steps: Vec<_> = (0..225).map(|k| step(1.0 + k as f64, 0.0)).collect();
        assert_eq!(accuracy(&steps, 4.0).unwrap().windows[0].score, 0.0);
    }

    #[test]
    fn five_percent_error_scores_095() {
        let steps: Vec<_> = (0..225)
            .map(|k| {
                let sp = ((k as f64) * 0.1).sin() * 100.0;
                step(sp, sp - 0.05 * sp.abs())
            })
            .collect();
        let score = accuracy(&steps, 4.0).unwrap().windows[0].score;
        assert!((score - 0.95).abs() < 1e-12);
    }

    #[test]
    fn zero_setpoint_window_scores_one_and_scores_are_clamped() {
        let steps: Vec<_> = (0..225).map(|_| step(0.0, 3.0)).collect();
        assert_eq!(accuracy(&steps, 4.0).unwrap().windows[0].score, 1.0);
        let steps: Vec<_> = (0..225).map(|_| step(1.0, -5.0)).collect();
        assert_eq!(accuracy(&steps, 4.0).unwrap().windows[0].score, 0.0);
    }

    #[test]
    fn accuracy_needs_a_full_window() {
        assert!(accuracy(&[], 4.0).is_err());
        assert!(accuracy(&[step(1.0, 1.0); 10], 4.0).is_err());
    }

    #[test]
    fn null_signal_stays_near_baseline() {
        let mut pop = Population::homogeneous(ac(), 100, 32.0, 3).unwrap();
        let run = track(
            &mut pop,
            &kw_signal(vec![0.0; 450]),
            &DispatchConfig::default(),
        )
        .unwrap();
        let pm = ac().rated_power;
        let mean = run.steps.iter().map(|s| s.achieved.abs()).sum::<f64>() / run.steps.len() as f64;
        assert!(mean <= pm / 2.0, "{mean}");
        // Thermostat switches inside a step add at most a few units.
        assert!(run.steps.iter().all(|s| s.achieved.abs() <= 3.0 * pm));
        assert!(run.violations.is_empty());
    }

    #[test]
    fn rejects_signal_on_wrong_grid_or_unit() {
        let mut pop = Population::homogeneous(ac(), 10, 32.0, 3).unwrap();
        let wrong_step =
            SignalSeries::new(1.0 / 60.0, vec![0.0; 10], SignalUnit::Power(PowerUnit::Kw)).unwrap();
        assert!(track(&mut pop, &wrong_step, &DispatchConfig::default()).is_err());
        let wrong_unit =
            SignalSeries::new(1.0 / 900.0, vec![0.0; 10], SignalUnit::Power(PowerUnit::Mw))
                .unwrap();
        assert!(track(&mut pop, &wrong_unit, &DispatchConfig::default()).is_err());
    }

    #[test]
    fn saturating_command_undershoots_without_violations() {
        let mut pop = Population::homogeneous(ac(), 200, 32.0, 5).unwrap();
        let (_, max) = pop.envelope();
        let run = track(
            &mut pop,
            &kw_signal(vec![1.5 * max; 225]),
            &DispatchConfig::default(),
        )
        .unwrap();
        assert!(run.violations.is_empty());
        assert!(run.steps.iter().all(|s| s.achieved <= max + 1e-9));
        assert!(run.steps.iter().all(|s| s.error() > 0.0));
    }

    #[test]
    fn ramp_within_one_step() {
        let pop = Population::homogeneous(ac(), 500, 32.0, 9).unwrap();
        let (min, max) = pop.envelope();
        let cfg = DispatchConfig::default();
        for target in [0.4 * max, 0.4 * min] {
            let r = ramp_check(&pop, target, &cfg).unwrap();
            assert_eq!(r.seconds, Some(CONTROL_STEP_SECONDS));
        }
        assert_eq!(ramp_check(&pop, 0.0, &cfg).unwrap().seconds, Some(0.0));
        assert!(matches!(
            ramp_check(&pop, 1.01 * max, &cfg),
            Err(ModelError::BeyondEnvelope { .. })
        ));
    }

    #[test]
    fn dwell_limits_retoggling() {
        let cfg = DispatchConfig {
            min_dwell_seconds: Some(3600.0),
            ..DispatchConfig::default()
        };
        let mut pop = Population::homogeneous(ac(), 50, 32.0, 1).unwrap();
        let samples: Vec<f64> = (0..200)
            .map(|k| if k % 2 == 0 { 40.0 } else { -40.0 })
            .collect();
        let run = track(&mut pop, &kw_signal(samples), &cfg).unwrap();
        let toggled: u32 = run.steps.iter().map(|s| s.toggles).sum();
        assert!(toggled as usize <= pop.len());
    }

    #[test]
    fn delay_shifts_setpoints() {
        let cfg = DispatchConfig {
            delay_steps: 3,
            ..DispatchConfig::default()
        };
        let mut pop = Population::homogeneous(ac(), 20, 32.0, 1).unwrap();
        let samples: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let run = track(&mut pop, &kw_signal(samples), &cfg).unwrap();
        assert_eq!(run.steps[2].setpoint, 0.0);
        assert_eq!(run.steps[5].setpoint, 2.0);
    }

    #[test]
    fn trace_csv_has_schema_header() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[step(1.0, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("t_seconds,setpoint_kw,achieved_kw,toggles,violations\n0,1,0.5,0,0")
        );
    }
}
