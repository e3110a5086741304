//! Brute-force reference simulator: forward Euler on the raw ODE with the
//! thermostat checked after every substep. Shares no code with the engine.

#[derive(Debug, Clone)]
pub struct EulerTcl {
    pub capacitance: f64,
    pub resistance: f64,
    pub rated_power: f64,
    pub cop: f64,
    pub setpoint: f64,
    pub deadband: f64,
    pub cooling: bool,
    pub theta: f64,
    pub on: bool,
}

impl EulerTcl {
    fn lower(&self) -> f64 {
        self.setpoint - self.deadband
    }

    fn upper(&self) -> f64 {
        self.setpoint + self.deadband
    }

    /// One Euler substep of `dt` hours followed by the thermostat check.
    pub fn step(&mut self, ambient: f64, dt: f64) {
        let q = if self.on { 1.0 } else { 0.0 };
        let sign = if self.cooling { 1.0 } else { -1.0 };
        let dtheta = (ambient - self.theta) / (self.capacitance * self.resistance)
            - sign * self.cop / self.capacitance * self.rated_power * q;
        self.theta += dtheta * dt;
        if self.cooling {
            if self.theta >= self.upper() {
                self.on = true;
            } else if self.theta <= self.lower() {
                self.on = false;
            }
        } else if self.theta <= self.lower() {
            self.on = true;
        } else if self.theta >= self.upper() {
            self.on = false;
        }
    }

    pub fn power(&self) -> f64 {
        if self.on {
            self.rated_power
        } else {
            0.0
        }
    }

    pub fn out_of_band(&self, tol: f64) -> bool {
        self.theta < self.lower() - tol || self.theta > self.upper() + tol
    }

    /// Fraction of the band in the direction of the next ON switch.
    pub fn margin(&self) -> f64 {
        let x = (self.theta - self.lower()) / (2.0 * self.deadband);
        if self.cooling {
            x
        } else {
            1.0 - x
        }
    }
}

/// Greedy tracker for the oracle fleet: each control step, force the units
/// nearest their natural switch until the error is within half a unit.
/// The thermostat keeps authority at the band edges. Returns (band
/// violations, worst error of the step-mean deviation).
pub fn greedy_track(
    fleet: &mut [EulerTcl],
    baseline: f64,
    setpoint: &[f64],
    ambient: f64,
    control_dt: f64,
    substeps: usize,
) -> (usize, f64) {
    let mut violations = 0;
    let mut worst_error: f64 = 0.0;
    for &sp in setpoint {
        let draw: f64 = fleet.iter().map(EulerTcl::power).sum();
        let mut error = sp - (draw - baseline);
        let want_on = error > 0.0;
        let mut order: Vec<usize> = (0..fleet.len())
            .filter(|&i| fleet[i].on != want_on)
            .collect();
        order.sort_by(|&i, &j| {
            let (mi, mj) = (fleet[i].margin(), fleet[j].margin());
            if want_on {
                mj.total_cmp(&mi)
            } else {
                mi.total_cmp(&mj)
            }
        });
        for i in order {
            let pm = fleet[i].rated_power;
            if error.abs() <= pm / 2.0 {
                break;
            }
            let m = fleet[i].margin();
            // Skip units the thermostat would immediately send back.
            if (want_on && m <= 0.0) || (!want_on && m >= 1.0) {
                continue;
            }
            fleet[i].on = want_on;
            error += if want_on { -pm } else { pm };
        }
        let mut energy = 0.0;
        for _ in 0..substeps {
            for u in fleet.iter_mut() {
                u.step(ambient, control_dt / substeps as f64);
                energy += u.power();
            }
        }
        let mean_deviation = energy / substeps as f64 - baseline;
        worst_error = worst_error.max((sp - mean_deviation).abs());
        violations += fleet.iter().filter(|u| u.out_of_band(1e-3)).count();
    }
    (violations, worst_error)
}
