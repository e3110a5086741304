//! Regulation revenue under pay-for-performance settlement.
//!
//! Each hour and direction earns `capacity price × awarded capacity` plus
//! `mileage price × awarded mileage × accuracy`. Up and down are settled
//! separately.

use std::io::{self, Write};

use chrono::{DateTime, Utc};

use crate::battery::PowerUnit;
use crate::error::{check_finite, check_non_negative, ModelError};
use crate::fleet::ClassSeries;

/// Default tracking accuracy applied to mileage payments.
pub const DEFAULT_ACCURACY: f64 = 0.95;
/// Default ratio of awarded mileage to awarded capacity.
pub const DEFAULT_MILEAGE_MULTIPLIER: f64 = 2.5;

/// Hourly market clearing prices in $/MW.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub start: DateTime<Utc>,
    pub cap_up: Vec<f64>,
    pub cap_down: Vec<f64>,
    pub mileage_up: Vec<f64>,
    pub mileage_down: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        start: DateTime<Utc>,
        cap_up: Vec<f64>,
        cap_down: Vec<f64>,
        mileage_up: Vec<f64>,
        mileage_down: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = cap_up.len();
        if n == 0 {
            return Err(ModelError::Empty("price series"));
        }
        for (what, col) in [
            ("cap_down", &cap_down),
            ("mileage_up", &mileage_up),
            ("mileage_down", &mileage_down),
        ] {
            if col.len() != n {
                return Err(ModelError::LengthMismatch {
                    what: what.into(),
                    expected: n,
                    found: col.len(),
                });
            }
        }
        for col in [&cap_up, &cap_down, &mileage_up, &mileage_down] {
            for &p in col {
                check_non_negative("price", p)?;
            }
        }
        Ok(Self {
            start,
            cap_up,
            cap_down,
            mileage_up,
            mileage_down,
        })
    }

    /// Same prices every hour.
    pub fn flat(start: DateTime<Utc>, hours: usize, prices: [f64; 4]) -> Result<Self, ModelError> {
        Self::new(
            start,
            vec![prices[0]; hours],
            vec![prices[1]; hours],
            vec![prices[2]; hours],
            vec![prices[3]; hours],
        )
    }

    pub fn len(&self) -> usize {
        self.cap_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cap_up.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|p| p * factor).collect();
        Self {
            start: self.start,
            cap_up: s(&self.cap_up),
            cap_down: s(&self.cap_down),
            mileage_up: s(&self.mileage_up),
            mileage_down: s(&self.mileage_down),
        }
    }
}

/// Hourly award in MW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Award {
    pub cap_up: f64,
    pub cap_down: f64,
    pub mileage_up: f64,
    pub mileage_down: f64,
    pub accuracy: f64,
}

impl Award {
    fn validate(&self, hour: usize) -> Result<(), ModelError> {
        for v in [
            self.cap_up,
            self.cap_down,
            self.mileage_up,
            self.mileage_down,
        ] {
            check_non_negative("award", v).map_err(|_| ModelError::InvalidParameter {
                name: "award",
                reason: format!("hour {hour}: awards must be finite and >= 0"),
            })?;
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(ModelError::InvalidParameter {
                name: "accuracy",
                reason: format!("hour {hour}: {} not in [0, 1]", self.accuracy),
            });
        }
        Ok(())
    }
}

/// Revenue split into the four settled streams, in dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamRevenue {
    pub cap_up: f64,
    pub cap_down: f64,
    pub mileage_up: f64,
    pub mileage_down: f64,
}

impl StreamRevenue {
    pub fn total(&self) -> f64 {
        self.cap_up + self.cap_down + self.mileage_up + self.mileage_down
    }

    fn add(&mut self, other: &StreamRevenue) {
        self.cap_up += other.cap_up;
        self.cap_down += other.cap_down;
        self.mileage_up += other.mileage_up;
        self.mileage_down += other.mileage_down;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            cap_up: self.cap_up * factor,
            cap_down: self.cap_down * factor,
            mileage_up: self.mileage_up * factor,
            mileage_down: self.mileage_down * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevenueReport {
    pub hourly: Vec<StreamRevenue>,
    /// Sum over hours in chronological order.
    pub total: StreamRevenue,
}

impl RevenueReport {
    /// Fleet revenue divided by the installed unit count.
    pub fn per_unit(&self, installed_units: f64) -> Option<StreamRevenue> {
        (installed_units > 0.0).then(|| self.total.scaled(1.0 / installed_units))
    }
}

/// Settle hourly awards against hourly prices.
pub fn revenue(awards: &[Award], prices: &PriceSeries) -> Result<RevenueReport, ModelError> {
    if awards.len() != prices.len() {
        return Err(ModelError::LengthMismatch {
            what: "awards vs prices".into(),
            expected: prices.len(),
            found: awards.len(),
        });
    }
    let mut hourly = Vec::with_capacity(awards.len());
    let mut total = StreamRevenue::default();
    for (h, a) in awards.iter().enumerate() {
        a.validate(h)?;
        let r = StreamRevenue {
            cap_up: prices.cap_up[h] * a.cap_up,
            cap_down: prices.cap_down[h] * a.cap_down,
            mileage_up: prices.mileage_up[h] * a.mileage_up * a.accuracy,
            mileage_down: prices.mileage_down[h] * a.mileage_down * a.accuracy,
        };
        total.add(&r);
        hourly.push(r);
    }
    Ok(RevenueReport { hourly, total })
}

/// Award the full hourly limits of a class as capacity, with mileage `m ×` capacity.
pub fn award_from_flexibility(
    class: &ClassSeries,
    mileage_multiplier: f64,
    accuracy: f64,
) -> Result<Vec<Award>, ModelError> {
    check_non_negative("mileage_multiplier", mileage_multiplier)?;
    check_finite("accuracy", accuracy)?;
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(ModelError::InvalidParameter {
            name: "accuracy",
            reason: format!("{accuracy} not in [0, 1]"),
        });
    }
    let to_mw = PowerUnit::Kw.factor_to(PowerUnit::Mw);
    Ok(class
        .reg_up
        .iter()
        .zip(&class.reg_down)
        .map(|(&up, &down)| {
            let (up, down) = (up * to_mw, down * to_mw);
            Award {
                cap_up: up,
                cap_down: down,
                mileage_up: mileage_multiplier * up,
                mileage_down: mileage_multiplier * down,
                accuracy,
            }
        })
        .collect())
}

/// Write the hourly report as `hour,cap_up,cap_down,mileage_up,mileage_down,total` in dollars.
pub fn write_hourly_csv<W: Write>(mut out: W, report: &RevenueReport) -> io::Result<()> {
    writeln!(out, "hour,cap_up,cap_down,mileage_up,mileage_down,total")?;
    for (h, r) in report.hourly.iter().enumerate() {
        writeln!(
            out,
            "{h},{},{},{},{},{}",
            r.cap_up,
            r.cap_down,
            r.mileage_up,
            r.mileage_down,
            r.total()
        )?;
    }
    Ok(())
}
