//! SINR, packet arrival rates and battery dynamics.
//!
//! A jamming power `p` on a link with sensor-side gain `H` and attacker-side
//! gain `G` produces `SINR = H / (jam_gain · G · p + σ²)`; the packet arrival
//! rate is a nondecreasing modulation-dependent map of the SINR. The battery
//! holds integer energy units, capped at `b_max`, replenished by the floored
//! harvested amount.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian upper-tail probability `Q(x) = P(N(0,1) > x)`, via the
/// complementary error function.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// How the packet arrival rate depends on the SINR.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulation {
    /// QAM: `f(s) = 1 − Q(√(b·s))` with channel parameter `b > 0`.
    Qam { b: f64 },
    /// Piecewise-linear monotone lookup over `(sinr, rate)` points; constant
    /// beyond the endpoints. Useful for custom modulations and for forcing
    /// degenerate rates in tests.
    Table { points: Vec<(f64, f64)> },
}

/// Per-sensor link parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    /// Additive noise power σ² (must be positive: it is the only term that
    /// keeps the SINR denominator nonzero at p = 0).
    pub sigma2: f64,
    /// Coefficient multiplying `G·p` in the SINR denominator (1 reproduces
    /// the plain model; the bundled reproduction preset uses 5).
    #[serde(default = "default_jam_gain")]
    pub jam_gain: f64,
    pub modulation: Modulation,
}

fn default_jam_gain() -> f64 {
    1.0
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::Validation("sigma2 must be > 0".into()));
        }
        if !(self.jam_gain >= 0.0) {
            return Err(Error::Validation("jam_gain must be >= 0".into()));
        }
        match &self.modulation {
            Modulation::Qam { b } => {
                if !(*b > 0.0) {
                    return Err(Error::Validation("QAM parameter b must be > 0".into()));
                }
            }
            Modulation::Table { points } => {
                if points.is_empty() {
                    return Err(Error::Validation("table modulation needs points".into()));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::Validation(
                            "table modulation sinr values must be strictly increasing".into(),
                        ));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(Error::Validation(
                            "table modulation rates must be nondecreasing".into(),
                        ));
                    }
                }
                if points.iter().any(|(_, r)| !(0.0..=1.0).contains(r)) {
                    return Err(Error::Validation(
                        "table modulation rates must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `SINR = H / (jam_gain · G · p + σ²)`.
    pub fn sinr(&self, h: f64, g: f64, p: u32) -> f64 {
        h / (self.jam_gain * g * f64::from(p) + self.sigma2)
    }

    /// Packet arrival probability for a given SINR.
    pub fn arrival_rate(&self, sinr: f64) -> f64 {
        match &self.modulation {
            Modulation::Qam { b } => 1.0 - q_function((b * sinr).sqrt()),
            Modulation::Table { points } => {
                if sinr <= points[0].0 {
                    return points[0].1;
                }
                if sinr >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let idx = points.partition_point(|(s, _)| *s <= sinr);
                let (s0, r0) = points[idx - 1];
                let (s1, r1) = points[idx];
                r0 + (r1 - r0) * (sinr - s0) / (s1 - s0)
            }
        }
    }

    /// Arrival probability under jamming power `p` on gains `(h, g)`.
    pub fn arrival(&self, h: f64, g: f64, p: u32) -> f64 {
        self.arrival_rate(self.sinr(h, g, p))
    }
}

/// Battery capacity and the per-channel power cap; power levels are the
/// integers `{0, 1, …, ⌊p_max⌋}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryModel {
    pub b_max: u32,
    pub p_max: f64,
}

impl BatteryModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_max >= 0.0 && self.p_max.is_finite()) {
            return Err(Error::Validation("p_max must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Largest usable per-channel power level, `⌊p_max⌋`.
    pub fn p_cap(&self) -> u32 {
        self.p_max.floor() as u32
    }

    pub fn power_levels(&self) -> impl Iterator<Item = u32> {
        0..=self.p_cap()
    }
}

/// Next battery level: `min(b − total_p + ⌊e⌋, b_max)`.
///
/// Fails if `total_p > b`, which indicates the caller applied an infeasible
/// action.
pub fn battery_update(model: &BatteryModel, b: u32, total_p: u32, e: f64) -> Result<u32> {
    if total_p > b {
        return Err(Error::InfeasibleAction(format!(
            "total power {total_p} exceeds battery level {b}"
        )));
    }
    let harvested = e.floor().max(0.0) as u32;
    Ok((b - total_p).saturating_add(harvested).min(model.b_max))
}
