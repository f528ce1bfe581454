//! Physical-layer energy accounting.
//!
//! Incident power density from a radiating source and residual-dependent
//! harvesting, with the battery bookkeeping around them. Everything here is a pure function of
//! its inputs: batteries are small `Copy` values and every update returns a
//! new one.
//!
//! Units are SI, except that power density is carried in W/cm² and receiver
//! aperture in cm².

mod curve;

pub use curve::{
    check_shape, fit_charge_curve, ChargeCurve, CurveError, Interpolation, DEFAULT_CURVE_POINTS,
};

use std::f64::consts::PI;

use thiserror::Error;

/// One nW/cm² expressed in W/cm².
pub const NW_PER_CM2: f64 = 1e-9;

/// Densities below this floor are ignored by the rectifier (W/cm²).
pub const DEFAULT_SENSITIVITY_FLOOR: f64 = 0.01 * NW_PER_CM2;

/// Distances are clamped to at least this many meters before applying the
/// free-space model, which diverges for co-located antennas.
pub const NEAR_FIELD_LIMIT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("transmit power must be non-negative, got {0} W")]
    NegativePower(f64),
    #[error("directive gain must be at least 1, got {0}")]
    InvalidGain(f64),
    #[error("residual fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("invalid integration step {step} s for duration {duration} s")]
    InvalidStep { step: f64, duration: f64 },
    #[error("energy amount must be non-negative, got {0} J")]
    NegativeAmount(f64),
    #[error("invalid battery: {0}")]
    InvalidBattery(String),
    #[error("invalid incident field: {0}")]
    InvalidField(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Free-space power density (W/cm²) at `distance` meters from an isotropic
/// radiator of `tx_power` watts scaled by `directive_gain`.
pub fn power_density_at(tx_power: f64, distance: f64, directive_gain: f64) -> Result<f64, EnergyError> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(EnergyError::NonPositiveDistance(distance));
    }
    if !(tx_power >= 0.0) {
        return Err(EnergyError::NegativePower(tx_power));
    }
    if !(directive_gain >= 1.0) {
        return Err(EnergyError::InvalidGain(directive_gain));
    }
    let distance_cm = distance * 100.0;
    Ok(tx_power * directive_gain / (4.0 * PI * distance_cm * distance_cm))
}

/// Stored energy of an energy-harvesting node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery {
    residual: f64,
    capacity: f64,
    dead_threshold: f64,
}

impl Battery {
    pub fn new(residual: f64, capacity: f64, dead_threshold: f64) -> Result<Self, EnergyError> {
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(EnergyError::InvalidBattery(format!("capacity {capacity} must be positive")));
        }
        if !(0.0..=capacity).contains(&residual) {
            return Err(EnergyError::InvalidBattery(format!(
                "residual {residual} outside [0, {capacity}]"
            )));
        }
        if !(dead_threshold >= 0.0 && dead_threshold < capacity) {
            return Err(EnergyError::InvalidBattery(format!(
                "dead threshold {dead_threshold} outside [0, {capacity})"
            )));
        }
        Ok(Battery {
            residual,
            capacity,
            dead_threshold,
        })
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn dead_threshold(&self) -> f64 {
        self.dead_threshold
    }

    pub fn fraction(&self) -> f64 {
        self.residual / self.capacity
    }

    pub fn is_alive(&self) -> bool {
        self.residual >= self.dead_threshold
    }

    pub fn is_dead(&self) -> bool {
        !self.is_alive()
    }

    /// Same battery with a different residual, clamped into `[0, capacity]`.
    pub fn with_residual(&self, residual: f64) -> Battery {
        Battery {
            residual: residual.clamp(0.0, self.capacity),
            ..*self
        }
    }

    /// Drains `amount` joules, flooring the residual at zero.
    pub fn consume(&self, amount: f64) -> Result<Battery, EnergyError> {
        if !(amount >= 0.0) {
            return Err(EnergyError::NegativeAmount(amount));
        }
        Ok(self.with_residual((self.residual - amount).max(0.0)))
    }

    /// Adds `amount` joules, clamping at capacity. Returns the new battery and
    /// the amount actually stored.
    pub fn credit(&self, amount: f64) -> Result<(Battery, f64), EnergyError> {
        if !(amount >= 0.0) {
            return Err(EnergyError::NegativeAmount(amount));
        }
        let next = (self.residual + amount).min(self.capacity);
        Ok((self.with_residual(next), next - self.residual))
    }
}

/// Free-function form of [`Battery::consume`].
pub fn consume(battery: &Battery, amount: f64) -> Result<Battery, EnergyError> {
    battery.consume(amount)
}

/// RF power density arriving at a receiver from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentField {
    /// W/cm²
    pub density: f64,
    pub source_id: String,
    /// Receiver antenna effective aperture in cm².
    pub effective_aperture: f64,
}

impl IncidentField {
    pub fn new(density: f64, source_id: impl Into<String>, effective_aperture: f64) -> Result<Self, EnergyError> {
        if !(density >= 0.0) || !density.is_finite() {
            return Err(EnergyError::InvalidField(format!("density {density} must be non-negative")));
        }
        if !(effective_aperture > 0.0) || !effective_aperture.is_finite() {
            return Err(EnergyError::InvalidField(format!(
                "effective aperture {effective_aperture} must be positive"
            )));
        }
        Ok(IncidentField {
            density,
            source_id: source_id.into(),
            effective_aperture,
        })
    }

    /// Incident power in watts.
    pub fn power(&self) -> f64 {
        self.density * self.effective_aperture
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestOutcome {
    /// Energy actually stored, in joules.
    pub harvested: f64,
    pub battery: Battery,
}

/// Integrates residual-dependent harvesting with the default sensitivity floor.
pub fn harvest(
    battery: &Battery,
    curve: &ChargeCurve,
    field: &IncidentField,
    duration: f64,
    step: f64,
) -> Result<HarvestOutcome, EnergyError> {
    harvest_with_floor(battery, curve, field, duration, step, DEFAULT_SENSITIVITY_FLOOR)
}

/// Integrates `dE/dt = density * aperture * efficiency(E / capacity)` over
/// `duration` seconds in fixed steps of `step` seconds (the last step may be
/// shorter), clamping at capacity after each step.
///
/// Each step is a classical fourth-order Runge-Kutta update. Densities below
/// `floor` harvest nothing.
pub fn harvest_with_floor(
    battery: &Battery,
    curve: &ChargeCurve,
    field: &IncidentField,
    duration: f64,
    step: f64,
    floor: f64,
) -> Result<HarvestOutcome, EnergyError> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(EnergyError::InvalidStep { step, duration });
    }
    if duration == 0.0 {
        return Ok(HarvestOutcome {
            harvested: 0.0,
            battery: *battery,
        });
    }
    if !(step > 0.0) || !step.is_finite() || step > duration * (1.0 + 1e-12) {
        return Err(EnergyError::InvalidStep { step, duration });
    }
    let power = field.power();
    if field.density < floor || power == 0.0 {
        return Ok(HarvestOutcome {
            harvested: 0.0,
            battery: *battery,
        });
    }

    let capacity = battery.capacity;
    let rate = |e: f64| power * curve.eval(e / capacity);
    let start = battery.residual;
    let mut e = start;
    let mut elapsed = 0.0;
    let mut k = 0u64;
    while elapsed < duration && e < capacity {
        k += 1;
        // recompute from the step index so long runs do not drift
        let next_t = (k as f64 * step).min(duration);
        let h = next_t - elapsed;
        elapsed = next_t;
        if h <= 0.0 {
            break;
        }
        let k1 = rate(e);
        let k2 = rate(e + 0.5 * h * k1);
        let k3 = rate(e + 0.5 * h * k2);
        let k4 = rate(e + h * k3);
        e = (e + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).min(capacity);
    }
    Ok(HarvestOutcome {
        harvested: e - start,
        battery: battery.with_residual(e),
    })
}
