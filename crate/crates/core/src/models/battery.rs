use super::{check, ModelError};

/// Constant-EMF battery behind an internal resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryParams {
    /// Open-circuit voltage E, V.
    pub open_circuit_voltage: f64,
    /// Internal resistance R_i, Ω.
    pub internal_resistance: f64,
    /// Capacity, A·h.
    pub capacity_ah: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            open_circuit_voltage: 69.0,
            internal_resistance: 0.05,
            capacity_ah: 150.0,
            soc_min: 0.1,
            soc_max: 0.9,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(
            self.open_circuit_voltage > 0.0,
            "open_circuit_voltage",
            self.open_circuit_voltage,
            "must be > 0",
        )?;
        check(
            self.internal_resistance >= 0.0,
            "internal_resistance",
            self.internal_resistance,
            "must be >= 0",
        )?;
        check(self.capacity_ah > 0.0, "capacity_ah", self.capacity_ah, "must be > 0")?;
        check(
            (0.0..1.0).contains(&self.soc_min),
            "soc_min",
            self.soc_min,
            "must lie in [0, 1)",
        )?;
        check(
            self.soc_max > self.soc_min && self.soc_max <= 1.0,
            "soc_max",
            self.soc_max,
            "must lie in (soc_min, 1]",
        )
    }
}

/// Battery electrical state. `current` is positive while charging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub soc: f64,
    pub terminal_voltage: f64,
    pub current: f64,
}

impl BatteryState {
    /// Resting state at the given SoC.
    pub fn at_rest(params: &BatteryParams, soc: f64) -> Self {
        Self {
            soc,
            terminal_voltage: params.open_circuit_voltage,
            current: 0.0,
        }
    }

    /// Power flowing into the battery terminals, W (charging-positive).
    pub fn power(&self) -> f64 {
        self.terminal_voltage * self.current
    }
}

/// Terminal voltage for a charging-positive current. The usual
/// discharging-positive form `E - I·R_i` is the same relation with `I` negated.
pub fn battery_terminal_voltage(params: &BatteryParams, current: f64) -> f64 {
    params.open_circuit_voltage + current * params.internal_resistance
}

/// Coulomb-counting SoC update with silent clamping to [0, 1].
pub fn battery_soc_step(
    state: &BatteryState,
    current: f64,
    dt: f64,
    params: &BatteryParams,
) -> BatteryState {
    debug_assert!(dt > 0.0);
    let soc = (state.soc + current * dt / (params.capacity_ah * 3600.0)).clamp(0.0, 1.0);
    BatteryState {
        soc,
        terminal_voltage: battery_terminal_voltage(params, current),
        current,
    }
}

/// Charging-positive battery current that makes `V_B·I` equal `power`.
///
/// Solves `R_i·I² + E·I − P = 0` for the root continuous with `P/E`. Powers
/// beyond the discharge limit `E²/(4R_i)` saturate there.
pub fn battery_current_for_power(params: &BatteryParams, power: f64) -> f64 {
    let e = params.open_circuit_voltage;
    let r = params.internal_resistance;
    if r == 0.0 || power == 0.0 {
        return power / e;
    }
    let disc = (e * e + 4.0 * r * power).max(0.0);
    // Rationalised form avoids cancellation for small |P|.
    2.0 * power / (e + disc.sqrt())
}
