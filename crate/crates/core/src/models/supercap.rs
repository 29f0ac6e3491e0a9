use super::{check, ModelError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupercapParams {
    /// F.
    pub capacitance: f64,
    /// Equivalent series resistance, Ω.
    pub esr: f64,
    /// Initial stored voltage, V.
    pub v_init: f64,
}

impl Default for SupercapParams {
    fn default() -> Self {
        Self {
            capacitance: 50.0,
            esr: 0.01,
            v_init: 48.0,
        }
    }
}

impl SupercapParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.capacitance > 0.0, "capacitance", self.capacitance, "must be > 0")?;
        check(self.esr >= 0.0, "esr", self.esr, "must be >= 0")?;
        check(self.v_init >= 0.0, "v_init", self.v_init, "must be >= 0")
    }
}

/// Supercapacitor state; `current` is positive while discharging into the bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupercapState {
    /// Voltage across the ideal capacitance (the charge integral).
    pub stored_voltage: f64,
    pub terminal_voltage: f64,
    pub current: f64,
}

impl SupercapState {
    pub fn new(params: &SupercapParams) -> Self {
        Self {
            stored_voltage: params.v_init,
            terminal_voltage: params.v_init,
            current: 0.0,
        }
    }

    /// ½·C·V² of the ideal capacitance, J.
    pub fn stored_energy(&self, params: &SupercapParams) -> f64 {
        0.5 * params.capacitance * self.stored_voltage * self.stored_voltage
    }
}

/// Forward-Euler step of the capacitance integral, then the ESR drop.
pub fn supercap_step(
    state: &SupercapState,
    current: f64,
    dt: f64,
    params: &SupercapParams,
) -> SupercapState {
    debug_assert!(dt > 0.0);
    let stored_voltage = (state.stored_voltage - current * dt / params.capacitance).max(0.0);
    SupercapState {
        stored_voltage,
        terminal_voltage: stored_voltage - params.esr * current,
        current,
    }
}
