use super::{check, ControlError};

/// Gains and output limits of a discrete PI controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiConfig {
    pub kp: f64,
    pub ki: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl PiConfig {
    /// Bus voltage loop of the CV node, A/V and A/(V·s), output in amps
    /// injected into the bus.
    pub fn cv_voltage_loop(i_limit: f64) -> Self {
        Self {
            kp: 0.5,
            ki: 20.0,
            u_min: -i_limit,
            u_max: i_limit,
        }
    }

    /// Supercapacitor bus-support loop.
    pub fn sc_voltage_loop(i_limit: f64) -> Self {
        Self {
            kp: 10.0,
            ki: 100.0,
            u_min: -i_limit,
            u_max: i_limit,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        check(self.ki >= 0.0, "ki", self.ki, "must be >= 0")?;
        check(self.kp.is_finite(), "kp", self.kp, "must be finite")?;
        check(self.u_min < self.u_max, "u_max", self.u_max, "must exceed u_min")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    pub integrator: f64,
}

/// One controller update. The integrator is clamped to the output range
/// (clamping anti-windup) before the proportional term is added.
pub fn pi_step(cfg: &PiConfig, state: &PiState, error: f64, dt: f64) -> (PiState, f64) {
    debug_assert!(dt > 0.0);
    let integrator = (state.integrator + cfg.ki * error * dt).clamp(cfg.u_min, cfg.u_max);
    let u = (cfg.kp * error + integrator).clamp(cfg.u_min, cfg.u_max);
    (PiState { integrator }, u)
}
