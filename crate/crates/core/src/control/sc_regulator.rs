use super::{check, pi_step, ControlError, PiConfig, PiState};

/// Supercapacitor bus-voltage support: a PI current loop that only acts
/// when the bus leaves a deadband around the setpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScRegulatorConfig {
    /// Bus voltage setpoint, V.
    pub v_ref: f64,
    /// Half-width of the quiet band, V.
    pub deadband: f64,
    pub pi: PiConfig,
    /// Injection limit, A.
    pub i_max: f64,
    /// Time constant of the integrator decay inside the band, s.
    pub decay_time: f64,
}

impl Default for ScRegulatorConfig {
    fn default() -> Self {
        let i_max = 100.0;
        Self {
            v_ref: 100.0,
            deadband: 1.0,
            pi: PiConfig::sc_voltage_loop(i_max),
            i_max,
            decay_time: 0.05,
        }
    }
}

impl ScRegulatorConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.pi.validate()?;
        check(self.deadband > 0.0, "deadband", self.deadband, "must be > 0")?;
        check(self.i_max > 0.0, "i_max", self.i_max, "must be > 0")?;
        check(self.decay_time > 0.0, "decay_time", self.decay_time, "must be > 0")
    }
}

/// Returns the new loop state and the bus injection current (positive =
/// supercapacitor discharges into the bus).
pub fn sc_regulator_step(
    cfg: &ScRegulatorConfig,
    state: &PiState,
    v_grid: f64,
    dt: f64,
) -> (PiState, f64) {
    let error = cfg.v_ref - v_grid;
    if error.abs() <= cfg.deadband {
        let decayed = PiState {
            integrator: state.integrator * (-dt / cfg.decay_time).exp(),
        };
        return (decayed, 0.0);
    }
    let (next, u) = pi_step(&cfg.pi, state, error, dt);
    (next, u.clamp(-cfg.i_max, cfg.i_max))
}
