/// Perturb-and-observe tracker state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpptState {
    /// Voltage reference handed to the PV converter, V.
    pub v_ref: f64,
    pub prev_power: f64,
    pub prev_voltage: f64,
    /// Perturbation size, V.
    pub step_size: f64,
    /// +1 or −1.
    pub direction: f64,
    /// Upper clamp for `v_ref`, normally the array open-circuit voltage.
    pub v_limit: f64,
}

impl MpptState {
    pub fn new(v_start: f64, step_size: f64, v_limit: f64) -> Self {
        Self {
            v_ref: v_start.clamp(0.0, v_limit),
            prev_power: 0.0,
            prev_voltage: 0.0,
            step_size,
            direction: 1.0,
            v_limit,
        }
    }
}

/// One P&O iteration. A strict power drop reverses the perturbation; a rise
/// or an exact tie keeps it.
pub fn mppt_step(state: &MpptState, v_meas: f64, p_meas: f64) -> MpptState {
    let direction = if p_meas < state.prev_power {
        -state.direction
    } else {
        state.direction
    };
    MpptState {
        v_ref: (state.v_ref + direction * state.step_size).clamp(0.0, state.v_limit),
        prev_power: p_meas,
        prev_voltage: v_meas,
        direction,
        ..*state
    }
}
