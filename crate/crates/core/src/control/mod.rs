//! Discrete controllers and load dispatch rules.

mod loads;
mod mppt;
mod pi;
mod sc_regulator;

pub use loads::{
    flex_actuation, flex_load_power, nonflex_load_power, total_power, FlexLoadConfig, FlexMode,
};
pub use mppt::{mppt_step, MpptState};
pub use pi::{pi_step, PiConfig, PiState};
pub use sc_regulator::{sc_regulator_step, ScRegulatorConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid controller setting {name} = {value}: {reason}")]
    InvalidSetting {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

pub(crate) fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), ControlError> {
    if cond && !value.is_nan() {
        Ok(())
    } else {
        Err(ControlError::InvalidSetting { name, value, reason })
    }
}
