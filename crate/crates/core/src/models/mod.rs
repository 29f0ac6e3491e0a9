//! Electrical component models: photovoltaic array, battery, supercapacitor
//! and the boost-converter filter sizing calculator.
//!
//! Everything in here is a pure function of its arguments.

mod battery;
mod converter;
mod pv;
mod supercap;

pub use battery::{
    battery_current_for_power, battery_soc_step, battery_terminal_voltage, BatteryParams,
    BatteryState,
};
pub use converter::{size_converter, ConverterRating, ConverterSizing};
pub use pv::{
    pv_array_output, pv_cell_current, MaxPowerPoint, PvArrayConfig, PvCellParams, PvInput,
    PvOperatingPoint, BOLTZMANN, ELEMENTARY_CHARGE, STC_IRRADIANCE, STC_TEMPERATURE,
};
pub use supercap::{supercap_step, SupercapParams, SupercapState};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("diode current overflowed at cell voltage {voltage} V")]
    NonFinite { voltage: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("boost converter requires v_out > v_in > 0 (got v_in = {v_in}, v_out = {v_out})")]
    NotBoost { v_in: f64, v_out: f64 },
}

pub(crate) fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), ModelError> {
    if cond && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value, reason })
    }
}
