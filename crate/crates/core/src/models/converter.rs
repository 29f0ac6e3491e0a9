use super::{check, ModelError};

/// Design point of a synchronous boost converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterRating {
    pub v_in: f64,
    pub v_out: f64,
    pub i_out: f64,
    /// Switching frequency, Hz.
    pub switching_freq: f64,
    pub power_rating: f64,
}

impl Default for ConverterRating {
    /// 69 V → 100 V, 50 A, 1 kHz, 5 kW.
    fn default() -> Self {
        Self {
            v_in: 69.0,
            v_out: 100.0,
            i_out: 50.0,
            switching_freq: 1000.0,
            power_rating: 5000.0,
        }
    }
}

impl ConverterRating {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.v_in > 0.0 && self.v_out > self.v_in) {
            return Err(ModelError::NotBoost {
                v_in: self.v_in,
                v_out: self.v_out,
            });
        }
        check(self.i_out > 0.0, "i_out", self.i_out, "must be > 0")?;
        check(
            self.switching_freq > 0.0,
            "switching_freq",
            self.switching_freq,
            "must be > 0",
        )?;
        check(
            self.power_rating > 0.0,
            "power_rating",
            self.power_rating,
            "must be > 0",
        )
    }
}

/// Filter component values for a 1 % ripple design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterSizing {
    /// Inductor current ripple ΔI_L, A.
    pub ripple_current: f64,
    /// Output voltage ripple ΔV_o, V.
    pub ripple_voltage: f64,
    /// H.
    pub inductance: f64,
    /// F.
    pub capacitance: f64,
}

/// Sizes the inductor and output capacitor of a boost stage:
///
/// ```text
/// ΔI_L = 0.01 · I_out · V_out / V_in
/// ΔV_o = 0.01 · V_out
/// L    = 1.5 · V_in (V_out − V_in) / (ΔI_L · f · V_out)
/// C    = I_out (1 − V_in / V_out) / (f · ΔV_o)
/// ```
pub fn size_converter(rating: &ConverterRating) -> Result<ConverterSizing, ModelError> {
    rating.validate()?;
    let ConverterRating {
        v_in,
        v_out,
        i_out,
        switching_freq: f,
        ..
    } = *rating;
    let ripple_current = 0.01 * i_out * (v_out / v_in);
    let ripple_voltage = 0.01 * v_out;
    let inductance = v_in * (v_out - v_in) / (ripple_current * f * v_out) * 1.5;
    let capacitance = i_out * (1.0 - v_in / v_out) / (f * ripple_voltage);
    Ok(ConverterSizing {
        ripple_current,
        ripple_voltage,
        inductance,
        capacitance,
    })
}
