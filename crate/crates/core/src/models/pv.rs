use super::{check, ModelError};

/// Elementary charge in coulombs.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Standard test condition irradiance, W/m².
pub const STC_IRRADIANCE: f64 = 1000.0;
/// Standard test condition cell temperature, K.
pub const STC_TEMPERATURE: f64 = 298.15;

/// Single-diode cell parameters without a series resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvCellParams {
    /// Effective cell area, m².
    pub area_cell: f64,
    /// Conversion efficiency, (0, 1].
    pub efficiency: f64,
    /// Diode reverse saturation current, A.
    pub sat_current: f64,
    /// Diode ideality factor.
    pub ideality: f64,
    /// Shunt resistance, Ω.
    pub shunt_resistance: f64,
}

impl Default for PvCellParams {
    fn default() -> Self {
        Self {
            area_cell: 0.05,
            efficiency: 0.15,
            sat_current: 1e-9,
            ideality: 1.3,
            shunt_resistance: 500.0,
        }
    }
}

impl PvCellParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.area_cell > 0.0, "area_cell", self.area_cell, "must be > 0")?;
        check(
            self.efficiency > 0.0 && self.efficiency <= 1.0,
            "efficiency",
            self.efficiency,
            "must lie in (0, 1]",
        )?;
        check(self.sat_current > 0.0, "sat_current", self.sat_current, "must be > 0")?;
        check(self.ideality >= 1.0, "ideality", self.ideality, "must be >= 1")?;
        check(
            self.shunt_resistance > 0.0,
            "shunt_resistance",
            self.shunt_resistance,
            "must be > 0",
        )
    }

    /// Light-generated current at irradiance `g`.
    pub fn photocurrent(&self, g: f64) -> f64 {
        g * self.area_cell * self.efficiency
    }

    /// n·K·T/q at temperature `t`.
    pub fn thermal_voltage(&self, t: f64) -> f64 {
        self.ideality * BOLTZMANN * t / ELEMENTARY_CHARGE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvInput {
    /// W/m².
    pub irradiance: f64,
    /// K.
    pub temperature: f64,
    /// Cell terminal voltage, V. Also the junction voltage seen by the shunt.
    pub terminal_voltage: f64,
}

/// Cell output current: photocurrent minus diode and shunt currents.
pub fn pv_cell_current(input: &PvInput, params: &PvCellParams) -> Result<f64, ModelError> {
    check(input.irradiance >= 0.0, "irradiance", input.irradiance, "must be >= 0")?;
    check(input.temperature > 0.0, "temperature", input.temperature, "must be > 0")?;
    let v = input.terminal_voltage;
    let i_diode = params.sat_current * (v / params.thermal_voltage(input.temperature)).exp_m1();
    let i = params.photocurrent(input.irradiance) - i_diode - v / params.shunt_resistance;
    if i.is_finite() {
        Ok(i)
    } else {
        Err(ModelError::NonFinite { voltage: v })
    }
}

/// Series/parallel array of identical modules, each a string of cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvArrayConfig {
    pub cell: PvCellParams,
    /// Modules per string.
    pub series_count: u32,
    /// Strings in parallel.
    pub parallel_count: u32,
    /// Series cells inside one module.
    pub cells_per_module: u32,
    /// Nameplate power at STC, W.
    pub rated_power: f64,
    /// Nameplate MPP voltage at STC, V.
    pub rated_voltage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvOperatingPoint {
    pub current: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPowerPoint {
    pub voltage: f64,
    pub current: f64,
    pub power: f64,
}

impl PvArrayConfig {
    /// The 3s10p, 5 kW / 69 V array with its photocurrent calibrated so the
    /// STC maximum power point equals the rated power.
    pub fn rated_3s10p() -> Self {
        let uncalibrated = Self {
            cell: PvCellParams::default(),
            series_count: 3,
            parallel_count: 10,
            cells_per_module: 36,
            rated_power: 5000.0,
            rated_voltage: 69.0,
        };
        uncalibrated
            .calibrated()
            .expect("default array parameters are valid")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.cell.validate()?;
        let counts = [
            ("series_count", self.series_count),
            ("parallel_count", self.parallel_count),
            ("cells_per_module", self.cells_per_module),
        ];
        for (name, n) in counts {
            check(n >= 1, name, f64::from(n), "must be >= 1")?;
        }
        check(self.rated_power > 0.0, "rated_power", self.rated_power, "must be > 0")?;
        check(self.rated_voltage > 0.0, "rated_voltage", self.rated_voltage, "must be > 0")
    }

    /// Total number of cells in one series string.
    pub fn cells_in_series(&self) -> f64 {
        f64::from(self.series_count) * f64::from(self.cells_per_module)
    }

    /// Open-circuit voltage of the whole array.
    pub fn open_circuit_voltage(&self, g: f64, t: f64) -> Result<f64, ModelError> {
        let iph = self.cell.photocurrent(g);
        if iph <= 0.0 {
            return Ok(0.0);
        }
        // At v_hi the diode alone carries the photocurrent, so the cell
        // current there is -v_hi/R_sh < 0.
        let mut lo = 0.0;
        let mut hi = self.cell.thermal_voltage(t) * (iph / self.cell.sat_current).ln_1p();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let i = pv_cell_current(
                &PvInput {
                    irradiance: g,
                    temperature: t,
                    terminal_voltage: mid,
                },
                &self.cell,
            )?;
            if i > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi) * self.cells_in_series())
    }

    /// Golden-section search of the P–V curve on [0, v_oc].
    pub fn maximum_power_point(&self, g: f64, t: f64) -> Result<MaxPowerPoint, ModelError> {
        let v_oc = self.open_circuit_voltage(g, t)?;
        if v_oc <= 0.0 {
            return Ok(MaxPowerPoint {
                voltage: 0.0,
                current: 0.0,
                power: 0.0,
            });
        }
        let power = |v: f64| pv_array_output(g, t, v, self).map(|op| op.power);
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, v_oc);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut pc, mut pd) = (power(c)?, power(d)?);
        while b - a > 1e-9 * v_oc {
            if pc > pd {
                b = d;
                d = c;
                pd = pc;
                c = b - inv_phi * (b - a);
                pc = power(c)?;
            } else {
                a = c;
                c = d;
                pc = pd;
                d = a + inv_phi * (b - a);
                pd = power(d)?;
            }
        }
        let voltage = 0.5 * (a + b);
        let op = pv_array_output(g, t, voltage, self)?;
        Ok(MaxPowerPoint {
            voltage,
            current: op.current,
            power: op.power,
        })
    }

    /// Returns a copy whose cell area is bisected so that the STC maximum
    /// power equals `rated_power`. Diode and shunt parameters stay fixed.
    pub fn calibrated(&self) -> Result<Self, ModelError> {
        self.validate()?;
        let mut cfg = *self;
        let mpp_at = |cfg: &mut Self, area: f64| {
            cfg.cell.area_cell = area;
            cfg.maximum_power_point(STC_IRRADIANCE, STC_TEMPERATURE)
                .map(|m| m.power)
        };
        let (mut lo, mut hi) = (0.0, self.cell.area_cell.max(1e-6));
        while mpp_at(&mut cfg, hi)? < self.rated_power {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mpp_at(&mut cfg, mid)? < self.rated_power {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        cfg.cell.area_cell = 0.5 * (lo + hi);
        Ok(cfg)
    }
}

/// Array current and power at array terminal voltage `v_array`.
pub fn pv_array_output(
    g: f64,
    t: f64,
    v_array: f64,
    cfg: &PvArrayConfig,
) -> Result<PvOperatingPoint, ModelError> {
    check(v_array >= 0.0, "v_array", v_array, "must be >= 0")?;
    let cell_current = pv_cell_current(
        &PvInput {
            irradiance: g,
            temperature: t,
            terminal_voltage: v_array / cfg.cells_in_series(),
        },
        &cfg.cell,
    )?;
    let current = f64::from(cfg.parallel_count) * cell_current;
    Ok(PvOperatingPoint {
        current,
        power: v_array * current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(g: f64, v: f64) -> PvInput {
        PvInput {
            irradiance: g,
            temperature: STC_TEMPERATURE,
            terminal_voltage: v,
        }
    }

    #[test]
    fn zero_irradiance_zero_voltage_gives_zero() {
        let p = PvCellParams::default();
        assert_eq!(pv_cell_current(&input(0.0, 0.0), &p).unwrap(), 0.0);
    }

    #[test]
    fn short_circuit_current_is_photocurrent() {
        let p = PvCellParams {
            area_cell: 8.0 / (1000.0 * 0.2),
            efficiency: 0.2,
            ..PvCellParams::default()
        };
        let i = pv_cell_current(&input(1000.0, 0.0), &p).unwrap();
        assert!((i - 8.0).abs() < 1e-12);
    }

    #[test]
    fn open_circuit_root_matches_independent_bisection() {
        let p = PvCellParams {
            area_cell: 8.0 / (1000.0 * 0.2),
            efficiency: 0.2,
            ..PvCellParams::default()
        };
        // Independent bisection written directly against the closed form.
        let f = |v: f64| {
            let vt = p.ideality * BOLTZMANN * STC_TEMPERATURE / ELEMENTARY_CHARGE;
            8.0 - p.sat_current * ((v / vt).exp() - 1.0) - v / p.shunt_resistance
        };
        let (mut lo, mut hi) = (0.0_f64, 2.0_f64);
        assert!(f(lo) > 0.0 && f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let root = 0.5 * (lo + hi);
        let i = pv_cell_current(&input(1000.0, root), &p).unwrap();
        assert!(i.abs() < 1e-9, "current at root = {i}");

        let cfg = PvArrayConfig {
            cell: p,
            series_count: 1,
            parallel_count: 1,
            cells_per_module: 1,
            rated_power: 1.0,
            rated_voltage: 1.0,
        };
        let v_oc = cfg.open_circuit_voltage(1000.0, STC_TEMPERATURE).unwrap();
        assert!((v_oc - root).abs() < 1e-9);
    }

    #[test]
    fn overflow_names_the_voltage() {
        let p = PvCellParams::default();
        let err = pv_cell_current(&input(1000.0, 1e4), &p).unwrap_err();
        assert_eq!(err, ModelError::NonFinite { voltage: 1e4 });
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = PvCellParams::default();
        assert!(pv_cell_current(&input(-1.0, 0.0), &p).is_err());
        let mut cold = input(1000.0, 0.0);
        cold.temperature = 0.0;
        assert!(pv_cell_current(&cold, &p).is_err());
        let cfg = PvArrayConfig::rated_3s10p();
        assert!(pv_array_output(1000.0, 298.15, -1.0, &cfg).is_err());
    }

    #[test]
    fn array_zero_voltage_zero_power() {
        let cfg = PvArrayConfig::rated_3s10p();
        let op = pv_array_output(1000.0, STC_TEMPERATURE, 0.0, &cfg).unwrap();
        assert_eq!(op.power, 0.0);
        assert!(op.current > 0.0);
    }

    #[test]
    fn current_grows_with_irradiance() {
        let cfg = PvArrayConfig::rated_3s10p();
        let lo = pv_array_output(500.0, STC_TEMPERATURE, 50.0, &cfg).unwrap();
        let hi = pv_array_output(1000.0, STC_TEMPERATURE, 50.0, &cfg).unwrap();
        assert!(lo.current < hi.current);
    }

    #[test]
    fn calibrated_array_hits_rating() {
        let cfg = PvArrayConfig::rated_3s10p();
        let mpp = cfg
            .maximum_power_point(STC_IRRADIANCE, STC_TEMPERATURE)
            .unwrap();
        assert!((mpp.power - 5000.0).abs() < 1e-6);
        assert!((mpp.voltage - 69.0).abs() < 6.9);
    }

    #[test]
    fn dark_array_has_no_power_point() {
        let cfg = PvArrayConfig::rated_3s10p();
        let mpp = cfg.maximum_power_point(0.0, STC_TEMPERATURE).unwrap();
        assert_eq!(mpp.power, 0.0);
        assert_eq!(cfg.open_circuit_voltage(0.0, 300.0).unwrap(), 0.0);
    }
}
