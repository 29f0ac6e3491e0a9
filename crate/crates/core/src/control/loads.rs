use super::{check, ControlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlexMode {
    /// Flexible loads draw nothing.
    Disabled,
    /// All surplus goes to flexible loads (γ must be 0).
    Full,
    /// Flexible loads get the surplus minus the reserve γ.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlexLoadConfig {
    pub mode: FlexMode,
    /// Power withheld from the flexible loads, W.
    pub gamma: f64,
    /// Flexible load rating, W.
    pub p_max: f64,
}

impl Default for FlexLoadConfig {
    fn default() -> Self {
        Self {
            mode: FlexMode::Disabled,
            gamma: 0.0,
            p_max: 5000.0,
        }
    }
}

impl FlexLoadConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        check(self.gamma >= 0.0, "gamma", self.gamma, "must be >= 0")?;
        check(self.p_max >= 0.0, "p_max", self.p_max, "must be >= 0")?;
        if self.mode == FlexMode::Full {
            check(self.gamma == 0.0, "gamma", self.gamma, "must be 0 in full mode")?;
        }
        Ok(())
    }
}

/// `P_flex = I_PV·V_g − γ`, bounded to the physical range `[0, p_max]`.
pub fn flex_load_power(p_pv: f64, cfg: &FlexLoadConfig) -> f64 {
    match cfg.mode {
        FlexMode::Disabled => 0.0,
        FlexMode::Full | FlexMode::Partial => (p_pv - cfg.gamma).clamp(0.0, cfg.p_max),
    }
}

/// Constant-current load, `V_g · I`.
pub fn nonflex_load_power(v_grid: f64, i_nflx: f64) -> f64 {
    v_grid * i_nflx
}

pub fn total_power(powers: &[f64]) -> f64 {
    powers.iter().sum()
}

/// Flexible-load dispatch: only PV power left over after the non-flexible
/// demand is offered to the flexible loads.
pub fn flex_actuation(p_pv: f64, p_nonflex: f64, cfg: &FlexLoadConfig) -> f64 {
    let surplus = (p_pv - p_nonflex).max(0.0);
    flex_load_power(surplus, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(mode: FlexMode, gamma: f64) -> FlexLoadConfig {
        FlexLoadConfig {
            mode,
            gamma,
            p_max: 5000.0,
        }
    }

    #[test]
    fn flex_load_cases() {
        assert_eq!(flex_load_power(3000.0, &cfg(FlexMode::Disabled, 100.0)), 0.0);
        assert_eq!(flex_load_power(3000.0, &cfg(FlexMode::Partial, 1000.0)), 2000.0);
        assert_eq!(flex_load_power(500.0, &cfg(FlexMode::Partial, 1000.0)), 0.0);
        assert_eq!(flex_load_power(9000.0, &cfg(FlexMode::Full, 0.0)), 5000.0);
    }

    #[test]
    fn nonflex_and_total() {
        assert_eq!(nonflex_load_power(100.0, 10.0), 1000.0);
        assert_eq!(nonflex_load_power(100.0, 0.0), 0.0);
        assert_eq!(nonflex_load_power(100.0, 37.5), 3750.0);
        assert_eq!(total_power(&[]), 0.0);
        assert_eq!(total_power(&[1000.0, 2000.0]), 3000.0);
        assert_eq!(total_power(&[2000.0, 1000.0]), total_power(&[1000.0, 2000.0]));
    }

    #[test]
    fn actuation_cases() {
        assert_eq!(flex_actuation(4000.0, 2500.0, &cfg(FlexMode::Full, 0.0)), 1500.0);
        assert_eq!(flex_actuation(2000.0, 2500.0, &cfg(FlexMode::Full, 0.0)), 0.0);
        let partial = flex_actuation(4000.0, 2500.0, &cfg(FlexMode::Partial, 500.0));
        assert_eq!(partial, 1000.0);
        // The remaining 500 W of surplus is left for the batteries.
        assert_eq!(4000.0 - 2500.0 - partial, 500.0);
    }

    #[test]
    fn full_mode_rejects_reserve() {
        assert!(cfg(FlexMode::Full, 500.0).validate().is_err());
        assert!(cfg(FlexMode::Partial, 500.0).validate().is_ok());
        assert!(cfg(FlexMode::Disabled, 500.0).validate().is_ok());
    }

    proptest! {
        #[test]
        fn monotone_in_pv_and_gamma(
            p1 in 0.0..10_000.0f64, dp in 0.0..5_000.0f64,
            g1 in 0.0..5_000.0f64, dg in 0.0..5_000.0f64,
        ) {
            let c = cfg(FlexMode::Partial, g1);
            prop_assert!(flex_load_power(p1 + dp, &c) >= flex_load_power(p1, &c));
            let c2 = cfg(FlexMode::Partial, g1 + dg);
            prop_assert!(flex_load_power(p1, &c2) <= flex_load_power(p1, &c));
            prop_assert_eq!(flex_load_power(p1, &cfg(FlexMode::Disabled, g1)), 0.0);
        }

        #[test]
        fn full_mode_never_exceeds_pv(p_pv in 0.0..10_000.0f64, p_nf in 0.0..10_000.0f64) {
            let c = cfg(FlexMode::Full, 0.0);
            let surplus = (p_pv - p_nf).max(0.0);
            prop_assume!(surplus <= c.p_max);
            prop_assert!(flex_actuation(p_pv, p_nf, &c) + p_nf <= p_pv + 1e-9 || p_nf > p_pv);
        }
    }
}
