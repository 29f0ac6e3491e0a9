use std::fmt;

/// Per-node operating mode as written to the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeLabel {
    Cv,
    CcCharge,
    CcDischarge,
    Idle,
    Offline,
}

impl ModeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::Cv => "CV",
            ModeLabel::CcCharge => "CC_CHARGE",
            ModeLabel::CcDischarge => "CC_DISCHARGE",
            ModeLabel::Idle => "IDLE",
            ModeLabel::Offline => "OFF",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "CV" => ModeLabel::Cv,
            "CC_CHARGE" => ModeLabel::CcCharge,
            "CC_DISCHARGE" => ModeLabel::CcDischarge,
            "IDLE" => ModeLabel::Idle,
            "OFF" => ModeLabel::Offline,
            _ => return None,
        })
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRecord {
    /// Battery power, charging-positive, W.
    pub p_batt: f64,
    pub soc: f64,
    pub mode: ModeLabel,
}

/// One trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub v_grid: f64,
    pub p_pv: f64,
    pub p_nonflex: f64,
    pub p_flex: f64,
    /// Supercapacitor power into the bus, W.
    pub p_sc: f64,
    /// Power the bus could not place (positive) or could not serve
    /// (negative) because the CV node saturated.
    pub p_spill: f64,
    /// Islanding fault: no node can regulate the bus.
    pub fault: bool,
    pub nodes: Vec<NodeRecord>,
}

impl StepRecord {
    pub fn battery_total(&self) -> f64 {
        self.nodes.iter().map(|n| n.p_batt).sum()
    }

    /// `p_pv − loads − Σp_batt − p_spill`; zero for a balanced energy step.
    pub fn balance_residual(&self) -> f64 {
        self.p_pv - self.p_nonflex - self.p_flex + self.p_sc - self.battery_total() - self.p_spill
    }

    pub fn cv_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.mode == ModeLabel::Cv).count()
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.t,
            self.v_grid,
            self.p_pv,
            self.p_nonflex,
            self.p_flex,
            self.p_sc,
            self.p_spill,
        ];
        scalars.iter().all(|v| v.is_finite())
            && self.nodes.iter().all(|n| n.p_batt.is_finite() && n.soc.is_finite())
    }
}
