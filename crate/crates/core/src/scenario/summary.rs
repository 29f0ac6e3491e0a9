//! Whole-run aggregates from a trace.

use std::fmt;

use thiserror::Error;

use crate::sim::StepRecord;

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("cannot summarise an empty trace")]
    Empty,
}

/// Energies in kWh, integrated with the trapezoidal rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryMetrics {
    pub duration_s: f64,
    pub energy_pv: f64,
    pub energy_to_loads: f64,
    pub energy_to_flex: f64,
    pub energy_to_bess: f64,
    pub energy_from_bess: f64,
    /// Surplus the bus could not place.
    pub energy_spilled: f64,
    /// Demand the bus could not serve.
    pub energy_unserved: f64,
    pub max_voltage_deviation: f64,
    pub pv_utilization: f64,
    pub soc_final: Vec<f64>,
    pub fault_steps: usize,
}

impl SummaryMetrics {
    /// `(pv + from_bess + unserved) − (loads + flex + to_bess + spilled)`, kWh.
    pub fn balance_residual(&self) -> f64 {
        (self.energy_pv + self.energy_from_bess + self.energy_unserved)
            - (self.energy_to_loads + self.energy_to_flex + self.energy_to_bess + self.energy_spilled)
    }
}

fn trapezoid(trace: &[StepRecord], f: impl Fn(&StepRecord) -> f64) -> f64 {
    let joules: f64 = trace
        .windows(2)
        .map(|w| 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t))
        .sum();
    joules / 3.6e6
}

pub fn summarize(trace: &[StepRecord], v_setpoint: f64) -> Result<SummaryMetrics, SummaryError> {
    let last = trace.last().ok_or(SummaryError::Empty)?;
    let first = &trace[0];
    let charge = |r: &StepRecord| r.nodes.iter().map(|n| n.p_batt.max(0.0)).sum::<f64>();
    let discharge = |r: &StepRecord| r.nodes.iter().map(|n| (-n.p_batt).max(0.0)).sum::<f64>();

    let energy_pv = trapezoid(trace, |r| r.p_pv);
    let energy_to_flex = trapezoid(trace, |r| r.p_flex);
    let energy_to_bess = trapezoid(trace, charge);
    // PV is attributed to the non-flexible loads before any battery supply.
    let pv_to_loads = trapezoid(trace, |r| r.p_nonflex.min(r.p_pv));
    let pv_utilization = if energy_pv > 0.0 {
        ((energy_to_flex + energy_to_bess + pv_to_loads) / energy_pv).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(SummaryMetrics {
        duration_s: last.t - first.t,
        energy_pv,
        energy_to_loads: trapezoid(trace, |r| r.p_nonflex),
        energy_to_flex,
        energy_to_bess,
        energy_from_bess: trapezoid(trace, discharge),
        energy_spilled: trapezoid(trace, |r| r.p_spill.max(0.0)),
        energy_unserved: trapezoid(trace, |r| (-r.p_spill).max(0.0)),
        max_voltage_deviation: trace
            .iter()
            .map(|r| (r.v_grid - v_setpoint).abs())
            .fold(0.0, f64::max),
        pv_utilization,
        soc_final: last.nodes.iter().map(|n| n.soc).collect(),
        fault_steps: trace.iter().filter(|r| r.fault).count(),
    })
}

impl fmt::Display for SummaryMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "duration_s            {:.0}", self.duration_s)?;
        for (name, v) in [
            ("energy_pv", self.energy_pv),
            ("energy_to_loads", self.energy_to_loads),
            ("energy_to_flex", self.energy_to_flex),
            ("energy_to_bess", self.energy_to_bess),
            ("energy_from_bess", self.energy_from_bess),
            ("energy_spilled", self.energy_spilled),
            ("energy_unserved", self.energy_unserved),
        ] {
            writeln!(f, "{name:<21} {v:.4} kWh")?;
        }
        writeln!(f, "max_voltage_deviation {:.4} V", self.max_voltage_deviation)?;
        writeln!(f, "pv_utilization        {:.4}", self.pv_utilization)?;
        writeln!(f, "fault_steps           {}", self.fault_steps)?;
        for (i, s) in self.soc_final.iter().enumerate() {
            writeln!(f, "soc_final_{i:<11} {s:.4}")?;
        }
        Ok(())
    }
}
