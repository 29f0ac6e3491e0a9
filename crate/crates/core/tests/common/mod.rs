#![allow(dead_code)]

use std::path::PathBuf;

use dcgrid_core::interchange::{run_scenario, DealState, Orchestrator};
use dcgrid_core::scenario::{parse_scenario, ScenarioConfig};
use dcgrid_core::sim::{RunOptions, RunOutput, StepRecord};

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load(name: &str, overrides: &[&str]) -> ScenarioConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let path = scenarios_dir().join(format!("{name}.ini"));
    parse_scenario(&path, &o).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn execute(cfg: &ScenarioConfig) -> (RunOutput, Option<Orchestrator>) {
    run_scenario(cfg, &mut [], &RunOptions::default()).expect("run succeeds")
}

/// SoC of each node before the first step.
pub fn initial_socs(cfg: &ScenarioConfig) -> Vec<f64> {
    (0..cfg.nodes.count).map(|i| cfg.nodes.initial_soc_for(i)).collect()
}

/// Previous SoC of node `n` for step `k`.
pub fn prev_soc(trace: &[StepRecord], initial: &[f64], k: usize, n: usize) -> f64 {
    if k == 0 {
        initial[n]
    } else {
        trace[k - 1].nodes[n].soc
    }
}

/// `(to_node, t_active, t_end, settled)` for every deal, in id order.
pub fn deal_windows(o: &Orchestrator, t_final: f64) -> Vec<(u32, f64, f64, bool)> {
    let mut out = Vec::new();
    for (id, deal) in o.ledger().replay() {
        let entries: Vec<_> = o
            .ledger()
            .entries()
            .iter()
            .filter(|e| e.deal.deal_id == id)
            .collect();
        let start = entries
            .iter()
            .find(|e| e.deal.state == DealState::Active)
            .map(|e| e.t)
            .expect("deal was activated");
        let end = entries
            .iter()
            .find(|e| e.deal.state.is_terminal())
            .map_or(t_final, |e| e.t);
        out.push((deal.to_node, start, end, deal.state == DealState::Settled));
    }
    out
}

/// Fails unless every step satisfies the single-CV rule and the SoC guards:
/// no charging at or above soc_max, no discharging at or below soc_min, SoC
/// within [0, 1]. `node.N.soc` injections in the scenario are honoured as
/// the SoC a step starts from.
pub fn check_safety(cfg: &ScenarioConfig, trace: &[StepRecord]) -> Result<(), String> {
    let init = initial_socs(cfg);
    let dt = cfg.sim.dt;
    let injected = |t: f64, n: usize| {
        let path = format!("node.{n}.soc");
        cfg.injections
            .iter()
            .filter(|c| c.path == path && c.apply_at <= t + 1e-6 * dt && c.apply_at > t - dt + 1e-6 * dt)
            .last()
            .map(|c| c.value)
    };
    let b = cfg.nodes.battery;
    for (k, r) in trace.iter().enumerate() {
        if !r.fault && r.cv_count() != 1 {
            return Err(format!("t={}: {} CV nodes without a fault flag", r.t, r.cv_count()));
        }
        for (n, node) in r.nodes.iter().enumerate() {
            if !(0.0..=1.0).contains(&node.soc) {
                return Err(format!("t={}: node {n} soc {} outside [0,1]", r.t, node.soc));
            }
            let before = injected(r.t, n).unwrap_or_else(|| prev_soc(trace, &init, k, n));
            if before >= b.soc_max && node.p_batt > 0.0 {
                return Err(format!("t={}: node {n} charged at soc {before}", r.t));
            }
            if before <= b.soc_min && node.p_batt < 0.0 {
                return Err(format!("t={}: node {n} discharged at soc {before}", r.t));
            }
        }
    }
    Ok(())
}
