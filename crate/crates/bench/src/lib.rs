//! Fixtures shared by the benchmarks.

use dcgrid_core::scenario::{EnvProfile, LoadProfile, ScenarioConfig};
use dcgrid_core::sim::SimConfig;

/// Four-node energy-mode scenario under constant sun and load.
pub fn steady_energy(duration: f64) -> ScenarioConfig {
    let mut sc = ScenarioConfig::new(LoadProfile::constant(2000.0), EnvProfile::constant(800.0, 25.0));
    sc.name = "bench_energy".into();
    sc.sim.duration = duration;
    sc
}

/// The same system at transient resolution with the supercapacitor on.
pub fn steady_transient(duration: f64) -> ScenarioConfig {
    let mut sc = steady_energy(duration);
    sc.name = "bench_transient".into();
    sc.sim = SimConfig {
        duration,
        ..SimConfig::transient()
    };
    sc.supercap.enabled = true;
    sc
}
