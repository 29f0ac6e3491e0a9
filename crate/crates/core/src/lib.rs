//! Deterministic DC microgrid simulator: PV, battery and supercapacitor
//! models, converter control, flexible-load dispatch and a TCP
//! power-interchange protocol between battery nodes.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod interchange;
pub mod models;
pub mod scenario;
pub mod sim;

pub use interchange::{Orchestrator, OrchestratorPolicy};
pub use scenario::{parse_scenario, summarize, ScenarioConfig, SummaryMetrics};
pub use sim::{run, run_with, RunOptions, RunOutput, SimConfig, SimError, SimMode, StepRecord};
