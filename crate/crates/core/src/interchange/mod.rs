//! Decentralised power interchange between BESS nodes: wire codec, deal
//! ledger, orchestrator and TCP node agents.

pub mod agent;
pub mod client;
mod codec;
mod ledger;
mod orchestrator;

pub use agent::{AgentHub, BindError, HubConfig, DEFAULT_BASE_PORT, DEFAULT_COMMAND_PORT};
pub use codec::{
    check_framing, decode_frame, encode_frame, AckMsg, DealMsg, DealState, DecodeError,
    DecodeErrorKind, ErrMsg, Frame, ModeCmdMsg, NodeStatusMsg, SetMsg, StatusMode, MAX_FRAME_LEN,
};
pub use ledger::{settle_deal, DealLedger, LedgerEntry, LedgerError};
pub use orchestrator::{
    orchestrate_step, Orchestrator, OrchestratorEvent, OrchestratorEventKind, OrchestratorPolicy,
};

use crate::scenario::ScenarioConfig;
use crate::sim::{run_with, ControlLink, RunOptions, RunOutput, SimError};

/// Runs a scenario, attaching the in-process orchestrator when the scenario
/// enables interchange. `extra` links (e.g. an [`AgentHub`]) run alongside.
pub fn run_scenario(
    scenario: &ScenarioConfig,
    extra: &mut [&mut dyn ControlLink],
    opts: &RunOptions,
) -> Result<(RunOutput, Option<Orchestrator>), SimError> {
    if !scenario.interchange.enabled {
        return Ok((run_with(scenario, extra, opts)?, None));
    }
    let mut orchestrator = Orchestrator::new(scenario.interchange.policy, scenario.nodes.count);
    let output = {
        let mut links: Vec<&mut dyn ControlLink> = Vec::with_capacity(extra.len() + 1);
        for l in extra.iter_mut() {
            links.push(&mut **l);
        }
        links.push(&mut orchestrator);
        run_with(scenario, &mut links, opts)?
    };
    Ok((output, Some(orchestrator)))
}
