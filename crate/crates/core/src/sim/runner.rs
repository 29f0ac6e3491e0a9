//! The stepping loop: scheduled injections, controller exchange, pacing.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::interchange::NodeStatusMsg;
use crate::scenario::ScenarioConfig;

use super::{ConverterMode, InjectionCommand, SimError, SimEvent, StepRecord, World};

/// Something the loop applies at a step boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlInput {
    Inject(InjectionCommand),
    Mode { node_id: usize, mode: ConverterMode },
}

/// A controller attached to the loop: an in-process orchestrator, the TCP
/// node agents, or both.
pub trait ControlLink {
    /// Status exchange period, s of simulated time.
    fn status_interval(&self) -> f64;

    /// Inputs that arrived since the previous step boundary.
    fn poll(&mut self, _t: f64) -> Vec<ControlInput> {
        Vec::new()
    }

    /// Called every `status_interval` with the online nodes' statuses.
    fn exchange(&mut self, t: f64, statuses: &[NodeStatusMsg]) -> Vec<ControlInput>;

    fn finish(&mut self, _t: f64) {}
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's pacing flag when set.
    pub realtime: Option<bool>,
    /// Checked before every step; setting it ends the run early.
    pub stop: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<StepRecord>,
    pub events: Vec<SimEvent>,
    /// True when the stop flag ended the run before `duration`.
    pub interrupted: bool,
}

/// Runs a scenario without external control.
pub fn run(scenario: &ScenarioConfig) -> Result<RunOutput, SimError> {
    run_with(scenario, &mut [], &RunOptions::default())
}

pub fn run_with(
    scenario: &ScenarioConfig,
    links: &mut [&mut dyn ControlLink],
    opts: &RunOptions,
) -> Result<RunOutput, SimError> {
    let mut world = World::new(scenario)?;
    let cfg = *world.config();
    let steps = cfg.step_count();
    let realtime = opts.realtime.unwrap_or(cfg.realtime_pacing);

    let mut schedule: Vec<InjectionCommand> = scenario.injections.clone();
    schedule.sort_by(|a, b| a.apply_at.total_cmp(&b.apply_at));
    let mut next_injection = 0;

    let exchange_every: Vec<u64> = links
        .iter()
        .map(|l| ((l.status_interval() / cfg.dt).round() as u64).max(1))
        .collect();

    let mut trace = Vec::with_capacity(steps as usize);
    let mut events = Vec::new();
    let start = Instant::now();
    let mut interrupted = false;

    for step in 0..steps {
        if opts
            .stop
            .as_ref()
            .is_some_and(|s| s.load(Ordering::SeqCst))
        {
            interrupted = true;
            break;
        }
        let t = world.time();
        let wrap = |e: SimError| SimError::Step {
            step,
            t,
            wall_s: start.elapsed().as_secs_f64(),
            source: Box::new(e),
        };

        while let Some(cmd) = schedule.get(next_injection) {
            if cmd.apply_at > t + cfg.dt * 1e-6 {
                break;
            }
            world.apply_injection(cmd).map_err(|e| wrap(e.into()))?;
            next_injection += 1;
        }

        for (link, &every) in links.iter_mut().zip(&exchange_every) {
            let mut inputs = link.poll(t);
            if step % every == 0 {
                inputs.extend(link.exchange(t, &world.statuses()));
            }
            // A bad remote command is refused, not fatal to the run.
            for input in inputs {
                if let Err(e) = apply_input(&mut world, input) {
                    log::warn!("t={t}: control input rejected: {e}");
                }
            }
        }

        let record = world.step().map_err(wrap)?;
        if !record.fault && record.cv_count() != 1 {
            return Err(wrap(SimError::NoCvNode));
        }
        trace.push(record);
        events.extend(world.take_events());

        if realtime {
            let target = Duration::from_secs_f64(world.time());
            if let Some(wait) = target.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
    }
    for link in links.iter_mut() {
        link.finish(world.time());
    }
    Ok(RunOutput {
        trace,
        events,
        interrupted,
    })
}

fn apply_input(world: &mut World, input: ControlInput) -> Result<(), SimError> {
    match input {
        ControlInput::Inject(cmd) => world.apply_injection(&cmd).map_err(SimError::from),
        ControlInput::Mode { node_id, mode } => world.apply_mode(node_id, mode),
    }
}
