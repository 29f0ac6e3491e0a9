//! Fixed-step simulation of the DC bus and its nodes.
//!
//! Two execution modes share one world model:
//!
//! * **energy** – quasi-static power balance, one-second steps, for daily
//!   scenarios. The CV node absorbs whatever residual the other elements
//!   leave on the bus.
//! * **transient** – the bus capacitor is integrated explicitly with
//!   millisecond steps; the CV node closes a PI voltage loop and the
//!   supercapacitor regulator supports the bus outside its deadband.

pub mod cv;
mod params;
mod record;
mod runner;
mod world;

pub use cv::{select_cv, CvCandidate, CvSelection, FlowNeed};
pub use params::{InjectionError, Param, ParamRegistry};
pub use record::{ModeLabel, NodeRecord, StepRecord};
pub use runner::{run, run_with, ControlInput, ControlLink, RunOptions, RunOutput};
pub use world::{BessNode, BusState, SimEvent, SimEventKind, World};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::models::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Energy,
    Transient,
}

impl SimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SimMode::Energy => "energy",
            SimMode::Transient => "transient",
        }
    }
}

impl FromStr for SimMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "energy" => Ok(SimMode::Energy),
            "transient" => Ok(SimMode::Transient),
            other => Err(format!("unknown mode `{other}` (expected energy or transient)")),
        }
    }
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub mode: SimMode,
    /// Step, s.
    pub dt: f64,
    /// Simulated span, s.
    pub duration: f64,
    pub realtime_pacing: bool,
    /// Carried into the trace metadata; the engine itself draws no random numbers.
    pub seed: u64,
    pub v_grid_setpoint: f64,
    /// Bus voltage change per watt the CV node cannot place, V/W.
    pub droop: f64,
    /// F; transient mode only.
    pub bus_capacitance: f64,
    /// Time allowed for the bus to return within ±ΔV_o after a disturbance, s.
    pub settle_window: f64,
}

impl SimConfig {
    pub fn energy() -> Self {
        Self {
            mode: SimMode::Energy,
            dt: 1.0,
            duration: 86_400.0,
            realtime_pacing: false,
            seed: 0,
            v_grid_setpoint: 100.0,
            droop: 0.05,
            bus_capacitance: 0.01558,
            settle_window: 5.0,
        }
    }

    pub fn transient() -> Self {
        Self {
            mode: SimMode::Transient,
            dt: 1e-3,
            duration: 20.0,
            ..Self::energy()
        }
    }

    pub fn step_count(&self) -> u64 {
        (self.duration / self.dt + 1e-9).floor() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::Config(what.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("sim.dt must be > 0");
        }
        if !(self.duration >= self.dt) {
            return bad("sim.duration must be >= sim.dt");
        }
        if !(self.v_grid_setpoint > 0.0) {
            return bad("sim.v_grid_setpoint must be > 0");
        }
        if !(self.droop > 0.0) {
            return bad("sim.droop must be > 0");
        }
        if !(self.bus_capacitance > 0.0) {
            return bad("sim.bus_capacitance must be > 0");
        }
        if !(self.settle_window > 0.0) {
            return bad("sim.settle_window must be > 0");
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::energy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeDirection {
    Charge,
    Discharge,
}

impl ChargeDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ChargeDirection::Charge => "charge",
            ChargeDirection::Discharge => "discharge",
        }
    }
}

/// Converter command of a BESS node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConverterMode {
    /// Regulate the bus at `v_setpoint`.
    Cv { v_setpoint: f64 },
    /// Hold a battery current magnitude in the given direction.
    Cc {
        i_setpoint: f64,
        direction: ChargeDirection,
    },
    Idle,
}

/// Sets a runtime parameter at the first step boundary at or after `apply_at`.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionCommand {
    pub path: String,
    pub value: f64,
    pub apply_at: f64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Injection(#[from] InjectionError),
    #[error("no node holds CV mode and no islanding fault is flagged")]
    NoCvNode,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("bus voltage collapsed to {0} V")]
    Collapse(f64),
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("step {step} (t = {t} s, wall {wall_s:.3} s): {source}")]
    Step {
        step: u64,
        t: f64,
        wall_s: f64,
        source: Box<SimError>,
    },
}
