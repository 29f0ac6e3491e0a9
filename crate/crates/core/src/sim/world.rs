use crate::control::{
    flex_actuation, mppt_step, pi_step, sc_regulator_step, FlexLoadConfig, FlexMode, MpptState,
    PiConfig, PiState, ScRegulatorConfig,
};
use crate::interchange::{NodeStatusMsg, StatusMode};
use crate::models::{
    battery_current_for_power, battery_soc_step, battery_terminal_voltage, pv_array_output,
    BatteryParams, BatteryState, ConverterRating, PvArrayConfig, SupercapParams, SupercapState,
    supercap_step,
};
use crate::scenario::{EnvProfile, LoadProfile, ScenarioConfig};

use super::cv::{select_cv, CvCandidate, CvSelection, FlowNeed};
use super::params::{InjectionError, Param, ParamRegistry};
use super::record::{ModeLabel, NodeRecord, StepRecord};
use super::{ChargeDirection, ConverterMode, InjectionCommand, SimConfig, SimError, SimMode};

/// Residual below which the bus counts as balanced, W.
const BALANCE_EPS: f64 = 1e-6;
/// Supercapacitor voltage below which it stops discharging, V.
const SC_MIN_VOLTAGE: f64 = 1.0;

/// A battery with its bidirectional converter.
#[derive(Debug, Clone, PartialEq)]
pub struct BessNode {
    pub id: usize,
    pub battery: BatteryParams,
    pub state: BatteryState,
    pub converter: ConverterRating,
    pub mode: ConverterMode,
    /// Voltage-loop state, used while this node holds CV in transient mode.
    pub pi: PiState,
    pub online: bool,
}

impl BessNode {
    pub fn candidate(&self) -> CvCandidate {
        CvCandidate {
            id: self.id,
            soc: self.state.soc,
            soc_min: self.battery.soc_min,
            soc_max: self.battery.soc_max,
        }
    }

    pub fn label(&self) -> ModeLabel {
        if !self.online {
            return ModeLabel::Offline;
        }
        match self.mode {
            ConverterMode::Cv { .. } => ModeLabel::Cv,
            ConverterMode::Cc {
                direction: ChargeDirection::Charge,
                ..
            } => ModeLabel::CcCharge,
            ConverterMode::Cc { .. } => ModeLabel::CcDischarge,
            ConverterMode::Idle => ModeLabel::Idle,
        }
    }

    pub fn status(&self) -> NodeStatusMsg {
        NodeStatusMsg {
            node_id: self.id as u32,
            soc: (self.state.soc * 100.0).clamp(0.0, 100.0),
            voltage: self.state.terminal_voltage,
            current: self.state.current,
            mode: match self.mode {
                ConverterMode::Cv { .. } => StatusMode::Cv,
                ConverterMode::Cc { .. } => StatusMode::Cc,
                ConverterMode::Idle => StatusMode::Idle,
            },
        }
    }

    /// Battery power demanded by a CC command, after the converter rating
    /// and the SoC window. Charging-positive.
    fn cc_power(&self) -> f64 {
        let ConverterMode::Cc {
            i_setpoint,
            direction,
        } = self.mode
        else {
            return 0.0;
        };
        let current = match direction {
            ChargeDirection::Charge if self.state.soc < self.battery.soc_max => i_setpoint,
            ChargeDirection::Discharge if self.state.soc > self.battery.soc_min => -i_setpoint,
            _ => return 0.0,
        };
        let p = battery_terminal_voltage(&self.battery, current) * current;
        p.clamp(-self.converter.power_rating, self.converter.power_rating)
    }

    fn can_absorb(&self, p: f64) -> bool {
        if p > 0.0 {
            self.state.soc < self.battery.soc_max
        } else if p < 0.0 {
            self.state.soc > self.battery.soc_min
        } else {
            true
        }
    }

    fn advance(&mut self, power: f64, dt: f64) {
        let current = battery_current_for_power(&self.battery, power);
        self.state = battery_soc_step(&self.state, current, dt, &self.battery);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusState {
    pub v_grid: f64,
    pub bus_capacitance: f64,
    /// Net current into the bus capacitor, A (transient mode).
    pub net_current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEventKind {
    CvHandover { from: usize, to: usize },
    CvAssigned { node: usize },
    IslandingFault,
    FaultCleared,
    /// The CV node hit its converter rating; the bus droops.
    SaturationStart { excess_w: f64 },
    SaturationEnd,
    Injection { path: String, value: f64 },
    ModeChange { node: usize, mode: ConverterMode },
    ExtraCvDemoted { node: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Overrides {
    irradiance: Option<f64>,
    temperature_k: Option<f64>,
    nonflex_power: Option<f64>,
    nonflex_current: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct SupercapUnit {
    enabled: bool,
    params: SupercapParams,
    state: SupercapState,
    regulator: ScRegulatorConfig,
    pi: PiState,
}

/// Complete simulation state. Owned by a single stepping loop.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    cfg: SimConfig,
    step_index: u64,
    pv: PvArrayConfig,
    mppt: MpptState,
    mppt_period_steps: u64,
    env: EnvProfile,
    load: LoadProfile,
    overrides: Overrides,
    flex: FlexLoadConfig,
    nodes: Vec<BessNode>,
    cv_gains: (f64, f64),
    supercap: SupercapUnit,
    bus: BusState,
    fault: bool,
    saturated: bool,
    events: Vec<SimEvent>,
}

impl World {
    pub fn new(sc: &ScenarioConfig) -> Result<Self, SimError> {
        sc.sim.validate()?;
        let n = sc.nodes.count;
        if n == 0 {
            return Err(SimError::Config("nodes.count must be >= 1".into()));
        }
        if sc.nodes.cv_node >= n {
            return Err(SimError::Config(format!(
                "nodes.cv_node = {} but only {n} nodes exist",
                sc.nodes.cv_node
            )));
        }
        let nodes = (0..n)
            .map(|id| {
                let soc = sc.nodes.initial_soc_for(id);
                BessNode {
                    id,
                    battery: sc.nodes.battery,
                    state: BatteryState::at_rest(&sc.nodes.battery, soc),
                    converter: sc.nodes.converter,
                    mode: if id == sc.nodes.cv_node {
                        ConverterMode::Cv {
                            v_setpoint: sc.sim.v_grid_setpoint,
                        }
                    } else {
                        ConverterMode::Idle
                    },
                    pi: PiState::default(),
                    online: true,
                }
            })
            .collect();
        let mppt_period_steps = ((sc.pv.mppt_period / sc.sim.dt).round() as u64).max(1);
        let mut world = Self {
            cfg: sc.sim,
            step_index: 0,
            pv: sc.pv.array,
            mppt: MpptState::new(0.0, sc.pv.mppt_step, sc.pv.array.rated_voltage * 2.0),
            mppt_period_steps,
            env: sc.env.clone(),
            load: sc.load.clone(),
            overrides: Overrides::default(),
            flex: sc.flex,
            nodes,
            cv_gains: (sc.nodes.cv_kp, sc.nodes.cv_ki),
            supercap: SupercapUnit {
                enabled: sc.supercap.enabled,
                params: sc.supercap.params,
                state: SupercapState::new(&sc.supercap.params),
                regulator: sc.supercap.regulator,
                pi: PiState::default(),
            },
            bus: BusState {
                v_grid: sc.sim.v_grid_setpoint,
                bus_capacitance: sc.sim.bus_capacitance,
                net_current: 0.0,
            },
            fault: false,
            saturated: false,
            events: Vec::new(),
        };
        world.prime()?;
        Ok(world)
    }

    /// Starts the trackers and loops at their steady state for t = 0 so
    /// that a run does not open with a start-up transient.
    fn prime(&mut self) -> Result<(), SimError> {
        let (g, temp) = (self.irradiance(), self.temperature_k());
        let mpp = self.pv.maximum_power_point(g, temp)?;
        self.mppt.v_limit = self.pv.open_circuit_voltage(g, temp)?.max(self.mppt.step_size);
        self.mppt.v_ref = mpp.voltage;
        self.mppt.prev_power = mpp.power;
        self.mppt.prev_voltage = mpp.voltage;
        if self.cfg.mode == SimMode::Transient {
            let v = self.cfg.v_grid_setpoint;
            let p_nonflex = self.nonflex_power();
            let p_flex = flex_actuation(mpp.power, p_nonflex, &self.flex);
            let p_cc: f64 = self.online_nodes().map(BessNode::cc_power).sum();
            let residual = mpp.power - p_nonflex - p_flex - p_cc;
            if let Some(cv) = self.cv_index() {
                let limits = self.cv_loop(cv);
                self.nodes[cv].pi.integrator = (-residual / v).clamp(limits.u_min, limits.u_max);
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn nodes(&self) -> &[BessNode] {
        &self.nodes
    }

    pub fn bus(&self) -> &BusState {
        &self.bus
    }

    pub fn fault(&self) -> bool {
        self.fault
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn mppt(&self) -> &MpptState {
        &self.mppt
    }

    pub fn supercap_state(&self) -> &SupercapState {
        &self.supercap.state
    }

    pub fn registry(&self) -> ParamRegistry {
        ParamRegistry::new(self.nodes.len())
    }

    /// Statuses of all online nodes, ordered by id.
    pub fn statuses(&self) -> Vec<NodeStatusMsg> {
        self.online_nodes().map(BessNode::status).collect()
    }

    pub fn irradiance(&self) -> f64 {
        self.overrides
            .irradiance
            .unwrap_or_else(|| self.env.irradiance_at(self.time()))
    }

    pub fn temperature_k(&self) -> f64 {
        self.overrides
            .temperature_k
            .unwrap_or_else(|| self.env.temp_c_at(self.time()) + 273.15)
    }

    pub fn nonflex_power(&self) -> f64 {
        if let Some(i) = self.overrides.nonflex_current {
            return crate::control::nonflex_load_power(self.bus.v_grid, i);
        }
        self.overrides
            .nonflex_power
            .unwrap_or_else(|| self.load.power_at(self.time()))
    }

    fn online_nodes(&self) -> impl Iterator<Item = &BessNode> {
        self.nodes.iter().filter(|n| n.online)
    }

    fn cv_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.online && matches!(n.mode, ConverterMode::Cv { .. }))
    }

    fn cv_loop(&self, node: usize) -> PiConfig {
        let limit = self.nodes[node].converter.power_rating / self.cfg.v_grid_setpoint;
        PiConfig {
            kp: self.cv_gains.0,
            ki: self.cv_gains.1,
            u_min: -limit,
            u_max: limit,
        }
    }

    fn log(&mut self, kind: SimEventKind) {
        let t = self.time();
        log::debug!("t={t}: {kind:?}");
        self.events.push(SimEvent { t, kind });
    }

    /// Applies a runtime parameter change, effective from the next step.
    pub fn apply_injection(&mut self, cmd: &InjectionCommand) -> Result<(), InjectionError> {
        let param = self.registry().validate(&cmd.path, cmd.value)?;
        let v = cmd.value;
        match param {
            Param::Irradiance => self.overrides.irradiance = Some(v),
            Param::Temperature => self.overrides.temperature_k = Some(v),
            Param::NonflexPower => {
                self.overrides.nonflex_power = Some(v);
                self.overrides.nonflex_current = None;
            }
            Param::NonflexCurrent => {
                self.overrides.nonflex_current = Some(v);
                self.overrides.nonflex_power = None;
            }
            Param::FlexGamma => {
                if self.flex.mode == FlexMode::Full && v != 0.0 {
                    return Err(InjectionError::OutOfRange {
                        path: cmd.path.clone(),
                        value: v,
                        bound: "flex.gamma must be 0 in full mode".into(),
                    });
                }
                self.flex.gamma = v;
            }
            Param::FlexPmax => self.flex.p_max = v,
            Param::NodeSoc(i) => {
                let node = &mut self.nodes[i];
                node.state.soc = v;
            }
            Param::NodeOnline(i) => self.nodes[i].online = v == 1.0,
            Param::SupercapEnabled => self.supercap.enabled = v == 1.0,
            Param::VgridSetpoint => {
                self.cfg.v_grid_setpoint = v;
                self.supercap.regulator.v_ref = v;
                for node in &mut self.nodes {
                    if let ConverterMode::Cv { v_setpoint } = &mut node.mode {
                        *v_setpoint = v;
                    }
                }
            }
        }
        self.log(SimEventKind::Injection {
            path: cmd.path.clone(),
            value: v,
        });
        Ok(())
    }

    /// Sets a node's converter command. Takes effect on the next step.
    pub fn apply_mode(&mut self, node_id: usize, mode: ConverterMode) -> Result<(), SimError> {
        let node = self
            .nodes
            .get_mut(node_id)
            .ok_or(SimError::UnknownNode(node_id))?;
        if node.mode != mode {
            let was_cv = matches!(node.mode, ConverterMode::Cv { .. });
            let incoming = self.cv_index();
            let node = &mut self.nodes[node_id];
            node.mode = mode;
            // A node entering CV inherits the incumbent's loop state.
            if let (ConverterMode::Cv { .. }, false, Some(prev)) = (mode, was_cv, incoming) {
                let pi = self.nodes[prev].pi;
                self.nodes[node_id].pi = pi;
            }
            self.log(SimEventKind::ModeChange {
                node: node_id,
                mode,
            });
        }
        Ok(())
    }

    /// Enforces the single-CV rule for the given bus need and records the
    /// outcome. Sets the islanding fault when nobody can serve.
    pub fn designate_cv(&mut self, need: FlowNeed) -> CvSelection {
        let cvs: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.online && matches!(n.mode, ConverterMode::Cv { .. }))
            .map(|n| n.id)
            .collect();
        for &extra in cvs.iter().skip(1) {
            self.nodes[extra].mode = ConverterMode::Idle;
            self.log(SimEventKind::ExtraCvDemoted { node: extra });
        }
        let candidates: Vec<CvCandidate> = self.online_nodes().map(BessNode::candidate).collect();
        let selection = select_cv(&candidates, cvs.first().copied(), need);
        let setpoint = ConverterMode::Cv {
            v_setpoint: self.cfg.v_grid_setpoint,
        };
        match selection {
            CvSelection::Keep(_) => {}
            CvSelection::Assign(to) => {
                self.nodes[to].mode = setpoint;
                self.log(SimEventKind::CvAssigned { node: to });
            }
            CvSelection::Handover { from, to } => {
                self.nodes[from].mode = ConverterMode::Idle;
                self.nodes[to].mode = setpoint;
                self.nodes[to].pi = self.nodes[from].pi;
                self.log(SimEventKind::CvHandover { from, to });
            }
            CvSelection::Exhausted { .. } => {}
        }
        let fault = matches!(selection, CvSelection::Exhausted { .. });
        if fault != self.fault {
            self.fault = fault;
            self.log(if fault {
                SimEventKind::IslandingFault
            } else {
                SimEventKind::FaultCleared
            });
        }
        selection
    }

    pub fn step(&mut self) -> Result<StepRecord, SimError> {
        let dt = self.cfg.dt;
        match self.cfg.mode {
            SimMode::Energy => self.step_energy(dt),
            SimMode::Transient => self.step_transient(dt),
        }
    }

    /// Quasi-static step: PV at its maximum power point, CC nodes at their
    /// commands, the CV node takes the residual up to its rating and the
    /// remainder droops the bus.
    pub fn step_energy(&mut self, dt: f64) -> Result<StepRecord, SimError> {
        let t = self.time();
        let (g, temp) = (self.irradiance(), self.temperature_k());
        let mpp = self.pv.maximum_power_point(g, temp)?;
        self.mppt.v_ref = mpp.voltage;
        let p_pv = mpp.power.max(0.0);
        let p_nonflex = self.nonflex_power();
        let p_flex = flex_actuation(p_pv, p_nonflex, &self.flex);

        let mut p_batt: Vec<f64> = self
            .nodes
            .iter()
            .map(|n| if n.online { n.cc_power() } else { 0.0 })
            .collect();
        let mut residual = p_pv - p_nonflex - p_flex - p_batt.iter().sum::<f64>();
        let mut selection = self.designate_cv(FlowNeed::from_residual(residual, BALANCE_EPS));
        // A CC node promoted to CV drops its CC command, which changes the
        // residual and possibly the need; settle the designation again.
        for _ in 0..self.nodes.len() {
            let Some(cv) = selection.holder() else { break };
            if p_batt[cv] == 0.0 {
                break;
            }
            residual += p_batt[cv];
            p_batt[cv] = 0.0;
            selection = self.designate_cv(FlowNeed::from_residual(residual, BALANCE_EPS));
        }

        let mut spill = residual;
        if let Some(cv) = selection.holder() {
            let node = &self.nodes[cv];
            p_batt[cv] = 0.0;
            // Sub-microwatt residuals would not move the SoC representably.
            if node.can_absorb(residual) && residual.abs() > BALANCE_EPS {
                let rating = node.converter.power_rating;
                p_batt[cv] = residual.clamp(-rating, rating);
                spill = residual - p_batt[cv];
            }
        }
        self.track_saturation(spill);
        self.bus.v_grid = (self.cfg.v_grid_setpoint + self.cfg.droop * spill).max(0.0);
        self.bus.net_current = 0.0;

        for (node, &p) in self.nodes.iter_mut().zip(&p_batt) {
            node.advance(p, dt);
        }
        let record = self.record(t, p_pv, p_nonflex, p_flex, 0.0, spill, &p_batt);
        self.finish_step(record)
    }

    /// Explicit-Euler step of the bus capacitor with the CV voltage loop,
    /// P&O tracking and supercapacitor support.
    pub fn step_transient(&mut self, dt: f64) -> Result<StepRecord, SimError> {
        let t = self.time();
        let v = self.bus.v_grid;
        let (g, temp) = (self.irradiance(), self.temperature_k());

        if self.step_index % self.mppt_period_steps == 0 && self.step_index > 0 {
            let v_ref = self.mppt.v_ref;
            let p_meas = pv_array_output(g, temp, v_ref, &self.pv)?.power.max(0.0);
            self.mppt.v_limit = self.pv.open_circuit_voltage(g, temp)?.max(self.mppt.step_size);
            self.mppt = mppt_step(&self.mppt, v_ref, p_meas);
        }
        let v_pv = self.mppt.v_ref.min(self.mppt.v_limit);
        let p_pv = pv_array_output(g, temp, v_pv, &self.pv)?.power.max(0.0);
        let p_nonflex = self.nonflex_power();
        let p_flex = flex_actuation(p_pv, p_nonflex, &self.flex);

        let mut p_sc = 0.0;
        if self.supercap.enabled {
            let sc = &mut self.supercap;
            let (pi, mut i_bus) = sc_regulator_step(&sc.regulator, &sc.pi, v, dt);
            sc.pi = pi;
            if i_bus > 0.0 && sc.state.stored_voltage <= SC_MIN_VOLTAGE {
                i_bus = 0.0;
            }
            p_sc = i_bus * v;
            let i_cell = p_sc / sc.state.terminal_voltage.max(SC_MIN_VOLTAGE);
            sc.state = supercap_step(&sc.state, i_cell, dt, &sc.params);
        }

        let mut p_batt: Vec<f64> = self
            .nodes
            .iter()
            .map(|n| if n.online { n.cc_power() } else { 0.0 })
            .collect();
        let residual = p_pv - p_nonflex - p_flex + p_sc - p_batt.iter().sum::<f64>();
        let selection = self.designate_cv(FlowNeed::from_residual(residual, BALANCE_EPS));
        if let Some(cv) = selection.holder() {
            let loop_cfg = self.cv_loop(cv);
            let node = &mut self.nodes[cv];
            let v_set = match node.mode {
                ConverterMode::Cv { v_setpoint } => v_setpoint,
                _ => self.cfg.v_grid_setpoint,
            };
            let (pi, i_inject) = pi_step(&loop_cfg, &node.pi, v_set - v, dt);
            node.pi = pi;
            let p = -i_inject * v;
            p_batt[cv] = if node.can_absorb(p) { p } else { 0.0 };
        }

        let net_power = p_pv - p_nonflex - p_flex + p_sc - p_batt.iter().sum::<f64>();
        self.bus.net_current = net_power / v;
        self.bus.v_grid = v + dt * self.bus.net_current / self.bus.bus_capacitance;
        if !self.bus.v_grid.is_finite() {
            return Err(SimError::NonFinite("v_grid"));
        }
        if self.bus.v_grid <= 0.0 {
            return Err(SimError::Collapse(self.bus.v_grid));
        }

        for (node, &p) in self.nodes.iter_mut().zip(&p_batt) {
            node.advance(p, dt);
        }
        let record = self.record(t, p_pv, p_nonflex, p_flex, p_sc, 0.0, &p_batt);
        self.finish_step(record)
    }

    fn track_saturation(&mut self, spill: f64) {
        let saturated = spill.abs() > BALANCE_EPS;
        if saturated != self.saturated {
            self.saturated = saturated;
            self.log(if saturated {
                SimEventKind::SaturationStart { excess_w: spill }
            } else {
                SimEventKind::SaturationEnd
            });
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        t: f64,
        p_pv: f64,
        p_nonflex: f64,
        p_flex: f64,
        p_sc: f64,
        p_spill: f64,
        p_batt: &[f64],
    ) -> StepRecord {
        StepRecord {
            t,
            v_grid: self.bus.v_grid,
            p_pv,
            p_nonflex,
            p_flex,
            p_sc,
            p_spill,
            fault: self.fault,
            nodes: self
                .nodes
                .iter()
                .zip(p_batt)
                .map(|(n, &p)| NodeRecord {
                    p_batt: p,
                    soc: n.state.soc,
                    mode: n.label(),
                })
                .collect(),
        }
    }

    fn finish_step(&mut self, record: StepRecord) -> Result<StepRecord, SimError> {
        if !record.is_finite() {
            return Err(SimError::NonFinite("step record"));
        }
        self.step_index += 1;
        Ok(record)
    }
}
