//! Deal orchestration: CV designation, charging rotation and SoC guards.
//!
//! The orchestrator sees only node statuses. System surplus is read off the
//! fleet's battery power (whatever the nodes are absorbing between them),
//! which stays observable after a charger takes over from the CV node.

use crate::sim::{
    select_cv, ChargeDirection, ControlInput, ControlLink, ConverterMode, CvCandidate,
    CvSelection, FlowNeed,
};

use super::codec::{DealState, ModeCmdMsg, NodeStatusMsg, StatusMode};
use super::ledger::{DealLedger, LedgerError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrchestratorPolicy {
    /// Percent.
    pub soc_min: f64,
    /// Percent.
    pub soc_max: f64,
    pub v_max: f64,
    pub i_max: f64,
    pub v_setpoint: f64,
    /// Fleet absorption below this counts as no surplus, W.
    pub surplus_threshold: f64,
    /// Planning horizon written on new deals, s.
    pub deal_duration: f64,
    /// s of simulated time between status exchanges.
    pub status_interval: f64,
}

impl Default for OrchestratorPolicy {
    fn default() -> Self {
        Self {
            soc_min: 10.0,
            soc_max: 90.0,
            v_max: 105.0,
            i_max: 70.0,
            v_setpoint: 100.0,
            surplus_threshold: 10.0,
            deal_duration: 3600.0,
            status_interval: 1.0,
        }
    }
}

impl OrchestratorPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 100.0) {
            return Err(format!(
                "interchange soc bounds must satisfy 0 <= soc_min < soc_max <= 100 (got {}, {})",
                self.soc_min, self.soc_max
            ));
        }
        for (name, v) in [
            ("v_max", self.v_max),
            ("i_max", self.i_max),
            ("v_setpoint", self.v_setpoint),
            ("deal_duration", self.deal_duration),
            ("status_interval", self.status_interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("interchange.{name} must be > 0 (got {v})"));
            }
        }
        if !(self.surplus_threshold >= 0.0) {
            return Err("interchange.surplus_threshold must be >= 0".into());
        }
        Ok(())
    }

    fn candidate(&self, s: &NodeStatusMsg) -> CvCandidate {
        CvCandidate {
            id: s.node_id as usize,
            soc: s.soc / 100.0,
            soc_min: self.soc_min / 100.0,
            soc_max: self.soc_max / 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrchestratorEventKind {
    /// Surplus present but no node may take charge.
    Starvation,
    /// No node can regulate the bus in the needed direction.
    CvExhausted,
    DealOpened { deal_id: u64, to_node: u32 },
    DealSettled { deal_id: u64, to_node: u32, ah: f64 },
    DealAborted { deal_id: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrchestratorEvent {
    pub t: f64,
    pub kind: OrchestratorEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ActiveDeal {
    deal_id: u64,
    charger: u32,
    delivered_ah: f64,
}

/// Orchestrator state between calls. Everything else is derived from the
/// statuses handed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Orchestrator {
    pub policy: OrchestratorPolicy,
    cursor: usize,
    node_count: usize,
    cv: Option<u32>,
    active: Option<ActiveDeal>,
    last_t: Option<f64>,
    ledger: DealLedger,
    events: Vec<OrchestratorEvent>,
}

impl Orchestrator {
    pub fn new(policy: OrchestratorPolicy, node_count: usize) -> Self {
        Self {
            policy,
            cursor: 0,
            node_count: node_count.max(1),
            cv: None,
            active: None,
            last_t: None,
            ledger: DealLedger::new(),
            events: Vec::new(),
        }
    }

    pub fn ledger(&self) -> &DealLedger {
        &self.ledger
    }

    pub fn events(&self) -> &[OrchestratorEvent] {
        &self.events
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Node currently designated for charging, if a deal is open.
    pub fn charger(&self) -> Option<u32> {
        self.active.map(|d| d.charger)
    }

    fn log(&mut self, t: f64, kind: OrchestratorEventKind) {
        log::debug!("orchestrator t={t}: {kind:?}");
        self.events.push(OrchestratorEvent { t, kind });
    }

    /// One orchestration round: returns a command for every node in
    /// `statuses`.
    pub fn step(&mut self, t: f64, statuses: &[NodeStatusMsg]) -> Result<Vec<ModeCmdMsg>, LedgerError> {
        let p = self.policy;
        let interval = self.last_t.map_or(0.0, |last| (t - last).max(0.0));
        self.last_t = Some(t);

        let surplus: f64 = statuses.iter().map(|s| s.voltage * s.current).sum();
        let need = FlowNeed::from_residual(surplus, p.surplus_threshold);
        let status_of = |id: u32| statuses.iter().find(|s| s.node_id == id);

        // CV designation. The node reporting CV is the incumbent; otherwise
        // whichever node this orchestrator designated last.
        let reported = statuses
            .iter()
            .find(|s| s.mode == StatusMode::Cv)
            .map(|s| s.node_id)
            .or(self.cv.filter(|&id| status_of(id).is_some()));
        let candidates: Vec<CvCandidate> = statuses.iter().map(|s| p.candidate(s)).collect();
        let selection = select_cv(&candidates, reported.map(|id| id as usize), need);
        if let CvSelection::Exhausted { .. } = selection {
            self.log(t, OrchestratorEventKind::CvExhausted);
        }
        self.cv = selection.holder().map(|id| id as u32);

        // Book-keep the open deal.
        if let Some(mut deal) = self.active {
            if let Some(s) = status_of(deal.charger) {
                deal.delivered_ah += s.current.max(0.0) * interval / 3600.0;
            }
            self.active = Some(deal);
            let charger = status_of(deal.charger);
            if Some(deal.charger) == self.cv || charger.is_none() {
                self.ledger.abort(t, deal.deal_id)?;
                self.log(t, OrchestratorEventKind::DealAborted { deal_id: deal.deal_id });
                self.active = None;
            } else if charger.is_some_and(|s| s.soc >= p.soc_max) {
                self.ledger.settle(t, deal.deal_id, deal.delivered_ah)?;
                self.log(
                    t,
                    OrchestratorEventKind::DealSettled {
                        deal_id: deal.deal_id,
                        to_node: deal.charger,
                        ah: deal.delivered_ah,
                    },
                );
                self.active = None;
                self.cursor = (deal.charger as usize + 1) % self.node_count;
            }
        }

        let voltage = |id: u32| status_of(id).map_or(p.v_setpoint, |s| s.voltage.max(1.0));
        if need == FlowNeed::Charge && self.active.is_none() {
            match self.next_charger(statuses) {
                Some(to) => {
                    let from = self.cv.unwrap_or(to);
                    if from != to {
                        let amps = (surplus / voltage(to)).clamp(f64::MIN_POSITIVE, p.i_max);
                        let deal = self.ledger.propose(t, from, to, amps, p.deal_duration)?;
                        self.ledger.transition(t, deal.deal_id, DealState::Accepted)?;
                        self.ledger.transition(t, deal.deal_id, DealState::Active)?;
                        self.cursor = to as usize;
                        self.active = Some(ActiveDeal {
                            deal_id: deal.deal_id,
                            charger: to,
                            delivered_ah: 0.0,
                        });
                        self.log(
                            t,
                            OrchestratorEventKind::DealOpened {
                                deal_id: deal.deal_id,
                                to_node: to,
                            },
                        );
                    }
                }
                None => self.log(t, OrchestratorEventKind::Starvation),
            }
        }

        let charge_amps = |id: u32| (surplus / voltage(id)).clamp(0.0, p.i_max);
        let commands = statuses
            .iter()
            .map(|s| {
                let id = s.node_id;
                let mode = if Some(id) == self.cv {
                    ConverterMode::Cv {
                        v_setpoint: p.v_setpoint.min(p.v_max),
                    }
                } else if need == FlowNeed::Charge
                    && self.charger() == Some(id)
                    && s.soc < p.soc_max
                {
                    ConverterMode::Cc {
                        i_setpoint: charge_amps(id),
                        direction: ChargeDirection::Charge,
                    }
                } else {
                    ConverterMode::Idle
                };
                ModeCmdMsg { node_id: id, mode }
            })
            .collect();
        Ok(commands)
    }

    /// First node at or after the cursor that may take charge.
    fn next_charger(&self, statuses: &[NodeStatusMsg]) -> Option<u32> {
        (0..self.node_count)
            .map(|k| ((self.cursor + k) % self.node_count) as u32)
            .find(|&id| {
                Some(id) != self.cv
                    && statuses
                        .iter()
                        .any(|s| s.node_id == id && s.soc < self.policy.soc_max)
            })
    }
}

/// Functional form of [`Orchestrator::step`].
pub fn orchestrate_step(
    orchestrator: &Orchestrator,
    t: f64,
    statuses: &[NodeStatusMsg],
) -> Result<(Vec<ModeCmdMsg>, Orchestrator), LedgerError> {
    let mut next = orchestrator.clone();
    let commands = next.step(t, statuses)?;
    Ok((commands, next))
}

impl ControlLink for Orchestrator {
    fn status_interval(&self) -> f64 {
        self.policy.status_interval
    }

    fn exchange(&mut self, t: f64, statuses: &[NodeStatusMsg]) -> Vec<ControlInput> {
        match self.step(t, statuses) {
            Ok(cmds) => cmds
                .into_iter()
                .map(|c| ControlInput::Mode {
                    node_id: c.node_id as usize,
                    mode: c.mode,
                })
                .collect(),
            Err(e) => {
                // The ledger refused a transition: hold every node's last mode.
                log::error!("orchestrator t={t}: {e}");
                Vec::new()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(id: u32, soc: f64, current: f64, mode: StatusMode) -> NodeStatusMsg {
        NodeStatusMsg {
            node_id: id,
            soc,
            voltage: 100.0,
            current,
            mode,
        }
    }

    fn mode_of(cmds: &[ModeCmdMsg], id: u32) -> ConverterMode {
        cmds.iter().find(|c| c.node_id == id).unwrap().mode
    }

    #[test]
    fn full_charger_settles_and_rotation_advances() {
        let mut o = Orchestrator::new(OrchestratorPolicy::default(), 4);
        let mut st = vec![
            stat(0, 50.0, 15.0, StatusMode::Cv),
            stat(1, 50.0, 0.0, StatusMode::Idle),
            stat(2, 50.0, 0.0, StatusMode::Idle),
            stat(3, 50.0, 0.0, StatusMode::Idle),
        ];
        let cmds = o.step(0.0, &st).unwrap();
        assert_eq!(o.charger(), Some(1));
        assert!(matches!(mode_of(&cmds, 1), ConverterMode::Cc { i_setpoint, .. } if (i_setpoint - 15.0).abs() < 1e-12));
        assert!(matches!(mode_of(&cmds, 0), ConverterMode::Cv { .. }));

        st[0].current = 0.0;
        st[1] = stat(1, 90.0, 15.0, StatusMode::Cc);
        let cmds = o.step(3600.0, &st).unwrap();
        assert_eq!(o.charger(), Some(2));
        assert!(matches!(mode_of(&cmds, 2), ConverterMode::Cc { .. }));
        assert_eq!(mode_of(&cmds, 1), ConverterMode::Idle);
        let settled = o.ledger().deal(0).unwrap();
        assert_eq!(settled.state, DealState::Settled);
        let ah = o.ledger().entries().iter().rev().find(|e| e.deal.deal_id == 0).unwrap();
        assert!((ah.transferred_ah.unwrap() - 15.0).abs() < 1e-9);
    }

    #[test]
    fn everyone_full_means_no_deal_and_starvation() {
        let mut o = Orchestrator::new(OrchestratorPolicy::default(), 4);
        let st: Vec<_> = (0..4)
            .map(|i| stat(i, 90.0, if i == 0 { 5.0 } else { 0.0 }, if i == 0 { StatusMode::Cv } else { StatusMode::Idle }))
            .collect();
        o.step(0.0, &st).unwrap();
        assert_eq!(o.ledger().entries().len(), 0);
        assert!(o
            .events()
            .iter()
            .any(|e| e.kind == OrchestratorEventKind::Starvation));
    }

    #[test]
    fn unchanged_statuses_give_unchanged_commands() {
        let mut o = Orchestrator::new(OrchestratorPolicy::default(), 3);
        let st = vec![
            stat(0, 40.0, 8.0, StatusMode::Cv),
            stat(1, 30.0, 0.0, StatusMode::Idle),
            stat(2, 60.0, 0.0, StatusMode::Idle),
        ];
        let a = o.step(0.0, &st).unwrap();
        let b = o.step(1.0, &st).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deficit_idles_the_charger_but_keeps_the_deal() {
        let mut o = Orchestrator::new(OrchestratorPolicy::default(), 2);
        let mut st = vec![
            stat(0, 50.0, 10.0, StatusMode::Cv),
            stat(1, 50.0, 0.0, StatusMode::Idle),
        ];
        o.step(0.0, &st).unwrap();
        st[0].current = -20.0;
        let cmds = o.step(1.0, &st).unwrap();
        assert_eq!(mode_of(&cmds, 1), ConverterMode::Idle);
        assert_eq!(o.charger(), Some(1));
    }
}
