use std::collections::BTreeMap;

use thiserror::Error;

use super::codec::{DealMsg, DealState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("deal {0} does not exist")]
    UnknownDeal(u64),
    #[error("deal {deal_id}: illegal transition {from:?} -> {to:?}")]
    InvalidTransition {
        deal_id: u64,
        from: DealState,
        to: DealState,
    },
    #[error("deal endpoints must differ (node {0})")]
    SelfDeal(u32),
    #[error("deal {field} must be > 0 (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("entry {index}: deal id {deal_id} is not above {previous}")]
    IdOrder {
        index: usize,
        deal_id: u64,
        previous: u64,
    },
    #[error("entry {index}: a new deal must start as proposed")]
    NotProposed { index: usize },
}

/// One recorded state change. `deal` is the full deal after the change.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub t: f64,
    pub deal: DealMsg,
    /// Charge moved over the deal's life, set on settlement.
    pub transferred_ah: Option<f64>,
}

/// Append-only log of deal transitions; the current deal table is a fold
/// over the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DealLedger {
    entries: Vec<LedgerEntry>,
    current: BTreeMap<u64, DealMsg>,
    next_id: u64,
}

impl DealLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a ledger from a transition log, validating every entry.
    pub fn from_entries(entries: Vec<LedgerEntry>) -> Result<Self, LedgerError> {
        let mut ledger = Self::new();
        for (index, e) in entries.into_iter().enumerate() {
            match ledger.current.get(&e.deal.deal_id) {
                None => {
                    if ledger.next_id > e.deal.deal_id {
                        return Err(LedgerError::IdOrder {
                            index,
                            deal_id: e.deal.deal_id,
                            previous: ledger.next_id - 1,
                        });
                    }
                    if e.deal.state != DealState::Proposed {
                        return Err(LedgerError::NotProposed { index });
                    }
                    ledger.next_id = e.deal.deal_id + 1;
                }
                Some(prev) => {
                    if !prev.state.can_become(e.deal.state) {
                        return Err(LedgerError::InvalidTransition {
                            deal_id: e.deal.deal_id,
                            from: prev.state,
                            to: e.deal.state,
                        });
                    }
                }
            }
            ledger.current.insert(e.deal.deal_id, e.deal);
            ledger.entries.push(e);
        }
        Ok(ledger)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn deal(&self, deal_id: u64) -> Option<&DealMsg> {
        self.current.get(&deal_id)
    }

    pub fn deals(&self) -> impl Iterator<Item = &DealMsg> {
        self.current.values()
    }

    /// Final deal table recomputed from the log alone.
    pub fn replay(&self) -> BTreeMap<u64, DealMsg> {
        self.entries
            .iter()
            .map(|e| (e.deal.deal_id, e.deal))
            .collect()
    }

    pub fn propose(
        &mut self,
        t: f64,
        from_node: u32,
        to_node: u32,
        current: f64,
        duration: f64,
    ) -> Result<DealMsg, LedgerError> {
        if from_node == to_node {
            return Err(LedgerError::SelfDeal(from_node));
        }
        for (field, value) in [("current", current), ("duration", duration)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LedgerError::NonPositive { field, value });
            }
        }
        let deal = DealMsg {
            deal_id: self.next_id,
            from_node,
            to_node,
            current,
            duration,
            state: DealState::Proposed,
        };
        self.next_id += 1;
        self.push(t, deal, None);
        Ok(deal)
    }

    pub fn transition(&mut self, t: f64, deal_id: u64, to: DealState) -> Result<DealMsg, LedgerError> {
        if to == DealState::Settled {
            // settlement must carry the transferred charge
            return self.settle(t, deal_id, 0.0);
        }
        let deal = self.checked(deal_id, to)?;
        self.push(t, deal, None);
        Ok(deal)
    }

    pub fn settle(&mut self, t: f64, deal_id: u64, measured_ah: f64) -> Result<DealMsg, LedgerError> {
        let deal = self.checked(deal_id, DealState::Settled)?;
        self.push(t, deal, Some(measured_ah));
        Ok(deal)
    }

    pub fn abort(&mut self, t: f64, deal_id: u64) -> Result<DealMsg, LedgerError> {
        self.transition(t, deal_id, DealState::Aborted)
    }

    fn checked(&self, deal_id: u64, to: DealState) -> Result<DealMsg, LedgerError> {
        let prev = self
            .current
            .get(&deal_id)
            .ok_or(LedgerError::UnknownDeal(deal_id))?;
        if !prev.state.can_become(to) {
            return Err(LedgerError::InvalidTransition {
                deal_id,
                from: prev.state,
                to,
            });
        }
        Ok(DealMsg { state: to, ..*prev })
    }

    fn push(&mut self, t: f64, deal: DealMsg, transferred_ah: Option<f64>) {
        self.current.insert(deal.deal_id, deal);
        self.entries.push(LedgerEntry {
            t,
            deal,
            transferred_ah,
        });
    }
}

/// Settles an active deal with the measured charge, returning the extended
/// ledger.
pub fn settle_deal(
    ledger: &DealLedger,
    deal_id: u64,
    measured_ah: f64,
    t: f64,
) -> Result<DealLedger, LedgerError> {
    let mut next = ledger.clone();
    next.settle(t, deal_id, measured_ah)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn active_deal(ledger: &mut DealLedger, amps: f64, secs: f64) -> u64 {
        let d = ledger.propose(0.0, 0, 1, amps, secs).unwrap();
        ledger.transition(0.0, d.deal_id, DealState::Accepted).unwrap();
        ledger.transition(0.0, d.deal_id, DealState::Active).unwrap();
        d.deal_id
    }

    #[test]
    fn settle_records_charge() {
        let mut l = DealLedger::new();
        let id = active_deal(&mut l, 10.0, 600.0);
        let ah = 10.0 * 600.0 / 3600.0;
        let l = settle_deal(&l, id, ah, 600.0).unwrap();
        let last = l.entries().last().unwrap();
        assert_eq!(last.deal.state, DealState::Settled);
        assert!((last.transferred_ah.unwrap() - 1.6667).abs() < 1e-4);
        // second settlement is illegal
        assert!(matches!(
            settle_deal(&l, id, ah, 700.0),
            Err(LedgerError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn abort_then_settle_fails() {
        let mut l = DealLedger::new();
        let id = active_deal(&mut l, 5.0, 60.0);
        l.abort(1.0, id).unwrap();
        assert!(l.settle(2.0, id, 0.1).is_err());
    }

    #[test]
    fn settling_non_active_fails() {
        let mut l = DealLedger::new();
        let d = l.propose(0.0, 2, 3, 5.0, 60.0).unwrap();
        assert!(l.settle(1.0, d.deal_id, 0.0).is_err());
        assert!(matches!(l.settle(1.0, 99, 0.0), Err(LedgerError::UnknownDeal(99))));
    }

    #[test]
    fn rejects_bad_proposals() {
        let mut l = DealLedger::new();
        assert!(l.propose(0.0, 1, 1, 5.0, 60.0).is_err());
        assert!(l.propose(0.0, 1, 2, 0.0, 60.0).is_err());
        assert!(l.propose(0.0, 1, 2, 5.0, -1.0).is_err());
    }

    #[test]
    fn from_entries_rejects_tampering() {
        let mut l = DealLedger::new();
        let id = active_deal(&mut l, 5.0, 60.0);
        l.settle(5.0, id, 0.08).unwrap();
        let mut entries = l.entries().to_vec();
        let mut bogus = entries.last().unwrap().clone();
        bogus.deal.state = DealState::Aborted;
        entries.push(bogus);
        assert!(DealLedger::from_entries(entries).is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Propose(u32, u32),
        Advance(usize, u8),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u32..4, 0u32..4).prop_map(|(a, b)| Op::Propose(a, b)),
            (0usize..20, 0u8..4).prop_map(|(i, s)| Op::Advance(i, s)),
        ]
    }

    proptest! {
        #[test]
        fn replay_reconstructs_final_states(ops in prop::collection::vec(op(), 0..80)) {
            let mut l = DealLedger::new();
            let mut t = 0.0;
            for o in ops {
                t += 1.0;
                match o {
                    Op::Propose(a, b) => { let _ = l.propose(t, a, b, 3.0, 60.0); }
                    Op::Advance(i, s) => {
                        let to = [DealState::Accepted, DealState::Active, DealState::Settled, DealState::Aborted][s as usize];
                        let _ = l.transition(t, i as u64, to);
                    }
                }
            }
            let replayed = l.replay();
            let table: BTreeMap<u64, DealMsg> = l.deals().map(|d| (d.deal_id, *d)).collect();
            prop_assert_eq!(&replayed, &table);
            let rebuilt = DealLedger::from_entries(l.entries().to_vec()).unwrap();
            prop_assert_eq!(rebuilt, l.clone());
            let ids: Vec<u64> = l.entries().iter().filter(|e| e.deal.state == DealState::Proposed).map(|e| e.deal.deal_id).collect();
            prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
