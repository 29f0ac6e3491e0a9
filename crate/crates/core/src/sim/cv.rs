//! Constant-voltage role assignment. Exactly one online node regulates the
//! bus; the rest run constant-current or idle.

/// Which way the bus needs the regulating node to move energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowNeed {
    /// Surplus on the bus: the CV node must absorb (charge).
    Charge,
    /// Deficit: the CV node must supply (discharge).
    Discharge,
    Balanced,
}

impl FlowNeed {
    /// Classifies a bus residual in watts (positive = surplus).
    pub fn from_residual(residual: f64, threshold: f64) -> Self {
        if residual > threshold {
            FlowNeed::Charge
        } else if residual < -threshold {
            FlowNeed::Discharge
        } else {
            FlowNeed::Balanced
        }
    }
}

/// What the assignment rule needs to know about a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvCandidate {
    pub id: usize,
    pub soc: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl CvCandidate {
    pub fn can_serve(&self, need: FlowNeed) -> bool {
        match need {
            FlowNeed::Charge => self.soc < self.soc_max,
            FlowNeed::Discharge => self.soc > self.soc_min,
            FlowNeed::Balanced => true,
        }
    }

    /// Usable SoC margin in the needed direction.
    pub fn headroom(&self, need: FlowNeed) -> f64 {
        match need {
            FlowNeed::Charge => self.soc_max - self.soc,
            FlowNeed::Discharge => self.soc - self.soc_min,
            FlowNeed::Balanced => (self.soc_max - self.soc).min(self.soc - self.soc_min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvSelection {
    /// The current CV node keeps the role.
    Keep(usize),
    /// No node held CV; this one takes it.
    Assign(usize),
    Handover { from: usize, to: usize },
    /// Nobody can serve the need. `holder` is the node left in CV, if any.
    Exhausted { holder: Option<usize> },
}

impl CvSelection {
    pub fn holder(self) -> Option<usize> {
        match self {
            CvSelection::Keep(id) | CvSelection::Assign(id) => Some(id),
            CvSelection::Handover { to, .. } => Some(to),
            CvSelection::Exhausted { holder } => holder,
        }
    }
}

/// Picks the CV node. The incumbent keeps the role while it can serve the
/// need; otherwise it passes to the online node with the most headroom in
/// the needed direction (lowest id on ties).
pub fn select_cv(candidates: &[CvCandidate], current: Option<usize>, need: FlowNeed) -> CvSelection {
    let incumbent = current.and_then(|id| candidates.iter().find(|c| c.id == id));
    if let Some(c) = incumbent {
        if c.can_serve(need) {
            return CvSelection::Keep(c.id);
        }
    }
    let best = candidates
        .iter()
        .filter(|c| Some(c.id) != current && c.can_serve(need))
        .fold(None::<&CvCandidate>, |best, c| match best {
            Some(b) if b.headroom(need) >= c.headroom(need) => Some(b),
            _ => Some(c),
        });
    match (incumbent, best) {
        (Some(c), Some(b)) => CvSelection::Handover { from: c.id, to: b.id },
        (None, Some(b)) => CvSelection::Assign(b.id),
        (Some(c), None) => CvSelection::Exhausted { holder: Some(c.id) },
        (None, None) => CvSelection::Exhausted { holder: None },
    }
}
