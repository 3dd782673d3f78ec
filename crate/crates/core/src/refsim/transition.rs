//! A small component whose energy depends on the previous *and* the next
//! state, used to exercise pairwise transition models.

use super::ledger::{EnergyLedger, LedgerComponent, LedgerEntry};
use crate::error::{Error, Result};
use crate::statetrace::{Attrs, ComponentId, EventKind, StateEvent, Trace};

/// Toy state machine with `states` states, starting in state 0 after reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionComponent {
    pub states: u32,
}

impl TransitionComponent {
    pub fn new(states: u32) -> Self {
        Self { states }
    }

    /// Energy of one `from -> to` transition in pJ.
    pub fn energy(&self, from: u32, to: u32) -> f64 {
        2.0 + 0.75 * f64::from((from ^ to).count_ones()) + 0.5 * f64::from(to) + 0.1 * f64::from(from)
    }

    /// Drives the component through `sequence`, one state per cycle. Each
    /// cycle emits one event carrying the previous and new state.
    pub fn run(&self, sequence: &[u32]) -> Result<(Trace, EnergyLedger)> {
        let mut prev = 0;
        let mut events = Vec::with_capacity(sequence.len());
        let mut entries = Vec::with_capacity(sequence.len());
        for (cycle, &s) in sequence.iter().enumerate() {
            if s >= self.states {
                return Err(Error::invalid("sequence", format!("state {s} out of range")));
            }
            let cycle = cycle as u64;
            let attrs = Attrs::default().with("prev", prev).with("group", s);
            events.push(StateEvent::new(cycle, ComponentId::Cpu(0), EventKind::BundleIssue, attrs));
            entries.push(LedgerEntry {
                cycle,
                component: LedgerComponent::Core,
                pj: self.energy(prev, s),
            });
            prev = s;
        }
        Ok((Trace::new(events), EnergyLedger::from_entries(entries)))
    }
}
