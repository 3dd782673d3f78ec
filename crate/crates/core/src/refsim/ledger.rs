use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerComponent {
    Core,
    Imem,
    Dmem,
    Bus,
    Router,
    Ni,
    Sync,
    Static,
    Unclassified,
}

impl LedgerComponent {
    pub const ALL: [LedgerComponent; 9] = [
        LedgerComponent::Core,
        LedgerComponent::Imem,
        LedgerComponent::Dmem,
        LedgerComponent::Bus,
        LedgerComponent::Router,
        LedgerComponent::Ni,
        LedgerComponent::Sync,
        LedgerComponent::Static,
        LedgerComponent::Unclassified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LedgerComponent::Core => "core",
            LedgerComponent::Imem => "imem",
            LedgerComponent::Dmem => "dmem",
            LedgerComponent::Bus => "bus",
            LedgerComponent::Router => "router",
            LedgerComponent::Ni => "ni",
            LedgerComponent::Sync => "sync",
            LedgerComponent::Static => "static",
            LedgerComponent::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for LedgerComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub cycle: u64,
    pub component: LedgerComponent,
    pub pj: f64,
}

/// Energy measured by the oracle for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    entries: Vec<LedgerEntry>,
    breakdown: BTreeMap<LedgerComponent, f64>,
    total: f64,
}

impl EnergyLedger {
    pub fn from_entries(mut entries: Vec<LedgerEntry>) -> Self {
        entries.sort_by_key(|e| (e.cycle, e.component));
        let mut breakdown: BTreeMap<LedgerComponent, f64> =
            LedgerComponent::ALL.into_iter().map(|c| (c, 0.0)).collect();
        let mut total = 0.0;
        for e in &entries {
            debug_assert!(e.pj >= 0.0);
            *breakdown.get_mut(&e.component).expect("all components present") += e.pj;
            total += e.pj;
        }
        Self {
            entries,
            breakdown,
            total,
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn breakdown(&self) -> &BTreeMap<LedgerComponent, f64> {
        &self.breakdown
    }

    pub fn component(&self, c: LedgerComponent) -> f64 {
        self.breakdown[&c]
    }

    /// Per-cycle entries, ordered by cycle.
    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// `component,energy_pj` rows in fixed component order plus `total`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,energy_pj\n");
        for (c, v) in &self.breakdown {
            out.push_str(&format!("{c},{v}\n"));
        }
        out.push_str(&format!("total,{}\n", self.total));
        out
    }

    /// Reads the totals back from [`EnergyLedger::to_csv`] output; per-cycle
    /// entries are not part of the file format.
    pub fn parse_csv_totals(text: &str) -> Option<(BTreeMap<String, f64>, f64)> {
        let mut rows = BTreeMap::new();
        let mut total = None;
        for line in text.lines().skip(1) {
            let (name, v) = line.split_once(',')?;
            let v: f64 = v.parse().ok()?;
            if name == "total" {
                total = Some(v);
            } else {
                rows.insert(name.to_string(), v);
            }
        }
        Some((rows, total?))
    }
}
