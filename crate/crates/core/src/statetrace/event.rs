use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A hardware instance that emits state events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentId {
    Cpu(u32),
    /// Local data memory of a CPU.
    Dmem(u32),
    /// Cluster crossbar, indexed by cluster.
    Bus(u32),
    Router(u32),
    Ni(u32),
}

impl ComponentId {
    pub fn class(self) -> &'static str {
        match self {
            ComponentId::Cpu(_) => "cpu",
            ComponentId::Dmem(_) => "dmem",
            ComponentId::Bus(_) => "bus",
            ComponentId::Router(_) => "router",
            ComponentId::Ni(_) => "ni",
        }
    }

    pub fn index(self) -> u32 {
        match self {
            ComponentId::Cpu(i)
            | ComponentId::Dmem(i)
            | ComponentId::Bus(i)
            | ComponentId::Router(i)
            | ComponentId::Ni(i) => i,
        }
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.class(), self.index())
    }
}

impl FromStr for ComponentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        let (class, idx) = s.split_at(split);
        let idx: u32 = idx
            .parse()
            .map_err(|_| Error::invalid("component", format!("`{s}` has no index")))?;
        Ok(match class {
            "cpu" => ComponentId::Cpu(idx),
            "dmem" => ComponentId::Dmem(idx),
            "bus" => ComponentId::Bus(idx),
            "router" => ComponentId::Router(idx),
            "ni" => ComponentId::Ni(idx),
            _ => return Err(Error::invalid("component", format!("unknown class in `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    BundleIssue,
    FlitHop,
    NiTransfer,
    BusTransfer,
    DmemAccess,
    Sync,
    Idle,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::BundleIssue,
        EventKind::FlitHop,
        EventKind::NiTransfer,
        EventKind::BusTransfer,
        EventKind::DmemAccess,
        EventKind::Sync,
        EventKind::Idle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::BundleIssue => "bundle",
            EventKind::FlitHop => "flit-hop",
            EventKind::NiTransfer => "ni-transfer",
            EventKind::BusTransfer => "bus-transfer",
            EventKind::DmemAccess => "dmem-access",
            EventKind::Sync => "sync",
            EventKind::Idle => "idle",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Attribute names, in serialization order.
pub const ATTR_NAMES: [&str; 12] = [
    "group", "pattern", "addr", "prev", "src_x", "src_y", "dst_x", "dst_y", "size", "hop", "flit",
    "packet",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attrs([Option<u32>; ATTR_NAMES.len()]);

impl Attrs {
    fn slot(name: &str) -> Option<usize> {
        ATTR_NAMES.iter().position(|n| *n == name)
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        Self::slot(name).and_then(|i| self.0[i])
    }

    pub fn with(mut self, name: &str, value: u32) -> Self {
        let i = Self::slot(name).unwrap_or_else(|| panic!("unknown attribute {name}"));
        self.0[i] = Some(value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, u32)> + '_ {
        ATTR_NAMES
            .iter()
            .zip(self.0.iter())
            .filter_map(|(n, v)| v.map(|v| (*n, v)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateEvent {
    pub cycle: u64,
    pub component: ComponentId,
    pub kind: EventKind,
    pub attrs: Attrs,
}

impl StateEvent {
    pub fn new(cycle: u64, component: ComponentId, kind: EventKind, attrs: Attrs) -> Self {
        Self {
            cycle,
            component,
            kind,
            attrs,
        }
    }

    /// `cycle<TAB>component<TAB>kind<TAB>payload`, payload `k=v,...` or `-`.
    pub fn to_line(&self) -> String {
        let payload = if self.attrs.is_empty() {
            "-".to_string()
        } else {
            self.attrs
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("{}\t{}\t{}\t{}", self.cycle, self.component, self.kind, payload)
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = |why: &str| Error::invalid("trace line", format!("{why}: `{line}`"));
        let mut parts = line.split('\t');
        let cycle = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad cycle"))?;
        let component = parts.next().ok_or_else(|| bad("missing component"))?.parse()?;
        let kind = parts
            .next()
            .and_then(EventKind::from_name)
            .ok_or_else(|| bad("bad event kind"))?;
        let payload = parts.next().ok_or_else(|| bad("missing payload"))?;
        if parts.next().is_some() {
            return Err(bad("too many fields"));
        }
        let mut attrs = Attrs::default();
        if payload != "-" {
            for kv in payload.split(',') {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad("bad attribute"))?;
                let v: u32 = v.parse().map_err(|_| bad("bad attribute value"))?;
                if Attrs::slot(k).is_none() {
                    return Err(bad("unknown attribute"));
                }
                attrs = attrs.with(k, v);
            }
        }
        Ok(Self::new(cycle, component, kind, attrs))
    }
}

/// Ordered sequence of state events of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<StateEvent>,
}

impl Trace {
    pub fn new(mut events: Vec<StateEvent>) -> Self {
        events.sort();
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Last cycle + 1; zero for an empty trace.
    pub fn duration(&self) -> u64 {
        self.events.iter().map(|e| e.cycle + 1).max().unwrap_or(0)
    }

    /// `self` followed by `other` shifted past the end of `self`.
    pub fn concat(&self, other: &Trace) -> Trace {
        let shift = self.duration();
        let mut events = self.events.clone();
        events.extend(other.events.iter().map(|e| StateEvent {
            cycle: e.cycle + shift,
            ..*e
        }));
        Trace::new(events)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 32);
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(StateEvent::parse_line)
            .collect::<Result<Vec<_>>>()?;
        Ok(Trace::new(events))
    }
}
