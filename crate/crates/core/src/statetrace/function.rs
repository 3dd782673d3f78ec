use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::event::{StateEvent, Trace};
use crate::error::{Error, Result};

/// Granularity of a state description, coarsest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AbstractionLevel {
    BinaryUsage,
    ActiveIdle,
    FineGrained,
}

impl fmt::Display for AbstractionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbstractionLevel::BinaryUsage => "BINARY_USAGE",
            AbstractionLevel::ActiveIdle => "ACTIVE_IDLE",
            AbstractionLevel::FineGrained => "FINE_GRAINED",
        })
    }
}

/// A state as seen by a model function: either a raw trace event or a
/// model-state key produced by an earlier stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub component: String,
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl State {
    pub fn from_event(e: &StateEvent) -> Self {
        Self {
            component: e.component.to_string(),
            kind: e.kind.name().to_string(),
            fields: e
                .attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Parses `component[/kind][/name:value]*`. A key whose first segment is
    /// a field has neither component nor kind.
    pub fn from_key(key: &str) -> Result<Self> {
        let mut s = State {
            component: String::new(),
            kind: String::new(),
            fields: Vec::new(),
        };
        for (i, seg) in key.split('/').enumerate() {
            if let Some((k, v)) = seg.split_once(':') {
                s.fields.push((k.to_string(), v.to_string()));
            } else if i == 0 {
                s.component = seg.to_string();
            } else if i == 1 && s.fields.is_empty() {
                s.kind = seg.to_string();
            } else {
                return Err(Error::invalid("key", format!("unexpected segment `{seg}` in `{key}`")));
            }
        }
        Ok(s)
    }

    /// Canonical key of a raw event: every attribute retained.
    pub fn identity_key(&self) -> String {
        let mut k = format!("{}/{}", self.component, self.kind);
        for (n, v) in &self.fields {
            k.push('/');
            k.push_str(n);
            k.push(':');
            k.push_str(v);
        }
        k
    }

    fn field(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    fn num(&self, name: &str) -> Option<i64> {
        self.field(name).and_then(|v| v.parse().ok())
    }

    fn lookup(&self, name: &str, ctx: &RuleStage) -> Option<Cow<'_, str>> {
        match name {
            "component" => Some(Cow::Borrowed(self.component.as_str())),
            "class" => Some(Cow::Borrowed(component_class(&self.component))),
            "kind" => Some(Cow::Borrowed(self.kind.as_str())),
            _ => {
                if let Some(v) = self.field(name) {
                    return Some(Cow::Borrowed(v));
                }
                match name {
                    "hops" => {
                        let d = (self.num("src_x")? - self.num("dst_x")?).abs()
                            + (self.num("src_y")? - self.num("dst_y")?).abs();
                        Some(Cow::Owned(d.to_string()))
                    }
                    "depth" => {
                        let addr = self.num("addr")? as u64;
                        let local = addr % u64::from(ctx.bank_words?);
                        Some(Cow::Owned(local.count_ones().to_string()))
                    }
                    _ => None,
                }
            }
        }
    }
}

/// `cpu12` -> `cpu`; keys without a component index keep their name.
pub fn component_class(component: &str) -> &str {
    component.trim_end_matches(|c: char| c.is_ascii_digit())
}

/// Attribute predicate: exact value, or `*` for "present".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchValue {
    Num(u64),
    Text(String),
}

impl MatchValue {
    fn accepts(&self, v: Option<Cow<'_, str>>) -> bool {
        match (self, v) {
            (MatchValue::Text(t), Some(_)) if t == "*" => true,
            (MatchValue::Text(t), Some(v)) => *t == v,
            (MatchValue::Num(n), Some(v)) => v.parse::<u64>().ok() == Some(*n),
            (_, None) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Lit(String),
    Var(String),
}

/// What a matching rule produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Emit {
    Discard,
    Key(Template),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                segments.push(Segment::Lit(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| Error::invalid("template", format!("unclosed `{{` in `{source}`")))?;
            let var = &rest[open + 1..open + close];
            if var.is_empty() || var.contains('{') {
                return Err(Error::invalid("template", format!("bad placeholder in `{source}`")));
            }
            segments.push(Segment::Var(var.to_string()));
            rest = &rest[open + close + 1..];
        }
        if rest.contains('}') {
            return Err(Error::invalid("template", format!("stray `}}` in `{source}`")));
        }
        if !rest.is_empty() {
            segments.push(Segment::Lit(rest.to_string()));
        }
        if segments.is_empty() {
            return Err(Error::invalid("template", "empty key template"));
        }
        Ok(Self {
            source: source.to_string(),
            segments,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn render(&self, state: &State, ctx: &RuleStage) -> Result<String> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Lit(s) => out.push_str(s),
                Segment::Var(v) => {
                    let val = state.lookup(v, ctx).ok_or_else(|| {
                        Error::invalid(
                            "template",
                            format!("`{{{v}}}` undefined for state `{}`", state.identity_key()),
                        )
                    })?;
                    out.push_str(&val);
                }
            }
        }
        Ok(out)
    }
}

impl TryFrom<String> for Emit {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "discard" {
            Ok(Emit::Discard)
        } else {
            Template::parse(&s).map(Emit::Key)
        }
    }
}

impl From<Emit> for String {
    fn from(e: Emit) -> String {
        match e {
            Emit::Discard => "discard".into(),
            Emit::Key(t) => t.source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    /// Predicates over `kind`, `component`, `class` and attribute names.
    #[serde(rename = "match", default)]
    pub when: BTreeMap<String, MatchValue>,
    pub emit: Emit,
}

impl Rule {
    pub fn new(when: &[(&str, MatchValue)], emit: &str) -> Self {
        Self {
            when: when.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            emit: Emit::try_from(emit.to_string()).expect("valid builtin template"),
        }
    }

    fn matches(&self, state: &State, ctx: &RuleStage) -> bool {
        self.when
            .iter()
            .all(|(name, pred)| pred.accepts(state.lookup(name, ctx)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleStage {
    pub rules: Vec<Rule>,
    /// Clip every count to 1 after this stage (used/unused per period).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub saturate: bool,
    /// Needed by the derived `{depth}` variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_words: Option<u32>,
}

impl RuleStage {
    fn apply(&self, state: &State) -> Result<Option<String>> {
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(state, self))
            .ok_or_else(|| Error::Unmapped(state.identity_key()))?;
        match &rule.emit {
            Emit::Discard => Ok(None),
            Emit::Key(t) => t.render(state, self).map(Some),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Identity,
    Rules(RuleStage),
}

/// Transformation from simulated state to the state space of a model. A
/// function is a pipeline of stages; the first stage sees raw events, later
/// stages see the keys emitted by their predecessor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFunction {
    pub name: String,
    pub level: AbstractionLevel,
    pub stages: Vec<Stage>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FunctionFile {
    Full(ModelFunction),
    Rules(Vec<Rule>),
}

impl ModelFunction {
    pub fn from_rules(name: &str, level: AbstractionLevel, stage: RuleStage) -> Self {
        Self {
            name: name.to_string(),
            level,
            stages: vec![Stage::Rules(stage)],
        }
    }

    /// Reads a rule file: either a bare rule list (one fine-grained stage) or
    /// a full `{name, level, stages}` object.
    pub fn parse(text: &str) -> Result<Self> {
        let file: FunctionFile =
            serde_json::from_str(text).map_err(|e| Error::syntax("model function", &e))?;
        Ok(match file {
            FunctionFile::Full(f) => f,
            FunctionFile::Rules(rules) => Self::from_rules(
                "custom",
                AbstractionLevel::FineGrained,
                RuleStage {
                    rules,
                    saturate: false,
                    bank_words: None,
                },
            ),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model function serializes")
    }

    /// Maps one raw event through every stage.
    pub fn map_event(&self, e: &StateEvent) -> Result<Option<String>> {
        let mut state = State::from_event(e);
        let mut key: Option<String> = None;
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 {
                match &key {
                    Some(k) => state = State::from_key(k)?,
                    None => return Ok(None),
                }
            }
            key = match stage {
                Stage::Identity if i == 0 => Some(state.identity_key()),
                Stage::Identity => key,
                Stage::Rules(r) => r.apply(&state)?,
            };
        }
        Ok(key)
    }
}

/// Occurrence counts per model-state key over one observation period.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCountVector {
    pub counts: BTreeMap<String, u64>,
    /// Observation length in cycles.
    pub duration: u64,
    /// Events in the source trace, discarded ones included.
    pub source_events: u64,
    /// Source events that ended up in each key (differs from `counts` only
    /// after saturation).
    #[serde(default)]
    pub event_tally: BTreeMap<String, u64>,
}

impl StateCountVector {
    pub fn from_counts<I, K>(counts: I, duration: u64) -> Self
    where
        I: IntoIterator<Item = (K, u64)>,
        K: Into<String>,
    {
        let mut v = StateCountVector {
            duration,
            ..Default::default()
        };
        for (k, c) in counts {
            let k = k.into();
            *v.counts.entry(k.clone()).or_default() += c;
            *v.event_tally.entry(k).or_default() += c;
            v.source_events += c;
        }
        v
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }
}

/// Counts of `trace` in the state space of `f`.
pub fn abstract_trace(trace: &Trace, f: &ModelFunction) -> Result<StateCountVector> {
    // Identical events (ignoring cycle) map identically; aggregate first.
    let mut distinct: HashMap<_, u64> = HashMap::new();
    for e in &trace.events {
        *distinct.entry((e.component, e.kind, e.attrs)).or_default() += 1;
    }
    let mut distinct: Vec<_> = distinct.into_iter().collect();
    distinct.sort_unstable();

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut tally: BTreeMap<String, u64> = BTreeMap::new();
    // An identity (or empty) first stage yields the canonical event key.
    let first_rules = match f.stages.first() {
        Some(Stage::Rules(r)) => Some(r),
        _ => None,
    };
    for ((component, kind, attrs), n) in distinct {
        let state = State::from_event(&StateEvent::new(0, component, kind, attrs));
        let key = match first_rules {
            Some(r) => r.apply(&state)?,
            None => Some(state.identity_key()),
        };
        if let Some(k) = key {
            *counts.entry(k.clone()).or_default() += n;
            *tally.entry(k).or_default() += n;
        }
    }
    if first_rules.is_some_and(|r| r.saturate) {
        counts.values_mut().for_each(|c| *c = (*c).min(1));
    }
    for stage in f.stages.iter().skip(1) {
        let Stage::Rules(r) = stage else { continue };
        let mut next_counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut next_tally: BTreeMap<String, u64> = BTreeMap::new();
        for (k, c) in &counts {
            if let Some(nk) = r.apply(&State::from_key(k)?)? {
                *next_counts.entry(nk.clone()).or_default() += c;
                *next_tally.entry(nk).or_default() += tally[k];
            }
        }
        if r.saturate {
            next_counts.values_mut().for_each(|c| *c = (*c).min(1));
        }
        counts = next_counts;
        tally = next_tally;
    }
    counts.retain(|_, c| *c > 0);
    tally.retain(|k, _| counts.contains_key(k));
    Ok(StateCountVector {
        counts,
        duration: trace.duration(),
        source_events: trace.len() as u64,
        event_tally: tally,
    })
}

/// `f ∘ g`: apply `g`, then `f` to the keys `g` emits.
pub fn compose(f: &ModelFunction, g: &ModelFunction) -> Result<ModelFunction> {
    let f_is_identity = f.stages.iter().all(|s| matches!(s, Stage::Identity));
    if f_is_identity {
        return Ok(g.clone());
    }
    if f.level > g.level {
        return Err(Error::DomainMismatch(format!(
            "`{}` ({}) cannot refine the output of `{}` ({})",
            f.name, f.level, g.name, g.level
        )));
    }
    let mut stages = g.stages.clone();
    stages.extend(f.stages.iter().cloned());
    Ok(ModelFunction {
        name: format!("{}.{}", f.name, g.name),
        level: f.level,
        stages,
    })
}

/// Model functions shipped with the crate.
pub mod builtin {
    use super::*;
    use crate::statetrace::event::EventKind;

    fn kind(k: EventKind) -> (&'static str, MatchValue) {
        ("kind", MatchValue::Text(k.name().into()))
    }

    fn num(name: &'static str, v: u64) -> (&'static str, MatchValue) {
        (name, MatchValue::Num(v))
    }

    fn stage(rules: Vec<Rule>) -> RuleStage {
        RuleStage {
            rules,
            saturate: false,
            bank_words: None,
        }
    }

    /// Keeps every attribute: one key per distinct (component, kind, attrs).
    pub fn identity() -> ModelFunction {
        ModelFunction {
            name: "identity".into(),
            level: AbstractionLevel::FineGrained,
            stages: vec![Stage::Identity],
        }
    }

    /// Communication and sync rules shared by the fine-grained functions;
    /// packet-level costs (sync, header, flits) are folded into one key per
    /// packet, keyed on its first flit.
    fn comm_rules(noc_key: &str) -> Vec<Rule> {
        use EventKind::*;
        vec![
            Rule::new(&[kind(NiTransfer), num("flit", 0)], noc_key),
            Rule::new(&[kind(NiTransfer)], "discard"),
            Rule::new(&[kind(BusTransfer), num("flit", 0)], "bus/s:{size}"),
            Rule::new(&[kind(BusTransfer)], "discard"),
            Rule::new(&[kind(Sync), num("packet", 0)], "sync"),
            Rule::new(&[kind(Sync)], "discard"),
            Rule::new(&[kind(FlitHop)], "discard"),
            Rule::new(&[kind(DmemAccess)], "discard"),
            Rule::new(&[kind(Idle)], "discard"),
        ]
    }

    /// Per (group, pattern, imem decoder depth): the oracle's full structure.
    pub fn fine_exact(bank_words: u32) -> ModelFunction {
        let mut rules = vec![Rule::new(
            &[kind(EventKind::BundleIssue)],
            "cpu/g:{group}/p:{pattern}/d:{depth}",
        )];
        rules.extend(comm_rules(NOC_HOP_TEMPLATE));
        let mut s = stage(rules);
        s.bank_words = Some(bank_words);
        ModelFunction::from_rules("fine-exact", AbstractionLevel::FineGrained, s)
    }

    /// Per (group, pattern); instruction position ignored.
    pub fn fine() -> ModelFunction {
        let mut rules = vec![Rule::new(&[kind(EventKind::BundleIssue)], "cpu/g:{group}/p:{pattern}")];
        rules.extend(comm_rules(NOC_HOP_TEMPLATE));
        ModelFunction::from_rules("fine", AbstractionLevel::FineGrained, stage(rules))
    }

    /// NoC packet key by cluster pair and size.
    pub const NOC_PAIR_TEMPLATE: &str = "noc/sx:{src_x}/sy:{src_y}/dx:{dst_x}/dy:{dst_y}/s:{size}";
    /// NoC packet key by hop count and size.
    pub const NOC_HOP_TEMPLATE: &str = "noc/h:{hops}/s:{size}";

    /// Like [`fine`] but packets keyed by source and destination cluster.
    pub fn fine_pairs() -> ModelFunction {
        let mut rules = vec![Rule::new(&[kind(EventKind::BundleIssue)], "cpu/g:{group}/p:{pattern}")];
        rules.extend(comm_rules(NOC_PAIR_TEMPLATE));
        ModelFunction::from_rules("fine-pairs", AbstractionLevel::FineGrained, stage(rules))
    }

    /// NoC packets only, keyed by (hops, size).
    pub fn noc_hops() -> ModelFunction {
        let rules = vec![
            Rule::new(&[kind(EventKind::NiTransfer), num("flit", 0)], "noc/h:{hops}/s:{size}"),
            Rule::new(&[], "discard"),
        ];
        ModelFunction::from_rules("noc-hops", AbstractionLevel::FineGrained, stage(rules))
    }

    /// `{component}/active` or `{component}/idle` per event.
    pub fn active_idle() -> ModelFunction {
        let mut rules = vec![Rule::new(&[kind(EventKind::Idle)], "{component}/idle")];
        rules.extend(
            EventKind::ALL
                .into_iter()
                .filter(|k| *k != EventKind::Idle)
                .map(|k| Rule::new(&[kind(k)], "{component}/active")),
        );
        ModelFunction::from_rules("active-idle", AbstractionLevel::ActiveIdle, stage(rules))
    }

    /// `{component}/used` once per period if the component did anything.
    pub fn binary_usage() -> ModelFunction {
        let mut rules = vec![Rule::new(&[kind(EventKind::Idle)], "discard")];
        rules.extend(
            EventKind::ALL
                .into_iter()
                .filter(|k| *k != EventKind::Idle)
                .map(|k| Rule::new(&[kind(k)], "{component}/used")),
        );
        let mut s = stage(rules);
        s.saturate = true;
        ModelFunction::from_rules("binary", AbstractionLevel::BinaryUsage, s)
    }

    /// Key-level coarsening from ACTIVE_IDLE to BINARY_USAGE.
    pub fn active_to_binary() -> ModelFunction {
        let s = RuleStage {
            rules: vec![
                Rule::new(&[("kind", MatchValue::Text("active".into()))], "{component}/used"),
                Rule::new(&[("kind", MatchValue::Text("idle".into()))], "discard"),
            ],
            saturate: true,
            bank_words: None,
        };
        ModelFunction::from_rules("active-to-binary", AbstractionLevel::BinaryUsage, s)
    }

    /// Merges component instances into their class (`cpu3/active` ->
    /// `cpu/active`), so constants transfer across instances.
    pub fn by_class(level: AbstractionLevel) -> ModelFunction {
        ModelFunction::from_rules("by-class", level, stage(vec![Rule::new(&[], "{class}/{kind}")]))
    }

    pub fn active_idle_by_class() -> ModelFunction {
        compose(&by_class(AbstractionLevel::ActiveIdle), &active_idle()).expect("levels agree")
    }

    pub fn binary_by_class() -> ModelFunction {
        compose(&by_class(AbstractionLevel::BinaryUsage), &binary_usage()).expect("levels agree")
    }

    /// Pairwise transition keys for the toy transition component.
    pub fn transitions() -> ModelFunction {
        let rules = vec![
            Rule::new(&[kind(EventKind::BundleIssue)], "tr/from:{prev}/to:{group}"),
            Rule::new(&[], "discard"),
        ];
        ModelFunction::from_rules("transitions", AbstractionLevel::FineGrained, stage(rules))
    }

    /// Discards everything.
    pub fn discard_all() -> ModelFunction {
        ModelFunction::from_rules(
            "discard-all",
            AbstractionLevel::BinaryUsage,
            stage(vec![Rule::new(&[], "discard")]),
        )
    }
}
