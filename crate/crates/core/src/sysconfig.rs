//! Target platform description: mesh/cluster/CPU geometry, the VLIW
//! instruction-set description and the communication-API description.
//!
//! All three are read from JSON documents. The config document uses the
//! field names of [`SystemConfig`] verbatim; absent fields take defaults and
//! unknown fields are rejected.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_ISA: &str = include_str!("../data/isa.json");
const BUILTIN_API: &str = include_str!("../data/api.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub mesh_cols: u32,
    pub mesh_rows: u32,
    pub cpus_per_cluster: u32,
    pub vliw_slots: u32,
    pub imem_bytes: u32,
    pub dmem_bytes: u32,
    pub shared_mem_bytes: u32,
    pub bank_words: u32,
    pub word_bytes: u32,
    pub flit_payload_bytes: u32,
    pub ni_channels: u32,
    pub clock_hz: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            mesh_cols: 2,
            mesh_rows: 2,
            cpus_per_cluster: 4,
            vliw_slots: 2,
            imem_bytes: 16384,
            dmem_bytes: 16384,
            shared_mem_bytes: 65536,
            bank_words: 2048,
            word_bytes: 4,
            flit_payload_bytes: 8,
            ni_channels: 128,
            clock_hz: 7.0e8,
        }
    }
}

/// Position of a cluster (and its router and NI) on the 2D mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterCoord {
    pub x: u32,
    pub y: u32,
}

impl ClusterCoord {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for ClusterCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// A CPU addressed by its cluster and its index inside the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CpuCoord {
    pub cluster: ClusterCoord,
    pub cpu: u32,
}

impl CpuCoord {
    pub const fn new(x: u32, y: u32, cpu: u32) -> Self {
        Self {
            cluster: ClusterCoord::new(x, y),
            cpu,
        }
    }
}

impl SystemConfig {
    /// Parses a config document and applies defaults for absent fields.
    pub fn parse(text: &str) -> Result<Self> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let cfg: SystemConfig =
            serde_json::from_str(text).map_err(|e| Error::syntax("config", &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("mesh_cols", self.mesh_cols),
            ("mesh_rows", self.mesh_rows),
            ("cpus_per_cluster", self.cpus_per_cluster),
            ("vliw_slots", self.vliw_slots),
            ("imem_bytes", self.imem_bytes),
            ("dmem_bytes", self.dmem_bytes),
            ("shared_mem_bytes", self.shared_mem_bytes),
            ("bank_words", self.bank_words),
            ("word_bytes", self.word_bytes),
            ("flit_payload_bytes", self.flit_payload_bytes),
            ("ni_channels", self.ni_channels),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        if self.cpus_per_cluster > 32 {
            return Err(Error::invalid("cpus_per_cluster", "must be at most 32"));
        }
        let bank_bytes = u64::from(self.bank_words) * u64::from(self.word_bytes);
        if u64::from(self.imem_bytes) % bank_bytes != 0 {
            return Err(Error::invalid("imem_bytes", "not bank multiple"));
        }
        if u64::from(self.dmem_bytes) % bank_bytes != 0 {
            return Err(Error::invalid("dmem_bytes", "not bank multiple"));
        }
        if !self.flit_payload_bytes.is_power_of_two() {
            return Err(Error::invalid("flit_payload_bytes", "not a power of two"));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::invalid("clock_hz", "must be positive"));
        }
        Ok(())
    }

    pub fn cluster_count(&self) -> u32 {
        self.mesh_cols * self.mesh_rows
    }

    pub fn cpu_count(&self) -> u32 {
        self.cluster_count() * self.cpus_per_cluster
    }

    pub fn imem_words(&self) -> u32 {
        self.imem_bytes / self.word_bytes
    }

    pub fn contains(&self, c: ClusterCoord) -> bool {
        c.x < self.mesh_cols && c.y < self.mesh_rows
    }

    /// Linear cluster index, row-major.
    pub fn cluster_index(&self, c: ClusterCoord) -> u32 {
        c.y * self.mesh_cols + c.x
    }

    pub fn cluster_at(&self, index: u32) -> ClusterCoord {
        ClusterCoord::new(index % self.mesh_cols, index / self.mesh_cols)
    }

    pub fn clusters(&self) -> impl Iterator<Item = ClusterCoord> + '_ {
        (0..self.cluster_count()).map(|i| self.cluster_at(i))
    }

    /// Linear CPU id: `((y * mesh_cols) + x) * cpus_per_cluster + cpu`.
    pub fn cpu_id(&self, c: CpuCoord) -> Result<u32> {
        if !self.contains(c.cluster) || c.cpu >= self.cpus_per_cluster {
            return Err(Error::invalid(
                "cpu",
                format!("{}#{} is not on the configured mesh", c.cluster, c.cpu),
            ));
        }
        Ok(self.cluster_index(c.cluster) * self.cpus_per_cluster + c.cpu)
    }

    pub fn cpu_coord(&self, id: u32) -> Result<CpuCoord> {
        if id >= self.cpu_count() {
            return Err(Error::invalid("cpu", format!("id {id} out of range")));
        }
        Ok(CpuCoord {
            cluster: self.cluster_at(id / self.cpus_per_cluster),
            cpu: id % self.cpus_per_cluster,
        })
    }

    pub fn cluster_of(&self, cpu_id: u32) -> ClusterCoord {
        self.cluster_at(cpu_id / self.cpus_per_cluster)
    }

    /// Instruction-memory words one bundle occupies: compressed bundles
    /// take a single word, full bundles one word per slot.
    pub fn words_per_bundle(&self, compressed: bool) -> u32 {
        if compressed {
            1
        } else {
            self.vliw_slots
        }
    }

    /// Flits (or crossbar beats) needed for `size_bytes`.
    pub fn flits(&self, size_bytes: u32) -> u32 {
        size_bytes.div_ceil(self.flit_payload_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum InstructionClass {
    Nop,
    Alu,
    Simd,
    Muldiv,
    Load,
    Store,
    Branch,
}

impl InstructionClass {
    pub const ALL: [InstructionClass; 7] = [
        InstructionClass::Nop,
        InstructionClass::Alu,
        InstructionClass::Simd,
        InstructionClass::Muldiv,
        InstructionClass::Load,
        InstructionClass::Store,
        InstructionClass::Branch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstructionClass::Nop => "NOP",
            InstructionClass::Alu => "ALU",
            InstructionClass::Simd => "SIMD",
            InstructionClass::Muldiv => "MULDIV",
            InstructionClass::Load => "LOAD",
            InstructionClass::Store => "STORE",
            InstructionClass::Branch => "BRANCH",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn is_memory(self) -> bool {
        matches!(self, InstructionClass::Load | InstructionClass::Store)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionDef {
    pub mnemonic: String,
    pub iclass: InstructionClass,
    pub allowed_slots: BTreeSet<u32>,
    #[serde(default)]
    pub reads_dmem: bool,
    #[serde(default)]
    pub writes_dmem: bool,
}

impl InstructionDef {
    pub fn accesses_dmem(&self) -> bool {
        self.reads_dmem || self.writes_dmem
    }
}

/// A validated instruction-set description for a given slot count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Isa {
    defs: Vec<InstructionDef>,
    vliw_slots: u32,
}

impl Isa {
    pub fn parse(text: &str, vliw_slots: u32) -> Result<Self> {
        let defs: Vec<InstructionDef> =
            serde_json::from_str(text).map_err(|e| Error::syntax("isa", &e))?;
        Self::new(defs, vliw_slots)
    }

    /// The synthetic ISA description shipped with the crate.
    pub fn builtin(vliw_slots: u32) -> Result<Self> {
        Self::parse(BUILTIN_ISA, vliw_slots)
    }

    pub fn new(defs: Vec<InstructionDef>, vliw_slots: u32) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for d in &defs {
            let field = format!("isa[{}]", d.mnemonic);
            if d.mnemonic.is_empty() || d.mnemonic == EMPTY_MNEMONIC {
                return Err(Error::invalid(field, "mnemonic is reserved or empty"));
            }
            if !seen.insert(d.mnemonic.as_str()) {
                return Err(Error::invalid(field, "duplicate mnemonic"));
            }
            if d.allowed_slots.is_empty() {
                return Err(Error::invalid(field, "allowed_slots is empty"));
            }
            if let Some(s) = d.allowed_slots.iter().find(|&&s| s >= vliw_slots) {
                return Err(Error::invalid(field, format!("slot {s} exceeds vliw_slots")));
            }
            if d.iclass == InstructionClass::Nop && d.allowed_slots.len() != vliw_slots as usize {
                return Err(Error::invalid(field, "NOP must be allowed on every slot"));
            }
            if d.accesses_dmem() && !d.iclass.is_memory() {
                return Err(Error::invalid(field, "only LOAD/STORE may access dmem"));
            }
        }
        Ok(Self { defs, vliw_slots })
    }

    pub fn defs(&self) -> &[InstructionDef] {
        &self.defs
    }

    pub fn vliw_slots(&self) -> u32 {
        self.vliw_slots
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn get(&self, index: usize) -> &InstructionDef {
        &self.defs[index]
    }

    pub fn find(&self, mnemonic: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.mnemonic == mnemonic)
    }

    /// Instruction indices allowed on `slot`, in description order.
    pub fn allowed_on(&self, slot: u32) -> Vec<usize> {
        self.defs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.allowed_slots.contains(&slot))
            .map(|(i, _)| i)
            .collect()
    }
}

pub const EMPTY_MNEMONIC: &str = "EMPTY";

/// Content of one VLIW slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotOp {
    Instr(usize),
    Empty,
}

/// One bundle: an instruction (or EMPTY) per VLIW slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstructionGroup {
    pub slots: Vec<SlotOp>,
}

impl InstructionGroup {
    pub fn is_idle(&self) -> bool {
        self.slots.iter().all(|s| *s == SlotOp::Empty)
    }

    /// True iff exactly one slot is occupied.
    pub fn compressed(&self) -> bool {
        self.slots.iter().filter(|s| **s != SlotOp::Empty).count() == 1
    }

    pub fn instrs(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().filter_map(|s| match s {
            SlotOp::Instr(i) => Some(*i),
            SlotOp::Empty => None,
        })
    }

    pub fn render(&self, isa: &Isa) -> String {
        let names: Vec<&str> = self
            .slots
            .iter()
            .map(|s| match s {
                SlotOp::Instr(i) => isa.get(*i).mnemonic.as_str(),
                SlotOp::Empty => EMPTY_MNEMONIC,
            })
            .collect();
        format!("({})", names.join(","))
    }
}

/// Every per-slot assignment respecting `allowed_slots`, EMPTY included per
/// slot, all-EMPTY excluded. Order is lexicographic with slot 0 most
/// significant and, per slot, instructions in description order before EMPTY.
pub fn enumerate_instruction_groups(isa: &Isa, vliw_slots: u32) -> Vec<InstructionGroup> {
    let catalog = GroupCatalog::new(isa, vliw_slots);
    (0..catalog.len()).map(|id| catalog.decode(id)).collect()
}

/// Dense numbering of the instruction groups of an ISA.
///
/// Group ids are the mixed-radix value of the per-slot choice indices, which
/// coincides with the position in [`enumerate_instruction_groups`] because
/// the all-EMPTY group is the largest value. The all-EMPTY (idle) bundle is
/// therefore numbered `len()`.
#[derive(Debug, Clone)]
pub struct GroupCatalog {
    choices: Vec<Vec<SlotOp>>,
}

impl GroupCatalog {
    pub fn new(isa: &Isa, vliw_slots: u32) -> Self {
        let choices = (0..vliw_slots)
            .map(|slot| {
                let mut c: Vec<SlotOp> =
                    isa.allowed_on(slot).into_iter().map(SlotOp::Instr).collect();
                c.push(SlotOp::Empty);
                c
            })
            .collect();
        Self { choices }
    }

    fn radix_total(&self) -> u64 {
        self.choices.iter().map(|c| c.len() as u64).product()
    }

    /// Number of non-idle groups.
    pub fn len(&self) -> u32 {
        (self.radix_total() - 1) as u32
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idle_id(&self) -> u32 {
        self.len()
    }

    pub fn slots(&self) -> u32 {
        self.choices.len() as u32
    }

    pub fn decode(&self, id: u32) -> InstructionGroup {
        let mut rest = u64::from(id);
        let mut slots = vec![SlotOp::Empty; self.choices.len()];
        for (slot, c) in self.choices.iter().enumerate().rev() {
            let n = c.len() as u64;
            slots[slot] = c[(rest % n) as usize];
            rest /= n;
        }
        InstructionGroup { slots }
    }

    pub fn encode(&self, group: &InstructionGroup) -> Option<u32> {
        if group.slots.len() != self.choices.len() {
            return None;
        }
        let mut id = 0u64;
        for (op, c) in group.slots.iter().zip(&self.choices) {
            let pos = c.iter().position(|x| x == op)?;
            id = id * c.len() as u64 + pos as u64;
        }
        Some(id as u32)
    }

    pub fn contains(&self, id: u32) -> bool {
        id <= self.idle_id()
    }

    /// Group id of a bundle given as one mnemonic per slot (`""` = EMPTY);
    /// missing trailing slots are EMPTY.
    pub fn encode_mnemonics(&self, isa: &Isa, slots: &[&str]) -> Result<u32> {
        let mut ops = vec![SlotOp::Empty; self.choices.len()];
        for (i, m) in slots.iter().enumerate().filter(|(_, m)| !m.is_empty()) {
            let idx = isa
                .find(m)
                .ok_or_else(|| Error::invalid("isa", format!("no instruction `{m}`")))?;
            *ops.get_mut(i).ok_or_else(|| Error::invalid("vliw_slots", "too few slots"))? = SlotOp::Instr(idx);
        }
        self.encode(&InstructionGroup { slots: ops })
            .ok_or_else(|| Error::invalid("isa", format!("bundle {slots:?} violates slot constraints")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommOpName {
    ChannelOpen,
    Send,
    Recv,
    Sync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRange {
    pub min: u32,
    pub max: u32,
    pub step: u32,
}

impl SizeRange {
    pub fn values(&self) -> impl Iterator<Item = u32> {
        (self.min..=self.max).step_by(self.step as usize)
    }

    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.step + 1) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommOpDesc {
    pub name: CommOpName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SizeRange>,
}

/// Communication operations a benchmark generator may exercise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ApiDescription {
    ops: Vec<CommOpDesc>,
}

impl ApiDescription {
    pub fn parse(text: &str, config: &SystemConfig) -> Result<Self> {
        let ops: Vec<CommOpDesc> =
            serde_json::from_str(text).map_err(|e| Error::syntax("api", &e))?;
        Self::new(ops, config)
    }

    pub fn builtin(config: &SystemConfig) -> Result<Self> {
        Self::parse(BUILTIN_API, config)
    }

    pub fn new(ops: Vec<CommOpDesc>, config: &SystemConfig) -> Result<Self> {
        for op in &ops {
            if let Some(r) = op.params {
                let field = format!("api[{:?}].params", op.name);
                if r.min < config.word_bytes {
                    return Err(Error::invalid(field, "min is below word_bytes"));
                }
                if r.max < r.min {
                    return Err(Error::invalid(field, "max is below min"));
                }
                if r.step == 0 || (r.max - r.min) % r.step != 0 {
                    return Err(Error::invalid(field, "step does not divide max - min"));
                }
            }
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[CommOpDesc] {
        &self.ops
    }

    pub fn range(&self, name: CommOpName) -> Option<SizeRange> {
        self.ops.iter().find(|o| o.name == name).and_then(|o| o.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def(m: &str, iclass: InstructionClass, slots: &[u32]) -> InstructionDef {
        InstructionDef {
            mnemonic: m.into(),
            iclass,
            allowed_slots: slots.iter().copied().collect(),
            reads_dmem: false,
            writes_dmem: false,
        }
    }

    #[test]
    fn validation_platform_document() {
        let cfg = SystemConfig::parse(
            r#"{"mesh_cols":2,"mesh_rows":2,"cpus_per_cluster":4,"vliw_slots":2,
                "imem_bytes":16384,"dmem_bytes":16384}"#,
        )
        .unwrap();
        assert_eq!(cfg.cpu_count(), 16);
        assert_eq!(cfg.imem_words(), 4096);
        assert_eq!(cfg, SystemConfig::default());
    }

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(SystemConfig::parse("").unwrap(), SystemConfig::default());
        assert_eq!(SystemConfig::parse("{}").unwrap(), SystemConfig::default());
    }

    #[test]
    fn imem_not_bank_multiple() {
        let err = SystemConfig::parse(r#"{"imem_bytes": 1000}"#).unwrap_err();
        assert_eq!(err.to_string(), "imem_bytes not bank multiple");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = SystemConfig::parse("{\n  \"mesh_cols\": ,\n}").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            SystemConfig::parse(r#"{"mesh_colz": 3}"#),
            Err(Error::Syntax { .. })
        ));
    }

    #[test]
    fn flit_must_be_power_of_two() {
        let err = SystemConfig::parse(r#"{"flit_payload_bytes": 6}"#).unwrap_err();
        assert!(err.to_string().starts_with("flit_payload_bytes"));
    }

    #[test]
    fn cpu_id_scheme() {
        let cfg = SystemConfig::default();
        assert_eq!(cfg.cpu_id(CpuCoord::new(1, 0, 2)).unwrap(), 6);
        assert_eq!(cfg.cpu_id(CpuCoord::new(1, 1, 3)).unwrap(), 15);
        for id in 0..cfg.cpu_count() {
            assert_eq!(cfg.cpu_id(cfg.cpu_coord(id).unwrap()).unwrap(), id);
        }
        assert!(cfg.cpu_id(CpuCoord::new(2, 0, 0)).is_err());
    }

    #[test]
    fn nop_only_isa() {
        let isa = Isa::new(vec![def("nop", InstructionClass::Nop, &[0, 1])], 2).unwrap();
        let groups = enumerate_instruction_groups(&isa, 2);
        let rendered: Vec<String> = groups.iter().map(|g| g.render(&isa)).collect();
        assert_eq!(rendered, ["(nop,nop)", "(nop,EMPTY)", "(EMPTY,nop)"]);
        assert!(!groups[0].compressed());
        assert!(groups[1].compressed() && groups[2].compressed());
    }

    #[test]
    fn slot_restricted_isa_has_eight_groups() {
        // slot0 {a, b, EMPTY} x slot1 {b, EMPTY}, minus all-EMPTY
        let isa = Isa::new(
            vec![
                def("a", InstructionClass::Alu, &[0]),
                def("b", InstructionClass::Alu, &[0, 1]),
            ],
            2,
        )
        .unwrap();
        let groups = enumerate_instruction_groups(&isa, 2);
        let brute = brute_force_count(&isa, 2);
        assert_eq!(groups.len(), brute);
        assert_eq!(groups.len(), 5);
    }

    /// Independent enumerator: cartesian product over every instruction
    /// (and EMPTY) on every slot, filtered by the slot constraints.
    fn brute_force_count(isa: &Isa, slots: u32) -> usize {
        let n = isa.len() + 1;
        let total = n.pow(slots);
        (0..total)
            .filter(|&code| {
                let mut c = code;
                let mut all_empty = true;
                for slot in 0..slots {
                    let choice = c % n;
                    c /= n;
                    if choice < isa.len() {
                        all_empty = false;
                        if !isa.get(choice).allowed_slots.contains(&slot) {
                            return false;
                        }
                    }
                }
                !all_empty
            })
            .count()
    }

    #[test]
    fn builtin_isa_count_matches_brute_force_and_product_formula() {
        let isa = Isa::builtin(2).unwrap();
        assert!(isa.len() >= 20);
        let groups = enumerate_instruction_groups(&isa, 2);
        assert_eq!(groups.len(), brute_force_count(&isa, 2));
        let product: usize = (0..2).map(|s| isa.allowed_on(s).len() + 1).product();
        assert_eq!(groups.len(), product - 1);
    }

    #[test]
    fn catalog_roundtrip_and_order() {
        let isa = Isa::builtin(2).unwrap();
        let cat = GroupCatalog::new(&isa, 2);
        let groups = enumerate_instruction_groups(&isa, 2);
        for (id, g) in groups.iter().enumerate() {
            assert_eq!(cat.encode(g), Some(id as u32));
            assert!(!g.is_idle());
        }
        assert!(cat.decode(cat.idle_id()).is_idle());
    }

    #[test]
    fn empty_isa_has_no_groups() {
        let isa = Isa::new(vec![], 2).unwrap();
        assert!(enumerate_instruction_groups(&isa, 2).is_empty());
    }

    #[test]
    fn isa_invariants() {
        assert!(Isa::new(vec![def("x", InstructionClass::Alu, &[])], 2).is_err());
        assert!(Isa::new(vec![def("n", InstructionClass::Nop, &[0])], 2).is_err());
        assert!(Isa::new(vec![def("x", InstructionClass::Alu, &[2])], 2).is_err());
        let mut ld = def("ld", InstructionClass::Alu, &[0]);
        ld.reads_dmem = true;
        assert!(Isa::new(vec![ld], 2).is_err());
        assert!(Isa::new(
            vec![
                def("x", InstructionClass::Alu, &[0]),
                def("x", InstructionClass::Alu, &[1])
            ],
            2
        )
        .is_err());
    }

    #[test]
    fn api_invariants() {
        let cfg = SystemConfig::default();
        let api = ApiDescription::builtin(&cfg).unwrap();
        let r = api.range(CommOpName::Send).unwrap();
        assert_eq!((r.min, r.max, r.step, r.count()), (4, 1024, 4, 256));
        assert!(ApiDescription::parse(
            r#"[{"name":"send","params":{"min":2,"max":10,"step":2}}]"#,
            &cfg
        )
        .is_err());
        assert!(ApiDescription::parse(
            r#"[{"name":"send","params":{"min":4,"max":10,"step":4}}]"#,
            &cfg
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_config() -> impl Strategy<Value = SystemConfig> {
            (1u32..5, 1u32..5, 1u32..33, 1u32..4, 1u32..5, 1u32..5, 0u32..5).prop_map(
                |(c, r, cpus, slots, im, dm, flit)| SystemConfig {
                    mesh_cols: c,
                    mesh_rows: r,
                    cpus_per_cluster: cpus,
                    vliw_slots: slots,
                    imem_bytes: im * 8192,
                    dmem_bytes: dm * 8192,
                    flit_payload_bytes: 1 << flit,
                    ..SystemConfig::default()
                },
            )
        }

        proptest! {
            #[test]
            fn config_roundtrips(cfg in arb_config()) {
                let parsed = SystemConfig::parse(&cfg.to_json()).unwrap();
                prop_assert_eq!(parsed, cfg);
            }

            #[test]
            fn group_count_is_product_formula(
                slots in 1u32..4,
                masks in proptest::collection::vec(1u32..8, 0..12),
            ) {
                let defs: Vec<InstructionDef> = masks
                    .iter()
                    .enumerate()
                    .filter_map(|(i, m)| {
                        let allowed: Vec<u32> = (0..slots).filter(|s| m & (1 << s) != 0).collect();
                        (!allowed.is_empty()).then(|| def(&format!("i{i}"), InstructionClass::Alu, &allowed))
                    })
                    .collect();
                let isa = Isa::new(defs, slots).unwrap();
                let product: usize = (0..slots).map(|s| isa.allowed_on(s).len() + 1).product();
                let groups = enumerate_instruction_groups(&isa, slots);
                prop_assert_eq!(groups.len(), product - 1);
                prop_assert_eq!(groups.len(), brute_force_count(&isa, slots));
            }
        }
    }
}
