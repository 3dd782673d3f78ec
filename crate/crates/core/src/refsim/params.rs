use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysconfig::{InstructionClass, SystemConfig};

const DEFAULT_PARAMS: &str = include_str!("../../data/oracle_params.json");

/// Register/memory content a benchmark establishes before its body runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataPattern {
    Zeros,
    Ones,
    Alternating,
}

impl DataPattern {
    pub const ALL: [DataPattern; 3] = [DataPattern::Zeros, DataPattern::Ones, DataPattern::Alternating];

    pub fn index(self) -> u32 {
        self as u32
    }

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DataPattern::Zeros => "zeros",
            DataPattern::Ones => "ones",
            DataPattern::Alternating => "alternating",
        }
    }
}

/// Energy constants of the reference oracle, in pJ per event (static terms
/// in pW per component instance).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleParams {
    /// Indexed by `[InstructionClass as usize][DataPattern as usize]`.
    pub core_energy: [[f64; 3]; 7],
    pub empty_slot_energy: f64,
    pub imem_base_uncompressed: f64,
    pub imem_base_compressed: f64,
    pub imem_spatial_coeff: f64,
    pub dmem_access_energy: [f64; 3],
    pub router_flit_energy: f64,
    pub link_flit_energy: f64,
    pub ni_in_flit_energy: f64,
    pub ni_out_flit_energy: f64,
    pub packet_header_energy: f64,
    pub sync_energy: f64,
    /// Per crossbar beat of a cluster-local transfer.
    pub bus_beat_energy: f64,
    pub static_cpu_pw: f64,
    pub static_router_pw: f64,
    pub static_ni_pw: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self::parse(DEFAULT_PARAMS).expect("shipped oracle parameters are valid")
    }
}

impl OracleParams {
    /// Parses the flat `{"name": number}` parameter document. Every parameter
    /// is required; unknown names are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(text).map_err(|e| Error::syntax("oracle params", &e))?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut used = 0usize;
        let mut get = |name: &str| -> Result<f64> {
            let v = *map
                .get(name)
                .ok_or_else(|| Error::invalid(name, "missing from oracle params"))?;
            used += 1;
            Ok(v)
        };
        let mut core_energy = [[0.0; 3]; 7];
        for class in InstructionClass::ALL {
            for p in DataPattern::ALL {
                core_energy[class as usize][p as usize] =
                    get(&format!("core.{}.{}", class.name(), p.name()))?;
            }
        }
        let mut dmem_access_energy = [0.0; 3];
        for p in DataPattern::ALL {
            dmem_access_energy[p as usize] = get(&format!("dmem_access.{}", p.name()))?;
        }
        let params = Self {
            core_energy,
            empty_slot_energy: get("empty_slot")?,
            imem_base_uncompressed: get("imem_base.uncompressed")?,
            imem_base_compressed: get("imem_base.compressed")?,
            imem_spatial_coeff: get("imem_spatial_coeff")?,
            dmem_access_energy,
            router_flit_energy: get("router_flit")?,
            link_flit_energy: get("link_flit")?,
            ni_in_flit_energy: get("ni_in_flit")?,
            ni_out_flit_energy: get("ni_out_flit")?,
            packet_header_energy: get("packet_header")?,
            sync_energy: get("sync")?,
            bus_beat_energy: get("bus_beat")?,
            static_cpu_pw: get("static.cpu")?,
            static_router_pw: get("static.router")?,
            static_ni_pw: get("static.ni")?,
        };
        if used != map.len() {
            let known: BTreeMap<String, f64> = params.to_map();
            let unknown = map.keys().find(|k| !known.contains_key(*k)).expect("extra key");
            return Err(Error::invalid(unknown.clone(), "is not an oracle parameter"));
        }
        params.validate()?;
        Ok(params)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for class in InstructionClass::ALL {
            for p in DataPattern::ALL {
                m.insert(
                    format!("core.{}.{}", class.name(), p.name()),
                    self.core_energy[class as usize][p as usize],
                );
            }
        }
        for p in DataPattern::ALL {
            m.insert(format!("dmem_access.{}", p.name()), self.dmem_access_energy[p as usize]);
        }
        let scalars = [
            ("empty_slot", self.empty_slot_energy),
            ("imem_base.uncompressed", self.imem_base_uncompressed),
            ("imem_base.compressed", self.imem_base_compressed),
            ("imem_spatial_coeff", self.imem_spatial_coeff),
            ("router_flit", self.router_flit_energy),
            ("link_flit", self.link_flit_energy),
            ("ni_in_flit", self.ni_in_flit_energy),
            ("ni_out_flit", self.ni_out_flit_energy),
            ("packet_header", self.packet_header_energy),
            ("sync", self.sync_energy),
            ("bus_beat", self.bus_beat_energy),
            ("static.cpu", self.static_cpu_pw),
            ("static.router", self.static_router_pw),
            ("static.ni", self.static_ni_pw),
        ];
        m.extend(scalars.into_iter().map(|(k, v)| (k.to_string(), v)));
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_map()).expect("params serialize")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.to_map() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be a finite non-negative number"));
            }
        }
        for p in DataPattern::ALL {
            let nop = self.core(InstructionClass::Nop, p);
            let simd = self.core(InstructionClass::Simd, p);
            if nop >= simd {
                return Err(Error::invalid(
                    format!("core.NOP.{}", p.name()),
                    "must be below the SIMD energy of the same pattern",
                ));
            }
        }
        Ok(())
    }

    pub fn core(&self, class: InstructionClass, p: DataPattern) -> f64 {
        self.core_energy[class as usize][p as usize]
    }

    pub fn dmem(&self, p: DataPattern) -> f64 {
        self.dmem_access_energy[p as usize]
    }

    pub fn imem_base(&self, compressed: bool) -> f64 {
        if compressed {
            self.imem_base_compressed
        } else {
            self.imem_base_uncompressed
        }
    }

    /// Total static power of every instantiated component, in pW.
    pub fn static_power_pw(&self, config: &SystemConfig) -> f64 {
        f64::from(config.cpu_count()) * self.static_cpu_pw
            + f64::from(config.cluster_count()) * (self.static_router_pw + self.static_ni_pw)
    }

    /// Static energy per clock cycle, in pJ.
    pub fn static_per_cycle(&self, config: &SystemConfig) -> f64 {
        self.static_power_pw(config) / config.clock_hz
    }
}
