//! Workload execution profiles: a static listing joined with dynamic counts.
//!
//! Fields that an importer cannot recover (address samples, branch
//! outcomes, byte counts, the opcode histogram) are `None`. Consumers treat
//! `None` as "unavailable", which is distinct from zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::toyvm::{Category, Listing, Opcode};

pub mod callgrind;
pub mod native;

pub use callgrind::{import_callgrind, CallgrindImport};
pub use native::{load_native, parse_native, save_native, write_native, NATIVE_VERSION};

/// Default number of effective addresses kept per memory instruction.
pub const DEFAULT_SAMPLE_CAP: usize = 4096;

/// Taken/not-taken totals of one static branch and its first outcomes in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub taken: u64,
    pub not_taken: u64,
    pub order: Vec<bool>,
}

impl BranchRecord {
    pub fn executions(&self) -> u64 {
        self.taken + self.not_taken
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicProfile {
    pub workload: String,
    pub listing: Listing,
    /// Actual execution count per instruction.
    pub aec: Vec<u64>,
    /// Call count per function, parallel to `listing.functions`.
    pub function_calls: Vec<u64>,
    pub total_dyn: u64,
    pub sample_cap: usize,
    pub bytes_loaded: Option<Vec<u64>>,
    pub bytes_stored: Option<Vec<u64>>,
    /// First `sample_cap` effective addresses per memory instruction. Loads and
    /// stores are distinguished by the instruction's opcode.
    pub address_samples: Option<BTreeMap<usize, Vec<u64>>>,
    pub branches: Option<BTreeMap<usize, BranchRecord>>,
    pub opcode_histogram: Option<BTreeMap<Opcode, u64>>,
    /// Original instruction addresses of imported profiles.
    pub source_addresses: Option<Vec<u64>>,
}

impl DynamicProfile {
    pub fn empty(workload: impl Into<String>) -> DynamicProfile {
        DynamicProfile {
            workload: workload.into(),
            listing: Listing::default(),
            aec: Vec::new(),
            function_calls: Vec::new(),
            total_dyn: 0,
            sample_cap: DEFAULT_SAMPLE_CAP,
            bytes_loaded: Some(Vec::new()),
            bytes_stored: Some(Vec::new()),
            address_samples: Some(BTreeMap::new()),
            branches: Some(BTreeMap::new()),
            opcode_histogram: Some(BTreeMap::new()),
            source_addresses: None,
        }
    }

    pub fn instruction_count(&self) -> usize {
        self.listing.instructions.len()
    }

    /// True when every instruction carries a decoded opcode.
    pub fn has_opcodes(&self) -> bool {
        self.listing
            .instructions
            .iter()
            .all(|i| i.opcode != Opcode::Unknown)
    }

    /// Lists violated profile invariants; empty when consistent.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let n = self.instruction_count();
        if self.aec.len() != n {
            problems.push(format!("aec has {} entries for {n} instructions", self.aec.len()));
            return problems;
        }
        if self.function_calls.len() != self.listing.functions.len() {
            problems.push("function_calls does not match the function list".into());
        }
        let sum: u64 = self.aec.iter().sum();
        if sum != self.total_dyn {
            problems.push(format!("total_dyn {} != sum of aec {sum}", self.total_dyn));
        }
        for (name, bytes, pick) in [
            ("bytes_loaded", &self.bytes_loaded, Category::is_load as fn(Category) -> bool),
            ("bytes_stored", &self.bytes_stored, Category::is_store),
        ] {
            let Some(bytes) = bytes else { continue };
            if bytes.len() != n {
                problems.push(format!("{name} length mismatch"));
                continue;
            }
            for (insn, &b) in self.listing.instructions.iter().zip(bytes) {
                let expected = if pick(insn.category()) {
                    self.aec[insn.id] * insn.opcode.data_width() as u64
                } else {
                    0
                };
                if b != expected {
                    problems.push(format!("{name}[{}] = {b}, expected {expected}", insn.id));
                }
            }
        }
        if let Some(samples) = &self.address_samples {
            for (&id, s) in samples {
                let cap = (self.aec.get(id).copied().unwrap_or(0) as usize).min(self.sample_cap);
                if s.len() > cap {
                    problems.push(format!("instruction {id} keeps {} samples, cap {cap}", s.len()));
                }
            }
        }
        problems
    }
}
