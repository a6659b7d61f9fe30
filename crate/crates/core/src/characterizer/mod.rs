//! Per-loop characterization: direct counts, cache and branch behaviour,
//! instruction classes, access patterns, dependency chains, computation
//! model and time share.
//!
//! Features that need profile data the source could not provide are `None`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::loopfinder::Loop;
use crate::profile::DynamicProfile;
use crate::toyvm::{
    count_mispredictions, simulate_cache, Access, AccessKind, CacheConfig, Category, LatencyTable, Opcode,
};

pub mod classify;
pub mod columns;
pub mod depchain;
pub mod models;
pub mod patterns;

pub use classify::{classify_instructions, ClassCounts};
pub use columns::{ColumnRegistry, FeatureColumn, DEFAULT_COLUMNS};
pub use depchain::{dependency_chain, DepChain};
pub use models::{constant_stride, Model, ModelRegistry, ModelRule, StreamEvidence};
pub use patterns::{detect_patterns, AccessPattern, StreamKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopFeatures {
    pub workload: String,
    pub loop_id: usize,
    pub function: String,
    pub iterations: u64,
    pub static_instructions: usize,
    pub relative_size: f64,
    pub scalar_instructions: Option<u64>,
    pub vector_instructions: Option<u64>,
    pub fp_instructions: Option<u64>,
    pub bytes_loaded: Option<u64>,
    pub bytes_stored: Option<u64>,
    pub scalar_loads: Option<u64>,
    pub scalar_stores: Option<u64>,
    pub vector_loads: Option<u64>,
    pub vector_stores: Option<u64>,
    /// One entry per configured cache, in configuration order.
    pub cache_miss_ratio: Vec<Option<f64>>,
    pub cache_miss_bytes: Vec<Option<u64>>,
    pub branch_mispred_rate: Option<f64>,
    pub addr_calc_fraction: Option<f64>,
    pub control_fraction: Option<f64>,
    pub compute_fraction: Option<f64>,
    pub longest_dep_chain: Option<u64>,
    pub ilp: Option<f64>,
    pub pattern_strength: Option<f64>,
    pub model: Option<Model>,
    pub loop_time_share: f64,
    pub load_patterns: Vec<AccessPattern>,
    pub store_patterns: Vec<AccessPattern>,
}

impl LoopFeatures {
    pub fn key(&self) -> String {
        format!("{}#{}", self.workload, self.loop_id)
    }
}

pub struct Characterizer {
    pub caches: Vec<CacheConfig>,
    pub latencies: LatencyTable,
    pub models: ModelRegistry,
}

impl Default for Characterizer {
    fn default() -> Self {
        Characterizer {
            caches: vec![CacheConfig::default()],
            latencies: LatencyTable::default(),
            models: ModelRegistry::default(),
        }
    }
}

/// Address streams of one loop rebuilt from per-instruction samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoopStreams {
    /// Loads and stores interleaved in body order, iteration by iteration.
    pub accesses: Vec<Access>,
    pub loads: Vec<u64>,
    pub stores: Vec<u64>,
    /// Each memory instruction's own samples.
    pub per_instruction: Vec<(usize, StreamKind, Vec<u64>)>,
}

/// `None` when the profile carries no address samples.
pub fn loop_streams(lp: &Loop, profile: &DynamicProfile) -> Option<LoopStreams> {
    let samples = profile.address_samples.as_ref()?;
    let mut s = LoopStreams::default();
    let mem: Vec<_> = lp.body.iter().filter(|i| i.category().is_memory()).collect();
    for insn in &mem {
        let kind = if insn.category().is_load() {
            StreamKind::Load
        } else {
            StreamKind::Store
        };
        let v = samples.get(&insn.id).cloned().unwrap_or_default();
        s.per_instruction.push((insn.id, kind, v));
    }
    let rounds = s.per_instruction.iter().map(|(_, _, v)| v.len()).min().unwrap_or(0);
    for k in 0..rounds {
        for (insn, (_, kind, v)) in mem.iter().zip(&s.per_instruction) {
            let address = v[k];
            s.accesses.push(Access {
                address,
                bytes: insn.opcode.data_width(),
                kind: match kind {
                    StreamKind::Load => AccessKind::Load,
                    StreamKind::Store => AccessKind::Store,
                },
            });
            match kind {
                StreamKind::Load => s.loads.push(address),
                StreamKind::Store => s.stores.push(address),
            }
        }
    }
    Some(s)
}

/// Latency-weighted share of the workload's execution spent in the loop.
pub fn loop_time_share(lp: &Loop, profile: &DynamicProfile, latencies: &LatencyTable) -> Result<f64, ConfigError> {
    let mut total = 0u128;
    for (insn, &aec) in profile.listing.instructions.iter().zip(&profile.aec) {
        total += aec as u128 * latencies.get(insn.opcode)? as u128;
    }
    let mut inside = 0u128;
    for id in lp.instruction_ids() {
        let insn = &profile.listing.instructions[id];
        inside += profile.aec[id] as u128 * latencies.get(insn.opcode)? as u128;
    }
    Ok(if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    })
}

/// Mispredictions over branch executions within the body, replaying each
/// branch's recorded outcome order through a 2-bit counter.
pub fn mispred_rate(lp: &Loop, profile: &DynamicProfile) -> Option<f64> {
    let branches: Vec<_> = lp.body.iter().filter(|i| i.category() == Category::Branch).collect();
    if lp.body.iter().any(|i| i.opcode == Opcode::Unknown) {
        return None;
    }
    if branches.is_empty() {
        return Some(0.0);
    }
    let records = profile.branches.as_ref()?;
    let (mut misses, mut outcomes) = (0u64, 0u64);
    for b in branches {
        if let Some(r) = records.get(&b.id) {
            misses += count_mispredictions(&r.order);
            outcomes += r.order.len() as u64;
        }
    }
    Some(if outcomes == 0 {
        0.0
    } else {
        misses as f64 / outcomes as f64
    })
}

impl Characterizer {
    pub fn characterize(&self, lp: &Loop, profile: &DynamicProfile) -> Result<LoopFeatures, ConfigError> {
        let iters = lp.iterations;
        let n = lp.static_len();
        let relative_size = if profile.total_dyn == 0 {
            0.0
        } else {
            (iters as f64 * n as f64) / profile.total_dyn as f64
        };
        let decoded = lp.body.iter().all(|i| i.opcode != Opcode::Unknown);
        let dyn_count = |pred: &dyn Fn(&crate::toyvm::Instruction) -> bool| -> Option<u64> {
            decoded.then(|| lp.body.iter().filter(|i| pred(i)).map(|i| profile.aec[i.id]).sum())
        };
        let is_fp = |i: &crate::toyvm::Instruction| {
            use Opcode::*;
            matches!(i.opcode, Fadd | Fsub | Fmul | Fdiv | Fmov | Fld | Fst)
        };
        let vector_instructions = dyn_count(&|i| i.category().is_vector());
        let scalar_instructions = dyn_count(&|i| !i.category().is_vector());
        let fp_instructions = dyn_count(&is_fp);
        let scalar_loads = dyn_count(&|i| i.category() == Category::Load);
        let scalar_stores = dyn_count(&|i| i.category() == Category::Store);
        let vector_loads = dyn_count(&|i| i.category() == Category::VectorLoad);
        let vector_stores = dyn_count(&|i| i.category() == Category::VectorStore);
        let sum_over = |v: &Option<Vec<u64>>| v.as_ref().map(|v| lp.instruction_ids().map(|id| v[id]).sum());

        let streams = loop_streams(lp, profile);
        let mut cache_miss_ratio = Vec::new();
        let mut cache_miss_bytes = Vec::new();
        for cfg in &self.caches {
            match &streams {
                Some(s) => {
                    let stats = simulate_cache(&s.accesses, cfg)?;
                    cache_miss_ratio.push(Some(stats.miss_ratio()));
                    cache_miss_bytes.push(Some(stats.miss_bytes));
                }
                None => {
                    cache_miss_ratio.push(None);
                    cache_miss_bytes.push(None);
                }
            }
        }

        let (mut load_patterns, mut store_patterns) = (Vec::new(), Vec::new());
        let mut pattern_strength = None;
        let mut model = None;
        if let Some(s) = &streams {
            load_patterns = detect_patterns(&s.loads, StreamKind::Load);
            store_patterns = detect_patterns(&s.stores, StreamKind::Store);
            let load_deltas = s.loads.len().saturating_sub(1);
            let store_deltas = s.stores.len().saturating_sub(1);
            let covered: usize = load_patterns
                .iter()
                .chain(&store_patterns)
                .map(AccessPattern::covered)
                .sum();
            let deltas = load_deltas + store_deltas;
            pattern_strength = Some(if deltas == 0 {
                0.0
            } else {
                covered as f64 / deltas as f64
            });
            if decoded {
                let strides = |kind| {
                    s.per_instruction
                        .iter()
                        .filter(|(_, k, _)| *k == kind)
                        .map(|(_, _, v)| constant_stride(v))
                        .collect()
                };
                let evidence = StreamEvidence {
                    load_strides: strides(StreamKind::Load),
                    store_strides: strides(StreamKind::Store),
                    store_coverage: patterns::coverage(&store_patterns, store_deltas),
                    load_patterns: load_patterns.clone(),
                    store_patterns: store_patterns.clone(),
                };
                model = Some(self.models.detect(&evidence));
            }
        }

        let (mut addr_calc_fraction, mut control_fraction, mut compute_fraction) = (None, None, None);
        let (mut longest_dep_chain, mut ilp) = (None, None);
        if decoded {
            let (a, c, k) = classify_instructions(&lp.body).fractions();
            addr_calc_fraction = Some(a);
            control_fraction = Some(c);
            compute_fraction = Some(k);
            let chain = dependency_chain(&lp.body, &self.latencies)?;
            longest_dep_chain = Some(chain.longest);
            ilp = Some(chain.ilp);
        }

        Ok(LoopFeatures {
            workload: lp.workload.clone(),
            loop_id: lp.id,
            function: lp.function.clone(),
            iterations: iters,
            static_instructions: n,
            relative_size,
            scalar_instructions,
            vector_instructions,
            fp_instructions,
            bytes_loaded: sum_over(&profile.bytes_loaded),
            bytes_stored: sum_over(&profile.bytes_stored),
            scalar_loads,
            scalar_stores,
            vector_loads,
            vector_stores,
            cache_miss_ratio,
            cache_miss_bytes,
            branch_mispred_rate: mispred_rate(lp, profile),
            addr_calc_fraction,
            control_fraction,
            compute_fraction,
            longest_dep_chain,
            ilp,
            pattern_strength,
            model,
            loop_time_share: loop_time_share(lp, profile, &self.latencies)?,
            load_patterns,
            store_patterns,
        })
    }

    /// Characterizes loops concurrently; results keep the input order.
    pub fn characterize_all(&self, loops: &[Loop], profile: &DynamicProfile) -> Result<Vec<LoopFeatures>, ConfigError> {
        loops.par_iter().map(|l| self.characterize(l, profile)).collect()
    }
}
