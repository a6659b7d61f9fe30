//! Toy register machine: ISA, text format, interpreter, hardware models and
//! the synthetic workload generator.

pub mod asm;
pub mod branch;
pub mod cache;
pub mod generator;
pub mod interp;
pub mod isa;
pub mod latency;

pub use branch::{count_mispredictions, simulate_branches, TwoBitCounter};
pub use cache::{simulate_cache, Access, AccessKind, CacheConfig, CacheStats};
pub use generator::{
    generate_workload, halving_suite, GeneratorParams, LoopShape, LoopSpec, Mix, PatternKind,
    WorkloadSpec,
};
pub use interp::{execute, execute_with, ExecConfig};
pub use isa::*;
pub use latency::LatencyTable;
