//! Loop-centric workload characterization and redundancy elimination.
//!
//! Pipeline: profile a workload ([`toyvm`] or [`profile`] import), find its
//! linear loops by execution-count ratio ([`loopfinder`]), characterize each
//! loop ([`characterizer`]), cluster loops and drop redundant workloads
//! ([`reducer`]), and synthesize mix-equivalent micro-benchmarks ([`synth`]).

pub mod characterizer;
pub mod error;
pub mod loopfinder;
pub mod pipeline;
pub mod profile;
pub mod reducer;
pub mod report;
pub mod synth;
pub mod toyvm;

pub use error::{Error, Result};
