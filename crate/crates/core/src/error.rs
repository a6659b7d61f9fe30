use std::path::PathBuf;

use thiserror::Error;

use crate::toyvm::Opcode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("program rejected: {0}")]
    Invalid(String),
    #[error("execution exceeded {limit} dynamic instructions in function `{function}`")]
    Truncated { function: String, limit: u64 },
    #[error("memory fault at instruction {instruction}: address {address} (+{width} bytes) outside data of {data_size} bytes")]
    MemoryFault {
        instruction: usize,
        address: i128,
        width: u32,
        data_size: u64,
    },
    #[error("call depth exceeded {0}")]
    StackOverflow(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cache configuration: {0}")]
    Cache(String),
    #[error("no latency for opcode `{0}`")]
    MissingLatency(Opcode),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("infeasible workload spec: {0}")]
pub struct SpecError(pub String);

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed `{record}` record: {message}")]
    Parse {
        line: usize,
        record: String,
        message: String,
    },
    #[error("unsupported profile version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("unsupported callgrind format: {0}")]
    UnsupportedFormat(String),
    #[error("event `{event}` not in profile; available events: {}", available.join(", "))]
    UnknownEvent {
        event: String,
        available: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoopError {
    #[error("function `{function}` has call count 0 but instruction {instruction} executed {aec} times")]
    Inconsistent {
        function: String,
        instruction: usize,
        aec: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReduceError {
    #[error("no loops survive cleaning (dominance {dominance}, min-share {min_share}); relax the thresholds")]
    EmptyAfterCleaning { dominance: f64, min_share: f64 },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("no loops to synthesize")]
    NoLoops,
    #[error("loop {loop_id} body has {len} instructions, above the limit of {limit}")]
    BodyTooLong {
        loop_id: String,
        len: usize,
        limit: usize,
    },
    #[error("loop {loop_id} contains instruction {instruction} with no executable encoding")]
    Unsupported { loop_id: String, instruction: usize },
    #[error("no profile for workload `{0}`")]
    MissingProfile(String),
    #[error("buffer of {buffer} bytes cannot hold a {width}-byte access")]
    BufferTooSmall { buffer: u64, width: u32 },
    #[error("mix mismatch for `{opcode}` in {scope}: original {original}, synthesized {synthesized}")]
    Verification {
        scope: String,
        opcode: Opcode,
        original: u64,
        synthesized: u64,
    },
    #[error(transparent)]
    Vm(#[from] VmError),
}

/// Any pipeline failure, tagged with the stage that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("toyvm: {0}")]
    Asm(#[from] AsmError),
    #[error("toyvm: {0}")]
    Vm(#[from] VmError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("generator: {0}")]
    Spec(#[from] SpecError),
    #[error("profile: {0}")]
    Profile(#[from] ProfileError),
    #[error("loopfinder: {0}")]
    Loop(#[from] LoopError),
    #[error("reducer: {0}")]
    Reduce(#[from] ReduceError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("i/o: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Asm(_) | Error::Profile(_) => 2,
            Error::Synth(SynthError::Verification { .. }) => 4,
            Error::Io { .. } => 5,
            Error::Config(_) => 6,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
