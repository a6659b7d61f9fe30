//! Single-level set-associative cache with LRU replacement and write-allocate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheConfig {
    pub total_size: u64,
    pub line_size: u64,
    pub associativity: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            total_size: 4096,
            line_size: 64,
            associativity: 4,
        }
    }
}

impl CacheConfig {
    pub fn new(total_size: u64, line_size: u64, associativity: u64) -> Result<Self, ConfigError> {
        let c = CacheConfig {
            total_size,
            line_size,
            associativity,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("total size", self.total_size),
            ("line size", self.line_size),
            ("associativity", self.associativity),
        ] {
            if !v.is_power_of_two() {
                return Err(ConfigError::Cache(format!("{name} {v} is not a power of two")));
            }
        }
        if self.line_size > self.total_size {
            return Err(ConfigError::Cache("line size exceeds total size".into()));
        }
        if self.associativity.saturating_mul(self.line_size) > self.total_size {
            return Err(ConfigError::Cache("associativity x line size exceeds total size".into()));
        }
        Ok(())
    }

    pub fn sets(&self) -> u64 {
        self.total_size / (self.line_size * self.associativity)
    }

    /// Short name used in feature column headers, e.g. `4096-64-4`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.total_size, self.line_size, self.associativity)
    }
}

impl fmt::Display for CacheConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `total:line:ways` (also accepts `-` separators).
impl FromStr for CacheConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split([':', '-']).collect();
        if parts.len() != 3 {
            return Err(ConfigError::Cache(format!("expected total:line:ways, got `{s}`")));
        }
        let n = |p: &str| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| ConfigError::Cache(format!("bad number `{p}` in `{s}`")))
        };
        CacheConfig::new(n(parts[0])?, n(parts[1])?, n(parts[2])?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Load,
    Store,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    pub address: u64,
    pub bytes: u32,
    pub kind: AccessKind,
}

/// Counts are per cache line touched; an access spanning two lines counts twice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub misses: u64,
    pub miss_bytes: u64,
    pub hits: u64,
}

impl CacheStats {
    pub fn accesses(&self) -> u64 {
        self.misses + self.hits
    }

    pub fn miss_ratio(&self) -> f64 {
        match self.accesses() {
            0 => 0.0,
            n => self.misses as f64 / n as f64,
        }
    }
}

pub fn simulate_cache(stream: &[Access], config: &CacheConfig) -> Result<CacheStats, ConfigError> {
    config.validate()?;
    let sets = config.sets() as usize;
    let ways = config.associativity as usize;
    // Per set: resident line tags with their last-use tick.
    let mut tags: Vec<Vec<(u64, u64)>> = vec![Vec::with_capacity(ways); sets];
    let mut stats = CacheStats::default();
    let mut tick = 0u64;
    for access in stream {
        let first = access.address / config.line_size;
        let last = (access.address + access.bytes.max(1) as u64 - 1) / config.line_size;
        for line in first..=last {
            tick += 1;
            let set = &mut tags[(line % sets as u64) as usize];
            if let Some(slot) = set.iter_mut().find(|(t, _)| *t == line) {
                slot.1 = tick;
                stats.hits += 1;
                continue;
            }
            stats.misses += 1;
            if set.len() < ways {
                set.push((line, tick));
            } else {
                let victim = set
                    .iter_mut()
                    .min_by_key(|(_, used)| *used)
                    .expect("non-empty set");
                *victim = (line, tick);
            }
        }
    }
    stats.miss_bytes = stats.misses * config.line_size;
    Ok(stats)
}
