//! Named feature columns, resolved at runtime from configuration.

use super::{LoopFeatures, Model};
use crate::error::ConfigError;
use crate::toyvm::CacheConfig;

/// Columns entering the reducer by default.
pub const DEFAULT_COLUMNS: [&str; 14] = [
    "iterations",
    "static-instructions",
    "relative-size",
    "scalar-instructions",
    "vector-instructions",
    "fp-instructions",
    "bytes-loaded",
    "bytes-stored",
    "scalar-loads",
    "scalar-stores",
    "vector-loads",
    "vector-stores",
    "cache-miss-ratio",
    "branch-mispred-rate",
];

pub trait FeatureColumn: Send + Sync {
    fn name(&self) -> String;
    /// `None` when the feature is unavailable for this loop.
    fn extract(&self, f: &LoopFeatures) -> Option<f64>;
}

struct Field {
    name: &'static str,
    get: fn(&LoopFeatures) -> Option<f64>,
}

impl FeatureColumn for Field {
    fn name(&self) -> String {
        self.name.to_string()
    }

    fn extract(&self, f: &LoopFeatures) -> Option<f64> {
        (self.get)(f)
    }
}

struct CacheMiss {
    index: usize,
    label: String,
}

impl FeatureColumn for CacheMiss {
    fn name(&self) -> String {
        format!("cache-miss-ratio@{}", self.label)
    }

    fn extract(&self, f: &LoopFeatures) -> Option<f64> {
        f.cache_miss_ratio.get(self.index).copied().flatten()
    }
}

struct ModelIndicator(Model);

impl FeatureColumn for ModelIndicator {
    fn name(&self) -> String {
        format!("model-{}", self.0)
    }

    fn extract(&self, f: &LoopFeatures) -> Option<f64> {
        f.model.map(|m| if m == self.0 { 1.0 } else { 0.0 })
    }
}

fn n(v: Option<u64>) -> Option<f64> {
    v.map(|x| x as f64)
}

const FIELDS: &[Field] = &[
    Field { name: "iterations", get: |f| Some(f.iterations as f64) },
    Field { name: "static-instructions", get: |f| Some(f.static_instructions as f64) },
    Field { name: "relative-size", get: |f| Some(f.relative_size) },
    Field { name: "scalar-instructions", get: |f| n(f.scalar_instructions) },
    Field { name: "vector-instructions", get: |f| n(f.vector_instructions) },
    Field { name: "fp-instructions", get: |f| n(f.fp_instructions) },
    Field { name: "bytes-loaded", get: |f| n(f.bytes_loaded) },
    Field { name: "bytes-stored", get: |f| n(f.bytes_stored) },
    Field { name: "scalar-loads", get: |f| n(f.scalar_loads) },
    Field { name: "scalar-stores", get: |f| n(f.scalar_stores) },
    Field { name: "vector-loads", get: |f| n(f.vector_loads) },
    Field { name: "vector-stores", get: |f| n(f.vector_stores) },
    Field { name: "branch-mispred-rate", get: |f| f.branch_mispred_rate },
    Field { name: "addr-calc-fraction", get: |f| f.addr_calc_fraction },
    Field { name: "control-fraction", get: |f| f.control_fraction },
    Field { name: "compute-fraction", get: |f| f.compute_fraction },
    Field { name: "longest-dep-chain", get: |f| n(f.longest_dep_chain) },
    Field { name: "ilp", get: |f| f.ilp },
    Field { name: "pattern-strength", get: |f| f.pattern_strength },
    Field { name: "loop-time-share", get: |f| Some(f.loop_time_share) },
];

/// Resolves column names against the configured caches.
pub struct ColumnRegistry<'a> {
    caches: &'a [CacheConfig],
}

impl<'a> ColumnRegistry<'a> {
    pub fn new(caches: &'a [CacheConfig]) -> Self {
        ColumnRegistry { caches }
    }

    /// Every column name this registry can resolve.
    pub fn available(&self) -> Vec<String> {
        let mut names: Vec<String> = FIELDS.iter().map(|f| f.name.to_string()).collect();
        names.push("cache-miss-ratio".into());
        names.extend(self.caches.iter().map(|c| format!("cache-miss-ratio@{}", c.label())));
        names.extend(Model::ALL.iter().map(|m| format!("model-{m}")));
        names
    }

    /// `cache-miss-ratio` alone means the first configured cache.
    pub fn resolve(&self, name: &str) -> Result<Box<dyn FeatureColumn + 'static>, ConfigError> {
        if let Some(field) = FIELDS.iter().find(|f| f.name == name) {
            return Ok(Box::new(Field {
                name: field.name,
                get: field.get,
            }));
        }
        if let Some(rest) = name.strip_prefix("cache-miss-ratio") {
            let index = if rest.is_empty() {
                (!self.caches.is_empty()).then_some(0)
            } else {
                rest.strip_prefix('@')
                    .and_then(|label| self.caches.iter().position(|c| c.label() == label))
            };
            return index
                .map(|index| {
                    Box::new(CacheMiss {
                        index,
                        label: self.caches[index].label(),
                    }) as Box<dyn FeatureColumn>
                })
                .ok_or_else(|| ConfigError::Invalid(format!("no cache configured for column `{name}`")));
        }
        if let Some(model) = name.strip_prefix("model-").and_then(|m| m.parse::<Model>().ok()) {
            return Ok(Box::new(ModelIndicator(model)));
        }
        Err(ConfigError::Invalid(format!(
            "unknown feature column `{name}`; available: {}",
            self.available().join(", ")
        )))
    }

    pub fn resolve_all<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Box<dyn FeatureColumn>>, ConfigError> {
        names.iter().map(|n| self.resolve(n.as_ref())).collect()
    }
}
