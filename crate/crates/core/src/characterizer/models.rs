//! Computation-model labels from access-stream evidence.
//!
//! Rules are trait objects tried in registry order; the first match wins.
//! The default order is stencil, transpose, histogram, streaming.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::patterns::AccessPattern;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Stencil,
    Transpose,
    Histogram,
    Streaming,
    None,
}

impl Model {
    pub const ALL: [Model; 5] = [
        Model::Stencil,
        Model::Transpose,
        Model::Histogram,
        Model::Streaming,
        Model::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::Stencil => "stencil",
            Model::Transpose => "transpose",
            Model::Histogram => "histogram",
            Model::Streaming => "streaming",
            Model::None => "none",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

/// What the rules look at.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamEvidence {
    /// Constant stride of each load instruction's own stream, if any.
    pub load_strides: Vec<Option<i64>>,
    pub store_strides: Vec<Option<i64>>,
    /// Patterns of the merged load and store streams.
    pub load_patterns: Vec<AccessPattern>,
    pub store_patterns: Vec<AccessPattern>,
    /// Coverage of the merged store stream by its patterns.
    pub store_coverage: f64,
}

impl StreamEvidence {
    fn const_loads(&self) -> impl Iterator<Item = i64> + '_ {
        self.load_strides.iter().flatten().copied()
    }

    fn const_stores(&self) -> impl Iterator<Item = i64> + '_ {
        self.store_strides.iter().flatten().copied()
    }
}

/// Constant nonzero stride over at least three deltas.
pub fn constant_stride(addresses: &[u64]) -> Option<i64> {
    if addresses.len() < 4 {
        return None;
    }
    let d = addresses[1].wrapping_sub(addresses[0]) as i64;
    let uniform = addresses
        .windows(2)
        .all(|w| w[1].wrapping_sub(w[0]) as i64 == d);
    (uniform && d != 0).then_some(d)
}

pub trait ModelRule: Send + Sync {
    fn model(&self) -> Model;
    fn matches(&self, e: &StreamEvidence) -> bool;
}

/// Neighbourhood loads (a pattern with at least three distinct deltas) and a
/// constant-stride store.
pub struct StencilRule;

impl ModelRule for StencilRule {
    fn model(&self) -> Model {
        Model::Stencil
    }

    fn matches(&self, e: &StreamEvidence) -> bool {
        e.load_patterns.iter().any(|p| p.distinct_deltas() >= 3) && e.const_stores().next().is_some()
    }
}

/// One stream with stride `w`, the other with stride `k * w`, `|k| > 1`.
pub struct TransposeRule;

impl ModelRule for TransposeRule {
    fn model(&self) -> Model {
        Model::Transpose
    }

    fn matches(&self, e: &StreamEvidence) -> bool {
        let multiple = |a: i64, b: i64| b % a == 0 && (b / a).abs() > 1;
        e.const_loads()
            .any(|l| e.const_stores().any(|s| multiple(l, s) || multiple(s, l)))
    }
}

/// Sequential reads driving stores that show almost no regular pattern.
pub struct HistogramRule {
    pub max_store_coverage: f64,
}

impl ModelRule for HistogramRule {
    fn model(&self) -> Model {
        Model::Histogram
    }

    fn matches(&self, e: &StreamEvidence) -> bool {
        e.const_loads().next().is_some()
            && !e.store_strides.is_empty()
            && e.store_coverage < self.max_store_coverage
    }
}

/// Several constant-stride input streams and a constant-stride output.
pub struct StreamingRule;

impl ModelRule for StreamingRule {
    fn model(&self) -> Model {
        Model::Streaming
    }

    fn matches(&self, e: &StreamEvidence) -> bool {
        e.const_loads().count() >= 2 && e.const_stores().next().is_some()
    }
}

pub struct ModelRegistry {
    rules: Vec<Box<dyn ModelRule>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        ModelRegistry {
            rules: vec![
                Box::new(StencilRule),
                Box::new(TransposeRule),
                Box::new(HistogramRule {
                    max_store_coverage: 0.2,
                }),
                Box::new(StreamingRule),
            ],
        }
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry { rules: Vec::new() }
    }

    /// Appends a rule at the lowest precedence.
    pub fn register(&mut self, rule: Box<dyn ModelRule>) {
        self.rules.push(rule);
    }

    pub fn order(&self) -> Vec<Model> {
        self.rules.iter().map(|r| r.model()).collect()
    }

    pub fn detect(&self, e: &StreamEvidence) -> Model {
        self.rules
            .iter()
            .find(|r| r.matches(e))
            .map(|r| r.model())
            .unwrap_or(Model::None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characterizer::patterns::StreamKind;

    fn pattern(ds: &[i64]) -> AccessPattern {
        AccessPattern {
            kind: StreamKind::Load,
            pattern: ds.to_vec(),
            occurrences: 3,
            start: 0,
            coverage: 1.0,
        }
    }

    #[test]
    fn precedence_and_rules() {
        let reg = ModelRegistry::default();
        assert_eq!(reg.detect(&StreamEvidence::default()), Model::None);
        let transpose = StreamEvidence {
            load_strides: vec![Some(8)],
            store_strides: vec![Some(64)],
            store_coverage: 1.0,
            ..Default::default()
        };
        assert_eq!(reg.detect(&transpose), Model::Transpose);
        let stencil = StreamEvidence {
            load_patterns: vec![pattern(&[504, 16, 504, -1016])],
            ..transpose.clone()
        };
        assert_eq!(reg.detect(&stencil), Model::Stencil);
        let histogram = StreamEvidence {
            load_strides: vec![Some(8), None],
            store_strides: vec![None],
            store_coverage: 0.0,
            ..Default::default()
        };
        assert_eq!(reg.detect(&histogram), Model::Histogram);
        let streaming = StreamEvidence {
            load_strides: vec![Some(8), Some(8)],
            store_strides: vec![Some(8)],
            store_coverage: 1.0,
            ..Default::default()
        };
        assert_eq!(reg.detect(&streaming), Model::Streaming);
    }

    #[test]
    fn strides() {
        assert_eq!(constant_stride(&[0, 8, 16, 24]), Some(8));
        assert_eq!(constant_stride(&[24, 16, 8, 0]), Some(-8));
        assert_eq!(constant_stride(&[0, 8, 16]), None);
        assert_eq!(constant_stride(&[5, 5, 5, 5]), None);
    }
}
