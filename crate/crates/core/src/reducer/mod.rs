//! Loop features to a reduced workload set: cleaning, min-max normalization,
//! PCA, EM clustering, per-workload feature vectors, similarity, and
//! threshold-guarded elimination.

use serde::{Deserialize, Serialize};

use crate::characterizer::{ColumnRegistry, LoopFeatures, DEFAULT_COLUMNS};
use crate::error::Error;
use crate::toyvm::CacheConfig;

pub mod eliminate;
pub mod em;
pub mod matrix;
pub mod pca;
pub mod similarity;

pub use eliminate::{
    cluster_mass, eliminate, l1, random_subset_rank, Candidate, EliminationConfig, EliminationTrace, Iteration,
    PolicyRegistry, RemovalPolicy, RemoveHigher, RemoveLower, StopReason, SubsetRank,
};
pub use em::{em_cluster, fit_gmm, select_k, KScore, ClusterModel, EmConfig, Fit, Gmm, TieRule};
pub use matrix::{clean, normalize_minmax, CleaningReport, FeatureMatrix, MinMax, RowMeta, Stage};
pub use pca::{pca, PcaModel};
pub use similarity::{build_fvs, similarity, similarity_matrix, SimilarityMatrix, WorkloadFV};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceConfig {
    pub columns: Vec<String>,
    pub dominance: f64,
    pub min_share: f64,
    pub retention: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub folds: usize,
    pub threshold: f64,
    pub min_pair_similarity: f64,
    pub policy: String,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        ReduceConfig {
            columns: DEFAULT_COLUMNS.iter().map(|s| s.to_string()).collect(),
            dominance: 0.80,
            min_share: 0.01,
            retention: 0.99,
            k_min: 1,
            k_max: 10,
            folds: 10,
            threshold: 0.5,
            min_pair_similarity: 0.0,
            policy: "lower".into(),
        }
    }
}

impl ReduceConfig {
    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError::Invalid;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Invalid(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("dominance", self.dominance)?;
        unit("min-share", self.min_share)?;
        unit("threshold", self.threshold)?;
        unit("min-pair-similarity", self.min_pair_similarity)?;
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return Err(Invalid(format!("retention = {} outside (0, 1]", self.retention)));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Invalid(format!("K range {}..={} is empty", self.k_min, self.k_max)));
        }
        if self.folds < 2 {
            return Err(Invalid(format!("folds = {} below 2", self.folds)));
        }
        if self.columns.is_empty() {
            return Err(Invalid("no feature columns selected".into()));
        }
        Ok(())
    }
}

/// Every intermediate of one reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub raw: FeatureMatrix,
    pub cleaned: FeatureMatrix,
    pub cleaning: CleaningReport,
    pub normalized: FeatureMatrix,
    pub minmax: MinMax,
    pub pca: PcaModel,
    pub projected: FeatureMatrix,
    pub clusters: ClusterModel,
    pub fvs: Vec<WorkloadFV>,
    pub similarity: SimilarityMatrix,
    pub trace: EliminationTrace,
    pub warnings: Vec<String>,
}

impl Reduction {
    /// `k` and `n` of the raw matrix, rows removed `x`, dimensions dropped `y`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.raw.n_rows(), self.raw.n_cols(), self.cleaning.x(), self.pca.dropped())
    }
}

pub fn reduce(
    features: &[LoopFeatures],
    caches: &[CacheConfig],
    cfg: &ReduceConfig,
    seed: u64,
) -> Result<Reduction, Error> {
    cfg.validate()?;
    let policies = PolicyRegistry::default();
    let policy = policies.get(&cfg.policy)?;
    let columns = ColumnRegistry::new(caches).resolve_all(&cfg.columns)?;
    let raw = FeatureMatrix::from_features(features, &columns);
    let (cleaned, cleaning) = clean(&raw, cfg.dominance, cfg.min_share)?;
    let (normalized, minmax) = normalize_minmax(&cleaned);
    let (pca_model, projected) = pca(&normalized, cfg.retention)?;
    let em_cfg = EmConfig {
        k_min: cfg.k_min,
        k_max: cfg.k_max,
        folds: cfg.folds,
        seed,
        ..EmConfig::default()
    };
    let clusters = em_cluster(&projected.values, &em_cfg)?;
    let (fvs, mut warnings) = build_fvs(&projected.rows, &clusters.assignments, clusters.k);
    warnings.extend(clusters.warnings.iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }
    let sim = similarity_matrix(&fvs)?;
    let elim_cfg = EliminationConfig {
        threshold: cfg.threshold,
        min_pair_similarity: cfg.min_pair_similarity,
    };
    let trace = eliminate(&sim, &fvs, &elim_cfg, policy)?;
    Ok(Reduction {
        raw,
        cleaned,
        cleaning,
        normalized,
        minmax,
        pca: pca_model,
        projected,
        clusters,
        fvs,
        similarity: sim,
        trace,
        warnings,
    })
}
