//! Greedy removal of redundant workloads, guarded by a per-cluster floor.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::similarity::{SimilarityMatrix, WorkloadFV};
use crate::error::ReduceError;

/// One member of the most similar pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate<'a> {
    pub name: &'a str,
    /// Mean similarity against the other remaining workloads.
    pub aggregate: f64,
    pub loops: usize,
}

/// Decides which member of the chosen pair leaves.
pub trait RemovalPolicy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Ordering on the aggregate: `Less` means `a` is removed.
    fn compare_aggregate(&self, a: f64, b: f64) -> Ordering;

    /// Index (0 or 1) of the member to remove. Ties fall back to fewer
    /// surviving loops, then the lexicographically greater name.
    fn choose(&self, pair: [&Candidate<'_>; 2]) -> usize {
        let [a, b] = pair;
        match self.compare_aggregate(a.aggregate, b.aggregate) {
            Ordering::Less => 0,
            Ordering::Greater => 1,
            Ordering::Equal => match a.loops.cmp(&b.loops) {
                Ordering::Less => 0,
                Ordering::Greater => 1,
                Ordering::Equal => usize::from(a.name < b.name),
            },
        }
    }
}

/// Removes the member with the lower aggregate similarity.
pub struct RemoveLower;

impl RemovalPolicy for RemoveLower {
    fn name(&self) -> &'static str {
        "lower"
    }

    fn compare_aggregate(&self, a: f64, b: f64) -> Ordering {
        a.total_cmp(&b)
    }
}

/// Removes the member with the higher aggregate similarity.
pub struct RemoveHigher;

impl RemovalPolicy for RemoveHigher {
    fn name(&self) -> &'static str {
        "higher"
    }

    fn compare_aggregate(&self, a: f64, b: f64) -> Ordering {
        b.total_cmp(&a)
    }
}

pub struct PolicyRegistry {
    policies: Vec<Box<dyn RemovalPolicy>>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        PolicyRegistry {
            policies: vec![Box::new(RemoveLower), Box::new(RemoveHigher)],
        }
    }
}

impl PolicyRegistry {
    pub fn register(&mut self, p: Box<dyn RemovalPolicy>) {
        self.policies.push(p);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.policies.iter().map(|p| p.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn RemovalPolicy, ReduceError> {
        self.policies
            .iter()
            .find(|p| p.name() == name)
            .map(|p| p.as_ref())
            .ok_or_else(|| {
                ReduceError::Invalid(format!(
                    "unknown removal policy `{name}`; available: {}",
                    self.names().join(", ")
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ThresholdBreachRollback,
    SingleWorkloadLeft,
    NoPairAboveMin,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::ThresholdBreachRollback => "threshold-breach-rollback",
            StopReason::SingleWorkloadLeft => "single-workload-left",
            StopReason::NoPairAboveMin => "no-pair-above-min",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub pair: (String, String),
    pub pair_similarity: f64,
    pub aggregates: (f64, f64),
    pub eliminated: String,
    /// Surviving loops per cluster after the removal.
    pub cluster_counts: Vec<usize>,
    /// The removal breached the floor and was undone.
    pub rolled_back: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationTrace {
    pub policy: String,
    pub threshold: f64,
    pub initial_counts: Vec<usize>,
    pub floor: Vec<usize>,
    pub iterations: Vec<Iteration>,
    pub stop: StopReason,
    pub final_set: Vec<String>,
}

impl EliminationTrace {
    pub fn eliminated(&self) -> Vec<&str> {
        self.iterations
            .iter()
            .filter(|i| !i.rolled_back)
            .map(|i| i.eliminated.as_str())
            .collect()
    }

    /// Cluster sizes after each iteration, one row per iteration.
    pub fn cluster_size_table(&self) -> String {
        let mut out = String::from("iteration\teliminated\trolled-back");
        for c in 0..self.initial_counts.len() {
            let _ = write!(out, "\tcluster{c}");
        }
        out.push('\n');
        for (i, it) in self.iterations.iter().enumerate() {
            let _ = write!(out, "{}\t{}\t{}", i + 1, it.eliminated, it.rolled_back);
            for c in &it.cluster_counts {
                let _ = write!(out, "\t{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn log(&self) -> String {
        let mut out = format!(
            "policy\t{}\nthreshold\t{}\ninitial\t{:?}\nfloor\t{:?}\n",
            self.policy, self.threshold, self.initial_counts, self.floor
        );
        for (i, it) in self.iterations.iter().enumerate() {
            let _ = writeln!(
                out,
                "iteration {}\tpair {} {}\tsimilarity {:.6}\taggregates {:.6} {:.6}\tremoved {}{}\tclusters {:?}",
                i + 1,
                it.pair.0,
                it.pair.1,
                it.pair_similarity,
                it.aggregates.0,
                it.aggregates.1,
                it.eliminated,
                if it.rolled_back { " (re-inserted)" } else { "" },
                it.cluster_counts
            );
        }
        let _ = writeln!(out, "stop\t{}", self.stop.name());
        let _ = writeln!(out, "final\t{}", self.final_set.join(" "));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationConfig {
    pub threshold: f64,
    pub min_pair_similarity: f64,
}

impl Default for EliminationConfig {
    fn default() -> Self {
        EliminationConfig {
            threshold: 0.5,
            min_pair_similarity: 0.0,
        }
    }
}

/// `fvs` must be in the same order as `sim.workloads`.
pub fn eliminate(
    sim: &SimilarityMatrix,
    fvs: &[WorkloadFV],
    cfg: &EliminationConfig,
    policy: &dyn RemovalPolicy,
) -> Result<EliminationTrace, ReduceError> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(ReduceError::Invalid(format!("threshold {} outside [0, 1]", cfg.threshold)));
    }
    if fvs.len() != sim.len() || fvs.iter().zip(&sim.workloads).any(|(f, w)| &f.workload != w) {
        return Err(ReduceError::Invalid("feature vectors do not match the similarity matrix".into()));
    }
    let k = fvs.first().map_or(0, |f| f.loops.len());
    let mut counts = vec![0usize; k];
    for f in fvs {
        if f.loops.len() != k {
            return Err(ReduceError::Dimension(k, f.loops.len()));
        }
        for (c, n) in f.loops.iter().enumerate() {
            counts[c] += n;
        }
    }
    let initial_counts = counts.clone();
    let floor: Vec<usize> = initial_counts
        .iter()
        .map(|&n| (cfg.threshold * n as f64 - 1e-9).ceil().max(0.0) as usize)
        .collect();
    let n = sim.len();
    let mut alive = vec![true; n];
    let mut iterations = Vec::new();

    let stop = loop {
        let remaining: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
        if remaining.len() <= 1 {
            break StopReason::SingleWorkloadLeft;
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for (a, &i) in remaining.iter().enumerate() {
            for &j in &remaining[a + 1..] {
                let s = sim.get(i, j);
                if best.is_none_or(|b| s > b.2) {
                    best = Some((i, j, s));
                }
            }
        }
        let (i, j, s) = best.expect("two workloads remain");
        if s <= cfg.min_pair_similarity {
            break StopReason::NoPairAboveMin;
        }
        let aggregate = |x: usize| {
            let others: Vec<usize> = remaining.iter().copied().filter(|&o| o != x).collect();
            others.iter().map(|&o| sim.get(x, o)).sum::<f64>() / others.len() as f64
        };
        let ca = Candidate {
            name: &sim.workloads[i],
            aggregate: aggregate(i),
            loops: fvs[i].total_loops(),
        };
        let cb = Candidate {
            name: &sim.workloads[j],
            aggregate: aggregate(j),
            loops: fvs[j].total_loops(),
        };
        let victim = if policy.choose([&ca, &cb]) == 0 { i } else { j };
        let after: Vec<usize> = counts.iter().zip(&fvs[victim].loops).map(|(c, l)| c - l).collect();
        let breach = after.iter().zip(&floor).any(|(a, f)| a < f);
        iterations.push(Iteration {
            pair: (ca.name.to_string(), cb.name.to_string()),
            pair_similarity: s,
            aggregates: (ca.aggregate, cb.aggregate),
            eliminated: sim.workloads[victim].clone(),
            cluster_counts: after.clone(),
            rolled_back: breach,
        });
        if breach {
            break StopReason::ThresholdBreachRollback;
        }
        alive[victim] = false;
        counts = after;
    };

    Ok(EliminationTrace {
        policy: policy.name().to_string(),
        threshold: cfg.threshold,
        initial_counts,
        floor,
        iterations,
        stop,
        final_set: (0..n).filter(|&i| alive[i]).map(|i| sim.workloads[i].clone()).collect(),
    })
}

/// Cluster-time mass of a set: the mean of its members' feature vectors.
pub fn cluster_mass(fvs: &[WorkloadFV], members: &[usize]) -> Vec<f64> {
    let k = fvs.first().map_or(0, |f| f.vector.len());
    let mut m = vec![0.0; k];
    for &i in members {
        for (c, v) in fvs[i].vector.iter().enumerate() {
            m[c] += v;
        }
    }
    let n = members.len().max(1) as f64;
    m.iter().map(|x| x / n).collect()
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetRank {
    pub heuristic_distance: f64,
    pub random_distances: Vec<f64>,
    /// Fraction of random subsets strictly closer to the full set.
    pub fraction_better: f64,
}

/// Compares the L1 distance of `chosen`'s cluster mass to the full set's
/// against `trials` random subsets of the same size.
pub fn random_subset_rank(fvs: &[WorkloadFV], chosen: &[String], trials: usize, seed: u64) -> SubsetRank {
    let all: Vec<usize> = (0..fvs.len()).collect();
    let reference = cluster_mass(fvs, &all);
    let members: Vec<usize> = fvs
        .iter()
        .enumerate()
        .filter(|(_, f)| chosen.contains(&f.workload))
        .map(|(i, _)| i)
        .collect();
    let heuristic_distance = l1(&cluster_mass(fvs, &members), &reference);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_distances: Vec<f64> = (0..trials)
        .map(|_| {
            let pick = sample(&mut rng, fvs.len(), members.len()).into_vec();
            l1(&cluster_mass(fvs, &pick), &reference)
        })
        .collect();
    let better = random_distances.iter().filter(|d| **d < heuristic_distance - 1e-12).count();
    SubsetRank {
        heuristic_distance,
        fraction_better: if trials == 0 { 0.0 } else { better as f64 / trials as f64 },
        random_distances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reducer::similarity::similarity_matrix;

    fn fv(name: &str, vector: &[f64], loops: &[usize]) -> WorkloadFV {
        WorkloadFV {
            workload: name.into(),
            vector: vector.to_vec(),
            loops: loops.to_vec(),
        }
    }

    #[test]
    fn policy_ties() {
        let a = Candidate { name: "a", aggregate: 0.5, loops: 2 };
        let b = Candidate { name: "b", aggregate: 0.5, loops: 2 };
        assert_eq!(RemoveLower.choose([&a, &b]), 1);
        let c = Candidate { name: "c", aggregate: 0.5, loops: 1 };
        assert_eq!(RemoveLower.choose([&a, &c]), 1);
        let d = Candidate { name: "d", aggregate: 0.7, loops: 1 };
        assert_eq!(RemoveLower.choose([&a, &d]), 0);
        assert_eq!(RemoveHigher.choose([&a, &d]), 1);
        assert!(PolicyRegistry::default().get("sideways").is_err());
    }

    #[test]
    fn threshold_one_eliminates_nothing() {
        let fvs = vec![
            fv("a", &[1.0, 0.0], &[2, 0]),
            fv("b", &[1.0, 0.0], &[2, 0]),
            fv("c", &[0.0, 1.0], &[0, 2]),
        ];
        let sim = similarity_matrix(&fvs).unwrap();
        let cfg = EliminationConfig { threshold: 1.0, ..Default::default() };
        let t = eliminate(&sim, &fvs, &cfg, &RemoveLower).unwrap();
        assert_eq!(t.final_set.len(), 3);
        assert_eq!(t.stop, StopReason::ThresholdBreachRollback);
        assert!(t.iterations.iter().all(|i| i.rolled_back));
    }

    #[test]
    fn stops_when_no_pair_is_similar() {
        let fvs = vec![fv("a", &[1.0, 0.0], &[1, 0]), fv("b", &[0.0, 1.0], &[0, 1])];
        let sim = similarity_matrix(&fvs).unwrap();
        let t = eliminate(&sim, &fvs, &EliminationConfig::default(), &RemoveLower).unwrap();
        assert_eq!(t.stop, StopReason::NoPairAboveMin);
        assert!(t.iterations.is_empty());
    }
}
