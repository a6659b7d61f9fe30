use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::matrix::RowMeta;
use crate::error::ReduceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFV {
    pub workload: String,
    pub vector: Vec<f64>,
    /// Surviving loops of the workload per cluster.
    pub loops: Vec<usize>,
}

impl WorkloadFV {
    pub fn total_loops(&self) -> usize {
        self.loops.iter().sum()
    }
}

/// Normalized time per cluster for each workload, ordered by name.
pub fn build_fvs(rows: &[RowMeta], assignments: &[usize], k: usize) -> (Vec<WorkloadFV>, Vec<String>) {
    let mut acc: BTreeMap<&str, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for (row, &c) in rows.iter().zip(assignments) {
        let e = acc.entry(&row.workload).or_insert_with(|| (vec![0.0; k], vec![0; k]));
        e.0[c] += row.time_share;
        e.1[c] += 1;
    }
    let mut warnings = Vec::new();
    let fvs = acc
        .into_iter()
        .filter_map(|(w, (v, loops))| {
            let total: f64 = v.iter().sum();
            if !(total > 0.0) {
                warnings.push(format!("workload `{w}` has no surviving loop time; excluded"));
                return None;
            }
            Some(WorkloadFV {
                workload: w.to_string(),
                vector: v.iter().map(|x| x / total).collect(),
                loops,
            })
        })
        .collect();
    (fvs, warnings)
}

pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64, ReduceError> {
    if a.len() != b.len() {
        return Err(ReduceError::Dimension(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub workloads: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.workloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workloads.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Tab-separated with a header row and a header column.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("workload");
        for w in &self.workloads {
            out.push('\t');
            out.push_str(w);
        }
        out.push('\n');
        for (w, row) in self.workloads.iter().zip(&self.values) {
            out.push_str(w);
            for v in row {
                let _ = write!(out, "\t{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn similarity_matrix(fvs: &[WorkloadFV]) -> Result<SimilarityMatrix, ReduceError> {
    let n = fvs.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = similarity(&fvs[i].vector, &fvs[j].vector)?;
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(SimilarityMatrix {
        workloads: fvs.iter().map(|f| f.workload.clone()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(w: &str, share: f64) -> RowMeta {
        RowMeta {
            workload: w.into(),
            loop_id: 0,
            time_share: share,
            workload_loop_share: 1.0,
        }
    }

    #[test]
    fn fv_examples() {
        let (fvs, _) = build_fvs(&[row("a", 0.3)], &[2], 6);
        assert_eq!(fvs[0].vector, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        // Shares 0.48 and 0.32 are 60% and 40% of the loop time.
        let (fvs, _) = build_fvs(&[row("b", 0.48), row("b", 0.32)], &[1, 3], 5);
        let expect = [0.0, 0.6, 0.0, 0.4, 0.0];
        for (x, e) in fvs[0].vector.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12);
        }
        assert_eq!(fvs[0].loops, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn zero_time_workload_excluded() {
        let (fvs, warnings) = build_fvs(&[row("a", 0.0), row("b", 1.0)], &[0, 0], 1);
        assert_eq!(fvs.len(), 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn scores() {
        assert_eq!(similarity(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(similarity(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(similarity(&[0.5, 0.5, 0.0], &[0.5, 0.0, 0.5]).unwrap(), 0.25);
        assert!(matches!(similarity(&[1.0], &[1.0, 0.0]), Err(ReduceError::Dimension(1, 2))));
    }
}
