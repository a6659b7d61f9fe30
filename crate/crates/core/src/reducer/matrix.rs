use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::characterizer::{FeatureColumn, LoopFeatures};
use crate::error::ReduceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Raw,
    Cleaned,
    Normalized,
    Projected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub workload: String,
    pub loop_id: usize,
    pub time_share: f64,
    /// Sum of time shares over all of the workload's loops, before cleaning.
    pub workload_loop_share: f64,
}

impl RowMeta {
    pub fn key(&self) -> String {
        format!("{}#{}", self.workload, self.loop_id)
    }
}

/// Loops by features. In the raw stage NaN marks an unavailable value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub stage: Stage,
    pub rows: Vec<RowMeta>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_features(features: &[LoopFeatures], columns: &[Box<dyn FeatureColumn>]) -> FeatureMatrix {
        let mut loop_share: BTreeMap<&str, f64> = BTreeMap::new();
        for f in features {
            *loop_share.entry(&f.workload).or_default() += f.loop_time_share;
        }
        FeatureMatrix {
            stage: Stage::Raw,
            rows: features
                .iter()
                .map(|f| RowMeta {
                    workload: f.workload.clone(),
                    loop_id: f.loop_id,
                    time_share: f.loop_time_share,
                    workload_loop_share: loop_share[f.workload.as_str()],
                })
                .collect(),
            columns: columns.iter().map(|c| c.name()).collect(),
            values: features
                .iter()
                .map(|f| columns.iter().map(|c| c.extract(f).unwrap_or(f64::NAN)).collect())
                .collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |r| r[j])
    }

    fn keep_rows(&mut self, keep: &[bool]) {
        let mut k = keep.iter();
        self.rows.retain(|_| *k.next().expect("mask length"));
        let mut k = keep.iter();
        self.values.retain(|_| *k.next().expect("mask length"));
    }

    /// Tab-separated table: workload, loop, then one column per feature.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("workload\tloop");
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (meta, row) in self.rows.iter().zip(&self.values) {
            let _ = write!(out, "{}\t{}", meta.workload, meta.loop_id);
            for v in row {
                if v.is_nan() {
                    out.push_str("\tNA");
                } else {
                    let _ = write!(out, "\t{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    /// Workloads below the loop-dominance threshold.
    pub non_dominant_workloads: Vec<String>,
    pub removed_phase1: usize,
    pub removed_phase2: usize,
    /// Columns unavailable for every remaining loop.
    pub dropped_columns: Vec<String>,
    /// Loops still missing some feature after dropping those columns.
    pub removed_unavailable: usize,
}

impl CleaningReport {
    /// Total rows removed.
    pub fn x(&self) -> usize {
        self.removed_phase1 + self.removed_phase2 + self.removed_unavailable
    }
}

/// Drops loops of non-loop-dominant workloads, then loops with a small time
/// share, then unavailable columns and the rows still missing values.
pub fn clean(
    matrix: &FeatureMatrix,
    dominance: f64,
    min_share: f64,
) -> Result<(FeatureMatrix, CleaningReport), ReduceError> {
    let mut m = matrix.clone();
    let mut report = CleaningReport::default();

    let keep: Vec<bool> = m.rows.iter().map(|r| r.workload_loop_share >= dominance).collect();
    for r in m.rows.iter().filter(|r| r.workload_loop_share < dominance) {
        if !report.non_dominant_workloads.contains(&r.workload) {
            report.non_dominant_workloads.push(r.workload.clone());
        }
    }
    report.removed_phase1 = keep.iter().filter(|k| !**k).count();
    m.keep_rows(&keep);

    let keep: Vec<bool> = m.rows.iter().map(|r| r.time_share >= min_share).collect();
    report.removed_phase2 = keep.iter().filter(|k| !**k).count();
    m.keep_rows(&keep);

    let keep_cols: Vec<bool> = (0..m.n_cols())
        .map(|j| m.n_rows() == 0 || m.column(j).any(|v| !v.is_nan()))
        .collect();
    for (j, c) in m.columns.iter().enumerate() {
        if !keep_cols[j] {
            report.dropped_columns.push(c.clone());
        }
    }
    let mut k = keep_cols.iter();
    m.columns.retain(|_| *k.next().expect("mask"));
    for row in &mut m.values {
        let mut k = keep_cols.iter();
        row.retain(|_| *k.next().expect("mask"));
    }
    let keep: Vec<bool> = m.values.iter().map(|r| r.iter().all(|v| !v.is_nan())).collect();
    report.removed_unavailable = keep.iter().filter(|k| !**k).count();
    m.keep_rows(&keep);

    if m.n_rows() == 0 || m.n_cols() == 0 {
        return Err(ReduceError::EmptyAfterCleaning {
            dominance,
            min_share,
        });
    }
    m.stage = Stage::Cleaned;
    Ok((m, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub mins: Vec<f64>,
    pub ranges: Vec<f64>,
    /// Constant columns, mapped to 0.
    pub degenerate: Vec<bool>,
}

pub fn normalize_minmax(matrix: &FeatureMatrix) -> (FeatureMatrix, MinMax) {
    let d = matrix.n_cols();
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for row in &matrix.values {
        for (j, &v) in row.iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let ranges: Vec<f64> = mins.iter().zip(&maxs).map(|(lo, hi)| hi - lo).collect();
    let degenerate: Vec<bool> = ranges.iter().map(|r| !(*r > 0.0)).collect();
    let values = matrix
        .values
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if degenerate[j] {
                        0.0
                    } else {
                        ((v - mins[j]) / ranges[j]).clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut out = matrix.clone();
    out.values = values;
    out.stage = Stage::Normalized;
    (
        out,
        MinMax {
            mins,
            ranges,
            degenerate,
        },
    )
}
