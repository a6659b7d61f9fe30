use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, Stage};
use crate::error::ReduceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Column means of the normalized input.
    pub means: Vec<f64>,
    /// Retained components as columns (input dimension x retained).
    pub components: Vec<Vec<f64>>,
    /// All eigenvalues, descending, negatives clamped to 0.
    pub eigenvalues: Vec<f64>,
    pub retained: usize,
    /// Min and range of each projected column, for re-normalization.
    pub projected_min: Vec<f64>,
    pub projected_range: Vec<f64>,
}

impl PcaModel {
    /// Dimensions dropped (`y`).
    pub fn dropped(&self) -> usize {
        self.eigenvalues.len() - self.retained
    }

    pub fn retained_variance(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..self.retained].iter().sum::<f64>() / total
    }

    pub fn component_matrix(&self) -> DMatrix<f64> {
        let d = self.means.len();
        DMatrix::from_fn(d, self.retained, |i, j| self.components[j][i])
    }

    /// Centered projection, before re-normalization.
    pub fn project(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let d = self.means.len();
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] - self.means[j]);
        x * self.component_matrix()
    }
}

/// Principal components keeping the smallest leading set whose cumulative
/// variance reaches `retention`; projected columns are re-normalized to [0, 1].
pub fn pca(matrix: &FeatureMatrix, retention: f64) -> Result<(PcaModel, FeatureMatrix), ReduceError> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(ReduceError::Invalid(format!("retention {retention} outside (0, 1]")));
    }
    let n = matrix.n_rows();
    let d = matrix.n_cols();
    if n < 2 || d == 0 {
        return Err(ReduceError::Degenerate(format!("{n} rows x {d} columns")));
    }
    if n < d {
        log::warn!("PCA on {n} rows and {d} columns; covariance is rank deficient");
    }
    let means: Vec<f64> = (0..d).map(|j| matrix.column(j).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| matrix.values[i][j] - means[j]);
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(ReduceError::Degenerate("input has zero variance".into()));
    }
    let mut retained = d;
    let mut cumulative = 0.0;
    for (k, ev) in eigenvalues.iter().enumerate() {
        cumulative += ev;
        if cumulative / total >= retention - 1e-12 {
            retained = k + 1;
            break;
        }
    }
    let components: Vec<Vec<f64>> = order[..retained]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // Sign convention: the largest-magnitude entry is positive.
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let mut model = PcaModel {
        means,
        components,
        eigenvalues,
        retained,
        projected_min: Vec::new(),
        projected_range: Vec::new(),
    };
    let proj = model.project(&matrix.values);
    let mut values = vec![vec![0.0; retained]; n];
    for j in 0..retained {
        let col = proj.column(j);
        let lo = col.min();
        let range = col.max() - lo;
        model.projected_min.push(lo);
        model.projected_range.push(range);
        for i in 0..n {
            values[i][j] = if range > 0.0 {
                ((proj[(i, j)] - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    let projected = FeatureMatrix {
        stage: Stage::Projected,
        rows: matrix.rows.clone(),
        columns: (1..=retained).map(|k| format!("pc{k}")).collect(),
        values,
    };
    Ok((model, projected))
}
