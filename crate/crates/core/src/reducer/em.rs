//! Diagonal-covariance Gaussian mixture EM with cross-validated choice of K.
//!
//! Identical rows are collapsed into weighted unique rows before fitting, so
//! duplicating the dataset leaves every fit and every score unchanged.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ReduceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub folds: usize,
    pub restarts: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub variance_floor: f64,
    pub seed: u64,
    pub tie_rule: TieRule,
}

/// When two candidate K scores count as tied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Only bit-identical scores tie.
    Exact,
    /// Scores within one standard error of the best tie.
    OneStandardError,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    /// Mean held-out log-likelihood per row.
    pub score: f64,
    /// Standard error of the per-fold scores.
    pub std_error: f64,
}

/// Largest score wins; tied candidates resolve to the smallest K.
pub fn select_k(candidates: &[KScore], rule: TieRule) -> usize {
    let best = candidates
        .iter()
        .fold(candidates[0], |b, c| if c.score > b.score { *c } else { b });
    let bar = match rule {
        TieRule::Exact => best.score,
        TieRule::OneStandardError => best.score - best.std_error,
    };
    candidates
        .iter()
        .filter(|c| c.score >= bar)
        .map(|c| c.k)
        .min()
        .unwrap_or(best.k)
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            k_min: 1,
            k_max: 10,
            folds: 10,
            restarts: 5,
            tolerance: 1e-6,
            max_iterations: 500,
            variance_floor: 1e-9,
            seed: 0,
            tie_rule: TieRule::OneStandardError,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl Gmm {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Per-component `log(weight) - 0.5 * sum(log(2 pi var))` and inverse variances.
    fn prepare(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let consts = (0..self.k())
            .map(|c| {
                self.weights[c].ln() - 0.5 * self.variances[c].iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>()
            })
            .collect();
        let inv = self.variances.iter().map(|vs| vs.iter().map(|v| 1.0 / v).collect()).collect();
        (consts, inv)
    }

    fn joint_into(&self, prep: &(Vec<f64>, Vec<Vec<f64>>), x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let mut q = 0.0;
            for ((v, m), iv) in x.iter().zip(&self.means[c]).zip(&prep.1[c]) {
                let d = v - m;
                q += d * d * iv;
            }
            *o = prep.0[c] - 0.5 * q;
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut j = vec![0.0; self.k()];
        self.joint_into(&self.prepare(), x, &mut j);
        log_sum_exp(&j)
    }

    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut j = vec![0.0; self.k()];
        self.joint_into(&self.prepare(), x, &mut j);
        let total = log_sum_exp(&j);
        j.iter().map(|v| (v - total).exp()).collect()
    }

    /// Weighted mean log-likelihood over `rows`.
    pub fn mean_log_likelihood(&self, rows: &[Vec<f64>], w: &[f64]) -> f64 {
        let prep = self.prepare();
        let mut j = vec![0.0; self.k()];
        let mut ll = 0.0;
        for (x, wi) in rows.iter().zip(w) {
            self.joint_into(&prep, x, &mut j);
            ll += wi * log_sum_exp(&j);
        }
        ll / w.iter().sum::<f64>()
    }

    /// Fills row-major responsibilities and returns the mean log-likelihood.
    fn e_step(&self, rows: &[Vec<f64>], w: &[f64], resp: &mut [f64]) -> f64 {
        let k = self.k();
        let prep = self.prepare();
        let mut ll = 0.0;
        for (i, x) in rows.iter().enumerate() {
            let r = &mut resp[i * k..(i + 1) * k];
            self.joint_into(&prep, x, r);
            let total = log_sum_exp(r);
            r.iter_mut().for_each(|v| *v = (*v - total).exp());
            ll += w[i] * total;
        }
        ll / w.iter().sum::<f64>()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub gmm: Gmm,
    /// Hard label per input row.
    pub assignments: Vec<usize>,
    pub responsibilities: Vec<Vec<f64>>,
    /// Mean per-row log-likelihood of the final fit.
    pub log_likelihood: f64,
    /// Cross-validation result per candidate K.
    pub selection: Vec<KScore>,
    /// Per-iteration mean log-likelihood of the final fit.
    pub trace: Vec<f64>,
    pub folds: usize,
    pub warnings: Vec<String>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Unique rows with multiplicities, plus the unique index of each input row.
#[derive(Clone, Debug)]
struct Dedup {
    rows: Vec<Vec<f64>>,
    weights: Vec<f64>,
    index: Vec<usize>,
}

fn dedup(data: &[Vec<f64>]) -> Dedup {
    let mut seen: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut d = Dedup {
        rows: Vec::new(),
        weights: Vec::new(),
        index: Vec::with_capacity(data.len()),
    };
    for row in data {
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        let u = *seen.entry(key).or_insert_with(|| {
            d.rows.push(row.clone());
            d.weights.push(0.0);
            d.rows.len() - 1
        });
        d.weights[u] += 1.0;
        d.index.push(u);
    }
    d
}

/// One fitted mixture with its per-iteration trace.
#[derive(Clone, Debug)]
pub struct Fit {
    pub gmm: Gmm,
    pub log_likelihood: f64,
    pub trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pick(rng: &mut ChaCha8Rng, mass: &[f64]) -> usize {
    let total: f64 = mass.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, m) in mass.iter().enumerate() {
        if *m > 0.0 {
            if r < *m {
                return i;
            }
            r -= m;
        }
    }
    mass.iter().rposition(|m| *m > 0.0).unwrap_or(0)
}

/// Weighted k-means++ seeding.
/// Greedy k-means++: each step draws `2 + ln k` D²-weighted candidates and
/// keeps the one that lowers the weighted potential most.
fn seed_centers(rows: &[Vec<f64>], w: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = vec![pick(rng, w)];
    let mut d2: Vec<f64> = rows.iter().map(|x| sq_dist(x, &rows[centers[0]])).collect();
    while centers.len() < k {
        let mass: Vec<f64> = d2.iter().zip(w).map(|(d, wi)| d * wi).collect();
        if !mass.iter().any(|m| *m > 0.0) {
            centers.push(pick(rng, w));
            continue;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = pick(rng, &mass);
            let nd: Vec<f64> = rows
                .iter()
                .zip(&d2)
                .map(|(x, &d)| d.min(sq_dist(x, &rows[cand])))
                .collect();
            let potential: f64 = nd.iter().zip(w).map(|(d, wi)| d * wi).sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, cand, nd));
            }
        }
        let (_, next, nd) = best.expect("at least one trial");
        centers.push(next);
        d2 = nd;
    }
    centers
}

/// `resp` is row-major, `rows.len()` by `k`.
fn m_step(rows: &[Vec<f64>], w: &[f64], resp: &[f64], k: usize, prev: Option<&Gmm>, floor: f64) -> Gmm {
    let d = rows[0].len();
    let total: f64 = w.iter().sum();
    let mut nk = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    for (i, x) in rows.iter().enumerate() {
        for c in 0..k {
            let wr = w[i] * resp[i * k + c];
            if wr == 0.0 {
                continue;
            }
            nk[c] += wr;
            for (m, v) in means[c].iter_mut().zip(x) {
                *m += wr * v;
            }
        }
    }
    for c in 0..k {
        if nk[c] > f64::MIN_POSITIVE {
            means[c].iter_mut().for_each(|m| *m /= nk[c]);
        }
    }
    let mut vars = vec![vec![0.0; d]; k];
    for (i, x) in rows.iter().enumerate() {
        for c in 0..k {
            let wr = w[i] * resp[i * k + c];
            if wr == 0.0 {
                continue;
            }
            for ((s, v), m) in vars[c].iter_mut().zip(x).zip(&means[c]) {
                *s += wr * (v - m) * (v - m);
            }
        }
    }
    let mut gmm = Gmm {
        weights: vec![0.0; k],
        means,
        variances: vars,
    };
    for c in 0..k {
        if nk[c] <= f64::MIN_POSITIVE {
            // Empty component: keep its previous shape with zero weight.
            gmm.means[c] = prev.map(|p| p.means[c].clone()).unwrap_or_else(|| vec![0.0; d]);
            gmm.variances[c] = prev.map(|p| p.variances[c].clone()).unwrap_or_else(|| vec![1.0; d]);
            continue;
        }
        gmm.weights[c] = nk[c] / total;
        gmm.variances[c].iter_mut().for_each(|v| *v = (*v / nk[c]).max(floor));
    }
    let s: f64 = gmm.weights.iter().sum();
    gmm.weights.iter_mut().for_each(|x| *x /= s);
    gmm
}

fn fit_once(rows: &[Vec<f64>], w: &[f64], k: usize, cfg: &EmConfig, rng: &mut ChaCha8Rng) -> Fit {
    let n = rows.len();
    let centers = seed_centers(rows, w, k, rng);
    let mut resp = vec![0.0; n * k];
    for (i, x) in rows.iter().enumerate() {
        let best = (0..k)
            .min_by(|&a, &b| sq_dist(x, &rows[centers[a]]).total_cmp(&sq_dist(x, &rows[centers[b]])))
            .expect("k >= 1");
        resp[i * k + best] = 1.0;
    }
    let mut gmm = m_step(rows, w, &resp, k, None, cfg.variance_floor);
    // Components without members start at their seed point.
    for (c, &ci) in centers.iter().enumerate() {
        if gmm.weights[c] == 0.0 {
            gmm.means[c] = rows[ci].clone();
        }
    }
    let mut trace = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for it in 0..=cfg.max_iterations {
        let ll = gmm.e_step(rows, w, &mut resp);
        trace.push(ll);
        if ll - last < cfg.tolerance || it == cfg.max_iterations {
            break;
        }
        last = ll;
        gmm = m_step(rows, w, &resp, k, Some(&gmm), cfg.variance_floor);
    }
    Fit {
        gmm,
        log_likelihood: *trace.last().expect("at least one step"),
        trace,
    }
}

fn restart_seed(base: u64, k: usize, fold: usize, restart: usize) -> u64 {
    base ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (fold as u64).wrapping_add(1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (restart as u64 + 1).wrapping_mul(0x1656_67B1_9E37_79F9)
}

/// Best of `cfg.restarts` seeded fits. `fold` only varies the seed stream.
fn fit_best(rows: &[Vec<f64>], w: &[f64], k: usize, fold: usize, cfg: &EmConfig) -> Fit {
    (0..cfg.restarts.max(1))
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.seed, k, fold, r));
            fit_once(rows, w, k, cfg, &mut rng)
        })
        .reduce(|best, f| if f.log_likelihood > best.log_likelihood { f } else { best })
        .expect("at least one restart")
}

/// Fits a K-component mixture on all rows without model selection.
pub fn fit_gmm(data: &[Vec<f64>], k: usize, cfg: &EmConfig) -> Result<Fit, ReduceError> {
    check(data)?;
    let u = dedup(data);
    Ok(fit_best(&u.rows, &u.weights, k.max(1), usize::MAX, cfg))
}

fn check(data: &[Vec<f64>]) -> Result<(), ReduceError> {
    if data.len() < 2 {
        return Err(ReduceError::Invalid(format!("clustering needs at least 2 rows, got {}", data.len())));
    }
    let d = data[0].len();
    if d == 0 {
        return Err(ReduceError::Degenerate("rows have no columns".into()));
    }
    if let Some(r) = data.iter().find(|r| r.len() != d) {
        return Err(ReduceError::Dimension(d, r.len()));
    }
    Ok(())
}

pub fn em_cluster(data: &[Vec<f64>], cfg: &EmConfig) -> Result<ClusterModel, ReduceError> {
    check(data)?;
    if cfg.k_min == 0 || cfg.k_min > cfg.k_max {
        return Err(ReduceError::Invalid(format!("bad K range {}..={}", cfg.k_min, cfg.k_max)));
    }
    let u = dedup(data);
    let n = u.rows.len();
    let mut warnings = Vec::new();
    let k_max = cfg.k_max.min(n);
    if k_max < cfg.k_max {
        warnings.push(format!("K capped at {k_max}: only {n} distinct rows"));
    }
    let k_min = cfg.k_min.min(k_max);
    let folds = cfg.folds.min(n).max(2);
    if folds < cfg.folds {
        warnings.push(format!("{n} distinct rows; cross-validation folds reduced to {folds}"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let selection: Vec<KScore> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let mut held_ll = 0.0;
            let mut held_w = 0.0;
            let mut per_fold = Vec::with_capacity(folds);
            for f in 0..folds {
                let (mut tr, mut trw, mut te, mut tew) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for i in 0..n {
                    if fold_of[i] == f {
                        te.push(u.rows[i].clone());
                        tew.push(u.weights[i]);
                    } else {
                        tr.push(u.rows[i].clone());
                        trw.push(u.weights[i]);
                    }
                }
                let fit = fit_best(&tr, &trw, k, f, cfg);
                let score = fit.gmm.mean_log_likelihood(&te, &tew);
                let wf: f64 = tew.iter().sum();
                held_ll += score * wf;
                held_w += wf;
                per_fold.push(score);
            }
            let mean = per_fold.iter().sum::<f64>() / folds as f64;
            let var = per_fold.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (folds as f64 - 1.0);
            KScore {
                k,
                score: held_ll / held_w,
                std_error: (var / folds as f64).sqrt(),
            }
        })
        .collect();
    let k = select_k(&selection, cfg.tie_rule);
    let fit = fit_best(&u.rows, &u.weights, k, usize::MAX, cfg);
    let uresp: Vec<Vec<f64>> = u.rows.iter().map(|x| fit.gmm.responsibilities(x)).collect();
    let uassign: Vec<usize> = uresp
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b })
                .0
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ClusterModel {
        k,
        assignments: u.index.iter().map(|&i| uassign[i]).collect(),
        responsibilities: u.index.iter().map(|&i| uresp[i].clone()).collect(),
        gmm: fit.gmm,
        log_likelihood: fit.log_likelihood,
        selection,
        trace: fit.trace,
        folds,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [-1.0f64, -2.0, -3.0];
        let direct = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn dedup_counts() {
        let d = dedup(&[vec![1.0], vec![2.0], vec![1.0], vec![-0.0], vec![0.0]]);
        assert_eq!(d.rows.len(), 3);
        assert_eq!(d.weights, vec![2.0, 1.0, 2.0]);
        assert_eq!(d.index, vec![0, 1, 0, 2, 2]);
    }

    #[test]
    fn rejects_single_row() {
        assert!(em_cluster(&[vec![0.0]], &EmConfig::default()).is_err());
    }
}
