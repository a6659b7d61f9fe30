//! Repeating delta patterns in address streams.

use serde::{Deserialize, Serialize};

/// Longest pattern period searched, in deltas.
pub const MAX_PERIOD: usize = 8;
/// A pattern must repeat at least this many times.
pub const MIN_REPEATS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamKind {
    Load,
    Store,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessPattern {
    pub kind: StreamKind,
    pub pattern: Vec<i64>,
    pub occurrences: usize,
    /// Index of the first covered delta.
    pub start: usize,
    /// Fraction of the stream's deltas covered by this pattern.
    pub coverage: f64,
}

impl AccessPattern {
    pub fn covered(&self) -> usize {
        self.pattern.len() * self.occurrences
    }

    pub fn distinct_deltas(&self) -> usize {
        let mut d = self.pattern.clone();
        d.sort_unstable();
        d.dedup();
        d.len()
    }
}

pub fn deltas(addresses: &[u64]) -> Vec<i64> {
    addresses
        .windows(2)
        .map(|w| w[1].wrapping_sub(w[0]) as i64)
        .collect()
}

/// True when `word` is not a whole power of a shorter word.
pub fn is_primitive(word: &[i64]) -> bool {
    let n = word.len();
    (1..n).all(|q| n % q != 0 || word.iter().enumerate().any(|(i, x)| *x != word[i % q]))
}

/// (length, period, start) of the best window inside `d[lo..hi]`.
fn best_window(d: &[i64], lo: usize, hi: usize, max_period: usize) -> Option<(usize, usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for p in 1..=max_period {
        if hi - lo < p * MIN_REPEATS {
            break;
        }
        // Maximal stretches [s, e) with d[i] == d[i + p] for s <= i < e - p.
        let mut s = lo;
        while s + p < hi {
            let mut e = s + p;
            while e < hi && d[e] == d[e - p] {
                e += 1;
            }
            let reps = (e - s) / p;
            if reps >= MIN_REPEATS && is_primitive(&d[s..s + p]) {
                let len = reps * p;
                let better = match best {
                    None => true,
                    Some((bl, bp, bs)) => (len, std::cmp::Reverse(p), std::cmp::Reverse(s))
                        > (bl, std::cmp::Reverse(bp), std::cmp::Reverse(bs)),
                };
                if better {
                    best = Some((len, p, s));
                }
            }
            // Next stretch starts where this one's matches broke.
            s = if e > s + p { e - p + 1 } else { s + 1 };
        }
    }
    best
}

/// Greedy non-overlapping pattern mining: repeatedly takes the longest
/// periodic window (ties: smaller period, then earlier start) among the
/// still-uncovered deltas.
pub fn detect_patterns(addresses: &[u64], kind: StreamKind) -> Vec<AccessPattern> {
    detect_patterns_with(addresses, kind, MAX_PERIOD)
}

pub fn detect_patterns_with(addresses: &[u64], kind: StreamKind, max_period: usize) -> Vec<AccessPattern> {
    if addresses.len() < 4 {
        return Vec::new();
    }
    let d = deltas(addresses);
    let total = d.len();
    // Free segments with their cached best window.
    let mut segments: Vec<(usize, usize, Option<(usize, usize, usize)>)> =
        vec![(0, total, best_window(&d, 0, total, max_period))];
    let mut found = Vec::new();
    loop {
        let pick = segments
            .iter()
            .enumerate()
            .filter_map(|(i, (_, _, w))| w.map(|w| (i, w)))
            .max_by(|(_, a), (_, b)| {
                (a.0, std::cmp::Reverse(a.1), std::cmp::Reverse(a.2))
                    .cmp(&(b.0, std::cmp::Reverse(b.1), std::cmp::Reverse(b.2)))
            });
        let Some((i, (len, p, s))) = pick else { break };
        let (lo, hi, _) = segments.remove(i);
        for (a, b) in [(lo, s), (s + len, hi)] {
            if b > a {
                segments.push((a, b, best_window(&d, a, b, max_period)));
            }
        }
        found.push(AccessPattern {
            kind,
            pattern: d[s..s + p].to_vec(),
            occurrences: len / p,
            start: s,
            coverage: len as f64 / total as f64,
        });
    }
    found.sort_by_key(|p| p.start);
    found
}

/// Fraction of deltas explained by `patterns` over a stream of `deltas` deltas.
pub fn coverage(patterns: &[AccessPattern], deltas: usize) -> f64 {
    if deltas == 0 {
        return 0.0;
    }
    patterns.iter().map(AccessPattern::covered).sum::<usize>() as f64 / deltas as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_deltas(start: u64, ds: &[i64]) -> Vec<u64> {
        let mut a = vec![start];
        for d in ds {
            a.push((*a.last().unwrap() as i64 + d) as u64);
        }
        a
    }

    #[test]
    fn alternating_example() {
        let p = detect_patterns(&from_deltas(1000, &[-5, 6, -5, 6, -5, 6]), StreamKind::Load);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].pattern, vec![-5, 6]);
        assert_eq!(p[0].occurrences, 3);
        assert_eq!(p[0].coverage, 1.0);
    }

    #[test]
    fn constant_example() {
        let p = detect_patterns(&from_deltas(0, &[4, 4, 4]), StreamKind::Store);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].pattern.clone(), p[0].occurrences), (vec![4], 3));
    }

    #[test]
    fn too_short_or_too_few() {
        assert!(detect_patterns(&[1, 2, 3], StreamKind::Load).is_empty());
        assert!(detect_patterns(&from_deltas(0, &[4, 4, 7]), StreamKind::Load).is_empty());
    }

    #[test]
    fn primitive() {
        assert!(is_primitive(&[1, 2]));
        assert!(!is_primitive(&[1, 1]));
        assert!(!is_primitive(&[1, 2, 1, 2]));
        assert!(is_primitive(&[1, 2, 1]));
    }
}
