//! Per-branch 2-bit saturating counter predictor.

use std::collections::BTreeMap;

/// Counter states 0..=3: strongly not-taken, weakly not-taken, weakly taken,
/// strongly taken. Predicts taken in states 2 and 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoBitCounter(u8);

impl Default for TwoBitCounter {
    fn default() -> Self {
        TwoBitCounter(1)
    }
}

impl TwoBitCounter {
    pub fn state(self) -> u8 {
        self.0
    }

    pub fn predict(self) -> bool {
        self.0 >= 2
    }

    /// Updates with the actual outcome; returns true on a misprediction.
    pub fn update(&mut self, taken: bool) -> bool {
        let miss = self.predict() != taken;
        self.0 = if taken {
            (self.0 + 1).min(3)
        } else {
            self.0.saturating_sub(1)
        };
        miss
    }
}

/// Mispredictions of one branch replayed from a fresh counter.
pub fn count_mispredictions(outcomes: &[bool]) -> u64 {
    let mut counter = TwoBitCounter::default();
    outcomes.iter().filter(|&&t| counter.update(t)).count() as u64
}

pub fn simulate_branches<'a>(
    streams: impl IntoIterator<Item = (usize, &'a [bool])>,
) -> BTreeMap<usize, u64> {
    streams
        .into_iter()
        .map(|(id, outcomes)| (id, count_mispredictions(outcomes)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn always_taken_mispredicts_once() {
        // Weakly not-taken start: only the first outcome is mispredicted.
        assert_eq!(count_mispredictions(&[true; 100]), 1);
    }

    #[test]
    fn ten_iteration_loop() {
        let mut outcomes = vec![true; 9];
        outcomes.push(false);
        assert_eq!(count_mispredictions(&outcomes), 2);
        assert_eq!(count_mispredictions(&outcomes[..9]), 1);
    }

    #[test]
    fn never_taken_never_mispredicts() {
        assert_eq!(count_mispredictions(&[false; 50]), 0);
    }
}
