//! Mixed strategies over capacity intervals and the reward-inaction
//! learning rule that drives them.
//!
//! Each player keeps a probability vector over its action set. After a
//! step with normalized utility `u` and learning rate `b`, every
//! non-chosen probability shrinks by the factor `b * u` and the chosen
//! action collects the freed mass:
//!
//! ```text
//! s'[k]      = s[k] - b * u * s[k]          k != chosen
//! s'[chosen] = s[chosen] + b * u * (1 - s[chosen])
//! ```
//!
//! Utility is the benefit rescaled into [0, 1] against the running
//! minimum and maximum the player has seen so far.

use rand::Rng;
use thiserror::Error;

use crate::market::CapacityInterval;

/// Slack allowed when checking that probabilities sum to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("empty probability vector")]
    Empty,
    #[error("probability {value} at index {index} outside [0,1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("initial probability at index {index} is zero")]
    ZeroInitialProbability { index: usize },
    #[error("chosen index {chosen} out of bounds for {len} actions")]
    ChosenOutOfBounds { chosen: usize, len: usize },
    #[error("utility {0} outside [0,1]")]
    UtilityOutOfRange(f64),
    #[error("learning rate {0} outside [0,1]")]
    LearningRateOutOfRange(f64),
    #[error("granularity step {step} does not fit capacity {capacity}")]
    BadGranularity { step: u32, capacity: u32 },
    #[error("interval {interval} outside 1..={capacity}")]
    BadInterval {
        interval: CapacityInterval,
        capacity: u32,
    },
    #[error("duplicate interval {0}")]
    DuplicateInterval(CapacityInterval),
}

/// The finite menu of intervals a player may request, in a fixed order.
/// Strategy vectors index into this.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    intervals: Vec<CapacityInterval>,
}

impl ActionSet {
    /// All intervals `[lo, hi]` with ends drawn from the multiples of
    /// `step` up to `total_capacity` (so `step = 1` enumerates every
    /// integer interval). Lexicographic order.
    pub fn enumerate(total_capacity: u32, step: u32) -> Result<Self, StrategyError> {
        if step == 0 || step > total_capacity {
            return Err(StrategyError::BadGranularity {
                step,
                capacity: total_capacity,
            });
        }
        let ends: Vec<u32> = (1..=total_capacity / step).map(|k| k * step).collect();
        let mut intervals = Vec::new();
        for (i, &lo) in ends.iter().enumerate() {
            for &hi in &ends[i..] {
                intervals.push(CapacityInterval::new(lo, hi));
            }
        }
        Ok(ActionSet { intervals })
    }

    /// A hand-picked action list. Intervals must be valid, fit within
    /// `total_capacity`, and be distinct.
    pub fn from_intervals(
        intervals: Vec<CapacityInterval>,
        total_capacity: u32,
    ) -> Result<Self, StrategyError> {
        if intervals.is_empty() {
            return Err(StrategyError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for &interval in &intervals {
            if !interval.is_valid() || interval.hi > total_capacity {
                return Err(StrategyError::BadInterval {
                    interval,
                    capacity: total_capacity,
                });
            }
            if !seen.insert(interval) {
                return Err(StrategyError::DuplicateInterval(interval));
            }
        }
        Ok(ActionSet { intervals })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn interval(&self, index: usize) -> CapacityInterval {
        self.intervals[index]
    }

    pub fn intervals(&self) -> &[CapacityInterval] {
        &self.intervals
    }

    pub fn index_of(&self, interval: CapacityInterval) -> Option<usize> {
        self.intervals.iter().position(|&i| i == interval)
    }
}

/// A point on the probability simplex over a player's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyVector {
    probs: Vec<f64>,
}

impl StrategyVector {
    /// Validates membership in the simplex (within [`SIMPLEX_TOLERANCE`]).
    pub fn new(probs: Vec<f64>) -> Result<Self, StrategyError> {
        if probs.is_empty() {
            return Err(StrategyError::Empty);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(StrategyError::ProbabilityOutOfRange { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(StrategyError::NotNormalized { sum });
        }
        Ok(StrategyVector { probs })
    }

    /// Like [`StrategyVector::new`] but additionally requires every
    /// component to be positive — the starting condition of the learning
    /// process, without which an action could never be tried.
    pub fn initial(probs: Vec<f64>) -> Result<Self, StrategyError> {
        let vector = Self::new(probs)?;
        for (index, &value) in vector.probs.iter().enumerate() {
            if value == 0.0 {
                return Err(StrategyError::ZeroInitialProbability { index });
            }
        }
        Ok(vector)
    }

    /// The uniform distribution over `len` actions.
    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "a strategy needs at least one action");
        StrategyVector {
            probs: vec![1.0 / len as f64; len],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index and value of the largest component (first one on ties).
    pub fn max_component(&self) -> (usize, f64) {
        let mut best = 0;
        for (index, &value) in self.probs.iter().enumerate() {
            if value > self.probs[best] {
                best = index;
            }
        }
        (best, self.probs[best])
    }

    /// Draws an action index: one uniform variate, inverse-CDF walk in
    /// index order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let draw: f64 = rng.random();
        let mut cumulative = 0.0;
        for (index, &p) in self.probs.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                return index;
            }
        }
        self.probs.len() - 1
    }
}

/// One reward-inaction update. Every non-chosen component is scaled by
/// `1 - utility * learning_rate`; the chosen one absorbs the difference,
/// keeping the vector on the simplex. `utility * learning_rate = 0`
/// returns the input unchanged, bit for bit, as does a vector already
/// absorbed at the chosen action.
pub fn lri_update(
    strategy: &StrategyVector,
    chosen: usize,
    utility: f64,
    learning_rate: f64,
) -> Result<StrategyVector, StrategyError> {
    let len = strategy.len();
    if chosen >= len {
        return Err(StrategyError::ChosenOutOfBounds { chosen, len });
    }
    if !(0.0..=1.0).contains(&utility) || utility.is_nan() {
        return Err(StrategyError::UtilityOutOfRange(utility));
    }
    if !(0.0..=1.0).contains(&learning_rate) || learning_rate.is_nan() {
        return Err(StrategyError::LearningRateOutOfRange(learning_rate));
    }
    let shrink = utility * learning_rate;
    if shrink == 0.0 || strategy.probs[chosen] == 1.0 {
        return Ok(strategy.clone());
    }
    let mut probs = strategy.probs.clone();
    let mut others = 0.0;
    for (index, value) in probs.iter_mut().enumerate() {
        if index != chosen {
            *value -= shrink * *value;
            others += *value;
        }
    }
    // Assign the chosen component as the exact complement instead of
    // adding the freed mass, so the sum stays 1 to the last bit. The
    // clamp only matters when the chosen probability is within a few
    // ulps of zero and rounding pushes the complement barely negative.
    probs[chosen] = (1.0 - others).max(0.0);
    Ok(StrategyVector { probs })
}

/// Running extremes of the benefits a player has observed. Used to
/// rescale raw benefit into the [0, 1] utility the update rule needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenefitBounds {
    min: f64,
    max: f64,
}

impl BenefitBounds {
    pub fn new() -> Self {
        BenefitBounds {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min > self.max
    }

    pub fn running_min(&self) -> f64 {
        self.min
    }

    pub fn running_max(&self) -> f64 {
        self.max
    }

    /// Widens the bounds to cover `benefit`.
    pub fn absorb(&mut self, benefit: f64) {
        self.min = self.min.min(benefit);
        self.max = self.max.max(benefit);
    }

    /// `(benefit - min) / (max - min)`, after the current benefit has been
    /// absorbed. A degenerate history (all benefits equal, or nothing
    /// absorbed) yields 0, so the first step never moves the strategy.
    pub fn normalized_utility(&self, benefit: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.0;
        }
        (benefit - self.min) / span
    }
}

impl Default for BenefitBounds {
    fn default() -> Self {
        Self::new()
    }
}
