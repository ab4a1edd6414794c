//! Attention-guided resolution selection under a per-block byte budget.
//!
//! The selector works in two regimes. When the budget cannot cover every
//! patch at level 1, the highest-attention patches get level 1 and the rest
//! are dropped. Otherwise attention is scaled so it sums to the budget, each
//! patch is floored onto the rate table (never below level 1), any overshoot
//! from that floor is repaired, and the remaining budget is spent greedily on
//! the patches closest to their next budget step.

mod reference;
mod table;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attn::AttentionGrid;

pub use reference::{brute_force_levels, brute_force_reference, REFERENCE_MAX_PATCHES};
pub use table::{RateTable, MAX_LEVELS};

/// Added to a patch's working score after it is upgraded.
pub const UPGRADE_EPSILON: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("invalid rate table: {0}")]
    InvalidTable(String),
    #[error("quantizer input must be non-negative, got {0}")]
    NegativeInput(f64),
    #[error("attention value at index {index} is negative or non-finite: {value}")]
    BadAttention { index: usize, value: f64 },
    #[error("attention grid is empty")]
    EmptyGrid,
    #[error("reference allocator supports at most {max} patches, got {got}")]
    TooManyPatches { max: usize, got: usize },
    #[error("map has {levels} levels but the table only {table}")]
    LevelOutOfRange { levels: u8, table: usize },
    #[error("map needs {expected} cells, got {actual}")]
    MapSize { expected: usize, actual: usize },
}

/// Bytes granted for the patch payloads of one transmission block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Budget(pub u64);

/// Level index per patch, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolutionMap {
    rows: usize,
    cols: usize,
    levels: Vec<u8>,
}

impl ResolutionMap {
    pub fn new(rows: usize, cols: usize, levels: Vec<u8>) -> Result<Self, AllocError> {
        let expected = rows.saturating_mul(cols);
        if rows == 0 || cols == 0 || levels.len() != expected {
            return Err(AllocError::MapSize {
                expected,
                actual: levels.len(),
            });
        }
        if let Some(&l) = levels.iter().find(|&&l| l as usize >= MAX_LEVELS) {
            return Err(AllocError::LevelOutOfRange {
                levels: l,
                table: MAX_LEVELS,
            });
        }
        Ok(Self { rows, cols, levels })
    }

    pub fn filled(rows: usize, cols: usize, level: u8) -> Result<Self, AllocError> {
        Self::new(rows, cols, vec![level; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.levels[row * self.cols + col]
    }

    /// Checks every level addresses an entry of `table`.
    pub fn validate(&self, table: &RateTable) -> Result<(), AllocError> {
        match self.levels.iter().find(|&&l| l as usize >= table.levels()) {
            Some(&l) => Err(AllocError::LevelOutOfRange {
                levels: l,
                table: table.levels(),
            }),
            None => Ok(()),
        }
    }

    pub fn total_bytes(&self, table: &RateTable) -> u64 {
        self.levels.iter().map(|&l| table.bytes(l) as u64).sum()
    }

    /// Count of patches at each level of `table`.
    pub fn histogram(&self, table: &RateTable) -> Vec<usize> {
        let mut h = vec![0; table.levels()];
        for &l in &self.levels {
            h[l as usize] += 1;
        }
        h
    }

    pub fn mean_level(&self) -> f64 {
        self.levels.iter().map(|&l| l as f64).sum::<f64>() / self.levels.len() as f64
    }
}

/// Selects a resolution level for every patch of `grid` so the summed patch
/// budgets never exceed `budget`.
pub fn select_resolutions(
    grid: &AttentionGrid,
    budget: Budget,
    table: &RateTable,
) -> Result<ResolutionMap, AllocError> {
    let levels = select_levels(grid.values(), budget, table)?;
    ResolutionMap::new(grid.rows(), grid.cols(), levels)
}

/// Flat-slice form of [`select_resolutions`].
pub fn select_levels(
    attention: &[f64],
    budget: Budget,
    table: &RateTable,
) -> Result<Vec<u8>, AllocError> {
    let weights = prepare_weights(attention)?;
    let p = weights.len();
    let r = budget.0;
    let min_bytes = table.bytes(1) as u64;

    if r <= min_bytes * p as u64 {
        let k = (r / min_bytes) as usize;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]).then(i.cmp(&j)));
        let mut levels = vec![0u8; p];
        for &i in &order[..k] {
            levels[i] = 1;
        }
        return Ok(levels);
    }

    let scores = scaled_scores(&weights, r);
    let mut levels: Vec<u8> = scores
        .iter()
        .map(|&s| table.floor_level(s).max(1))
        .collect();
    let mut used: u64 = levels.iter().map(|&l| table.bytes(l) as u64).sum();

    if used > r {
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| weights[i].total_cmp(&weights[j]).then(j.cmp(&i)));
        'repair: for &i in &order {
            while levels[i] > 1 {
                used -= (table.bytes(levels[i]) - table.bytes(levels[i] - 1)) as u64;
                levels[i] -= 1;
                if used <= r {
                    break 'repair;
                }
            }
        }
    }

    let top = table.top_level();
    let mut working = scores;
    let mut heap: BinaryHeap<Reverse<Candidate>> = (0..p)
        .filter(|&i| levels[i] < top)
        .map(|i| Reverse(Candidate::new(i, &levels, &working, &weights, table)))
        .collect();
    while let Some(Reverse(c)) = heap.pop() {
        let i = c.index;
        let step = (table.bytes(levels[i] + 1) - table.bytes(levels[i])) as u64;
        // Slack only shrinks, so a patch that does not fit now never will.
        if used + step > r {
            continue;
        }
        used += step;
        levels[i] += 1;
        working[i] = table.bytes(levels[i]) as f64 + UPGRADE_EPSILON;
        if levels[i] < top {
            heap.push(Reverse(Candidate::new(
                i, &levels, &working, &weights, table,
            )));
        }
    }
    Ok(levels)
}

/// Validates attention and substitutes uniform weights for an all-zero grid.
pub(crate) fn prepare_weights(attention: &[f64]) -> Result<Vec<f64>, AllocError> {
    if attention.is_empty() {
        return Err(AllocError::EmptyGrid);
    }
    if let Some((index, &value)) = attention
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(AllocError::BadAttention { index, value });
    }
    let sum: f64 = attention.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        Ok(attention.to_vec())
    } else if sum == 0.0 {
        Ok(vec![1.0; attention.len()])
    } else {
        // Overflowed sum: rescale by the max so normalization stays finite.
        let max = attention.iter().cloned().fold(0.0, f64::max);
        Ok(attention.iter().map(|v| v / max).collect())
    }
}

/// Attention rescaled so it sums to the budget.
pub(crate) fn scaled_scores(weights: &[f64], r: u64) -> Vec<f64> {
    let factor = r as f64 / weights.iter().sum::<f64>();
    weights.iter().map(|w| w * factor).collect()
}

/// Distance from a patch's working score to the budget of its next level.
pub(crate) fn upgrade_gap(level: u8, score: f64, table: &RateTable) -> f64 {
    table.bytes(level + 1) as f64 - score
}

/// Upgrade priority: smallest gap, then highest attention, then lowest index.
pub(crate) fn upgrade_order(a: (f64, f64, usize), b: (f64, f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(b.1.total_cmp(&a.1))
        .then(a.2.cmp(&b.2))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gap: f64,
    weight: f64,
    index: usize,
}

impl Candidate {
    fn new(i: usize, levels: &[u8], working: &[f64], weights: &[f64], table: &RateTable) -> Self {
        Self {
            gap: upgrade_gap(levels[i], working[i], table),
            weight: weights[i],
            index: i,
        }
    }

    fn key(&self) -> (f64, f64, usize) {
        (self.gap, self.weight, self.index)
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        upgrade_order(self.key(), other.key())
    }
}
