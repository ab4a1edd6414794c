//! Straightforward re-implementation of the selector used as a test oracle.
//!
//! Everything is recomputed from scratch each step: candidate lists are
//! rebuilt and fully re-sorted, the repair pass re-ranks patches after every
//! single downgrade, and budget sums are recomputed rather than tracked.

use std::collections::BTreeSet;

use super::{
    prepare_weights, scaled_scores, upgrade_gap, upgrade_order, AllocError, Budget, RateTable,
    ResolutionMap, UPGRADE_EPSILON,
};
use crate::attn::AttentionGrid;

pub const REFERENCE_MAX_PATCHES: usize = 12;

pub fn brute_force_reference(
    grid: &AttentionGrid,
    budget: Budget,
    table: &RateTable,
) -> Result<ResolutionMap, AllocError> {
    let levels = brute_force_levels(grid.values(), budget, table)?;
    ResolutionMap::new(grid.rows(), grid.cols(), levels)
}

pub fn brute_force_levels(
    attention: &[f64],
    budget: Budget,
    table: &RateTable,
) -> Result<Vec<u8>, AllocError> {
    if attention.len() > REFERENCE_MAX_PATCHES {
        return Err(AllocError::TooManyPatches {
            max: REFERENCE_MAX_PATCHES,
            got: attention.len(),
        });
    }
    let a = prepare_weights(attention)?;
    let p = a.len();
    let r = budget.0;
    let total = |lv: &[u8]| -> u64 { lv.iter().map(|&l| table.bytes(l) as u64).sum() };

    let mut mask = vec![0u8; p];
    if r <= table.bytes(1) as u64 * p as u64 {
        let mut perm: Vec<usize> = (0..p).collect();
        perm.sort_by(|&i, &j| {
            if a[i] != a[j] {
                a[j].partial_cmp(&a[i]).unwrap()
            } else {
                i.cmp(&j)
            }
        });
        let k = r / table.bytes(1) as u64;
        for ind in 0..k as usize {
            mask[perm[ind]] = 1;
        }
        return Ok(mask);
    }

    let mut s = scaled_scores(&a, r);
    // floor, then lift dropped patches to the lowest nonzero level
    let mut lq_a: Vec<u8> = s.iter().map(|&x| table.floor_level(x)).collect();
    for l in lq_a.iter_mut() {
        if *l == 0 {
            *l = 1;
        }
    }

    while total(&lq_a) > r {
        let mut above: Vec<usize> = (0..p).filter(|&i| lq_a[i] > 1).collect();
        above.sort_by(|&i, &j| {
            if a[i] != a[j] {
                a[i].partial_cmp(&a[j]).unwrap()
            } else {
                j.cmp(&i)
            }
        });
        let victim = above[0];
        lq_a[victim] -= 1;
    }

    let top = table.top_level();
    let mut frozen: BTreeSet<usize> = (0..p).filter(|&i| lq_a[i] == top).collect();
    loop {
        let used = total(&lq_a);
        let mut diff: Vec<(f64, f64, usize)> = (0..p)
            .filter(|i| !frozen.contains(i))
            .filter(|&i| used + (table.bytes(lq_a[i] + 1) - table.bytes(lq_a[i])) as u64 <= r)
            .map(|i| (upgrade_gap(lq_a[i], s[i], table), a[i], i))
            .collect();
        if diff.is_empty() {
            break;
        }
        diff.sort_by(|x, y| upgrade_order(*x, *y));
        let i = diff[0].2;
        lq_a[i] += 1;
        s[i] = table.bytes(lq_a[i]) as f64 + UPGRADE_EPSILON;
        if lq_a[i] == top {
            frozen.insert(i);
        }
    }
    mask.copy_from_slice(&lq_a);
    Ok(mask)
}
