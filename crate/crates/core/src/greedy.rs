//! Set-cover style greedy suppression-based k-anonymizer, followed by flip
//! conversion.
//!
//! The candidate pool holds, for every seed record, its nearest-neighbor
//! groups of sizes k..=2k-1 (larger blocks are never needed for the flip
//! objective). The greedy loop repeatedly takes the candidate with the best
//! stars-per-covered-record ratio among candidates lying fully inside the
//! uncovered set. When no pooled candidate fits but at least k records remain
//! uncovered, the pool is regenerated from the uncovered records alone; a
//! residual of fewer than k records is merged into the block whose star
//! cost grows the least.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::flip::{result_from_grouping, suppression_to_flip};
use crate::model::{
    block_disagreeing_columns, block_star_cost, hamming, AnonymizationResult, Dataset, Grouping,
    SuppressionSolution,
};

/// A block candidate: member indices (sorted, size in [k, 2k-1]) and its
/// standalone suppression cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateGroup {
    pub members: Vec<usize>,
    pub star_cost: usize,
}

/// Nearest-neighbor candidate groups over a subset of records (global
/// indices). For each seed and each size s in k..=min(2k-1, |pool|), the
/// group is the seed plus its s-1 nearest pool records by Hamming distance
/// (ties by record index). Duplicate member sets are removed.
fn candidates_within(d: &Dataset, k: usize, pool: &[usize]) -> Vec<CandidateGroup> {
    let max_size = (2 * k - 1).min(pool.len());
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &seed in pool {
        let mut neighbors: Vec<usize> = pool.iter().copied().filter(|&j| j != seed).collect();
        neighbors.sort_by_key(|&j| (hamming(&d.records[seed], &d.records[j]), j));
        for size in k..=max_size {
            let mut members: Vec<usize> = std::iter::once(seed)
                .chain(neighbors[..size - 1].iter().copied())
                .collect();
            members.sort_unstable();
            if seen.insert(members.clone()) {
                let star_cost = block_star_cost(d, &members);
                out.push(CandidateGroup { members, star_cost });
            }
        }
    }
    out.sort_by(|a, b| a.members.cmp(&b.members));
    out
}

/// Candidate pool over the whole dataset.
pub fn generate_candidates(d: &Dataset, k: usize) -> Result<Vec<CandidateGroup>, Error> {
    if d.len() < k {
        return Err(Error::TooFewRecords { n: d.len(), k });
    }
    let all: Vec<usize> = (0..d.len()).collect();
    Ok(candidates_within(d, k, &all))
}

/// Greedy weighted set cover over the candidate pool. Returns a feasible
/// suppression solution whose blocks all have size >= k.
pub fn greedy_anonymize(d: &Dataset, k: usize) -> Result<SuppressionSolution, Error> {
    let n = d.len();
    if n < k {
        return Err(Error::TooFewRecords { n, k });
    }
    let mut pool = generate_candidates(d, k)?;
    let mut uncovered: BTreeSet<usize> = (0..n).collect();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    while !uncovered.is_empty() {
        if uncovered.len() < k {
            merge_residual(d, &mut blocks, &uncovered);
            break;
        }
        // best ratio star_cost / |members|, compared by cross-multiplication
        // to stay in integers; ties by lower star cost, then larger size
        // (distinct sizes can only tie at cost zero, where the bigger group
        // swallows a whole identity class), then lowest member order
        let pick = pool
            .iter()
            .filter(|c| c.members.iter().all(|i| uncovered.contains(i)))
            .min_by(|a, b| {
                (a.star_cost * b.members.len())
                    .cmp(&(b.star_cost * a.members.len()))
                    .then(a.star_cost.cmp(&b.star_cost))
                    .then(b.members.len().cmp(&a.members.len()))
                    .then(a.members.cmp(&b.members))
            })
            .cloned();
        match pick {
            Some(c) => {
                for i in &c.members {
                    uncovered.remove(i);
                }
                blocks.push(c.members);
            }
            None => {
                // every pooled candidate touches a covered record; rebuild
                // the pool from the uncovered records so the loop advances
                let remaining: Vec<usize> = uncovered.iter().copied().collect();
                pool = candidates_within(d, k, &remaining);
            }
        }
    }
    let grouping = Grouping::new(blocks).normalized();
    let suppressed = grouping
        .blocks
        .iter()
        .map(|b| block_disagreeing_columns(d, b))
        .collect();
    Ok(SuppressionSolution {
        grouping,
        suppressed,
    })
}

/// Merges the leftover (< k) records into the existing block whose star cost
/// increases the least; ties go to the lowest block index.
fn merge_residual(d: &Dataset, blocks: &mut [Vec<usize>], residual: &BTreeSet<usize>) {
    let best = (0..blocks.len())
        .min_by_key(|&b| {
            let mut merged = blocks[b].clone();
            merged.extend(residual.iter().copied());
            merged.sort_unstable();
            (
                block_star_cost(d, &merged) - block_star_cost(d, &blocks[b]),
                b,
            )
        })
        .expect("the greedy loop places at least one block before a residual remains");
    blocks[best].extend(residual.iter().copied());
    blocks[best].sort_unstable();
}

/// The O(k log k)-style path: greedy suppression, then flip conversion.
pub fn greedy_flip_anonymize(d: &Dataset, k: usize) -> Result<AnonymizationResult, Error> {
    let s = greedy_anonymize(d, k)?;
    // suppression_to_flip and result_from_grouping agree edit-for-edit; the
    // result builder also applies the script and flags emptied records
    debug_assert!(suppression_to_flip(d, &s).is_ok());
    result_from_grouping(d, s.grouping)
}
