//! Brute-force optimal k-anonymization for tiny instances; ground truth for
//! the approximation-ratio tests.
//!
//! Partitions are enumerated as restricted-growth assignments with block-size
//! pruning; per-block costs are memoized by member bitmask. The flip
//! objective only needs blocks of size k..=2k-1 (per-column min(N1, N0) is
//! subadditive under block splits), while the suppression objective is
//! enumerated without an upper cap.

use std::collections::HashMap;

use crate::error::Error;
use crate::model::{
    block_disagreeing_columns, block_flip_cost, block_star_cost, Dataset, Grouping,
    SuppressionSolution,
};

/// Largest instance the oracle accepts.
pub const MAX_ORACLE_RECORDS: usize = 10;

struct PartitionSearch<'a, F: Fn(&Dataset, &[usize]) -> usize> {
    d: &'a Dataset,
    min_size: usize,
    max_size: usize,
    cost_fn: F,
    memo: HashMap<u64, usize>,
    best: Option<(usize, Vec<Vec<usize>>)>,
}

impl<'a, F: Fn(&Dataset, &[usize]) -> usize> PartitionSearch<'a, F> {
    fn block_cost(&mut self, block: &[usize]) -> usize {
        let mask = block.iter().fold(0u64, |m, &i| m | (1 << i));
        if let Some(&c) = self.memo.get(&mask) {
            return c;
        }
        let c = (self.cost_fn)(self.d, block);
        self.memo.insert(mask, c);
        c
    }

    fn recurse(&mut self, next: usize, blocks: &mut Vec<Vec<usize>>) {
        let n = self.d.len();
        if next == n {
            if blocks.iter().any(|b| b.len() < self.min_size) {
                return;
            }
            let cost: usize = {
                let snapshot: Vec<Vec<usize>> = blocks.clone();
                snapshot.iter().map(|b| self.block_cost(b)).sum()
            };
            // strict improvement keeps the first (lexicographically smallest
            // restricted-growth) grouping among ties
            if self.best.as_ref().is_none_or(|(c, _)| cost < *c) {
                self.best = Some((cost, blocks.clone()));
            }
            return;
        }
        // records still to place must be able to top up every short block
        let deficit: usize = blocks
            .iter()
            .map(|b| self.min_size.saturating_sub(b.len()))
            .sum();
        if deficit > n - next {
            return;
        }
        for b in 0..blocks.len() {
            if blocks[b].len() < self.max_size {
                blocks[b].push(next);
                self.recurse(next + 1, blocks);
                blocks[b].pop();
            }
        }
        blocks.push(vec![next]);
        self.recurse(next + 1, blocks);
        blocks.pop();
    }
}

fn optimal_partition<F: Fn(&Dataset, &[usize]) -> usize>(
    d: &Dataset,
    k: usize,
    max_size: usize,
    cost_fn: F,
) -> Result<(usize, Grouping), Error> {
    let n = d.len();
    if n > MAX_ORACLE_RECORDS {
        return Err(Error::DatasetTooLarge {
            n,
            max: MAX_ORACLE_RECORDS,
        });
    }
    if n < k || n == 0 {
        return Err(Error::TooFewRecords { n, k });
    }
    let mut search = PartitionSearch {
        d,
        min_size: k,
        max_size,
        cost_fn,
        memo: HashMap::new(),
        best: None,
    };
    search.recurse(0, &mut Vec::new());
    let (cost, blocks) = search
        .best
        .expect("a partition into blocks of size >= k exists whenever n >= k");
    Ok((cost, Grouping::new(blocks)))
}

/// Minimum number of flips over all partitions into blocks of size in
/// [k, 2k-1], with the grouping that attains it.
pub fn optimal_flip(d: &Dataset, k: usize) -> Result<(usize, Grouping), Error> {
    let cap = (2 * k - 1).min(d.len().max(1));
    optimal_partition(d, k, cap, block_flip_cost)
}

/// Flip optimum without the 2k-1 block cap; used to cross-check that the
/// cap never changes the minimum.
#[cfg(test)]
fn optimal_flip_unrestricted(d: &Dataset, k: usize) -> Result<(usize, Grouping), Error> {
    optimal_partition(d, k, d.len().max(1), block_flip_cost)
}

/// Minimum number of stars over all partitions into blocks of size >= k
/// (no upper cap), with the solution that attains it.
pub fn optimal_suppression(d: &Dataset, k: usize) -> Result<(usize, SuppressionSolution), Error> {
    let (cost, grouping) = optimal_partition(d, k, d.len().max(1), block_star_cost)?;
    let suppressed = grouping
        .blocks
        .iter()
        .map(|b| block_disagreeing_columns(d, b))
        .collect();
    Ok((
        cost,
        SuppressionSolution {
            grouping,
            suppressed,
        },
    ))
}
