//! k-group clustering via a facility-location local search with minimum-load
//! repair.
//!
//! Records act as both demand points and candidate facilities (discrete
//! centers at most double the cost of arbitrary centers, and the final
//! per-block majority center can only improve on the chosen facility). The
//! search minimizes assignment cost + f * |open| under open/close/swap moves,
//! then the repair pass closes under-loaded facilities until every open one
//! serves at least k records. The facility cost f is chosen by a doubling
//! search over repaired edit costs.

use crate::error::Error;
use crate::flip::result_from_grouping;
use crate::minhash::SeedStream;
use crate::model::{block_flip_cost, hamming, AnonymizationResult, Dataset, Grouping};

/// Open facilities (record indices, ascending) and the record -> facility
/// assignment.
#[derive(Debug, Clone)]
pub struct FacilityState {
    pub open: Vec<usize>,
    /// For each record, the record index of its assigned open facility.
    pub assignment: Vec<usize>,
    pub facility_cost: f64,
}

impl FacilityState {
    pub fn load(&self, facility: usize) -> usize {
        self.assignment.iter().filter(|&&c| c == facility).count()
    }

    /// Assignment classes in facility order; each class ascending.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        self.open
            .iter()
            .map(|&c| {
                (0..self.assignment.len())
                    .filter(|&i| self.assignment[i] == c)
                    .collect()
            })
            .collect()
    }
}

struct Distances<'a> {
    d: &'a Dataset,
    matrix: Option<Vec<u32>>,
    n: usize,
}

impl<'a> Distances<'a> {
    const MATRIX_LIMIT: usize = 512;

    fn new(d: &'a Dataset) -> Self {
        let n = d.len();
        let matrix = (n <= Self::MATRIX_LIMIT).then(|| {
            let mut m = vec![0u32; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let dist = hamming(&d.records[i], &d.records[j]) as u32;
                    m[i * n + j] = dist;
                    m[j * n + i] = dist;
                }
            }
            m
        });
        Self { d, matrix, n }
    }

    fn get(&self, i: usize, j: usize) -> usize {
        match &self.matrix {
            Some(m) => m[i * self.n + j] as usize,
            None => hamming(&self.d.records[i], &self.d.records[j]),
        }
    }
}

/// Nearest open facility for each record (ties: lowest facility index) and
/// the summed assignment distance.
fn assign(dist: &Distances, open: &[usize], n: usize) -> (Vec<usize>, usize) {
    let mut assignment = Vec::with_capacity(n);
    let mut total = 0;
    for i in 0..n {
        let best = open
            .iter()
            .copied()
            .min_by_key(|&c| (dist.get(i, c), c))
            .expect("at least one facility is open");
        assignment.push(best);
        total += dist.get(i, best);
    }
    (assignment, total)
}

fn objective(dist: &Distances, open: &[usize], n: usize, f: f64) -> f64 {
    assign(dist, open, n).1 as f64 + f * open.len() as f64
}

/// Greedy farthest-point selection of `count` facilities; the first pick is
/// seeded, later picks maximize the distance to the nearest selected point
/// (ties: lowest index).
fn farthest_point_init(dist: &Distances, n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut stream = SeedStream::new(seed);
    let first = (stream.next_u64() % n as u64) as usize;
    let mut selected = vec![first];
    let mut nearest: Vec<usize> = (0..n).map(|i| dist.get(i, first)).collect();
    while selected.len() < count.clamp(1, n) {
        let next = (0..n)
            .filter(|i| !selected.contains(i))
            .max_by_key(|&i| (nearest[i], std::cmp::Reverse(i)))
            .expect("count <= n");
        selected.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = (*d).min(dist.get(i, next));
        }
    }
    selected.sort_unstable();
    selected
}

/// Local optimum of the facility-location objective under single open,
/// close, and swap moves, starting from `init_count` farthest-point
/// facilities. Deterministic given the seed; swap candidates are sampled
/// (up to n per round) once n exceeds 256.
pub fn local_search_fl(d: &Dataset, f: f64, seed: u64, init_count: usize) -> FacilityState {
    let n = d.len();
    assert!(n >= 1, "local search needs at least one record");
    assert!(f > 0.0, "facility cost must be positive");
    let dist = Distances::new(d);
    let mut open = farthest_point_init(&dist, n, init_count, seed);
    let mut best_obj = objective(&dist, &open, n, f);
    let mut stream = SeedStream::new(seed ^ 0x5157_4150_5341_4D50); // swap sampling
    loop {
        // moves must strictly decrease (objective, open count)
        // lexicographically; the tie-break toward fewer facilities lets the
        // search shed a facility whose closure is cost-neutral
        let cur_key = (best_obj, open.len());
        let mut best_move: Option<(f64, Vec<usize>)> = None;
        let consider = |obj: f64, cand: Vec<usize>, best_move: &mut Option<(f64, Vec<usize>)>| {
            let better_than = |o: f64, l: usize| obj < o || (obj == o && cand.len() < l);
            if better_than(cur_key.0, cur_key.1)
                && best_move
                    .as_ref()
                    .is_none_or(|(o, c)| better_than(*o, c.len()))
            {
                *best_move = Some((obj, cand));
            }
        };
        // close one
        if open.len() > 1 {
            for idx in 0..open.len() {
                let mut cand = open.clone();
                cand.remove(idx);
                let obj = objective(&dist, &cand, n, f);
                consider(obj, cand, &mut best_move);
            }
        }
        // open one
        for j in 0..n {
            if open.binary_search(&j).is_err() {
                let mut cand = open.clone();
                cand.push(j);
                cand.sort_unstable();
                let obj = objective(&dist, &cand, n, f);
                consider(obj, cand, &mut best_move);
            }
        }
        // swap one pair
        let try_swap = |c_idx: usize, j: usize, best_move: &mut Option<(f64, Vec<usize>)>| {
            let mut cand = open.clone();
            cand.remove(c_idx);
            cand.push(j);
            cand.sort_unstable();
            let obj = objective(&dist, &cand, n, f);
            consider(obj, cand, best_move);
        };
        if n <= 256 {
            for c_idx in 0..open.len() {
                for j in 0..n {
                    if open.binary_search(&j).is_err() {
                        try_swap(c_idx, j, &mut best_move);
                    }
                }
            }
        } else {
            for _ in 0..n {
                let c_idx = (stream.next_u64() % open.len() as u64) as usize;
                let j = (stream.next_u64() % n as u64) as usize;
                if open.binary_search(&j).is_err() {
                    try_swap(c_idx, j, &mut best_move);
                }
            }
        }
        match best_move {
            Some((obj, cand)) => {
                open = cand;
                best_obj = obj;
            }
            None => break,
        }
    }
    let (assignment, _) = assign(&dist, &open, n);
    FacilityState {
        open,
        assignment,
        facility_cost: f,
    }
}

/// Closes under-loaded facilities until every open facility serves at least
/// k records: repeatedly pick the open facility with the fewest assignees
/// below k (ties: lowest index), close it, and reassign only its records to
/// their nearest remaining facility.
pub fn repair_min_load(
    state: &FacilityState,
    d: &Dataset,
    k: usize,
) -> Result<FacilityState, Error> {
    let n = d.len();
    if n < k {
        return Err(Error::TooFewRecords { n, k });
    }
    let dist = Distances::new(d);
    let mut open = state.open.clone();
    let mut assignment = state.assignment.clone();
    loop {
        let victim = open
            .iter()
            .copied()
            .map(|c| (assignment.iter().filter(|&&a| a == c).count(), c))
            .filter(|&(load, _)| load < k)
            .min();
        let Some((_, victim)) = victim else { break };
        open.retain(|&c| c != victim);
        debug_assert!(!open.is_empty(), "n >= k keeps the last facility loaded");
        for (i, assigned) in assignment.iter_mut().enumerate() {
            if *assigned == victim {
                *assigned = open
                    .iter()
                    .copied()
                    .min_by_key(|&c| (dist.get(i, c), c))
                    .expect("at least one facility remains open");
            }
        }
    }
    Ok(FacilityState {
        open,
        assignment,
        facility_cost: state.facility_cost,
    })
}

/// Lower median of each record's distance to its nearest other record;
/// at least 1 so the facility cost stays positive.
fn median_nn_distance(d: &Dataset) -> usize {
    let n = d.len();
    if n < 2 {
        return 1;
    }
    let dist = Distances::new(d);
    let mut nn: Vec<usize> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist.get(i, j))
                .min()
                .unwrap()
        })
        .collect();
    nn.sort_unstable();
    nn[(n - 1) / 2].max(1)
}

/// The O(1)-style path: doubling search over the facility cost, local
/// search, minimum-load repair, then per-block majority anonymization of the
/// assignment classes.
pub fn cluster_anonymize(d: &Dataset, k: usize, seed: u64) -> Result<AnonymizationResult, Error> {
    let n = d.len();
    if n < k || n == 0 {
        return Err(Error::TooFewRecords { n, k });
    }
    let init_count = n.div_ceil(k);
    let mut f = median_nn_distance(d) as f64;
    let mut best: Option<(usize, Grouping)> = None;
    let mut prev_cost: Option<usize> = None;
    for _ in 0..40 {
        let state = local_search_fl(d, f, seed, init_count);
        let repaired = repair_min_load(&state, d, k)?;
        let blocks = repaired.blocks();
        let cost: usize = blocks.iter().map(|b| block_flip_cost(d, b)).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, Grouping::new(blocks)));
        }
        // stop at the first local minimum of the cost-versus-f curve
        let single_facility = repaired.open.len() == 1;
        let rising = prev_cost.is_some_and(|p| cost > p);
        if cost == 0 || single_facility || rising {
            break;
        }
        prev_cost = Some(cost);
        f *= 2.0;
    }
    let (_, grouping) = best.expect("at least one f value is evaluated");
    result_from_grouping(d, grouping.normalized())
}
