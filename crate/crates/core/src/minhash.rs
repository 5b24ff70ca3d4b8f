//! MinHash signatures, Jaccard similarity, single-band LSH bucketing, and
//! keyword-level LSH identity.
//!
//! Instead of materializing random permutations, each hash function is a
//! seeded 64-bit avalanche mix of the element; the per-seed minimum serves as
//! a proxy for the first index under a random permutation, so the collision
//! probability of one component approximates the Jaccard coefficient and a
//! p-fold concatenated key collides with probability ~ Jaccard^p.
//!
//! The mixing function and seed derivation below are normative for on-disk
//! reproducibility; the exact constants are documented in docs/FORMATS.md.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::model::{ItemId, RecordSet};

pub const MIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
pub const MIX_M1: u64 = 0xBF58_476D_1CE4_E5B9;
pub const MIX_M2: u64 = 0x94D0_49BB_1331_11EB;
/// Domain tag separating keyword-level seeds from thread-level seeds.
pub const KEYWORD_SEED_DOMAIN: u64 = 0x6B65_7977_6F72_6473;
/// Initial accumulator when folding keyword MinHash components into one key.
pub const KEYWORD_FOLD_INIT: u64 = 0x6B77_666F_6C64_3031;

/// Fixed, platform-independent 64-bit avalanche mix of `x` under `seed`.
pub fn mix64(seed: u64, x: u64) -> u64 {
    let mut z = seed ^ x.wrapping_mul(MIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(MIX_M1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_M2);
    z ^ (z >> 31)
}

/// Deterministic stream of 64-bit values from a seed (splitmix-style); used
/// for thread ids, sampling, and initialization choices.
#[derive(Debug, Clone)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(MIX_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(MIX_M1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX_M2);
        z ^ (z >> 31)
    }
}

/// Seeds for thread-level and keyword-level MinHash, all derived from one
/// master seed.
#[derive(Debug, Clone)]
pub struct MinHashConfig {
    pub p: usize,
    pub keyword_p: usize,
    pub master_seed: u64,
    seeds: Vec<u64>,
    keyword_seeds: Vec<u64>,
}

impl MinHashConfig {
    pub fn new(p: usize, keyword_p: usize, master_seed: u64) -> Self {
        assert!(p >= 1, "concatenation length must be at least 1");
        assert!(
            keyword_p >= 1,
            "keyword concatenation length must be at least 1"
        );
        let seeds = (0..p).map(|j| mix64(master_seed, j as u64)).collect();
        let keyword_seeds = (0..keyword_p)
            .map(|j| mix64(master_seed ^ KEYWORD_SEED_DOMAIN, j as u64))
            .collect();
        Self {
            p,
            keyword_p,
            master_seed,
            seeds,
            keyword_seeds,
        }
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }
}

/// |a ∩ b| / |a ∪ b|. Two empty sets count as identical.
pub fn jaccard(a: &RecordSet, b: &RecordSet) -> f64 {
    jaccard_sorted(a.items(), b.items())
}

/// Jaccard coefficient over two sorted, deduplicated slices.
pub fn jaccard_sorted<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Concatenated MinHash key: the p per-seed minima.
pub type LshKey = Vec<u64>;

/// Per-seed minimum of the mixed items; component j is
/// min over items e of mix64(seed_j, e).
pub fn minhash_signature(s: &RecordSet, cfg: &MinHashConfig) -> Result<Vec<u64>, Error> {
    if s.is_empty() {
        return Err(Error::EmptySet(s.record_id.clone()));
    }
    Ok(cfg
        .seeds
        .iter()
        .map(|&seed| {
            s.items()
                .iter()
                .map(|&ItemId(e)| mix64(seed, e as u64))
                .min()
                .unwrap()
        })
        .collect())
}

/// Single-band LSH bucketing: threads with equal concatenated keys share a
/// cluster. Every thread lands in exactly one cluster; clusters are emitted
/// in key order with ascending member indices.
pub fn cluster_by_lsh(
    threads: &[RecordSet],
    cfg: &MinHashConfig,
) -> Result<Vec<Vec<usize>>, Error> {
    let mut buckets: BTreeMap<LshKey, Vec<usize>> = BTreeMap::new();
    for (i, t) in threads.iter().enumerate() {
        buckets
            .entry(minhash_signature(t, cfg)?)
            .or_default()
            .push(i);
    }
    Ok(buckets.into_values().collect())
}

/// Expands a keyword into (character, occurrence-ordinal) elements, so the
/// keyword is treated as a multiset of characters and "aa" differs from "a".
fn keyword_elements(keyword: &str) -> Vec<u64> {
    let mut counts: BTreeMap<char, u64> = BTreeMap::new();
    keyword
        .chars()
        .map(|c| {
            let ordinal = counts.entry(c).or_insert(0);
            let elem = ((c as u64) << 32) | *ordinal;
            *ordinal += 1;
            elem
        })
        .collect()
}

/// Keyword identity hash: MinHash of the keyword's character multiset over
/// keyword_p seeds, folded into one 64-bit key. Near-misspellings share the
/// key with probability ~ Jaccard(characters)^keyword_p.
pub fn keyword_lsh(keyword: &str, cfg: &MinHashConfig) -> Result<u64, Error> {
    if keyword.is_empty() {
        return Err(Error::EmptyKeyword);
    }
    let elements = keyword_elements(keyword);
    let mut acc = KEYWORD_FOLD_INIT;
    for &seed in &cfg.keyword_seeds {
        let component = elements.iter().map(|&e| mix64(seed, e)).min().unwrap();
        acc = mix64(acc, component);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, items: &[u32]) -> RecordSet {
        RecordSet::new(id, items.iter().map(|&i| ItemId(i)).collect())
    }

    #[test]
    fn jaccard_examples() {
        let a = record("a", &[0, 1, 2]);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &record("b", &[5, 6])), 0.0);
        assert_eq!(jaccard(&a, &record("c", &[1, 2, 3])), 0.5);
    }

    #[test]
    fn singleton_signature_is_the_mixed_item() {
        let cfg = MinHashConfig::new(3, 2, 42);
        let sig = minhash_signature(&record("a", &[7]), &cfg).unwrap();
        let expected: Vec<u64> = cfg.seeds().iter().map(|&s| mix64(s, 7)).collect();
        assert_eq!(sig, expected);
    }

    #[test]
    fn identical_sets_identical_signatures() {
        let cfg = MinHashConfig::new(4, 2, 9);
        let a = minhash_signature(&record("a", &[1, 4, 9]), &cfg).unwrap();
        let b = minhash_signature(&record("b", &[1, 4, 9]), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_set_is_rejected() {
        let cfg = MinHashConfig::new(2, 2, 0);
        assert!(matches!(
            minhash_signature(&record("a", &[]), &cfg),
            Err(Error::EmptySet(_))
        ));
        assert!(matches!(keyword_lsh("", &cfg), Err(Error::EmptyKeyword)));
    }

    #[test]
    fn component_collision_rate_tracks_jaccard() {
        // two fixed sets with Jaccard 1/2, components pooled over 200 seeds
        let a = record("a", &[0, 1, 2, 3]);
        let b = record("b", &[2, 3, 4, 5]);
        let expected = jaccard(&a, &b);
        let (mut hits, mut trials) = (0usize, 0usize);
        for seed in 0..200u64 {
            let cfg = MinHashConfig::new(3, 2, seed);
            let sa = minhash_signature(&a, &cfg).unwrap();
            let sb = minhash_signature(&b, &cfg).unwrap();
            for (x, y) in sa.iter().zip(&sb) {
                trials += 1;
                if x == y {
                    hits += 1;
                }
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!(
            (rate - expected).abs() <= 0.05,
            "rate {rate:.3} vs jaccard {expected:.3}"
        );
    }

    #[test]
    fn identical_threads_form_one_cluster() {
        let cfg = MinHashConfig::new(3, 2, 5);
        let threads = vec![
            record("a", &[1, 2]),
            record("b", &[1, 2]),
            record("c", &[1, 2]),
        ];
        let clusters = cluster_by_lsh(&threads, &cfg).unwrap();
        assert_eq!(clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn disjoint_thread_gets_its_own_cluster() {
        let cfg = MinHashConfig::new(3, 2, 5);
        let threads = vec![
            record("a", &[1, 2]),
            record("b", &[1, 2]),
            record("c", &[1, 2]),
            record("d", &[40, 41]),
        ];
        let mut clusters = cluster_by_lsh(&threads, &cfg).unwrap();
        clusters.sort_by_key(|c| c.len());
        assert_eq!(clusters, vec![vec![3], vec![0, 1, 2]]);
    }

    #[test]
    fn key_collision_rate_tracks_jaccard_power_p() {
        let a = record("a", &[0, 1, 2, 3, 4, 5]);
        let b = record("b", &[0, 1, 2, 3, 6, 7]);
        let j = jaccard(&a, &b); // 1/2
        for p in [2usize, 3, 4] {
            let mut hits = 0usize;
            for seed in 0..200u64 {
                let cfg = MinHashConfig::new(p, 2, seed);
                if minhash_signature(&a, &cfg).unwrap() == minhash_signature(&b, &cfg).unwrap() {
                    hits += 1;
                }
            }
            let rate = hits as f64 / 200.0;
            let expected = j.powi(p as i32);
            assert!(
                (rate - expected).abs() <= 0.05,
                "p={p}: rate {rate:.3} vs {expected:.3}"
            );
        }
    }

    #[test]
    fn keyword_lsh_is_deterministic() {
        let cfg = MinHashConfig::new(3, 2, 77);
        assert_eq!(
            keyword_lsh("atlanta", &cfg).unwrap(),
            keyword_lsh("atlanta", &cfg).unwrap()
        );
    }

    #[test]
    fn keyword_multiset_encoding_distinguishes_repeats() {
        let cfg = MinHashConfig::new(3, 2, 77);
        // same character set, different multiset
        assert_ne!(keyword_elements("a"), keyword_elements("aa"));
        let mut distinct = 0;
        for seed in 0..50u64 {
            let cfg = MinHashConfig::new(3, 2, seed);
            if keyword_lsh("a", &cfg).unwrap() != keyword_lsh("aa", &cfg).unwrap() {
                distinct += 1;
            }
        }
        assert!(distinct > 0, "{:?}", cfg.keyword_seeds);
    }

    #[test]
    fn misspelling_collision_rate_matches_analysis() {
        // "atlant" and "atlanta" share 6 of 7 multiset characters, so one
        // component collides with probability 6/7 and the folded key with
        // (6/7)^keyword_p
        let mut hits = 0usize;
        let trials = 1000u64;
        for seed in 0..trials {
            let cfg = MinHashConfig::new(3, 2, seed);
            if keyword_lsh("atlant", &cfg).unwrap() == keyword_lsh("atlanta", &cfg).unwrap() {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        let expected = (6.0f64 / 7.0).powi(2);
        assert!(
            (rate - expected).abs() <= 0.05,
            "rate {rate:.3} vs {expected:.3}"
        );
    }

    #[test]
    fn unrelated_keywords_rarely_collide() {
        let mut hits = 0usize;
        for seed in 0..1000u64 {
            let cfg = MinHashConfig::new(3, 2, seed);
            if keyword_lsh("nicotine", &cfg).unwrap() == keyword_lsh("delivery", &cfg).unwrap() {
                hits += 1;
            }
        }
        // character Jaccard("nicotine", "delivery") = 2/13, squared ~ 0.024
        assert!(hits < 80, "collided {hits} times in 1000 seeds");
    }

    #[test]
    fn signature_collisions_over_many_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..20 {
            let m = 12u32;
            let a: Vec<u32> = (0..m).filter(|_| rng.gen_bool(0.5)).collect();
            let b: Vec<u32> = (0..m).filter(|_| rng.gen_bool(0.5)).collect();
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let ra = record("a", &a);
            let rb = record("b", &b);
            let j = jaccard(&ra, &rb);
            let mut hits = 0;
            let trials = 400;
            for seed in 0..trials {
                let cfg = MinHashConfig::new(1, 2, seed);
                if minhash_signature(&ra, &cfg).unwrap() == minhash_signature(&rb, &cfg).unwrap() {
                    hits += 1;
                }
            }
            let rate = hits as f64 / trials as f64;
            assert!((rate - j).abs() < 0.09, "rate {rate:.3} vs {j:.3}");
        }
    }

    proptest! {
        /// Refinement: clusters at p+1 are subsets of clusters at p.
        #[test]
        fn deeper_keys_refine_clusters(
            rows in prop::collection::vec(prop::collection::btree_set(0u32..10, 1..6), 2..10),
            seed in 0u64..500,
            p in 1usize..4,
        ) {
            let threads: Vec<RecordSet> = rows
                .into_iter()
                .enumerate()
                .map(|(i, s)| RecordSet::new(format!("t{i}"), s.into_iter().map(ItemId).collect()))
                .collect();
            let coarse = cluster_by_lsh(&threads, &MinHashConfig::new(p, 2, seed)).unwrap();
            let fine = cluster_by_lsh(&threads, &MinHashConfig::new(p + 1, 2, seed)).unwrap();
            // both are partitions
            let total: usize = coarse.iter().map(Vec::len).sum();
            prop_assert_eq!(total, threads.len());
            for f in &fine {
                let holds = coarse.iter().any(|c| f.iter().all(|i| c.contains(i)));
                prop_assert!(holds, "fine cluster {:?} not nested in {:?}", f, coarse);
            }
        }
    }
}
