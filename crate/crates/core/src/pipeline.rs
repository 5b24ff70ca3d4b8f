//! End-to-end query-log anonymization: session threading, keyword LSH,
//! MinHash clustering, per-cluster k-anonymization, translation of edits
//! back into query text, and cost reporting.
//!
//! Each thread is treated as the set of keyword-LSH values of its keywords.
//! Clusters with fewer than k threads (or, when distinct users are enforced,
//! fewer than k distinct users) are deleted outright. Within a surviving
//! cluster the configured anonymizer picks a grouping; each block is then
//! flipped to its majority center. A value deletion removes every keyword of
//! the thread hashing to that value from all of its queries; a value addition
//! appends to the thread's first query the cluster's most frequent generator
//! of that value. The emitted log is re-verified independently before it is
//! returned; threads never leave this module non-anonymous.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::flip::anonymize_group;
use crate::greedy::greedy_anonymize;
use crate::kgroup::cluster_anonymize;
use crate::minhash::{cluster_by_lsh, keyword_lsh, mix64, MinHashConfig, SeedStream};
use crate::model::{hamming_items, Dataset, EditOp, ItemId, RecordSet};
use crate::oracle::{optimal_flip, MAX_ORACLE_RECORDS};
use crate::threader::{format_timestamp, normalize, parse_log, segment, Thread, ThreaderParams};

const THREAD_ID_DOMAIN: u64 = 0x7468_7265_6164_6964;
const CLUSTER_SEED_DOMAIN: u64 = 0x636C_7573_7465_7264;

/// Which anonymizer runs inside each cluster. `Oracle` is exact for clusters
/// of at most 10 threads and falls back to the greedy beyond that.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Greedy,
    Cluster,
    Oracle,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Cluster => "cluster",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "greedy" => Ok(Algorithm::Greedy),
            "cluster" => Ok(Algorithm::Cluster),
            "oracle" => Ok(Algorithm::Oracle),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected greedy, cluster, or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub k: usize,
    pub algorithm: Algorithm,
    pub p: usize,
    pub keyword_p: usize,
    pub master_seed: u64,
    pub threader: ThreaderParams,
    pub enforce_distinct_users: bool,
}

impl PipelineConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            algorithm: Algorithm::Greedy,
            p: 3,
            keyword_p: 2,
            master_seed: 0,
            threader: ThreaderParams::default(),
            enforce_distinct_users: true,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".to_string()));
        }
        if self.p == 0 || self.keyword_p == 0 {
            return Err(Error::Config(
                "p and keyword-p must be at least 1".to_string(),
            ));
        }
        for (name, v) in [
            ("edit-threshold", self.threader.edit_threshold),
            ("jaccard-threshold", self.threader.jaccard_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn minhash(&self) -> MinHashConfig {
        MinHashConfig::new(self.p, self.keyword_p, self.master_seed)
    }
}

/// Cost and shape counters for one pipeline run; every flag is echoed so a
/// run can be reproduced from its report alone.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub k: usize,
    pub algorithm: String,
    pub p: usize,
    pub keyword_p: usize,
    pub master_seed: u64,
    pub edit_threshold: f64,
    pub jaccard_threshold: f64,
    pub enforce_distinct_users: bool,
    pub users: usize,
    pub queries_parsed: usize,
    pub rows_skipped: usize,
    pub threads_total: usize,
    pub threads_deleted: usize,
    pub threads_emptied: usize,
    pub clusters_total: usize,
    pub clusters_undersized: usize,
    pub additions: usize,
    pub deletions: usize,
    pub deleted_item_cost: usize,
    pub queries_dropped: usize,
    pub oracle_fallbacks: usize,
}

/// One row of a k-sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub additions: usize,
    pub deletions: usize,
    pub threads_deleted: usize,
    pub deleted_item_cost: usize,
}

impl SweepRow {
    /// Edit cost plus the item mass of deleted threads.
    pub fn total_cost(&self) -> usize {
        self.additions + self.deletions + self.deleted_item_cost
    }
}

struct LiveThread {
    thread_idx: usize,
    /// (keyword, lsh value) in keyword order.
    keyword_hashes: Vec<(String, u64)>,
    /// Sorted distinct lsh values.
    values: Vec<u64>,
}

enum ClusterOutcome {
    Deleted,
    Anonymized {
        /// Parallel to the cluster's member positions.
        edits: Vec<ThreadValueEdits>,
        oracle_fallback: bool,
    },
}

#[derive(Default, Clone)]
struct ThreadValueEdits {
    deleted: Vec<u64>,
    added: Vec<u64>,
}

/// Parse/segmentation counters shared by `segment_log` callers.
#[derive(Debug, Clone, Copy)]
pub struct SegmentStats {
    pub users: usize,
    pub queries_parsed: usize,
    pub rows_skipped: usize,
}

/// Parses a log and segments every user session into threads. Sessions are
/// processed in sorted user order with thread ids drawn from the master
/// seed, so the result is deterministic.
pub fn segment_log(
    log_text: &str,
    threader: &ThreaderParams,
    master_seed: u64,
) -> Result<(Vec<Thread>, SegmentStats), Error> {
    let (events, rows_skipped) = parse_log(log_text);
    let queries_parsed = events.len();

    let mut sessions: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for e in events {
        sessions.entry(e.user_id.clone()).or_default().push(e);
    }
    let users = sessions.len();

    let mut ids = SeedStream::new(master_seed ^ THREAD_ID_DOMAIN);
    let mut used_ids = HashSet::new();
    let mut threads: Vec<Thread> = Vec::new();
    for (_, mut session) in sessions {
        session.sort_by_key(|e| e.timestamp);
        let mut segmented = segment(&session, threader, &mut ids)?;
        for t in &mut segmented {
            while !used_ids.insert(t.thread_id) {
                t.thread_id = ids.next_u64();
            }
        }
        threads.extend(segmented);
    }
    Ok((
        threads,
        SegmentStats {
            users,
            queries_parsed,
            rows_skipped,
        },
    ))
}

/// Runs the full pipeline and returns the anonymized log text plus a report.
/// The emitted log has lines `thread_id<TAB>query<TAB>timestamp` and never
/// carries original user ids.
pub fn run(log_text: &str, cfg: &PipelineConfig) -> Result<(String, PipelineReport), Error> {
    cfg.validate()?;
    let (threads, stats) = segment_log(log_text, &cfg.threader, cfg.master_seed)?;
    let SegmentStats {
        users,
        queries_parsed,
        rows_skipped,
    } = stats;
    let threads_total = threads.len();

    let mh = cfg.minhash();
    let mut deleted_thread: Vec<bool> = vec![false; threads.len()];
    let mut live: Vec<LiveThread> = Vec::new();
    for (thread_idx, t) in threads.iter().enumerate() {
        let keyword_hashes: Vec<(String, u64)> = t
            .keywords
            .iter()
            .map(|kw| Ok((kw.clone(), keyword_lsh(kw, &mh)?)))
            .collect::<Result<_, Error>>()?;
        let values: Vec<u64> = {
            let mut v: Vec<u64> = keyword_hashes.iter().map(|&(_, h)| h).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        if values.is_empty() {
            // queries with no alphanumeric content cannot be clustered
            deleted_thread[thread_idx] = true;
            continue;
        }
        live.push(LiveThread {
            thread_idx,
            keyword_hashes,
            values,
        });
    }

    // dense interning of lsh values so the anonymizers see compact item ids
    let universe: Vec<u64> = {
        let mut u: BTreeSet<u64> = BTreeSet::new();
        for lt in &live {
            u.extend(lt.values.iter().copied());
        }
        u.into_iter().collect()
    };
    let value_id: HashMap<u64, ItemId> = universe
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, ItemId(i as u32)))
        .collect();
    let records: Vec<RecordSet> = live
        .iter()
        .map(|lt| {
            RecordSet::new(
                threads[lt.thread_idx].thread_id.to_string(),
                lt.values.iter().map(|v| value_id[v]).collect(),
            )
        })
        .collect();

    let clusters = cluster_by_lsh(&records, &mh)?;
    let clusters_total = clusters.len();

    let outcomes: Vec<ClusterOutcome> = clusters
        .par_iter()
        .enumerate()
        .map(|(ci, members)| {
            let seed = mix64(cfg.master_seed ^ CLUSTER_SEED_DOMAIN, ci as u64);
            anonymize_cluster(cfg, &threads, &live, &records, &universe, members, seed)
        })
        .collect::<Result<_, Error>>()?;

    let mut clusters_undersized = 0;
    let mut additions = 0;
    let mut deletions = 0;
    let mut oracle_fallbacks = 0;
    let mut thread_edits: HashMap<usize, ThreadValueEdits> = HashMap::new();
    for (members, outcome) in clusters.iter().zip(&outcomes) {
        match outcome {
            ClusterOutcome::Deleted => {
                clusters_undersized += 1;
                for &pos in members {
                    deleted_thread[live[pos].thread_idx] = true;
                }
            }
            ClusterOutcome::Anonymized {
                edits,
                oracle_fallback,
            } => {
                oracle_fallbacks += usize::from(*oracle_fallback);
                for (&pos, e) in members.iter().zip(edits) {
                    additions += e.added.len();
                    deletions += e.deleted.len();
                    thread_edits.insert(live[pos].thread_idx, e.clone());
                }
            }
        }
    }

    let threads_deleted = deleted_thread.iter().filter(|&&d| d).count();
    let deleted_item_cost = live
        .iter()
        .filter(|lt| deleted_thread[lt.thread_idx])
        .map(|lt| lt.values.len())
        .sum();

    // translate value edits into query rewrites and emit in cluster order
    let mut out = String::new();
    let mut queries_dropped = 0;
    let mut threads_emptied = 0;
    let mut emitted_users: HashMap<u64, String> = HashMap::new();
    for (members, outcome) in clusters.iter().zip(&outcomes) {
        if matches!(outcome, ClusterOutcome::Deleted) {
            continue;
        }
        for &pos in members {
            let lt = &live[pos];
            let t = &threads[lt.thread_idx];
            let edits = thread_edits
                .get(&lt.thread_idx)
                .cloned()
                .unwrap_or_default();
            let deleted_values: BTreeSet<u64> = edits.deleted.iter().copied().collect();
            let deleted_words: BTreeSet<String> = lt
                .keyword_hashes
                .iter()
                .filter(|(_, h)| deleted_values.contains(h))
                .map(|(w, _)| w.clone())
                .collect();
            let mut emitted_any = false;
            for (qi, q) in t.queries.iter().enumerate() {
                let mut words = surviving_runs(&q.raw_query, &deleted_words);
                if qi == 0 {
                    // additions land on the thread's first query
                    words.extend(generator_words(&edits.added, &live, members));
                }
                if words.is_empty() {
                    queries_dropped += 1;
                    continue;
                }
                out.push_str(&t.thread_id.to_string());
                out.push('\t');
                out.push_str(&words.join(" "));
                out.push('\t');
                out.push_str(&format_timestamp(q.timestamp));
                out.push('\n');
                emitted_any = true;
            }
            if emitted_any {
                emitted_users.insert(t.thread_id, t.user_id.clone());
            } else {
                threads_emptied += 1;
            }
        }
    }

    let report = PipelineReport {
        k: cfg.k,
        algorithm: cfg.algorithm.as_str().to_string(),
        p: cfg.p,
        keyword_p: cfg.keyword_p,
        master_seed: cfg.master_seed,
        edit_threshold: cfg.threader.edit_threshold,
        jaccard_threshold: cfg.threader.jaccard_threshold,
        enforce_distinct_users: cfg.enforce_distinct_users,
        users,
        queries_parsed,
        rows_skipped,
        threads_total,
        threads_deleted,
        threads_emptied,
        clusters_total,
        clusters_undersized,
        additions,
        deletions,
        deleted_item_cost,
        queries_dropped,
        oracle_fallbacks,
    };

    let user_map = cfg.enforce_distinct_users.then_some(&emitted_users);
    verify_log(&out, cfg.k, &mh, user_map)?;
    Ok((out, report))
}

/// Anonymizes one cluster. Returns per-member value edits, or `Deleted` when
/// the cluster is undersized (or cannot satisfy the distinct-user rule).
fn anonymize_cluster(
    cfg: &PipelineConfig,
    threads: &[Thread],
    live: &[LiveThread],
    records: &[RecordSet],
    universe: &[u64],
    members: &[usize],
    seed: u64,
) -> Result<ClusterOutcome, Error> {
    let k = cfg.k;
    let member_users: Vec<&str> = members
        .iter()
        .map(|&pos| threads[live[pos].thread_idx].user_id.as_str())
        .collect();
    let distinct_users = member_users.iter().collect::<BTreeSet<_>>().len();
    if members.len() < k || (cfg.enforce_distinct_users && distinct_users < k) {
        return Ok(ClusterOutcome::Deleted);
    }

    let sub = Dataset::new(
        members.iter().map(|&pos| records[pos].clone()).collect(),
        universe.len(),
    )?;

    let mut oracle_fallback = false;
    let grouping = match cfg.algorithm {
        Algorithm::Greedy => greedy_anonymize(&sub, k)?.grouping,
        Algorithm::Cluster => cluster_anonymize(&sub, k, seed)?.grouping,
        Algorithm::Oracle => {
            if sub.len() <= MAX_ORACLE_RECORDS {
                optimal_flip(&sub, k)?.1
            } else {
                oracle_fallback = true;
                greedy_anonymize(&sub, k)?.grouping
            }
        }
    };

    let blocks = if cfg.enforce_distinct_users {
        match repair_distinct_users(&sub, &member_users, k, grouping.blocks) {
            Some(blocks) => blocks,
            None => return Ok(ClusterOutcome::Deleted),
        }
    } else {
        grouping.blocks
    };

    let mut edits = vec![ThreadValueEdits::default(); members.len()];
    for block in &blocks {
        let g = anonymize_group(&sub, block);
        for e in &g.edits {
            let value = universe[e.item.0 as usize];
            match e.op {
                EditOp::Add => edits[e.record].added.push(value),
                EditOp::Delete => edits[e.record].deleted.push(value),
            }
        }
    }
    for e in &mut edits {
        e.added.sort_unstable();
        e.deleted.sort_unstable();
    }
    Ok(ClusterOutcome::Anonymized {
        edits,
        oracle_fallback,
    })
}

/// Merges blocks until every block spans at least k distinct users, or
/// returns `None` if even the whole cluster cannot (callers delete it).
fn repair_distinct_users(
    sub: &Dataset,
    users: &[&str],
    k: usize,
    mut blocks: Vec<Vec<usize>>,
) -> Option<Vec<Vec<usize>>> {
    loop {
        let violating = blocks
            .iter()
            .position(|b| b.iter().map(|&i| users[i]).collect::<BTreeSet<_>>().len() < k);
        let Some(b) = violating else {
            return Some(blocks);
        };
        if blocks.len() == 1 {
            return None;
        }
        let center_b = anonymize_group(sub, &blocks[b]).center;
        let partner = (0..blocks.len())
            .filter(|&o| o != b)
            .min_by_key(|&o| {
                let center_o = anonymize_group(sub, &blocks[o]).center;
                (hamming_items(&center_b, &center_o), o)
            })
            .expect("more than one block");
        let (keep, drop) = (b.min(partner), b.max(partner));
        let dropped = blocks.remove(drop);
        blocks[keep].extend(dropped);
        blocks[keep].sort_unstable();
    }
}

/// Chosen generator keyword for each added value: the cluster's most
/// frequent generator (counted per thread), ties broken lexicographically.
fn generator_words(added: &[u64], live: &[LiveThread], members: &[usize]) -> Vec<String> {
    added
        .iter()
        .map(|&h| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for &pos in members {
                for (w, wh) in &live[pos].keyword_hashes {
                    if *wh == h {
                        *counts.entry(w.as_str()).or_insert(0) += 1;
                    }
                }
            }
            counts
                .iter()
                .max_by_key(|&(_, &c)| c)
                .map(|(w, _)| w.to_string())
                .expect("an added value has a generator inside the cluster")
        })
        .collect()
}

/// Splits a raw query into alphanumeric runs (original case preserved) and
/// drops runs whose lowercase form was deleted from the thread.
fn surviving_runs(raw: &str, deleted_words: &BTreeSet<String>) -> Vec<String> {
    let mut runs = Vec::new();
    let mut cur = String::new();
    for c in raw.chars() {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs.retain(|r| !deleted_words.contains(&r.to_lowercase()));
    runs
}

/// Independent verifier over an emitted log: re-derives every thread's
/// keyword-LSH set from the text and checks that each set is shared by at
/// least k threads (from k distinct users when a user map is supplied).
pub fn verify_log(
    log_text: &str,
    k: usize,
    mh: &MinHashConfig,
    users: Option<&HashMap<u64, String>>,
) -> Result<(), Error> {
    if k <= 1 {
        return Ok(());
    }
    let mut keywords_by_thread: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
    for (lineno, line) in log_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (id, query) = match (cols.next(), cols.next()) {
            (Some(id), Some(q)) => (id, q),
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "expected thread_id<TAB>query<TAB>timestamp".to_string(),
                })
            }
        };
        let id: u64 = id.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad thread id {id:?}"),
        })?;
        keywords_by_thread
            .entry(id)
            .or_default()
            .extend(normalize(query));
    }
    let mut classes: BTreeMap<Vec<u64>, Vec<u64>> = BTreeMap::new();
    for (id, keywords) in &keywords_by_thread {
        let mut values: Vec<u64> = keywords
            .iter()
            .map(|w| keyword_lsh(w, mh))
            .collect::<Result<_, Error>>()?;
        values.sort_unstable();
        values.dedup();
        classes.entry(values).or_default().push(*id);
    }
    for (_, members) in classes {
        if members.len() < k {
            return Err(Error::VerificationFailed(format!(
                "thread {} matches only {} thread(s), needs {k}",
                members[0],
                members.len()
            )));
        }
        if let Some(map) = users {
            let distinct = members
                .iter()
                .filter_map(|id| map.get(id))
                .collect::<BTreeSet<_>>()
                .len();
            if distinct < k {
                return Err(Error::VerificationFailed(format!(
                    "thread {} matches threads from only {distinct} distinct user(s), needs {k}",
                    members[0]
                )));
            }
        }
    }
    Ok(())
}

/// Runs the pipeline once per k with an identical seed.
pub fn sweep(
    log_text: &str,
    cfg: &PipelineConfig,
    k_values: &[usize],
) -> Result<Vec<(SweepRow, PipelineReport)>, Error> {
    if k_values.is_empty() {
        return Err(Error::Config("sweep needs at least one k".to_string()));
    }
    if k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "k values must be strictly ascending".to_string(),
        ));
    }
    let mut rows = Vec::new();
    for &k in k_values {
        let mut run_cfg = cfg.clone();
        run_cfg.k = k;
        let (_, report) = run(log_text, &run_cfg)?;
        rows.push((
            SweepRow {
                k,
                additions: report.additions,
                deletions: report.deletions,
                threads_deleted: report.threads_deleted,
                deleted_item_cost: report.deleted_item_cost,
            },
            report,
        ));
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[(SweepRow, PipelineReport)]) -> String {
    let mut out = String::from("k,additions,deletions,threads_deleted\n");
    for (row, _) in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.k, row.additions, row.deletions, row.threads_deleted
        ));
    }
    out
}
