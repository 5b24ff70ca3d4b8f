//! Splits each user session into topic-based threads using query similarity,
//! producing keyword-set records for anonymization.
//!
//! Pass 1 scans queries in time order: a query similar to an earlier one
//! joins that query's thread (most recent match wins), otherwise it opens a
//! new thread. Later passes merge adjacent-in-time threads that contain any
//! similar query pair, repeated to a fixpoint with a bounded round count.

use chrono::NaiveDateTime;

use crate::error::Error;
use crate::minhash::{jaccard_sorted, SeedStream};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One raw query from a user's log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryEvent {
    pub user_id: String,
    /// Seconds since the epoch.
    pub timestamp: i64,
    pub raw_query: String,
}

/// A topic-coherent fragment of one user's session.
#[derive(Debug, Clone)]
pub struct Thread {
    /// Re-randomized identifier; the only id that may reach the output.
    pub thread_id: u64,
    /// Original user; internal bookkeeping only, never emitted.
    pub user_id: String,
    /// Time-ordered member queries.
    pub queries: Vec<QueryEvent>,
    /// Union of the normalized tokens of the member queries, sorted.
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ThreaderParams {
    /// Normalized Levenshtein threshold (strict <).
    pub edit_threshold: f64,
    /// Keyword Jaccard threshold (>=); stands in for result-set overlap.
    pub jaccard_threshold: f64,
    /// Cap on total threading rounds (pass 1 plus merge passes).
    pub max_rounds: usize,
}

impl Default for ThreaderParams {
    fn default() -> Self {
        Self {
            edit_threshold: 0.34,
            jaccard_threshold: 0.2,
            max_rounds: 10,
        }
    }
}

/// Lowercases, splits on anything non-alphanumeric, drops empty tokens,
/// dedupes. Returned sorted.
pub fn normalize(raw_query: &str) -> Vec<String> {
    let mut tokens: Vec<String> = raw_query
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    tokens.sort_unstable();
    tokens.dedup();
    tokens
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Two queries are similar when their normalized edit distance is below the
/// edit threshold or their keyword Jaccard reaches the Jaccard threshold.
pub fn similar(q1: &str, q2: &str, params: &ThreaderParams) -> bool {
    let max_len = q1.chars().count().max(q2.chars().count());
    if max_len > 0 {
        let edit = levenshtein(q1, q2) as f64 / max_len as f64;
        if edit < params.edit_threshold {
            return true;
        }
    }
    jaccard_sorted(&normalize(q1), &normalize(q2)) >= params.jaccard_threshold
}

/// Segments one user's time-ordered session into threads. Thread ids are
/// drawn from the caller's seeded stream in thread order.
pub fn segment(
    session: &[QueryEvent],
    params: &ThreaderParams,
    ids: &mut SeedStream,
) -> Result<Vec<Thread>, Error> {
    for (index, pair) in session.windows(2).enumerate() {
        if pair[0].timestamp > pair[1].timestamp {
            return Err(Error::UnorderedSession { index: index + 1 });
        }
    }
    if session.is_empty() {
        return Ok(Vec::new());
    }

    // pass 1: attach to the most recent similar query's thread
    let mut thread_of: Vec<usize> = Vec::with_capacity(session.len());
    let mut threads: Vec<Vec<usize>> = Vec::new();
    for (i, event) in session.iter().enumerate() {
        let found = (0..i)
            .rev()
            .find(|&j| similar(&event.raw_query, &session[j].raw_query, params));
        let t = match found {
            Some(j) => thread_of[j],
            None => {
                threads.push(Vec::new());
                threads.len() - 1
            }
        };
        thread_of.push(t);
        threads[t].push(i);
    }

    // passes 2..R: collapse adjacent threads that contain a similar pair
    for _ in 1..params.max_rounds {
        threads.sort_by_key(|t| t[0]);
        let mut merged_any = false;
        let mut i = 0;
        while i + 1 < threads.len() {
            let pair_similar = threads[i].iter().any(|&x| {
                threads[i + 1]
                    .iter()
                    .any(|&y| similar(&session[x].raw_query, &session[y].raw_query, params))
            });
            if pair_similar {
                let right = threads.remove(i + 1);
                threads[i].extend(right);
                threads[i].sort_unstable();
                merged_any = true;
            } else {
                i += 1;
            }
        }
        if !merged_any {
            break;
        }
    }

    threads.sort_by_key(|t| t[0]);
    Ok(threads
        .into_iter()
        .map(|members| {
            let queries: Vec<QueryEvent> = members.iter().map(|&i| session[i].clone()).collect();
            let mut keywords: Vec<String> = queries
                .iter()
                .flat_map(|q| normalize(&q.raw_query))
                .collect();
            keywords.sort_unstable();
            keywords.dedup();
            Thread {
                thread_id: ids.next_u64(),
                user_id: queries[0].user_id.clone(),
                queries,
                keywords,
            }
        })
        .collect())
}

/// Parses an AOL-style TSV log: `AnonID<TAB>Query<TAB>QueryTime` with
/// optional extra columns (ignored) and an optional header row. Unparseable
/// rows are skipped and counted.
pub fn parse_log(text: &str) -> (Vec<QueryEvent>, usize) {
    let mut events = Vec::new();
    let mut skipped = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (user, query, time) = match (cols.next(), cols.next(), cols.next()) {
            (Some(u), Some(q), Some(t)) => (u.trim(), q.trim(), t.trim()),
            _ => {
                skipped += 1;
                continue;
            }
        };
        if lineno == 0 && parse_timestamp(time).is_none() && user.eq_ignore_ascii_case("anonid") {
            continue; // header row
        }
        match parse_timestamp(time) {
            Some(timestamp) if !query.is_empty() => events.push(QueryEvent {
                user_id: user.to_string(),
                timestamp,
                raw_query: query.to_string(),
            }),
            _ => skipped += 1,
        }
    }
    (events, skipped)
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    chrono::DateTime::from_timestamp(ts, 0)
        .map(|t| t.naive_utc().format(TIMESTAMP_FORMAT).to_string())
        .unwrap_or_else(|| ts.to_string())
}
