//! Deterministic command-line front end: segment, cluster, anonymize, sweep,
//! oracle, and verify subcommands over set-data files and query logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use setanon::flip::result_from_grouping;
use setanon::greedy::greedy_flip_anonymize;
use setanon::io::{read_set_data, write_set_data};
use setanon::kgroup::cluster_anonymize;
use setanon::minhash::{cluster_by_lsh, keyword_lsh, MinHashConfig};
use setanon::model::{is_k_anonymous, AnonymizationResult, Dataset, EditOp, ItemId, RecordSet};
use setanon::oracle::{optimal_flip, optimal_suppression};
use setanon::pipeline::{self, Algorithm, PipelineConfig};
use setanon::threader::{format_timestamp, normalize, parse_timestamp, ThreaderParams};
use setanon::Error;

#[derive(Parser)]
#[command(
    name = "setanon",
    version,
    about = "k-anonymize set-valued data and query logs by item additions and deletions"
)]
struct Cli {
    /// key=value file mirroring the long flags; explicit flags win
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Cap on worker threads; never changes output bytes
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an AOL-style query log into topic threads
    Segment(SegmentArgs),
    /// Cluster a threads file by MinHash LSH and dump the buckets
    Cluster(ClusterArgs),
    /// k-anonymize a set-data file or a query log
    Anonymize(AnonymizeArgs),
    /// Anonymize a log for several k values and emit a cost CSV
    Sweep(SweepArgs),
    /// Exact optimum of a small set-data file (brute force)
    Oracle(OracleArgs),
    /// Check k-anonymity of an anonymized output; exit 1 on failure
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Anonymity parameter
    #[arg(long)]
    k: Option<usize>,
    /// greedy | cluster | oracle
    #[arg(long)]
    algorithm: Option<String>,
    /// Master seed for hashing, thread ids, and local search
    #[arg(long)]
    seed: Option<u64>,
    /// MinHash concatenation length for thread clustering
    #[arg(long)]
    p: Option<usize>,
    /// MinHash concatenation length for keyword identity
    #[arg(long = "keyword-p")]
    keyword_p: Option<usize>,
    /// Normalized edit-distance threshold for query similarity
    #[arg(long = "edit-threshold")]
    edit_threshold: Option<f64>,
    /// Keyword Jaccard threshold for query similarity
    #[arg(long = "jaccard-threshold")]
    jaccard_threshold: Option<f64>,
    /// Require k distinct users per anonymous group (true by default)
    #[arg(long = "distinct-users")]
    distinct_users: Option<bool>,
}

#[derive(Args)]
struct SegmentArgs {
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct ClusterArgs {
    /// Threads file as produced by `segment`
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct AnonymizeArgs {
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Write the JSON report here (default: stderr)
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// auto | set | log
    #[arg(long, default_value = "auto")]
    format: String,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct SweepArgs {
    input: PathBuf,
    /// Comma-separated ascending k values, e.g. 2,3,5,10
    #[arg(long = "k-list")]
    k_list: Option<String>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct OracleArgs {
    input: PathBuf,
    /// flip | suppression
    #[arg(long, default_value = "flip")]
    objective: String,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct VerifyArgs {
    input: PathBuf,
    /// auto | set | log
    #[arg(long, default_value = "auto")]
    format: String,
    #[command(flatten)]
    common: CommonOpts,
}

/// Flag values after merging command line over config file over defaults.
struct Settings {
    k: Option<usize>,
    algorithm: Algorithm,
    seed: u64,
    p: usize,
    keyword_p: usize,
    edit_threshold: f64,
    jaccard_threshold: f64,
    distinct_users: bool,
}

impl Settings {
    fn resolve(common: &CommonOpts, config: &BTreeMap<String, String>) -> Result<Self> {
        fn merged<T: std::str::FromStr>(
            flag: Option<T>,
            config: &BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            if flag.is_some() {
                return Ok(flag);
            }
            config
                .get(key)
                .map(|raw| {
                    raw.parse::<T>()
                        .map_err(|e| usage(format!("config key {key}={raw:?}: {e}")))
                })
                .transpose()
        }

        let defaults = ThreaderParams::default();
        let algorithm = merged(common.algorithm.clone(), config, "algorithm")?
            .map(|s: String| s.parse::<Algorithm>().map_err(|e| usage(e.to_string())))
            .transpose()?
            .unwrap_or(Algorithm::Greedy);
        Ok(Settings {
            k: merged(common.k, config, "k")?,
            algorithm,
            seed: merged(common.seed, config, "seed")?.unwrap_or(0),
            p: merged(common.p, config, "p")?.unwrap_or(3),
            keyword_p: merged(common.keyword_p, config, "keyword-p")?.unwrap_or(2),
            edit_threshold: merged(common.edit_threshold, config, "edit-threshold")?
                .unwrap_or(defaults.edit_threshold),
            jaccard_threshold: merged(common.jaccard_threshold, config, "jaccard-threshold")?
                .unwrap_or(defaults.jaccard_threshold),
            distinct_users: merged(common.distinct_users, config, "distinct-users")?
                .unwrap_or(true),
        })
    }

    fn require_k(&self) -> Result<usize> {
        match self.k {
            Some(0) => Err(usage("--k must be at least 1".to_string())),
            Some(k) => Ok(k),
            None => Err(usage("--k is required (flag or config file)".to_string())),
        }
    }

    fn threader(&self) -> ThreaderParams {
        ThreaderParams {
            edit_threshold: self.edit_threshold,
            jaccard_threshold: self.jaccard_threshold,
            ..ThreaderParams::default()
        }
    }

    fn minhash(&self) -> MinHashConfig {
        MinHashConfig::new(self.p, self.keyword_p, self.seed)
    }

    fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            k: self.require_k()?,
            algorithm: self.algorithm,
            p: self.p,
            keyword_p: self.keyword_p,
            master_seed: self.seed,
            threader: self.threader(),
            enforce_distinct_users: self.distinct_users,
        })
    }
}

/// Marker for errors that should exit with the usage code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: String) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        // worker cap only; outputs are merged in deterministic order
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .ok();
    }
    let config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => BTreeMap::new(),
    };
    match cli.command {
        Command::Segment(args) => cmd_segment(args, &config),
        Command::Cluster(args) => cmd_cluster(args, &config),
        Command::Anonymize(args) => cmd_anonymize(args, &config),
        Command::Sweep(args) => cmd_sweep(args, &config),
        Command::Oracle(args) => cmd_oracle(args, &config),
        Command::Verify(args) => cmd_verify(args, &config),
    }
}

fn parse_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {} is not key=value", lineno + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_report(report: &Option<PathBuf>, json: &str) -> Result<()> {
    match report {
        Some(path) => {
            fs::write(path, json).with_context(|| format!("writing {}", path.display()))?
        }
        None => eprintln!("{json}"),
    }
    Ok(())
}

/// A file is treated as a query log when its first data line has at least
/// three tab-separated columns with a parseable timestamp (or a header row).
fn detect_format(requested: &str, text: &str) -> Result<InputFormat> {
    match requested {
        "set" => return Ok(InputFormat::Set),
        "log" => return Ok(InputFormat::Log),
        "auto" => {}
        other => return Err(usage(format!("unknown format {other:?}"))),
    }
    let Some(line) = text.lines().find(|l| !l.trim().is_empty()) else {
        return Ok(InputFormat::Set);
    };
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() >= 3
        && (parse_timestamp(cols[2].trim()).is_some() || cols[0].eq_ignore_ascii_case("anonid"))
    {
        Ok(InputFormat::Log)
    } else {
        Ok(InputFormat::Set)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum InputFormat {
    Set,
    Log,
}

fn cmd_segment(args: SegmentArgs, config: &BTreeMap<String, String>) -> Result<ExitCode> {
    let settings = Settings::resolve(&args.common, config)?;
    let text = read_input(&args.input)?;
    let (threads, stats) = pipeline::segment_log(&text, &settings.threader(), settings.seed)?;
    let mut out = String::new();
    for t in &threads {
        for q in &t.queries {
            writeln!(
                out,
                "{}\t{}\t{}",
                t.thread_id,
                q.raw_query,
                format_timestamp(q.timestamp)
            )?;
        }
    }
    emit(&args.output, &out)?;
    eprintln!(
        "{} users, {} queries, {} threads ({} rows skipped)",
        stats.users,
        stats.queries_parsed,
        threads.len(),
        stats.rows_skipped
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_cluster(args: ClusterArgs, config: &BTreeMap<String, String>) -> Result<ExitCode> {
    let settings = Settings::resolve(&args.common, config)?;
    let text = read_input(&args.input)?;
    let mh = settings.minhash();

    // threads file: thread_id<TAB>query<TAB>timestamp
    let mut keywords_by_thread: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
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
                }
                .into())
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

    // thread keyword sets -> keyword-LSH value sets -> dense records
    let mut value_sets: Vec<(u64, BTreeSet<u64>)> = Vec::new();
    for (&id, keywords) in &keywords_by_thread {
        let values: BTreeSet<u64> = keywords
            .iter()
            .map(|w| keyword_lsh(w, &mh))
            .collect::<Result<_, Error>>()?;
        if !values.is_empty() {
            value_sets.push((id, values));
        }
    }
    let universe: BTreeSet<u64> = value_sets
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    let value_id: BTreeMap<u64, u32> = universe
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i as u32))
        .collect();
    let records: Vec<RecordSet> = value_sets
        .iter()
        .map(|(id, values)| {
            RecordSet::new(
                id.to_string(),
                values.iter().map(|v| ItemId(value_id[v])).collect(),
            )
        })
        .collect();

    let clusters = cluster_by_lsh(&records, &mh)?;
    let mut out = String::new();
    for (ci, members) in clusters.iter().enumerate() {
        let ids: Vec<String> = members
            .iter()
            .map(|&i| value_sets[i].0.to_string())
            .collect();
        writeln!(out, "{ci}\t{}\t{}", members.len(), ids.join(" "))?;
    }
    emit(&args.output, &out)?;
    Ok(ExitCode::SUCCESS)
}

/// Report for set-data anonymization runs; pipeline runs use the pipeline's
/// own report.
#[derive(Serialize)]
struct SetDataReport {
    mode: &'static str,
    k: usize,
    algorithm: String,
    seed: u64,
    records: usize,
    universe: usize,
    additions: usize,
    deletions: usize,
    edit_cost: usize,
    emptied_records: usize,
    block_sizes: Vec<usize>,
}

fn anonymize_set_data(d: &Dataset, settings: &Settings, k: usize) -> Result<AnonymizationResult> {
    d.require_nonempty_records()?;
    let result = match settings.algorithm {
        Algorithm::Greedy => greedy_flip_anonymize(d, k)?,
        Algorithm::Cluster => cluster_anonymize(d, k, settings.seed)?,
        Algorithm::Oracle => {
            let (_, grouping) = optimal_flip(d, k)?;
            result_from_grouping(d, grouping)?
        }
    };
    if !is_k_anonymous(&result.output, k) {
        return Err(Error::VerificationFailed(format!("output is not {k}-anonymous")).into());
    }
    Ok(result)
}

fn cmd_anonymize(args: AnonymizeArgs, config: &BTreeMap<String, String>) -> Result<ExitCode> {
    let settings = Settings::resolve(&args.common, config)?;
    let k = settings.require_k()?;
    let text = read_input(&args.input)?;
    match detect_format(&args.format, &text)? {
        InputFormat::Set => {
            let (d, interner) = read_set_data(&text)?;
            let result = anonymize_set_data(&d, &settings, k)?;
            let additions = result
                .script
                .edits
                .iter()
                .filter(|e| e.op == EditOp::Add)
                .count();
            let report = SetDataReport {
                mode: "set",
                k,
                algorithm: settings.algorithm.as_str().to_string(),
                seed: settings.seed,
                records: d.len(),
                universe: d.universe_size,
                additions,
                deletions: result.edit_cost - additions,
                edit_cost: result.edit_cost,
                emptied_records: result.emptied_records.len(),
                block_sizes: result.grouping.blocks.iter().map(Vec::len).collect(),
            };
            emit(&args.output, &write_set_data(&result.output, &interner))?;
            emit_report(&args.report, &serde_json::to_string_pretty(&report)?)?;
        }
        InputFormat::Log => {
            let cfg = settings.pipeline()?;
            let (out, report) = pipeline::run(&text, &cfg)?;
            emit(&args.output, &out)?;
            emit_report(&args.report, &serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs, config: &BTreeMap<String, String>) -> Result<ExitCode> {
    let settings = Settings::resolve(&args.common, config)?;
    let k_list_raw = args
        .k_list
        .clone()
        .or_else(|| config.get("k-list").cloned())
        .ok_or_else(|| usage("--k-list is required".to_string()))?;
    let k_values: Vec<usize> = k_list_raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| usage(format!("bad k value {s:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    // sweep supplies k per row; --k only sets the base config
    let mut settings = settings;
    settings.k = settings.k.or_else(|| k_values.first().copied());
    let cfg = settings.pipeline()?;
    let text = read_input(&args.input)?;
    let rows = pipeline::sweep(&text, &cfg, &k_values)?;
    emit(&args.output, &pipeline::sweep_csv(&rows))?;
    let reports: Vec<_> = rows.iter().map(|(_, r)| r).collect();
    emit_report(&args.report, &serde_json::to_string_pretty(&reports)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs, config: &BTreeMap<String, String>) -> Result<ExitCode> {
    let settings = Settings::resolve(&args.common, config)?;
    let k = settings.require_k()?;
    let text = read_input(&args.input)?;
    let (d, interner) = read_set_data(&text)?;
    d.require_nonempty_records()?;
    let mut out = String::new();
    match args.objective.as_str() {
        "flip" => {
            let (cost, grouping) = optimal_flip(&d, k)?;
            writeln!(out, "cost\t{cost}")?;
            write_blocks(&mut out, &d, &grouping.blocks)?;
        }
        "suppression" => {
            let (cost, solution) = optimal_suppression(&d, k)?;
            writeln!(out, "cost\t{cost}")?;
            for (block, suppressed) in solution.grouping.blocks.iter().zip(&solution.suppressed) {
                let ids: Vec<&str> = block
                    .iter()
                    .map(|&i| d.records[i].record_id.as_str())
                    .collect();
                let mut cols: Vec<&str> = suppressed.iter().map(|&c| interner.name(c)).collect();
                cols.sort_unstable();
                writeln!(out, "block\t{}\tstars: {}", ids.join(" "), cols.join(" "))?;
            }
        }
        other => return Err(usage(format!("unknown objective {other:?}"))),
    }
    emit(&args.output, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn write_blocks(out: &mut String, d: &Dataset, blocks: &[Vec<usize>]) -> Result<()> {
    for block in blocks {
        let ids: Vec<&str> = block
            .iter()
            .map(|&i| d.records[i].record_id.as_str())
            .collect();
        writeln!(out, "block\t{}", ids.join(" "))?;
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs, config: &BTreeMap<String, String>) -> Result<ExitCode> {
    let settings = Settings::resolve(&args.common, config)?;
    let k = settings.require_k()?;
    let text = read_input(&args.input)?;
    let verdict = match detect_format(&args.format, &text)? {
        InputFormat::Set => {
            let (d, _) = read_set_data(&text)?;
            if is_k_anonymous(&d, k) {
                Ok(())
            } else {
                Err(Error::VerificationFailed(format!(
                    "some record matches fewer than {k} records"
                )))
            }
        }
        InputFormat::Log => pipeline::verify_log(&text, k, &settings.minhash(), None),
    };
    match verdict {
        Ok(()) => {
            println!("PASS: output is {k}-anonymous");
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("FAIL: {e}");
            Ok(ExitCode::from(1))
        }
    }
}
