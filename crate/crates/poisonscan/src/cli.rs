//! Command-line interface.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poison_core::addrgen::{GenMode, SearchSpec};
use poison_core::clustering::{AttackGroup, AttackTransferSet, ClusterOptions};
use poison_core::config::ChainConfig;
use poison_core::detector::{format_sensitivity_table, DetectionReport, Pricer};
use poison_core::money::Usd;
use poison_core::prices::PriceTable;
use poison_core::scenario::{generate, ground_truth, rand_index, score_labels, LabelScore, ScenarioSpec};
use poison_core::token::TokenRegistry;
use poison_core::{EventId, TransactionRecord, TransferEvent, TxHash};
use serde::{Deserialize, Serialize};

use crate::bench::{host_label, key_benchmark, parallel_search, scan_throughput, synthetic_spec, KeySource};
use crate::bundle::{verify, Bundle, RunManifest};
use crate::error::CliError;
use crate::formats::{
    load_addresses, load_bytecode, load_events, load_history, load_prices, load_registry, load_truth, read_json,
    save_events, save_history, save_prices, save_registry, save_truth, ChainFile,
};
use crate::pipeline::{self, Progress};
use crate::rpc::{RpcClient, RpcOptions};

/// Tool version followed by the output schema version.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (schema 1)");

#[derive(Debug, Parser)]
#[command(name = "poisonscan", version = VERSION, about = "Find address-poisoning attacks in token transfer logs")]
pub struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// No progress reports on standard error.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect poisoning transfers and payoffs.
    Scan(ScanArgs),
    /// Group poisoning transfers into attack groups.
    Cluster(ClusterArgs),
    /// Revenue, cost and competition per attack group.
    Econ(EconArgs),
    /// Search for lookalike addresses of target addresses.
    Gen(GenArgs),
    /// Measure key derivation or scan throughput.
    Bench(BenchArgs),
    /// Generate a synthetic chain with ground truth.
    Simulate(SimulateArgs),
    /// Compare a scan against ground truth.
    Score(ScoreArgs),
    /// Headline numbers from scan, cluster and econ outputs.
    Report(ReportArgs),
}

/// Detection parameters. They override the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub chain_id: Option<u64>,
    #[arg(long)]
    pub window_blocks: Option<u64>,
    #[arg(long)]
    pub a_min: Option<u8>,
    #[arg(long)]
    pub b_min: Option<u8>,
    /// USD ceiling of a tiny transfer.
    #[arg(long)]
    pub tiny_threshold: Option<Usd>,
    #[arg(long)]
    pub birthday_threshold: Option<f64>,
}

/// Reference files. They override the paths in the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct FileArgs {
    /// Per-chain JSON configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub prices: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub bytecode: Option<PathBuf>,
    #[arg(long)]
    pub verified_contracts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub files: FileArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    /// Events JSONL file.
    #[arg(long, conflicts_with = "rpc", required_unless_present = "rpc")]
    pub events: Option<PathBuf>,
    /// JSON-RPC endpoint to fetch Transfer logs from.
    #[arg(long, requires_all = ["from_block", "to_block"])]
    pub rpc: Option<String>,
    #[arg(long)]
    pub from_block: Option<u64>,
    #[arg(long)]
    pub to_block: Option<u64>,
    /// Concurrent block sub-range requests.
    #[arg(long, default_value_t = 8)]
    pub rpc_parallel: usize,
    /// Extra windows for a sensitivity sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sweep_windows: Vec<u64>,
    /// Extra thresholds for a sensitivity sweep, as `a:b` pairs.
    #[arg(long, value_delimiter = ',')]
    pub sweep_thresholds: Vec<Threshold>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold(pub u8, pub u8);

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
        let n = |t: &str| t.trim().parse::<u8>().map_err(|e| format!("{t:?}: {e}"));
        Ok(Threshold(n(a)?, n(b)?))
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub files: FileArgs,
    /// Output directory of `scan`.
    #[arg(long)]
    pub scan: PathBuf,
    /// Events JSONL file; defaults to the one saved by `scan --rpc`.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Accounts whose attack ratio is below this are bots.
    #[arg(long, default_value_t = 0.5)]
    pub bot_threshold: f64,
    /// Drop transfers sent through verified contracts.
    #[arg(long)]
    pub exclude_verified: bool,
    /// Blocks at which to re-cluster the data seen so far.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EconArgs {
    #[command(flatten)]
    pub files: FileArgs,
    #[arg(long)]
    pub scan: PathBuf,
    /// Output directory of `cluster`.
    #[arg(long)]
    pub cluster: PathBuf,
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub scan: PathBuf,
    #[arg(long)]
    pub cluster: PathBuf,
    /// Output directory of `econ`.
    #[arg(long)]
    pub econ: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Ground truth JSONL written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub scan: PathBuf,
    /// Also score the attack groups of this `cluster` output.
    #[arg(long)]
    pub cluster: Option<PathBuf>,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Replace the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Naive,
    Optimized,
}

impl From<ModeArg> for GenMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Naive => GenMode::Naive,
            ModeArg::Optimized => GenMode::Optimized,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Target addresses, one per line.
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub a_min: u8,
    #[arg(long, default_value_t = 4)]
    pub b_min: u8,
    #[arg(long)]
    pub max_trials: Option<u64>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Key from operating-system randomness instead of the seed.
    #[arg(long)]
    pub entropy: bool,
    #[arg(long)]
    pub stop_at_first: bool,
    #[arg(long, value_enum, default_value = "optimized")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(subcommand)]
    pub kind: BenchKind,
}

#[derive(Debug, Subcommand)]
pub enum BenchKind {
    /// Keys derived per second, without target checks.
    Keys {
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        #[arg(long, value_enum, default_value = "optimized")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Events scanned per second on a synthetic chain.
    Scan {
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Runs to take the fastest of.
        #[arg(long, default_value_t = 3)]
        repeats: u32,
        /// JSON file with a previous `events_per_sec`; fail on a drop of
        /// more than 20%.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write the measurement to the baseline file instead.
        #[arg(long, requires = "baseline")]
        update_baseline: bool,
    },
}

/// Parse `args` and run. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "poisonscan: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::input("--workers must be at least 1"));
    }
    let progress = !cli.quiet;
    match cli.command {
        Command::Scan(a) => scan_cmd(a, workers, progress),
        Command::Cluster(a) => cluster_cmd(a),
        Command::Econ(a) => econ_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Gen(a) => gen_cmd(a, workers),
        Command::Bench(a) => bench_cmd(a, workers),
    }
}

fn default_chain(chain_id: u64) -> ChainConfig {
    match chain_id {
        56 => ChainConfig::bsc(),
        id => ChainConfig {
            chain_id: id,
            ..ChainConfig::ethereum()
        },
    }
}

/// Configuration file plus flag overrides, recorded in the manifest.
fn resolve(files: &FileArgs, detect: Option<&DetectArgs>, m: &mut RunManifest) -> Result<ChainFile, CliError> {
    let mut f = match &files.config {
        Some(p) => {
            m.config(p)?;
            ChainFile::load(p)?
        }
        None => ChainFile::new(default_chain(detect.and_then(|d| d.chain_id).unwrap_or(1))),
    };
    if let Some(d) = detect {
        let c = &mut f.chain;
        if let Some(id) = d.chain_id {
            if files.config.is_some() && id != c.chain_id {
                return Err(CliError::input(format!("--chain-id {id} contradicts the configuration ({})", c.chain_id)));
            }
        }
        c.window_blocks = d.window_blocks.unwrap_or(c.window_blocks);
        c.a_min = d.a_min.unwrap_or(c.a_min);
        c.b_min = d.b_min.unwrap_or(c.b_min);
        c.tiny_threshold_usd = d.tiny_threshold.unwrap_or(c.tiny_threshold_usd);
        c.birthday_threshold = d.birthday_threshold.unwrap_or(c.birthday_threshold);
        c.validate().map_err(CliError::input)?;
    }
    for (slot, flag) in [
        (&mut f.registry, &files.registry),
        (&mut f.prices, &files.prices),
        (&mut f.history, &files.history),
        (&mut f.bytecode, &files.bytecode),
        (&mut f.verified_contracts, &files.verified_contracts),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(f)
}

fn record_config(m: &mut RunManifest, c: &ChainConfig) {
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(c) {
        for (k, v) in map {
            match v {
                serde_json::Value::String(s) => m.setting(&k, s),
                v => m.setting(&k, v),
            }
        }
    }
}

fn tables(f: &ChainFile, m: &mut RunManifest) -> Result<(TokenRegistry, PriceTable), CliError> {
    let reg_path = f
        .registry
        .as_ref()
        .ok_or_else(|| CliError::input("no token registry: pass --registry or set it in --config"))?;
    m.input(reg_path)?;
    let registry = load_registry(reg_path)?;
    let prices = match &f.prices {
        Some(p) => {
            m.input(p)?;
            load_prices(p)?
        }
        None => PriceTable::new(),
    };
    Ok((registry, prices))
}

fn history(f: &ChainFile, m: &mut RunManifest) -> Result<BTreeMap<poison_core::Address, u64>, CliError> {
    match &f.history {
        Some(p) => {
            m.input(p)?;
            Ok(load_history(p)?)
        }
        None => Ok(BTreeMap::new()),
    }
}

type Loaded = (Vec<TransferEvent>, BTreeMap<TxHash, TransactionRecord>);

fn events_for(explicit: Option<&Path>, scan: &Path, config: &ChainConfig, m: &mut RunManifest) -> Result<Loaded, CliError> {
    let saved = scan.join("events.jsonl");
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None if saved.exists() => saved,
        None => return Err(CliError::input("no events: pass --events")),
    };
    m.input(&path)?;
    Ok(load_events(&path, config)?)
}

fn scan_report(dir: &Path, m: &mut RunManifest) -> Result<DetectionReport, CliError> {
    verify(dir)?;
    let p = dir.join("report.json");
    m.input(&p)?;
    Ok(read_json(&p)?)
}

fn scan_cmd(a: ScanArgs, workers: usize, progress: bool) -> Result<(), CliError> {
    let mut m = RunManifest::new("scan", &a.out);
    let f = resolve(&a.files, Some(&a.detect), &mut m)?;
    let config = f.chain.clone();
    record_config(&mut m, &config);
    let (registry, prices) = tables(&f, &mut m)?;
    let mut bundle = Bundle::create(&a.out)?;

    let events = match (&a.events, &a.rpc) {
        (Some(p), _) => {
            m.input(p)?;
            load_events(p, &config)?.0
        }
        (None, Some(url)) => {
            let (lo, hi) = (a.from_block.unwrap_or(0), a.to_block.unwrap_or(0));
            if lo > hi {
                return Err(CliError::input(format!("--from-block {lo} is after --to-block {hi}")));
            }
            m.setting("rpc_from_block", lo);
            m.setting("rpc_to_block", hi);
            let opts = RpcOptions {
                parallel: a.rpc_parallel.max(1),
                ..RpcOptions::default()
            };
            let client = RpcClient::new(url, config.chain_id, opts);
            let batch = client.fetch_logs(lo, hi)?;
            let hashes: BTreeSet<TxHash> = batch.events.iter().map(|e| e.tx_hash).collect();
            let txs = client.fetch_transactions(&hashes)?;
            save_events(&bundle.path("events.jsonl"), &batch.events, &txs)?;
            batch.events
        }
        (None, None) => return Err(CliError::input("pass --events or --rpc")),
    };

    let mut prog = Progress::new("scan", progress);
    let (report, accidental) = pipeline::detect(&events, &config, &registry, &prices, &mut prog).map_err(CliError::input)?;
    if report.events_scanned != events.len() as u64 {
        return Err(CliError::internal(format!(
            "scanned {} of {} events",
            report.events_scanned,
            events.len()
        )));
    }
    pipeline::write_scan(&mut bundle, &report, &accidental)?;

    if !a.sweep_windows.is_empty() || !a.sweep_thresholds.is_empty() {
        let mut windows = vec![config.window_blocks];
        windows.extend(&a.sweep_windows);
        windows.sort();
        windows.dedup();
        let mut thresholds = vec![Threshold(config.a_min, config.b_min)];
        thresholds.extend(&a.sweep_thresholds);
        thresholds.sort_by_key(|t| (t.0, t.1));
        thresholds.dedup();
        let mut configs = Vec::new();
        for w in &windows {
            for t in &thresholds {
                let c = ChainConfig {
                    window_blocks: *w,
                    a_min: t.0,
                    b_min: t.1,
                    ..config.clone()
                };
                c.validate().map_err(CliError::input)?;
                configs.push(c);
            }
        }
        m.setting("sweep_windows", format!("{windows:?}"));
        m.setting("sweep_thresholds", format!("{:?}", thresholds.iter().map(|t| (t.0, t.1)).collect::<Vec<_>>()));
        let rows = pipeline::sweep(&events, &configs, &registry, &prices, workers).map_err(CliError::input)?;
        bundle.csv("sensitivity.csv", &rows)?;
        bundle.text("sensitivity.txt", &format_sensitivity_table(&rows))?;
    }
    bundle.finish(m)?;
    Ok(())
}

fn cluster_cmd(a: ClusterArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("cluster", &a.out);
    let report = scan_report(&a.scan, &mut m)?;
    let f = resolve(&a.files, None, &mut m)?;
    let (_, txs) = events_for(a.events.as_deref(), &a.scan, &report.config, &mut m)?;
    let history = history(&f, &mut m)?;
    let mut opts = ClusterOptions {
        bot_threshold: a.bot_threshold,
        exclude_verified: a.exclude_verified,
        ..ClusterOptions::default()
    };
    if let Some(p) = &f.verified_contracts {
        m.input(p)?;
        opts.verified_contracts = load_addresses(p)?.into_iter().collect();
    } else if a.exclude_verified {
        return Err(CliError::input("--exclude-verified needs --verified-contracts"));
    }
    let bytecode = match &f.bytecode {
        Some(p) => {
            m.input(p)?;
            Some(load_bytecode(p)?)
        }
        None => None,
    };
    m.setting("bot_threshold", a.bot_threshold);
    m.setting("exclude_verified", a.exclude_verified);
    m.setting("checkpoints", format!("{:?}", a.checkpoints));
    m.setting("top_k", a.top_k);
    let c = pipeline::cluster_report(&report, &txs, &history, &opts, bytecode.as_ref(), &a.checkpoints, a.top_k)?;
    let mut seen = BTreeSet::new();
    if !c.groups.iter().flat_map(|g| &g.members).all(|e| seen.insert(*e)) {
        return Err(CliError::internal("a transfer belongs to two attack groups"));
    }
    let mut bundle = Bundle::create(&a.out)?;
    pipeline::write_cluster(&mut bundle, &c, &opts)?;
    bundle.finish(m)?;
    Ok(())
}

fn econ_cmd(a: EconArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("econ", &a.out);
    let report = scan_report(&a.scan, &mut m)?;
    verify(&a.cluster)?;
    let groups_path = a.cluster.join("groups.json");
    let sets_path = a.cluster.join("transfer_sets.json");
    m.input(&groups_path)?;
    m.input(&sets_path)?;
    let groups: Vec<AttackGroup> = read_json(&groups_path)?;
    let sets: Vec<AttackTransferSet> = read_json(&sets_path)?;
    let f = resolve(&a.files, None, &mut m)?;
    let (registry, prices) = tables(&f, &mut m)?;
    let (events, txs) = events_for(a.events.as_deref(), &a.scan, &report.config, &mut m)?;
    m.setting("top_k", a.top_k);
    let pricer = Pricer::new(&report.config, &registry, &prices);
    let e = pipeline::economics(&report, &groups, &sets, &events, &txs, &pricer, a.top_k)?;
    let mut bundle = Bundle::create(&a.out)?;
    pipeline::write_econ(&mut bundle, &e)?;
    bundle.finish(m)?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("report", &a.out);
    let report = scan_report(&a.scan, &mut m)?;
    verify(&a.cluster)?;
    verify(&a.econ)?;
    let paths = [
        a.cluster.join("groups.json"),
        a.econ.join("economics.json"),
        a.econ.join("competitions.json"),
    ];
    for p in &paths {
        m.input(p)?;
    }
    let groups: Vec<AttackGroup> = read_json(&paths[0])?;
    let econ: Vec<poison_core::analytics::GroupEconomics> = read_json(&paths[1])?;
    let contests: Vec<serde_json::Value> = read_json(&paths[2])?;
    m.setting("top_k", a.top_k);
    let o = pipeline::overview(&report, &groups, &econ, contests.len(), a.top_k);
    let mut bundle = Bundle::create(&a.out)?;
    bundle.json("overview.json", &o)?;
    bundle.csv("summary.csv", &[&o.poisoning])?;
    bundle.csv("losses.csv", &[&o.losses])?;
    bundle.csv("top_groups.csv", &o.top_groups)?;
    bundle.csv("quarantine.csv", &pipeline::finding_rows(&report.quarantine.findings))?;
    bundle.finish(m)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub chain_id: u64,
    pub events: u64,
    pub labels: LabelScore,
    /// Per label, counting only that label as positive.
    pub by_label: BTreeMap<String, LabelScore>,
    /// Pairwise agreement of attack groups with the planted owners.
    pub rand_index: Option<f64>,
}

fn score_cmd(a: ScoreArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("score", &a.out);
    m.input(&a.truth)?;
    let truth = load_truth(&a.truth)?;
    let report = scan_report(&a.scan, &mut m)?;
    if report.chain_id != truth.chain_id {
        return Err(CliError::input(format!(
            "scan is for chain {} but the truth is for chain {}",
            report.chain_id, truth.chain_id
        )));
    }
    m.input(&a.events)?;
    let (events, _) = load_events(&a.events, &report.config)?;
    let universe: BTreeSet<EventId> = events.iter().map(|e| e.id()).collect();
    let want = truth.labels();
    let got = report.event_labels();
    let labels = score_labels(&want, &got, &universe).map_err(CliError::input)?;
    let mut by_label = BTreeMap::new();
    let kinds: BTreeSet<_> = want.values().chain(got.values()).copied().collect();
    for k in kinds {
        let only = |map: &BTreeMap<EventId, _>| map.iter().filter(|(_, l)| **l == k).map(|(e, l)| (*e, *l)).collect();
        let s = score_labels(&only(&want), &only(&got), &universe).map_err(CliError::input)?;
        by_label.insert(k.as_str().to_string(), s);
    }
    let rand = match &a.cluster {
        Some(dir) => {
            verify(dir)?;
            let p = dir.join("groups.json");
            m.input(&p)?;
            let groups: Vec<AttackGroup> = read_json(&p)?;
            let owners = truth.poison_owners();
            let predicted: BTreeMap<EventId, String> = pipeline::membership(&groups)
                .into_iter()
                .filter(|(e, _)| owners.contains_key(e))
                .collect();
            Some(rand_index(&owners, &predicted).map_err(CliError::input)?)
        }
        None => None,
    };
    let out = ScoreOutput {
        chain_id: truth.chain_id,
        events: universe.len() as u64,
        labels,
        by_label,
        rand_index: rand,
    };
    let mut bundle = Bundle::create(&a.out)?;
    bundle.json("score.json", &out)?;
    bundle.finish(m)?;
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<(), CliError> {
    let mut m = RunManifest::new("simulate", &a.out);
    m.config(&a.spec)?;
    let mut spec: ScenarioSpec = read_json(&a.spec)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    m.seed = Some(spec.seed);
    let scenario = generate(&spec).map_err(CliError::input)?;
    let mut bundle = Bundle::create(&a.out)?;
    for chain in &scenario.chains {
        let id = chain.config.chain_id;
        let dir = format!("chain-{id}");
        std::fs::create_dir_all(a.out.join(&dir)).map_err(|e| CliError::input(format!("{}: {e}", a.out.display())))?;
        let name = |f: &str| format!("{dir}/{f}");
        save_events(&bundle.path(&name("events.jsonl")), &chain.events, &chain.txs)?;
        save_registry(&bundle.path(&name("registry.jsonl")), &chain.registry)?;
        save_prices(&bundle.path(&name("prices.csv")), &chain.prices)?;
        save_history(&bundle.path(&name("history.csv")), &chain.history)?;
        let truth = ground_truth(chain, &chain.config).map_err(CliError::internal)?;
        save_truth(&bundle.path(&name("ground_truth.jsonl")), &truth)?;
        let file = ChainFile {
            registry: Some("registry.jsonl".into()),
            prices: Some("prices.csv".into()),
            history: Some("history.csv".into()),
            ..ChainFile::new(chain.config.clone())
        };
        bundle.json(&name("config.json"), &file)?;
    }
    bundle.finish(m)?;
    Ok(())
}

/// One line of `matches.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MatchLine {
    /// Always true: keys from this tool are for measurement, not use.
    pub simulation: bool,
    pub key: String,
    pub address: poison_core::Address,
    pub target: poison_core::Address,
    pub a: u8,
    pub b: u8,
    pub trial: u64,
}

#[derive(Debug, Serialize)]
struct ApsRow<'a> {
    #[serde(rename = "impl")]
    implementation: &'a str,
    host: &'a str,
    workers: u32,
    aps: f64,
}

fn gen_cmd(a: GenArgs, workers: usize) -> Result<(), CliError> {
    let mut m = RunManifest::new("gen", &a.out);
    m.input(&a.targets)?;
    let targets = load_addresses(&a.targets)?;
    if a.max_trials.is_none() && a.seconds.is_none() && !a.stop_at_first {
        return Err(CliError::input("pass --max-trials, --seconds or --stop-at-first"));
    }
    let mode: GenMode = a.mode.into();
    let spec = SearchSpec {
        targets,
        a_min: a.a_min,
        b_min: a.b_min,
        max_trials: a.max_trials,
        max_seconds: a.seconds,
        seed: a.seed,
        check_targets: true,
        stop_at_first: a.stop_at_first,
        mode,
    };
    let source = if a.entropy { KeySource::Entropy } else { KeySource::Seeded };
    m.seed = (!a.entropy).then_some(a.seed);
    m.setting("a_min", a.a_min);
    m.setting("b_min", a.b_min);
    m.setting("mode", mode);
    m.setting("workers", workers);
    let (stats, _) = parallel_search(&spec, workers as u32, source).map_err(CliError::input)?;
    for g in &stats.matches {
        let s = poison_core::similarity::prefix_suffix_score(&g.address, &g.target);
        if s != g.score || s.prefix < a.a_min || s.suffix < a.b_min {
            return Err(CliError::internal(format!("reported match {} does not meet the thresholds", g.address)));
        }
    }
    let lines: Vec<MatchLine> = stats
        .matches
        .iter()
        .map(|g| MatchLine {
            simulation: true,
            key: g.key.to_string(),
            address: g.address,
            target: g.target,
            a: g.score.prefix,
            b: g.score.suffix,
            trial: g.trial,
        })
        .collect();
    let mut bundle = Bundle::create(&a.out)?;
    bundle.json("stats.json", &stats)?;
    crate::formats::write_jsonl(&bundle.path("matches.jsonl"), &lines)?;
    let implementation = format!("poisonscan-{mode}");
    let host = host_label();
    bundle.csv(
        "aps.csv",
        &[ApsRow {
            implementation: &implementation,
            host: &host,
            workers: stats.workers,
            aps: stats.aps,
        }],
    )?;
    bundle.finish(m)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Baseline {
    pub events: u64,
    pub events_per_sec: f64,
    pub host: String,
}

/// Largest allowed drop below a recorded baseline.
pub const REGRESSION_TOLERANCE: f64 = 0.20;

fn bench_cmd(a: BenchArgs, workers: usize) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    let w = |out: &mut std::io::StdoutLock, s: String| writeln!(out, "{s}").map_err(|e| CliError::input(format!("stdout: {e}")));
    match a.kind {
        BenchKind::Keys { seconds, mode, seed } => {
            let b = key_benchmark(seconds, workers as u32, mode.into(), seed).map_err(CliError::input)?;
            w(&mut out, "impl,host,workers,aps".into())?;
            w(&mut out, format!("{},{},{},{:.1}", b.implementation, b.host, b.stats.workers, b.stats.aps))?;
        }
        BenchKind::Scan {
            events,
            seed,
            repeats,
            baseline,
            update_baseline,
        } => {
            let spec = synthetic_spec(events, seed);
            let s = generate(&spec).map_err(CliError::internal)?;
            let chain = &s.chains[0];
            let registry = TokenRegistry::from_entries(chain.registry.iter().cloned()).map_err(CliError::internal)?;
            let prices = PriceTable::from_rows(chain.prices.iter().cloned()).map_err(CliError::internal)?;
            let t = scan_throughput(&chain.events, &chain.config, &registry, &prices, repeats).map_err(CliError::internal)?;
            w(&mut out, "events,seconds,events_per_sec,findings".into())?;
            w(&mut out, format!("{},{:.3},{:.0},{}", t.events, t.seconds, t.events_per_sec, t.findings))?;
            if let Some(p) = baseline {
                if update_baseline {
                    let b = Baseline {
                        events: t.events,
                        events_per_sec: t.events_per_sec,
                        host: host_label(),
                    };
                    crate::formats::write_json(&p, &b)?;
                } else {
                    let b: Baseline = read_json(&p)?;
                    let floor = b.events_per_sec * (1.0 - REGRESSION_TOLERANCE);
                    if t.events_per_sec < floor {
                        return Err(CliError::input(format!(
                            "scan throughput {:.0} events/s is below {floor:.0} (baseline {:.0})",
                            t.events_per_sec, b.events_per_sec
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}
