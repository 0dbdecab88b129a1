//! Multi-worker key search and throughput measurements.

use std::time::Instant;

use poison_core::addrgen::{search_stream, GenMode, GenStats, KeyStream, SearchSpec, TargetIndex};
use poison_core::config::ChainConfig;
use poison_core::detector::Scanner;
use poison_core::error::{OrderError, SearchError};
use poison_core::event::TransferEvent;
use poison_core::prices::PriceTable;
use poison_core::scenario::{GroupSpec, ScenarioSpec};
use poison_core::token::TokenRegistry;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Where worker key streams come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySource {
    /// Reproducible streams derived from the spec's seed.
    Seeded,
    /// Streams keyed from operating-system randomness.
    Entropy,
}

fn stream(spec: &SearchSpec, worker: u64, source: KeySource) -> KeyStream {
    match source {
        KeySource::Seeded => KeyStream::new(spec.seed, worker, spec.mode),
        KeySource::Entropy => {
            let mut key = [0u8; 32];
            rand::rngs::OsRng.fill_bytes(&mut key);
            KeyStream::from_entropy_bytes(key, worker, spec.mode)
        }
    }
}

/// Search with `workers` threads over disjoint key streams. The trial
/// budget is split evenly; matches are ordered by worker, then trial.
pub fn parallel_search(spec: &SearchSpec, workers: u32, source: KeySource) -> Result<(GenStats, Vec<f64>), SearchError> {
    spec.validate()?;
    let workers = workers.max(1);
    let index = spec
        .check_targets
        .then(|| TargetIndex::new(&spec.targets, spec.a_min, spec.b_min));
    let start = Instant::now();
    let deadline = spec.max_seconds;
    let budget = spec.max_trials.unwrap_or(u64::MAX);
    let per = |w: u32| {
        if budget == u64::MAX {
            u64::MAX
        } else {
            budget / workers as u64 + u64::from((w as u64) < budget % workers as u64)
        }
    };
    let results: Vec<(u64, Vec<_>, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let index = index.as_ref();
                s.spawn(move || {
                    let mut ks = stream(spec, w as u64, source);
                    let t0 = Instant::now();
                    let (n, m) = search_stream(spec, index, &mut ks, per(w), || start.elapsed().as_secs_f64(), deadline);
                    (n, m, t0.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("search worker panicked")).collect()
    });
    let elapsed = start.elapsed().as_secs_f64();
    let per_worker_aps = results
        .iter()
        .map(|(n, _, secs)| if *secs > 0.0 { *n as f64 / secs } else { 0.0 })
        .collect();
    let mut stats = GenStats {
        mode: spec.mode,
        workers,
        trials: results.iter().map(|r| r.0).sum(),
        elapsed_secs: elapsed,
        aps: 0.0,
        matches: results.into_iter().flat_map(|r| r.1).collect(),
    };
    stats.finalize();
    Ok((stats, per_worker_aps))
}

/// Derive-only throughput over `seconds` of wall clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyBench {
    pub implementation: String,
    pub host: String,
    pub stats: GenStats,
    pub per_worker_aps: Vec<f64>,
}

pub fn host_label() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{}-{}cores", std::env::consts::OS, std::env::consts::ARCH, cores)
}

pub fn key_benchmark(seconds: f64, workers: u32, mode: GenMode, seed: u64) -> Result<KeyBench, SearchError> {
    let spec = SearchSpec {
        targets: Vec::new(),
        a_min: 0,
        b_min: 0,
        max_trials: None,
        max_seconds: Some(seconds),
        seed,
        check_targets: false,
        stop_at_first: false,
        mode,
    };
    let (stats, per_worker_aps) = parallel_search(&spec, workers, KeySource::Seeded)?;
    Ok(KeyBench {
        implementation: format!("poisonscan-{mode}"),
        host: host_label(),
        stats,
        per_worker_aps,
    })
}

/// A scenario with about `events` transfers, mostly benign, with attacks
/// of every kind spread across the chain.
pub fn synthetic_spec(events: u64, seed: u64) -> ScenarioSpec {
    let per_block = 20u32;
    let n_blocks = (events / per_block as u64).max(1_000);
    let attacks = (n_blocks / 100).max(4) as u32;
    let group = |bundle: u32| GroupSpec {
        attacks,
        bundle_size: bundle,
        shapes: vec![(3, 4), (4, 4), (5, 6)],
        payoff_probability: 0.1,
        ..GroupSpec::default()
    };
    ScenarioSpec {
        seed,
        n_blocks,
        n_benign_users: 20_000,
        n_victims: 5_000,
        benign_per_block: per_block,
        popular_targets: 50,
        groups: vec![group(1), group(4)],
        ..ScenarioSpec::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanThroughput {
    pub events: u64,
    pub seconds: f64,
    pub events_per_sec: f64,
    pub findings: u64,
}

/// Time a single-threaded scan of `events`, keeping the fastest of
/// `repeats` runs to damp scheduler noise.
pub fn scan_throughput(
    events: &[TransferEvent],
    config: &ChainConfig,
    registry: &TokenRegistry,
    prices: &PriceTable,
    repeats: u32,
) -> Result<ScanThroughput, OrderError> {
    let mut best: Option<ScanThroughput> = None;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        let mut scanner = Scanner::new(config, registry, prices);
        scanner.push_all(events)?;
        let report = scanner.finish();
        let seconds = t0.elapsed().as_secs_f64();
        let run = ScanThroughput {
            events: events.len() as u64,
            seconds,
            events_per_sec: events.len() as f64 / seconds.max(1e-9),
            findings: report.findings.len() as u64,
        };
        if best.is_none_or(|b| run.seconds < b.seconds) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}
