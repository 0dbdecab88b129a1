//! Release acceptance: one PASS/FAIL line per criterion on standard
//! output, then a single assertion over all of them.

#[path = "../../core/tests/support/mod.rs"]
mod core_support;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_bigint::BigUint;
use poison_core::addrgen::{derive_address, search, GenMode, PrivateKey, SearchSpec};
use poison_core::analytics::{competitions, group_economics, spearman, win_loss_matrix};
use poison_core::clustering::{attack_ratio, cluster, transfer_sets, ClusterOptions};
use poison_core::detector::{analyze, sensitivity_run, Pricer, TransferLabel};
use poison_core::scenario::{
    generate, ground_truth, rand_index, score_labels, BotSpec, ContestSpec, GroupSpec, Owner, ScenarioSpec,
};
use poison_core::similarity::{birthday_collision_prob, expected_trials, hardware_estimate, GenModel};
use poison_core::{ChainConfig, EventId, PriceTable, TokenRegistry};
use poisonscan::bench::{scan_throughput, synthetic_spec};
use poisonscan::cli::Baseline;
use rand::{RngCore, SeedableRng};

/// Relative tolerances and time limits of the criteria.
mod tol {
    pub const HW_LARGE: f64 = 0.02;
    pub const HW_SMALL: f64 = 0.05;
    pub const BIRTHDAY: f64 = 0.001;
    pub const GEOMETRIC: f64 = 0.25;
    pub const SPEARMAN: f64 = 1e-12;
    pub const REGRESSION: f64 = 0.20;
    pub const FLOOR_EVENTS_PER_SEC: f64 = 200_000.0;
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(cond: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: cond,
        detail: detail.into(),
    }
}

fn rel(x: f64, want: f64) -> f64 {
    (x - want).abs() / want
}

fn tables(chain: &poison_core::scenario::ChainData) -> (TokenRegistry, PriceTable) {
    core_support::tables(chain)
}

fn hardware() -> Outcome {
    let big = hardware_estimate(&GenModel::reference(20, 1_000_000));
    let small = hardware_estimate(&GenModel::reference(14, 1_000_000));
    let cost = small.cpu_cost_usd.to_f64();
    check(
        rel(big.cpu_days, 3.0e7) < tol::HW_LARGE
            && rel(big.gpu_days, 27_093.0) < tol::HW_LARGE
            && rel(big.gpu_cost_usd.to_f64(), 1.70e6) < tol::HW_LARGE
            && rel(small.cpu_days, 1.81) < tol::HW_SMALL
            && rel(small.gpu_days, 1.6e-3) < tol::HW_SMALL
            && (43.0..=44.0).contains(&cost),
        format!(
            "d=20: {:.3e} cpu-days, {:.0} gpu-days, gpu ${:.0}; d=14: {:.3} cpu-days, {:.3e} gpu-days, cpu ${cost:.2}",
            big.cpu_days,
            big.gpu_days,
            big.gpu_cost_usd.to_f64(),
            small.cpu_days,
            small.gpu_days
        ),
    )
}

fn birthday() -> Outcome {
    let p = birthday_collision_prob(19_290);
    check((p - 0.5).abs() <= tol::BIRTHDAY, format!("p(19290) = {p:.6}"))
}

fn key_derivation() -> Outcome {
    let c = core_support::curve::Curve::secp256k1();
    let mut keys: Vec<BigUint> = vec![1u32.into(), 2u32.into()];
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    while keys.len() < 102 {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        let k = BigUint::from_bytes_be(&b);
        if k > BigUint::default() && k < c.n {
            keys.push(k);
        }
    }
    let mut bad = 0;
    for k in &keys {
        let mut b = [0u8; 32];
        let be = k.to_bytes_be();
        b[32 - be.len()..].copy_from_slice(&be);
        let ours = derive_address(&PrivateKey::from_bytes(b).unwrap());
        if *ours.as_bytes() != c.address(k) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{} keys, {bad} mismatches", keys.len()))
}

fn detector_oracle() -> Outcome {
    let mut seconds = 0.0;
    let mut failures = Vec::new();
    let mut kinds = BTreeSet::new();
    for seed in 0..50 {
        let s = generate(&core_support::oracle_spec(seed)).unwrap();
        let chain = &s.chains[0];
        let (registry, prices) = tables(chain);
        let t0 = Instant::now();
        let (report, _) = analyze(&chain.events, &chain.config, &registry, &prices).unwrap();
        seconds += t0.elapsed().as_secs_f64();
        let got = report.event_labels();
        let truth = ground_truth(chain, &chain.config).unwrap().labels();
        let brute = core_support::reference::reference_labels(&chain.events, &chain.config, &registry, &prices);
        let universe: BTreeSet<_> = chain.events.iter().map(|e| e.id()).collect();
        let score = score_labels(&truth, &got, &universe).unwrap();
        kinds.extend(got.values().copied());
        if got != brute || score.precision != 1.0 || score.recall != 1.0 || chain.events.len() > 10_000 {
            failures.push(seed);
        }
    }
    let all_kinds = [
        TransferLabel::TinyPoison,
        TransferLabel::ZeroValuePoison,
        TransferLabel::CounterfeitPoison,
    ]
    .iter()
    .all(|k| kinds.contains(k));
    check(
        failures.is_empty() && all_kinds && seconds < 60.0,
        format!("50 scenarios, failing seeds {failures:?}, detector time {seconds:.2}s"),
    )
}

fn copy_bots() -> Outcome {
    let g = || GroupSpec {
        attacks: 15,
        tiny: 0.0,
        ..GroupSpec::default()
    };
    let spec = ScenarioSpec {
        seed: 11,
        groups: vec![g(), g()],
        bots: vec![BotSpec {
            copies: vec![0, 1],
            ..BotSpec::default()
        }],
        ..ScenarioSpec::default()
    };
    let chain = generate(&spec).unwrap().chains.remove(0);
    let truth = ground_truth(&chain, &chain.config).unwrap();
    let (registry, prices) = tables(&chain);
    let report = analyze(&chain.events, &chain.config, &registry, &prices).unwrap().0;
    let sets = transfer_sets(&report, &chain.txs).unwrap();
    let profiles = attack_ratio(&sets, &chain.history).unwrap();
    let with = |t: f64| {
        cluster(
            &sets,
            &profiles,
            &ClusterOptions {
                bot_threshold: t,
                ..ClusterOptions::default()
            },
        )
    };
    let strict = with(0.5);
    let loose = with(0.0);
    let owners: BTreeMap<EventId, Owner> = truth
        .poison_owners()
        .into_iter()
        .filter(|(_, o)| matches!(o, Owner::Group(_)))
        .collect();
    let predicted: BTreeMap<EventId, usize> = strict
        .iter()
        .enumerate()
        .flat_map(|(i, g)| g.members.iter().map(move |m| (*m, i)))
        .collect();
    let ri = rand_index(&owners, &predicted).unwrap();
    check(
        strict.len() == 2 && loose.len() == 1 && ri == 1.0,
        format!("groups at 0.5: {}, at 0.0: {}, Rand index {ri}", strict.len(), loose.len()),
    )
}

fn sensitivity() -> Outcome {
    let spec = ScenarioSpec {
        seed: 5,
        n_blocks: 3_000,
        groups: vec![GroupSpec {
            attacks: 40,
            offsets: vec![50, 150],
            shapes: vec![(3, 3), (3, 4), (4, 5)],
            payoff_probability: 0.3,
            ..GroupSpec::default()
        }],
        ..ScenarioSpec::default()
    };
    let chain = generate(&spec).unwrap().chains.remove(0);
    let (registry, prices) = tables(&chain);
    let cfg = |m, a, b| ChainConfig {
        window_blocks: m,
        a_min: a,
        b_min: b,
        ..chain.config.clone()
    };
    let configs = [cfg(100, 3, 4), cfg(200, 3, 4), cfg(100, 3, 3), cfg(200, 3, 3)];
    let rows = sensitivity_run(&chain.events, &configs, &registry, &prices).unwrap();
    let poisons = |r: &poison_core::detector::SensitivityRow| r.tiny + r.zero_value + r.counterfeit;
    let planted = |c: &ChainConfig| {
        let t = ground_truth(&chain, c).unwrap();
        (t.count(TransferLabel::TinyPoison) + t.count(TransferLabel::ZeroValuePoison) + t.count(TransferLabel::CounterfeitPoison))
            as u64
    };
    let narrow = |m, a, b| {
        let c = cfg(m, a, b);
        analyze(&chain.events, &c, &registry, &prices).unwrap().0.poison_events()
    };
    let window_superset = narrow(100, 3, 4).is_subset(&narrow(200, 3, 4));
    let threshold_superset = narrow(100, 3, 4).is_subset(&narrow(100, 3, 3));
    let window_delta = poisons(&rows[1]) as i64 - poisons(&rows[0]) as i64;
    let threshold_delta = poisons(&rows[2]) as i64 - poisons(&rows[0]) as i64;
    let want_window = planted(&configs[1]) as i64 - planted(&configs[0]) as i64;
    let want_threshold = planted(&configs[2]) as i64 - planted(&configs[0]) as i64;
    let exact = rows.iter().zip(&configs).all(|(r, c)| poisons(r) == planted(c));
    check(
        window_superset
            && threshold_superset
            && rows[1].lookalikes >= rows[0].lookalikes
            && rows[2].lookalikes >= rows[0].lookalikes
            && exact
            && window_delta == want_window
            && threshold_delta == want_threshold
            && window_delta > 0
            && threshold_delta > 0,
        format!(
            "window +{window_delta} (planted {want_window}), threshold +{threshold_delta} (planted {want_threshold}), all rows exact: {exact}"
        ),
    )
}

fn geometric() -> Outcome {
    let target = derive_address(&PrivateKey::from_u64(4242).unwrap());
    let runs = 200u64;
    let mut total = 0u64;
    for seed in 0..runs {
        let spec = SearchSpec {
            targets: vec![target],
            a_min: 1,
            b_min: 0,
            max_trials: Some(100_000),
            max_seconds: None,
            seed: 10_000 + seed,
            check_targets: true,
            stop_at_first: true,
            mode: GenMode::Optimized,
        };
        total += search(&spec, || 0.0).unwrap().matches[0].trial;
    }
    let mean = total as f64 / runs as f64;
    let want = expected_trials(1, 1);
    check(
        (want - 16.0).abs() < 1e-9 && rel(mean, want) < tol::GEOMETRIC,
        format!("mean {mean:.2} over {runs} runs, expected {want}"),
    )
}

fn economics() -> Outcome {
    let mut bad_profit = 0;
    let mut bad_pairs = 0;
    let mut pairs = 0;
    for seed in 1..6 {
        let g = || GroupSpec {
            attacks: 15,
            payoff_probability: 0.4,
            shapes: vec![(3, 4), (4, 4), (5, 6)],
            ..GroupSpec::default()
        };
        let spec = ScenarioSpec {
            seed,
            groups: vec![g(), g(), g()],
            contests: vec![
                ContestSpec {
                    groups: vec![0, 1],
                    winners: vec![0, 0, 1],
                },
                ContestSpec {
                    groups: vec![0, 1, 2],
                    winners: vec![2, 1, 0, 2],
                },
            ],
            ..ScenarioSpec::default()
        };
        let chain = generate(&spec).unwrap().chains.remove(0);
        let (registry, prices) = tables(&chain);
        let report = analyze(&chain.events, &chain.config, &registry, &prices).unwrap().0;
        let sets = transfer_sets(&report, &chain.txs).unwrap();
        let profiles = attack_ratio(&sets, &chain.history).unwrap();
        let groups = cluster(&sets, &profiles, &ClusterOptions::default());
        let pricer = Pricer::new(&chain.config, &registry, &prices);
        for e in group_economics(&groups, &sets, &report, &chain.txs, &pricer) {
            if e.profit != e.revenue - e.cost {
                bad_profit += 1;
            }
        }
        let m = win_loss_matrix(&competitions(&report, &groups));
        for ((i, j), (w, n)) in &m.cells {
            pairs += 1;
            let (wj, nj) = m.cells.get(&(j.clone(), i.clone())).copied().unwrap_or((0, 0));
            let ratios = m.ratio(i, j).unwrap() + m.ratio(j, i).unwrap_or(f64::NAN);
            if *n != nj || w + wj != *n || (ratios - 1.0).abs() > 1e-12 {
                bad_pairs += 1;
            }
        }
    }
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
    check(
        bad_profit == 0 && bad_pairs == 0 && pairs > 0 && (rho - 0.6).abs() < tol::SPEARMAN,
        format!("{bad_profit} profit mismatches, {bad_pairs}/{pairs} pairs not complementary, Spearman {rho}"),
    )
}

fn bundle_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn poisonscan(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_poisonscan"))
        .args(args)
        .arg("--quiet")
        .current_dir(cwd)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn run_pipeline(cwd: &Path) -> bool {
    let c = "sim/chain-1";
    let cfg = format!("{c}/config.json");
    let ev = format!("{c}/events.jsonl");
    poisonscan(&["simulate", "--spec", "spec.json", "--out", "sim"], cwd)
        && poisonscan(&["scan", "--config", &cfg, "--events", &ev, "--out", "scan", "--sweep-windows", "200"], cwd)
        && poisonscan(&["cluster", "--config", &cfg, "--scan", "scan", "--events", &ev, "--checkpoints", "500,1000", "--out", "cluster"], cwd)
        && poisonscan(&["econ", "--config", &cfg, "--scan", "scan", "--cluster", "cluster", "--events", &ev, "--out", "econ"], cwd)
        && poisonscan(&["report", "--scan", "scan", "--cluster", "cluster", "--econ", "econ", "--out", "report"], cwd)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec {
        seed: 9,
        n_blocks: 1_500,
        groups: vec![
            GroupSpec {
                attacks: 12,
                bundle_size: 3,
                payoff_probability: 0.4,
                ..GroupSpec::default()
            },
            GroupSpec {
                attacks: 10,
                accounts: 2,
                poisons_per_attack: 2,
                payoff_probability: 0.4,
                ..GroupSpec::default()
            },
        ],
        contests: vec![ContestSpec {
            groups: vec![0, 1],
            winners: vec![0, 1],
        }],
        typo_rate: 0.05,
        ..ScenarioSpec::default()
    };
    let mut runs = Vec::new();
    for i in 0..2 {
        let work = dir.path().join("work");
        std::fs::create_dir_all(&work).unwrap();
        poisonscan::formats::write_json(&work.join("spec.json"), &spec).unwrap();
        if !run_pipeline(&work) {
            return check(false, format!("pipeline run {i} failed"));
        }
        runs.push(bundle_bytes(&work));
        std::fs::rename(&work, dir.path().join(format!("run{i}"))).unwrap();
    }
    let files = runs[0].len();
    let differing: Vec<&String> = runs[0]
        .iter()
        .filter(|(k, v)| runs[1].get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    check(
        differing.is_empty() && runs[0].len() == runs[1].len() && files > 20,
        format!("{files} files compared, differing: {differing:?}"),
    )
}

fn throughput() -> Outcome {
    let spec = synthetic_spec(1_000_000, 1);
    let chain = generate(&spec).unwrap().chains.remove(0);
    let (registry, prices) = tables(&chain);
    let t = scan_throughput(&chain.events, &chain.config, &registry, &prices, 3).unwrap();
    let (best, findings) = (t.events_per_sec, t.findings);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/scan_baseline.json");
    let baseline: Baseline = poisonscan::formats::read_json(&path).unwrap();
    let gate = baseline.events_per_sec * (1.0 - tol::REGRESSION);
    check(
        chain.events.len() >= 1_000_000
            && findings > 0
            && best >= tol::FLOOR_EVENTS_PER_SEC
            && best >= gate,
        format!(
            "{} events, {best:.0} events/s (floor {:.0}, gate {gate:.0} from baseline {:.0} on {})",
            chain.events.len(),
            tol::FLOOR_EVENTS_PER_SEC,
            baseline.events_per_sec,
            baseline.host
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, f64, fn() -> Outcome); 10] = [
        ("hardware estimate", 1.0, hardware),
        ("birthday threshold", 1.0, birthday),
        ("key derivation oracle", 5.0, key_derivation),
        ("detector oracle", 60.0, detector_oracle),
        ("copy-bot clustering", 10.0, copy_bots),
        ("parameter sensitivity", 10.0, sensitivity),
        ("geometric search", 30.0, geometric),
        ("economics identities", f64::INFINITY, economics),
        ("end-to-end determinism", f64::INFINITY, determinism),
        ("scan throughput", f64::INFINITY, throughput),
    ];
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    let mut failed = Vec::new();
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        let secs = t0.elapsed().as_secs_f64();
        let pass = o.pass && secs < limit;
        let limit_note = if limit.is_finite() { format!(" (limit {limit}s)") } else { String::new() };
        writeln!(
            out,
            "{} {:>2} {name}: {} [{secs:.2}s{limit_note}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        )
        .unwrap();
        if !pass {
            failed.push(name);
        }
    }
    out.flush().unwrap();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
