//! Analysis steps behind the subcommands and the tables they write.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use poison_core::address::{Address, TxHash};
use poison_core::analytics::{
    competitions, group_economics, most_imitated_targets, similarity_distribution, success_ranks,
    targeting_correlation, win_loss_matrix, CompetitionRecord, GroupEconomics, ImitatedTarget, SimilarityDistribution,
    SuccessRanks, TargetingCorrelation, WinLossMatrix,
};
use poison_core::clustering::{
    attack_ratio, cluster, temporal_clusters, transfer_sets, AccountProfile, AttackGroup, AttackTransferSet,
    Checkpoint, ClusterOptions,
};
use poison_core::config::ChainConfig;
use poison_core::detector::{
    birthday_filter, confirm_payoffs, detect_accidental, AccidentalTransfer, DetectionReport, FullHistory, Pricer,
    Scanner, TransferLabel,
};
use poison_core::error::OrderError;
use poison_core::event::{TransactionRecord, TransferEvent};
use poison_core::money::Usd;
use poison_core::prices::{date_of, PriceTable};
use poison_core::token::TokenRegistry;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::error::{CliError, FormatError};

/// Events-per-second reports on standard error, at most one per second.
pub struct Progress {
    enabled: bool,
    label: &'static str,
    start: Instant,
    last: Instant,
}

impl Progress {
    pub fn new(label: &'static str, enabled: bool) -> Self {
        let now = Instant::now();
        Progress {
            enabled,
            label,
            start: now,
            last: now,
        }
    }

    pub fn tick(&mut self, done: u64, total: u64) {
        if !self.enabled || self.last.elapsed().as_secs_f64() < 1.0 {
            return;
        }
        self.last = Instant::now();
        let secs = self.start.elapsed().as_secs_f64();
        let rate = done as f64 / secs.max(1e-9);
        let _ = writeln!(std::io::stderr(), "{}: {done}/{total} events, {rate:.0} events/s", self.label);
    }
}

/// Scan, confirm payoffs against the full history, flag accidental
/// transfers and apply the birthday bound.
pub fn detect(
    events: &[TransferEvent],
    config: &ChainConfig,
    registry: &TokenRegistry,
    prices: &PriceTable,
    progress: &mut Progress,
) -> Result<(DetectionReport, Vec<AccidentalTransfer>), OrderError> {
    let mut scanner = Scanner::new(config, registry, prices);
    let total = events.len() as u64;
    let mut done = 0u64;
    for chunk in events.chunks(1 << 16) {
        scanner.push_all(chunk)?;
        done += chunk.len() as u64;
        progress.tick(done, total);
    }
    let history = FullHistory {
        events,
        registry,
        prices,
        config,
    };
    let mut report = confirm_payoffs(scanner.finish(), Some(&history));
    let accidental = detect_accidental(&mut report, events, registry);
    Ok((birthday_filter(report, config), accidental))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FindingRow {
    pub block: u64,
    pub log_index: u32,
    pub tx_hash: TxHash,
    pub label: TransferLabel,
    pub victim: Address,
    pub intended: Address,
    pub lookalike: Address,
    pub token: Address,
    pub prefix: u8,
    pub suffix: u8,
    pub usd: Option<Usd>,
    pub trigger_block: u64,
    pub trigger_log_index: u32,
    pub via_sibling: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AccidentalRow {
    pub block: u64,
    pub log_index: u32,
    pub victim: Address,
    pub intended: Address,
    pub destination: Address,
    pub positional_matches: u8,
    pub edit_distance: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VictimRow {
    pub victim: Address,
    pub counterparties: u64,
    pub collision_prob: f64,
    pub excluded: bool,
}

pub fn finding_rows(findings: &[poison_core::detector::Finding]) -> Vec<FindingRow> {
    findings
        .iter()
        .map(|f| FindingRow {
            block: f.event.block,
            log_index: f.event.log_index,
            tx_hash: f.tx_hash,
            label: f.label,
            victim: f.victim,
            intended: f.intended,
            lookalike: f.lookalike,
            token: f.token,
            prefix: f.score.prefix,
            suffix: f.score.suffix,
            usd: f.usd,
            trigger_block: f.trigger.block,
            trigger_log_index: f.trigger.log_index,
            via_sibling: f.via_sibling,
        })
        .collect()
}

pub fn write_scan(bundle: &mut Bundle, report: &DetectionReport, accidental: &[AccidentalTransfer]) -> Result<(), FormatError> {
    bundle.json("report.json", report)?;
    bundle.csv("summary.csv", &[report.poisoning_summary()])?;
    bundle.csv("losses.csv", &[report.payoff_summary()])?;
    bundle.csv("findings.csv", &finding_rows(&report.findings))?;
    bundle.csv("quarantine.csv", &finding_rows(&report.quarantine.findings))?;
    let acc: Vec<AccidentalRow> = accidental
        .iter()
        .map(|a| AccidentalRow {
            block: a.event.block,
            log_index: a.event.log_index,
            victim: a.victim,
            intended: a.intended,
            destination: a.destination,
            positional_matches: a.positional_matches,
            edit_distance: a.edit_distance,
        })
        .collect();
    bundle.csv("accidental.csv", &acc)?;
    let victims: Vec<VictimRow> = report
        .victims
        .iter()
        .map(|(v, i)| VictimRow {
            victim: *v,
            counterparties: i.counterparties,
            collision_prob: i.collision_prob,
            excluded: i.excluded,
        })
        .collect();
    bundle.csv("victims.csv", &victims)
}

pub struct Clustered {
    pub sets: Vec<AttackTransferSet>,
    pub profiles: BTreeMap<Address, AccountProfile>,
    pub groups: Vec<AttackGroup>,
    pub temporal: Vec<Checkpoint>,
}

pub fn cluster_report(
    report: &DetectionReport,
    txs: &BTreeMap<TxHash, TransactionRecord>,
    history: &BTreeMap<Address, u64>,
    opts: &ClusterOptions,
    bytecode: Option<&BTreeMap<Address, String>>,
    checkpoints: &[u64],
    top_k: usize,
) -> Result<Clustered, CliError> {
    let sets = transfer_sets(report, txs).map_err(CliError::input)?;
    let profiles = attack_ratio(&sets, history).map_err(CliError::input)?;
    let mut groups = cluster(&sets, &profiles, opts);
    if let Some(codes) = bytecode {
        for g in &mut groups {
            g.set_bytecode(codes);
        }
    }
    let temporal = temporal_clusters(&sets, &profiles, opts, checkpoints, top_k);
    Ok(Clustered {
        sets,
        profiles,
        groups,
        temporal,
    })
}

/// One line per group, columns as counts of each attack-set dimension.
#[derive(Debug, Serialize, Deserialize)]
pub struct GroupRow {
    pub rank: usize,
    pub group_id: String,
    pub lookalikes: usize,
    pub counterfeit_tokens: usize,
    pub accounts: usize,
    pub attack_contracts: usize,
    pub intended: usize,
    pub transfers: usize,
    pub transactions: usize,
    pub distinct_bytecode: Option<u64>,
    pub first_date: String,
    pub last_date: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AccountRow {
    pub account: Address,
    pub total: u64,
    pub poisoning: u64,
    pub attack_ratio: f64,
    pub bot: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TemporalRow {
    pub checkpoint: u64,
    pub rank: usize,
    pub group_id: String,
    pub lineage: String,
    pub predecessor: Option<String>,
    pub lookalikes: usize,
    pub transfers: usize,
}

pub fn group_rows(groups: &[AttackGroup]) -> Vec<GroupRow> {
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let c = g.counts();
            GroupRow {
                rank: i + 1,
                group_id: g.id.clone(),
                lookalikes: c.lookalikes,
                counterfeit_tokens: c.counterfeit_tokens,
                accounts: c.accounts,
                attack_contracts: c.attack_contracts,
                intended: c.intended,
                transfers: c.transfers,
                transactions: c.transactions,
                distinct_bytecode: g.distinct_bytecode,
                first_date: date_of(g.first_timestamp).to_string(),
                last_date: date_of(g.last_timestamp).to_string(),
            }
        })
        .collect()
}

pub fn write_cluster(bundle: &mut Bundle, c: &Clustered, opts: &ClusterOptions) -> Result<(), FormatError> {
    bundle.json("groups.json", &c.groups)?;
    bundle.csv("groups.csv", &group_rows(&c.groups))?;
    bundle.json("transfer_sets.json", &c.sets)?;
    let accounts: Vec<AccountRow> = c
        .profiles
        .values()
        .map(|p| AccountRow {
            account: p.account,
            total: p.total,
            poisoning: p.poisoning,
            attack_ratio: p.attack_ratio,
            bot: p.attack_ratio < opts.bot_threshold,
        })
        .collect();
    bundle.csv("accounts.csv", &accounts)?;
    let temporal: Vec<TemporalRow> = c
        .temporal
        .iter()
        .flat_map(|cp| {
            cp.groups.iter().map(move |g| TemporalRow {
                checkpoint: cp.block,
                rank: g.rank,
                group_id: g.group_id.clone(),
                lineage: g.lineage.clone(),
                predecessor: g.predecessor.clone(),
                lookalikes: g.lookalikes,
                transfers: g.transfers,
            })
        })
        .collect();
    bundle.csv("temporal.csv", &temporal)
}

pub struct Economics {
    pub economics: Vec<GroupEconomics>,
    pub competitions: Vec<CompetitionRecord>,
    pub win_loss: WinLossMatrix,
    pub ranks: SuccessRanks,
    pub similarity: Vec<SimilarityDistribution>,
    pub imitated: Vec<ImitatedTarget>,
    /// `None` when there are too few victims or no variation.
    pub correlation: Option<TargetingCorrelation>,
}

pub fn economics(
    report: &DetectionReport,
    groups: &[AttackGroup],
    sets: &[AttackTransferSet],
    events: &[TransferEvent],
    txs: &BTreeMap<TxHash, TransactionRecord>,
    pricer: &Pricer<'_>,
    top_k: usize,
) -> Result<Economics, CliError> {
    let econ = group_economics(groups, sets, report, txs, pricer);
    for e in &econ {
        if e.profit != e.revenue - e.cost || e.cost != e.tiny_cost + e.gas_cost {
            return Err(CliError::internal(format!("group {}: profit does not equal revenue minus cost", e.group_id)));
        }
    }
    let records = competitions(report, groups);
    Ok(Economics {
        economics: econ,
        win_loss: win_loss_matrix(&records),
        ranks: success_ranks(&records),
        competitions: records,
        similarity: similarity_distribution(groups, report),
        imitated: most_imitated_targets(report, top_k),
        correlation: targeting_correlation(report, events, pricer).ok(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WinLossRow {
    pub group: String,
    pub opponent: String,
    pub wins: u64,
    pub contests: u64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RankRow {
    pub measure: &'static str,
    pub value: usize,
    pub payoffs: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CellRow {
    pub group_id: String,
    pub prefix: u8,
    pub suffix: u8,
    pub digits: u8,
    pub lookalikes: u64,
}

pub fn write_econ(bundle: &mut Bundle, e: &Economics) -> Result<(), FormatError> {
    bundle.json("economics.json", &e.economics)?;
    bundle.csv("economics.csv", &e.economics)?;
    bundle.json("competitions.json", &e.competitions)?;
    let wl: Vec<WinLossRow> = e
        .win_loss
        .cells
        .iter()
        .map(|((i, j), (w, n))| WinLossRow {
            group: i.clone(),
            opponent: j.clone(),
            wins: *w,
            contests: *n,
            ratio: e.win_loss.ratio(i, j),
        })
        .collect();
    bundle.csv("win_loss.csv", &wl)?;
    let mut ranks = Vec::new();
    for (measure, map) in [
        ("competitors", &e.ranks.competitors),
        ("similarity_rank", &e.ranks.similarity_rank),
        ("timing_rank", &e.ranks.timing_rank),
    ] {
        ranks.extend(map.iter().map(|(v, n)| RankRow {
            measure,
            value: *v,
            payoffs: *n,
        }));
    }
    bundle.csv("success_ranks.csv", &ranks)?;
    let cells: Vec<CellRow> = e
        .similarity
        .iter()
        .flat_map(|d| {
            d.cells.iter().map(move |((p, s), n)| CellRow {
                group_id: d.group_id.clone(),
                prefix: *p,
                suffix: *s,
                digits: p + s,
                lookalikes: *n,
            })
        })
        .collect();
    bundle.csv("similarity.csv", &cells)?;
    bundle.csv("imitated_targets.csv", &e.imitated)?;
    bundle.json("correlation.json", &e.correlation)
}

/// Headline numbers assembled from the scan, cluster and econ bundles.
#[derive(Debug, Serialize, Deserialize)]
pub struct Overview {
    pub chain_id: u64,
    pub events_scanned: u64,
    pub first_block: Option<u64>,
    pub last_block: Option<u64>,
    pub poisoning: poison_core::detector::PoisoningSummary,
    pub losses: poison_core::detector::PayoffSummary,
    pub groups: usize,
    pub profitable_groups: usize,
    pub total_revenue: Usd,
    pub total_cost: Usd,
    pub total_profit: Usd,
    pub contests: usize,
    pub quarantined_findings: usize,
    pub unpriced_events: usize,
    pub top_groups: Vec<TopGroup>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TopGroup {
    pub rank: usize,
    pub group_id: String,
    pub lookalikes: usize,
    pub transfers: usize,
    pub n_success: u64,
    pub revenue: Usd,
    pub cost: Usd,
    pub profit: Usd,
}

pub fn overview(
    report: &DetectionReport,
    groups: &[AttackGroup],
    econ: &[GroupEconomics],
    contests: usize,
    top_k: usize,
) -> Overview {
    let by_id: BTreeMap<&str, &GroupEconomics> = econ.iter().map(|e| (e.group_id.as_str(), e)).collect();
    let sum = |f: fn(&GroupEconomics) -> Usd| econ.iter().map(f).sum::<Usd>();
    let top_groups = groups
        .iter()
        .take(top_k)
        .enumerate()
        .map(|(i, g)| {
            let e = by_id.get(g.id.as_str());
            TopGroup {
                rank: i + 1,
                group_id: g.id.clone(),
                lookalikes: g.lookalikes.len(),
                transfers: g.members.len(),
                n_success: e.map_or(0, |e| e.n_success),
                revenue: e.map_or(Usd::ZERO, |e| e.revenue),
                cost: e.map_or(Usd::ZERO, |e| e.cost),
                profit: e.map_or(Usd::ZERO, |e| e.profit),
            }
        })
        .collect();
    Overview {
        chain_id: report.chain_id,
        events_scanned: report.events_scanned,
        first_block: report.first_block,
        last_block: report.last_block,
        poisoning: report.poisoning_summary(),
        losses: report.payoff_summary(),
        groups: groups.len(),
        profitable_groups: econ.iter().filter(|e| e.profitable).count(),
        total_revenue: sum(|e| e.revenue),
        total_cost: sum(|e| e.cost),
        total_profit: sum(|e| e.profit),
        contests,
        quarantined_findings: report.quarantine.findings.len(),
        unpriced_events: report.quarantine.unpriced.len(),
        top_groups,
    }
}

/// Group membership of every clustered poisoning event.
pub fn membership(groups: &[AttackGroup]) -> BTreeMap<poison_core::EventId, String> {
    groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |m| (*m, g.id.clone())))
        .collect()
}

/// Addresses shared by more than one attack group, for sanity reports.
pub fn shared_lookalikes(groups: &[AttackGroup]) -> BTreeSet<Address> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for g in groups {
        for l in &g.lookalikes {
            if !seen.insert(*l) {
                dup.insert(*l);
            }
        }
    }
    dup
}

/// Rerun detection once per config, spreading configs over `workers`
/// threads. Rows come back in config order.
pub fn sweep(
    events: &[TransferEvent],
    configs: &[ChainConfig],
    registry: &TokenRegistry,
    prices: &PriceTable,
    workers: usize,
) -> Result<Vec<poison_core::detector::SensitivityRow>, OrderError> {
    let workers = workers.clamp(1, configs.len().max(1));
    let chunk = configs.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<_>, OrderError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .chunks(chunk)
            .map(|c| s.spawn(move || poison_core::detector::sensitivity_run(events, c, registry, prices)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(configs.len());
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}
