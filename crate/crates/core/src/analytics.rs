//! Attack economics, competition between groups, and descriptive statistics
//! over a detection report.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::address::{Address, TxHash};
use crate::clustering::{AttackGroup, AttackTransferSet};
use crate::detector::{DetectionReport, Pricer, TransferLabel};
use crate::error::AnalyticsError;
use crate::event::{EventId, TransactionRecord, TransferEvent};
use crate::money::Usd;
use crate::prices::date_of;
use crate::similarity::SimilarityScore;

/// Revenue, cost and profit of one attack group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEconomics {
    pub group_id: String,
    pub n_success: u64,
    pub revenue: Usd,
    /// Tiny-transfer outflows.
    pub tiny_cost: Usd,
    /// Gas of every poisoning transaction at the native price of its day.
    pub gas_cost: Usd,
    pub cost: Usd,
    pub profit: Usd,
    pub profitable: bool,
    /// Confirmed payoffs without a price, left out of `revenue`.
    pub unpriced_payoffs: u64,
    /// Transactions without gas metadata, left out of `gas_cost`.
    pub missing_gas: u64,
    /// Transactions whose native price was missing, left out of `gas_cost`.
    pub unpriced_fees: u64,
}

/// Per-group economics. Revenue is every confirmed payoff whose lookalike
/// belongs to the group; cost is tiny outflows plus gas.
pub fn group_economics(
    groups: &[AttackGroup],
    sets: &[AttackTransferSet],
    report: &DetectionReport,
    txs: &BTreeMap<TxHash, TransactionRecord>,
    pricer: &Pricer<'_>,
) -> Vec<GroupEconomics> {
    let by_id: BTreeMap<EventId, &AttackTransferSet> = sets.iter().map(|s| (s.transfer, s)).collect();
    let mut payoffs_by_l: BTreeMap<Address, BTreeMap<EventId, Option<Usd>>> = BTreeMap::new();
    for f in report.payoffs(TransferLabel::PayoffConfirmed) {
        payoffs_by_l.entry(f.lookalike).or_default().insert(f.event, f.usd);
    }
    groups
        .iter()
        .map(|g| {
            let mut paid: BTreeMap<EventId, Option<Usd>> = BTreeMap::new();
            for l in &g.lookalikes {
                if let Some(p) = payoffs_by_l.get(l) {
                    paid.extend(p.iter().map(|(k, v)| (*k, *v)));
                }
            }
            let revenue: Usd = paid.values().flatten().copied().sum();
            let unpriced_payoffs = paid.values().filter(|v| v.is_none()).count() as u64;

            let mut tiny_cost = Usd::ZERO;
            let mut tx_time: BTreeMap<TxHash, u64> = BTreeMap::new();
            for m in &g.members {
                if let Some(s) = by_id.get(m) {
                    tiny_cost = tiny_cost + Usd::from_micros(s.tiny_usd_micros);
                    tx_time.entry(s.tx).or_insert(s.timestamp);
                }
            }
            let mut gas_cost = Usd::ZERO;
            let (mut missing_gas, mut unpriced_fees) = (0, 0);
            for (hash, ts) in &tx_time {
                match txs.get(hash) {
                    None => missing_gas += 1,
                    Some(tx) => match pricer.fee_usd(tx, date_of(*ts)) {
                        Ok(fee) => gas_cost = gas_cost + fee,
                        Err(_) => unpriced_fees += 1,
                    },
                }
            }
            let cost = tiny_cost + gas_cost;
            let profit = revenue - cost;
            GroupEconomics {
                group_id: g.id.clone(),
                n_success: paid.len() as u64,
                revenue,
                tiny_cost,
                gas_cost,
                cost,
                profit,
                profitable: profit.micros() >= 0,
                unpriced_payoffs,
                missing_gas,
                unpriced_fees,
            }
        })
        .collect()
}

/// A lookalike that had poisoned the victim before a payoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Competitor {
    pub lookalike: Address,
    pub group: Option<String>,
    pub score: SimilarityScore,
    pub first_poison: EventId,
}

/// The lookalikes competing for one confirmed payoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetitionRecord {
    pub payoff: EventId,
    pub victim: Address,
    pub intended: Address,
    pub winner: Address,
    pub winner_group: Option<String>,
    pub competitors: Vec<Competitor>,
    /// Standard competition rank of the winner by matched digits, descending.
    pub similarity_rank: usize,
    /// Rank of the winner by first poisoning event, earliest first.
    pub timing_rank: usize,
}

fn group_of(groups: &[AttackGroup]) -> BTreeMap<Address, String> {
    let mut out = BTreeMap::new();
    for g in groups {
        for l in &g.lookalikes {
            out.entry(*l).or_insert_with(|| g.id.clone());
        }
    }
    out
}

/// One record per confirmed payoff event. Competitors are lookalikes of
/// the same `(V, R)` whose first poisoning precedes the payoff.
pub fn competitions(report: &DetectionReport, groups: &[AttackGroup]) -> Vec<CompetitionRecord> {
    let gmap = group_of(groups);
    let mut first: BTreeMap<(Address, Address), BTreeMap<Address, (EventId, SimilarityScore)>> = BTreeMap::new();
    for f in report.poisons() {
        let e = first.entry((f.victim, f.intended)).or_default();
        let slot = e.entry(f.lookalike).or_insert((f.event, f.score));
        if f.event < slot.0 {
            *slot = (f.event, f.score);
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for p in report.payoffs(TransferLabel::PayoffConfirmed) {
        if !seen.insert(p.event) {
            continue;
        }
        let mut comps: Vec<Competitor> = first
            .get(&(p.victim, p.intended))
            .map(|m| {
                m.iter()
                    .filter(|(_, (id, _))| *id < p.event)
                    .map(|(l, (id, s))| Competitor {
                        lookalike: *l,
                        group: gmap.get(l).cloned(),
                        score: *s,
                        first_poison: *id,
                    })
                    .collect()
            })
            .unwrap_or_default();
        if !comps.iter().any(|c| c.lookalike == p.lookalike) {
            let at = p
                .evidence
                .as_ref()
                .and_then(|e| e.poisons.first().copied())
                .unwrap_or(p.trigger);
            comps.push(Competitor {
                lookalike: p.lookalike,
                group: gmap.get(&p.lookalike).cloned(),
                score: p.score,
                first_poison: at,
            });
        }
        let win = comps.iter().find(|c| c.lookalike == p.lookalike).cloned();
        let win = win.unwrap_or_else(|| comps[0].clone());
        let similarity_rank = 1 + comps.iter().filter(|c| c.score.digits() > win.score.digits()).count();
        let timing_rank = 1 + comps.iter().filter(|c| c.first_poison < win.first_poison).count();
        out.push(CompetitionRecord {
            payoff: p.event,
            victim: p.victim,
            intended: p.intended,
            winner: p.lookalike,
            winner_group: win.group.clone(),
            competitors: comps,
            similarity_rank,
            timing_rank,
        });
    }
    out
}

/// Pairwise win ratios between groups.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinLossMatrix {
    pub groups: Vec<String>,
    /// `(i, j) -> (wins of i over j, contests between i and j)`.
    pub cells: BTreeMap<(String, String), (u64, u64)>,
}

impl WinLossMatrix {
    /// `None` on the diagonal and for pairs that never met.
    pub fn ratio(&self, i: &str, j: &str) -> Option<f64> {
        if i == j {
            return None;
        }
        let (w, n) = self.cells.get(&(String::from(i), String::from(j)))?;
        (*n > 0).then(|| *w as f64 / *n as f64)
    }
}

/// A contest between `i` and `j` is a confirmed payoff won by one of them
/// while the other also had a competing lookalike.
pub fn win_loss_matrix(records: &[CompetitionRecord]) -> WinLossMatrix {
    let mut m = WinLossMatrix::default();
    let mut names = BTreeSet::new();
    for r in records {
        let Some(w) = &r.winner_group else { continue };
        names.insert(w.clone());
        let losers: BTreeSet<&String> = r
            .competitors
            .iter()
            .filter_map(|c| c.group.as_ref())
            .filter(|g| *g != w)
            .collect();
        for l in losers {
            names.insert(l.clone());
            let e = m.cells.entry((w.clone(), l.clone())).or_insert((0, 0));
            e.0 += 1;
            e.1 += 1;
            m.cells.entry((l.clone(), w.clone())).or_insert((0, 0)).1 += 1;
        }
    }
    m.groups = names.into_iter().collect();
    m
}

/// Histograms over confirmed payoffs: competitor counts and winner ranks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessRanks {
    pub competitors: BTreeMap<usize, u64>,
    pub similarity_rank: BTreeMap<usize, u64>,
    pub timing_rank: BTreeMap<usize, u64>,
}

pub fn success_ranks(records: &[CompetitionRecord]) -> SuccessRanks {
    let mut s = SuccessRanks::default();
    for r in records {
        *s.competitors.entry(r.competitors.len()).or_default() += 1;
        *s.similarity_rank.entry(r.similarity_rank).or_default() += 1;
        *s.timing_rank.entry(r.timing_rank).or_default() += 1;
    }
    s
}

/// Lookalike counts by `(a, b)` cell and by `d = a + b` for one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityDistribution {
    pub group_id: String,
    pub cells: BTreeMap<(u8, u8), u64>,
    pub by_digits: BTreeMap<u8, u64>,
    pub max_digits: u8,
}

/// Each lookalike contributes its best score over all poisoning contexts.
pub fn similarity_distribution(groups: &[AttackGroup], report: &DetectionReport) -> Vec<SimilarityDistribution> {
    let mut best: BTreeMap<Address, SimilarityScore> = BTreeMap::new();
    for f in report.poisons() {
        let e = best.entry(f.lookalike).or_insert(f.score);
        if (f.score.digits(), f.score.prefix) > (e.digits(), e.prefix) {
            *e = f.score;
        }
    }
    groups
        .iter()
        .map(|g| {
            let mut cells = BTreeMap::new();
            let mut by_digits = BTreeMap::new();
            let mut max_digits = 0;
            for l in &g.lookalikes {
                if let Some(s) = best.get(l) {
                    *cells.entry((s.prefix, s.suffix)).or_default() += 1;
                    *by_digits.entry(s.digits()).or_default() += 1;
                    max_digits = max_digits.max(s.digits());
                }
            }
            SimilarityDistribution {
                group_id: g.id.clone(),
                cells,
                by_digits,
                max_digits,
            }
        })
        .collect()
}

/// Ranks with ties sharing the mean of their positions (1-based).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalyticsError> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return Err(AnalyticsError::TooFewObservations(n));
    }
    let rx = average_ranks(&xs[..n]);
    let ry = average_ranks(&ys[..n]);
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::ConstantInput);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetingCorrelation {
    pub victims: usize,
    /// Stablecoin payments sent vs poisoning events received.
    pub rho_activity: f64,
    /// Largest stablecoin payment in USD vs poisoning events received.
    pub rho_amount: f64,
}

/// Correlate each victim's activity and largest payment with how often it
/// was poisoned.
pub fn targeting_correlation(
    report: &DetectionReport,
    events: &[TransferEvent],
    pricer: &Pricer<'_>,
) -> Result<TargetingCorrelation, AnalyticsError> {
    let mut attacks: BTreeMap<Address, BTreeSet<EventId>> = BTreeMap::new();
    for f in report.poisons() {
        attacks.entry(f.victim).or_default().insert(f.event);
    }
    let mut activity: BTreeMap<Address, (u64, i128)> = attacks.keys().map(|v| (*v, (0, 0))).collect();
    let chain = report.chain_id;
    for e in events {
        if e.value.is_zero() || !pricer.registry.is_stablecoin(chain, &e.token) {
            continue;
        }
        if let Some(slot) = activity.get_mut(&e.from) {
            slot.0 += 1;
            if let Ok(u) = pricer.event_usd(e) {
                slot.1 = slot.1.max(u.micros());
            }
        }
    }
    let (mut act, mut amt, mut att) = (Vec::new(), Vec::new(), Vec::new());
    for (v, (n, max)) in &activity {
        act.push(*n as f64);
        amt.push(*max as f64);
        att.push(attacks[v].len() as f64);
    }
    Ok(TargetingCorrelation {
        victims: att.len(),
        rho_activity: spearman(&act, &att)?,
        rho_amount: spearman(&amt, &att)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImitatedTarget {
    pub intended: Address,
    pub lookalikes: u64,
    pub transfers: u64,
}

/// Intended addresses with the most distinct lookalikes; ties by transfer
/// count, then by address.
pub fn most_imitated_targets(report: &DetectionReport, k: usize) -> Vec<ImitatedTarget> {
    let mut per: BTreeMap<Address, (BTreeSet<Address>, BTreeSet<EventId>)> = BTreeMap::new();
    for f in report.poisons() {
        let e = per.entry(f.intended).or_default();
        e.0.insert(f.lookalike);
        e.1.insert(f.event);
    }
    let mut rows: Vec<ImitatedTarget> = per
        .into_iter()
        .map(|(r, (ls, ts))| ImitatedTarget {
            intended: r,
            lookalikes: ls.len() as u64,
            transfers: ts.len() as u64,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.lookalikes
            .cmp(&a.lookalikes)
            .then(b.transfers.cmp(&a.transfers))
            .then(a.intended.cmp(&b.intended))
    });
    rows.truncate(k);
    rows
}
