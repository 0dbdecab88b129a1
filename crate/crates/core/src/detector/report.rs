use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::TransferLabel;
use crate::address::{Address, TxHash};
use crate::config::ChainConfig;
use crate::event::EventId;
use crate::money::Usd;
use crate::similarity::SimilarityScore;

/// Why a payoff is considered confirmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoffEvidence {
    /// First intended payment `V -> R` of the context.
    pub intended: EventId,
    /// Poisoning events binding `(V, L)` strictly between `intended` and the payoff.
    pub poisons: Vec<EventId>,
    /// Evidence came from the full-history recheck rather than the scan.
    pub from_history: bool,
}

/// One event classified within one `(V, R, L)` context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub event: EventId,
    pub tx_hash: TxHash,
    pub timestamp: u64,
    pub token: Address,
    pub from: Address,
    pub to: Address,
    pub label: TransferLabel,
    pub victim: Address,
    pub intended: Address,
    pub lookalike: Address,
    pub score: SimilarityScore,
    /// `None` when the event could not be priced.
    pub usd: Option<Usd>,
    /// Intended payment that opened this context.
    pub trigger: EventId,
    /// Found through another poisoning transfer of the same transaction.
    pub via_sibling: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<PayoffEvidence>,
    /// Damerau-Levenshtein distance to the intended address, for accidental transfers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_distance: Option<u32>,
}

impl Finding {
    pub(crate) fn context_key(&self) -> (EventId, Address, Address, Address) {
        (self.event, self.victim, self.intended, self.lookalike)
    }
}

/// Per-victim birthday bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimInfo {
    /// Distinct addresses the victim paid in stablecoins.
    pub counterparties: u64,
    pub collision_prob: f64,
    pub excluded: bool,
}

/// An event whose USD value was needed but unavailable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnpricedEvent {
    pub event: EventId,
    pub token: Address,
    pub reason: alloc::string::String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Quarantine {
    /// Findings of birthday-excluded victims.
    pub findings: Vec<Finding>,
    pub unpriced: Vec<UnpricedEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Window candidates with enough matched digits in total that still
    /// failed one side of the threshold, e.g. `(2, 12)`.
    pub near_misses: u64,
    pub unpriced: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub chain_id: u64,
    pub config: ChainConfig,
    pub first_block: Option<u64>,
    pub last_block: Option<u64>,
    pub events_scanned: u64,
    /// Headline findings sorted by `(event, victim, intended, lookalike)`.
    pub findings: Vec<Finding>,
    pub victims: BTreeMap<Address, VictimInfo>,
    pub quarantine: Quarantine,
    pub diagnostics: Diagnostics,
}

/// Headline counters of a scan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoisoningSummary {
    pub blocks: u64,
    pub transactions: u64,
    pub poisoning_transfers: u64,
    pub tiny: u64,
    pub zero_value: u64,
    pub counterfeit: u64,
    pub victims: u64,
    pub lookalikes: u64,
    pub counterfeit_tokens: u64,
}

/// Loss statistics over confirmed payoffs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PayoffSummary {
    pub count: u64,
    pub victims: u64,
    pub total: Usd,
    pub min: Usd,
    pub median: Usd,
    pub mean: Usd,
    pub max: Usd,
    pub std_dev: f64,
    /// Confirmed payoffs without a price, excluded from the USD columns.
    pub unpriced: u64,
}

impl DetectionReport {
    pub(crate) fn sort_findings(&mut self) {
        self.findings
            .sort_by(|a, b| a.context_key().cmp(&b.context_key()).then(a.label.cmp(&b.label)));
        self.quarantine
            .findings
            .sort_by(|a, b| a.context_key().cmp(&b.context_key()).then(a.label.cmp(&b.label)));
        self.quarantine.unpriced.sort();
        self.quarantine.unpriced.dedup();
    }

    /// Winning label per event across all of its headline contexts.
    pub fn event_labels(&self) -> BTreeMap<EventId, TransferLabel> {
        let mut out: BTreeMap<EventId, TransferLabel> = BTreeMap::new();
        for f in &self.findings {
            out.entry(f.event)
                .and_modify(|l| {
                    if f.label.precedence() > l.precedence() {
                        *l = f.label;
                    }
                })
                .or_insert(f.label);
        }
        out
    }

    /// Poisoning findings, one per context.
    pub fn poisons(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.label.is_poison())
    }

    /// Distinct poisoning event ids.
    pub fn poison_events(&self) -> BTreeSet<EventId> {
        self.poisons().map(|f| f.event).collect()
    }

    pub fn victim_set(&self) -> BTreeSet<Address> {
        self.poisons().map(|f| f.victim).collect()
    }

    pub fn intended_set(&self) -> BTreeSet<Address> {
        self.poisons().map(|f| f.intended).collect()
    }

    pub fn lookalike_set(&self) -> BTreeSet<Address> {
        self.poisons().map(|f| f.lookalike).collect()
    }

    pub fn payoffs(&self, label: TransferLabel) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(move |f| f.label == label)
    }

    pub fn poisoning_summary(&self) -> PoisoningSummary {
        let labels = self.event_labels();
        let mut s = PoisoningSummary {
            blocks: match (self.first_block, self.last_block) {
                (Some(a), Some(b)) => b - a + 1,
                _ => 0,
            },
            ..PoisoningSummary::default()
        };
        let mut txs = BTreeSet::new();
        let mut tokens = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for f in self.poisons() {
            // count each event once, under its resolved label
            if labels.get(&f.event) != Some(&f.label) || !seen.insert(f.event) {
                continue;
            }
            txs.insert(f.tx_hash);
            s.poisoning_transfers += 1;
            match f.label {
                TransferLabel::TinyPoison => s.tiny += 1,
                TransferLabel::ZeroValuePoison => s.zero_value += 1,
                TransferLabel::CounterfeitPoison => {
                    s.counterfeit += 1;
                    tokens.insert(f.token);
                }
                _ => {}
            }
        }
        s.transactions = txs.len() as u64;
        s.victims = self.victim_set().len() as u64;
        s.lookalikes = self.lookalike_set().len() as u64;
        s.counterfeit_tokens = tokens.len() as u64;
        s
    }

    pub fn payoff_summary(&self) -> PayoffSummary {
        let mut seen = BTreeSet::new();
        let mut victims = BTreeSet::new();
        let mut values: Vec<Usd> = Vec::new();
        let mut unpriced = 0u64;
        for f in self.payoffs(TransferLabel::PayoffConfirmed) {
            if !seen.insert(f.event) {
                continue;
            }
            victims.insert(f.victim);
            match f.usd {
                Some(v) => values.push(v),
                None => unpriced += 1,
            }
        }
        values.sort();
        let count = values.len() as u64;
        let mut s = PayoffSummary {
            count: seen.len() as u64,
            victims: victims.len() as u64,
            unpriced,
            ..PayoffSummary::default()
        };
        if count == 0 {
            return s;
        }
        s.total = values.iter().copied().sum();
        s.min = values[0];
        s.max = values[values.len() - 1];
        let n = values.len();
        s.median = if n % 2 == 1 {
            values[n / 2]
        } else {
            Usd::from_micros((values[n / 2 - 1].micros() + values[n / 2].micros()) / 2)
        };
        s.mean = Usd::from_micros(s.total.micros() / count as i128);
        let mean = s.total.to_f64() / count as f64;
        let var = values
            .iter()
            .map(|v| {
                let d = v.to_f64() - mean;
                d * d
            })
            .sum::<f64>()
            / count as f64;
        s.std_dev = libm::sqrt(var);
        s
    }
}
