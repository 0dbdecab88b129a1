use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::report::{DetectionReport, PayoffEvidence};
use super::{Pricer, TransferLabel};
use crate::address::Address;
use crate::config::ChainConfig;
use crate::event::{EventId, TransferEvent};
use crate::prices::PriceTable;
use crate::similarity::{address_edit_distance, birthday_collision_prob, positional_match_count};
use crate::token::TokenRegistry;

/// Every transfer of the chain, used to recheck payoffs whose poisoning
/// happened outside the monitoring window.
pub struct FullHistory<'a> {
    pub events: &'a [TransferEvent],
    pub registry: &'a TokenRegistry,
    pub prices: &'a PriceTable,
    pub config: &'a ChainConfig,
}

impl FullHistory<'_> {
    /// Poisoning events binding `(v, l)` by the classification rules, with no window.
    fn bindings(&self, pairs: &BTreeSet<(Address, Address)>) -> BTreeMap<(Address, Address), Vec<EventId>> {
        let pricer = Pricer::new(self.config, self.registry, self.prices);
        let chain = self.config.chain_id;
        let mut out: BTreeMap<(Address, Address), Vec<EventId>> = BTreeMap::new();
        for e in self.events {
            if e.from == e.to {
                continue;
            }
            let authentic = self.registry.is_authentic(chain, &e.token);
            // L -> V tiny
            if authentic && !e.value.is_zero() && pairs.contains(&(e.to, e.from)) {
                if let Ok(usd) = pricer.event_usd(e) {
                    if usd.is_positive() && usd < self.config.tiny_threshold_usd {
                        out.entry((e.to, e.from)).or_default().push(e.id());
                    }
                }
            }
            // V -> L zero-value or counterfeit
            if (!authentic || e.value.is_zero()) && pairs.contains(&(e.from, e.to)) {
                out.entry((e.from, e.to)).or_default().push(e.id());
            }
        }
        out
    }
}

/// Upgrade payoff candidates that have a poisoning binding `(V, L)`
/// strictly between the intended payment and the payoff.
pub fn confirm_payoffs(mut report: DetectionReport, full_history: Option<&FullHistory<'_>>) -> DetectionReport {
    let mut bindings: BTreeMap<(Address, Address), Vec<EventId>> = BTreeMap::new();
    for f in report.findings.iter().filter(|f| f.label.is_poison()) {
        bindings.entry((f.victim, f.lookalike)).or_default().push(f.event);
    }
    for list in bindings.values_mut() {
        list.sort();
        list.dedup();
    }
    let between = |list: &[EventId], lo: EventId, hi: EventId| -> Vec<EventId> {
        let start = list.partition_point(|id| *id <= lo);
        let end = list.partition_point(|id| *id < hi);
        list[start..end.max(start)].to_vec()
    };

    let mut unresolved = BTreeSet::new();
    for f in report.findings.iter_mut().filter(|f| f.label.is_payoff()) {
        let poisons = bindings
            .get(&(f.victim, f.lookalike))
            .map(|l| between(l, f.trigger, f.event))
            .unwrap_or_default();
        if poisons.is_empty() {
            f.label = TransferLabel::PayoffUnconfirmed;
            f.evidence = None;
            unresolved.insert((f.victim, f.lookalike));
        } else {
            f.label = TransferLabel::PayoffConfirmed;
            f.evidence = Some(PayoffEvidence {
                intended: f.trigger,
                poisons,
                from_history: false,
            });
        }
    }

    if let Some(h) = full_history {
        if !unresolved.is_empty() {
            let mut hist = h.bindings(&unresolved);
            for list in hist.values_mut() {
                list.sort();
                list.dedup();
            }
            for f in report
                .findings
                .iter_mut()
                .filter(|f| f.label == TransferLabel::PayoffUnconfirmed)
            {
                let poisons = hist
                    .get(&(f.victim, f.lookalike))
                    .map(|l| between(l, f.trigger, f.event))
                    .unwrap_or_default();
                if !poisons.is_empty() {
                    f.label = TransferLabel::PayoffConfirmed;
                    f.evidence = Some(PayoffEvidence {
                        intended: f.trigger,
                        poisons,
                        from_history: true,
                    });
                }
            }
        }
    }
    report
}

/// An unconfirmed payoff that looks like a typo rather than an attack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccidentalTransfer {
    pub event: EventId,
    pub victim: Address,
    pub intended: Address,
    pub destination: Address,
    pub positional_matches: u8,
    pub edit_distance: u32,
}

/// Flag unconfirmed payoffs to near-identical, never-spending addresses as
/// accidental, relabeling them in the report.
pub fn detect_accidental(
    report: &mut DetectionReport,
    events: &[TransferEvent],
    registry: &TokenRegistry,
) -> Vec<AccidentalTransfer> {
    let bound = report.config.typo_digit_bound;
    let chain = report.chain_id;
    let candidates: BTreeSet<Address> = report
        .findings
        .iter()
        .filter(|f| {
            f.label == TransferLabel::PayoffUnconfirmed && positional_match_count(&f.lookalike, &f.intended) > bound
        })
        .map(|f| f.lookalike)
        .collect();
    if candidates.is_empty() {
        return Vec::new();
    }
    let mut spent = BTreeSet::new();
    for e in events {
        if !e.value.is_zero() && candidates.contains(&e.from) && registry.is_authentic(chain, &e.token) {
            spent.insert(e.from);
        }
    }
    let mut out = Vec::new();
    for f in report.findings.iter_mut() {
        if f.label != TransferLabel::PayoffUnconfirmed || !candidates.contains(&f.lookalike) || spent.contains(&f.lookalike)
        {
            continue;
        }
        let pm = positional_match_count(&f.lookalike, &f.intended);
        if pm <= bound {
            continue;
        }
        let d = address_edit_distance(&f.lookalike, &f.intended) as u32;
        f.label = TransferLabel::Accidental;
        f.edit_distance = Some(d);
        out.push(AccidentalTransfer {
            event: f.event,
            victim: f.victim,
            intended: f.intended,
            destination: f.lookalike,
            positional_matches: pm,
            edit_distance: d,
        });
    }
    out
}

/// Move victims whose counterparty count makes a chance `(a, b)` match
/// likely (probability at least the configured threshold) to quarantine.
pub fn birthday_filter(mut report: DetectionReport, config: &ChainConfig) -> DetectionReport {
    let mut excluded = BTreeSet::new();
    for (v, info) in report.victims.iter_mut() {
        info.collision_prob = birthday_collision_prob(info.counterparties);
        info.excluded = info.collision_prob >= config.birthday_threshold;
        if info.excluded {
            excluded.insert(*v);
        }
    }
    if excluded.is_empty() {
        return report;
    }
    let (out, keep): (Vec<_>, Vec<_>) = core::mem::take(&mut report.findings)
        .into_iter()
        .partition(|f| excluded.contains(&f.victim));
    report.findings = keep;
    report.quarantine.findings.extend(out);
    report.sort_findings();
    report
}
