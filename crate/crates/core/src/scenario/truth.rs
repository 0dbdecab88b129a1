use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use super::{ChainData, Planted, PoisonKind};
use crate::address::Address;
use crate::config::ChainConfig;
use crate::detector::{Pricer, TransferLabel};
use crate::error::ScenarioError;
use crate::event::{EventId, TransferEvent};
use crate::prices::PriceTable;
use crate::similarity::{positional_match_count, prefix_suffix_score};
use crate::token::TokenRegistry;

/// Who planted an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Group(u32),
    Bot(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub event: EventId,
    pub label: TransferLabel,
    pub owner: Option<Owner>,
    pub victim: Option<Address>,
    pub lookalike: Option<Address>,
    /// Generated with an attack or typo role, whatever its label.
    pub planted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contest {
    pub payoff: EventId,
    pub winner: u32,
    pub groups: Vec<u32>,
}

/// Expected labels of one chain under one detection configuration.
/// Events absent from `events` are benign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub chain_id: u64,
    pub config: ChainConfig,
    pub events: BTreeMap<EventId, TruthEvent>,
    pub bots: BTreeSet<Address>,
    pub accidental: BTreeSet<EventId>,
    pub contests: Vec<Contest>,
}

impl GroundTruth {
    /// Non-benign labels.
    pub fn labels(&self) -> BTreeMap<EventId, TransferLabel> {
        self.events
            .values()
            .filter(|t| t.label != TransferLabel::Benign)
            .map(|t| (t.event, t.label))
            .collect()
    }

    pub fn count(&self, label: TransferLabel) -> usize {
        self.events.values().filter(|t| t.label == label).count()
    }

    /// Owner of every poisoning event.
    pub fn poison_owners(&self) -> BTreeMap<EventId, Owner> {
        self.events
            .values()
            .filter(|t| t.label.is_poison())
            .filter_map(|t| t.owner.map(|o| (t.event, o)))
            .collect()
    }

    pub fn lookalikes(&self) -> BTreeSet<Address> {
        self.events
            .values()
            .filter(|t| t.label.is_poison())
            .filter_map(|t| t.lookalike)
            .collect()
    }

    pub fn victims(&self) -> BTreeSet<Address> {
        self.events
            .values()
            .filter(|t| t.label.is_poison())
            .filter_map(|t| t.victim)
            .collect()
    }
}

/// Lookalikes and victims poisoned on every chain.
pub fn shared_addresses(truths: &[GroundTruth]) -> (BTreeSet<Address>, BTreeSet<Address>) {
    let Some((first, rest)) = truths.split_first() else {
        return (BTreeSet::new(), BTreeSet::new());
    };
    let mut ls = first.lookalikes();
    let mut vs = first.victims();
    for t in rest {
        let (l2, v2) = (t.lookalikes(), t.victims());
        ls.retain(|a| l2.contains(a));
        vs.retain(|a| v2.contains(a));
    }
    if rest.is_empty() {
        return (BTreeSet::new(), BTreeSet::new());
    }
    (ls, vs)
}

#[derive(Clone, Copy)]
struct Triggers {
    first: EventId,
    last: EventId,
}

struct Rules<'a> {
    cfg: &'a ChainConfig,
    registry: &'a TokenRegistry,
    pricer: Pricer<'a>,
}

impl Rules<'_> {
    fn authentic(&self, e: &TransferEvent) -> bool {
        self.registry.is_authentic(self.cfg.chain_id, &e.token)
    }

    fn stable(&self, e: &TransferEvent) -> bool {
        self.registry.is_stablecoin(self.cfg.chain_id, &e.token)
    }

    fn tiny_value(&self, e: &TransferEvent) -> bool {
        matches!(self.pricer.event_usd(e), Ok(u) if u.is_positive() && u < self.cfg.tiny_threshold_usd)
    }

    fn similar(&self, r: &Address, l: &Address) -> bool {
        prefix_suffix_score(r, l).passes(self.cfg.a_min, self.cfg.b_min)
    }

    /// Does the event carry its planted kind under the windowed rules?
    fn window_kind(&self, e: &TransferEvent, kind: PoisonKind) -> bool {
        match kind {
            PoisonKind::Tiny => self.stable(e) && !e.value.is_zero() && self.tiny_value(e),
            PoisonKind::Zero => self.stable(e) && e.value.is_zero(),
            PoisonKind::Counterfeit => !self.authentic(e),
        }
    }

    /// Same, under the rules for other transfers of a poisoning transaction.
    fn sibling_kind(&self, e: &TransferEvent, kind: PoisonKind) -> bool {
        match kind {
            PoisonKind::Tiny => self.authentic(e) && !e.value.is_zero() && self.tiny_value(e),
            PoisonKind::Zero => self.authentic(e) && e.value.is_zero(),
            PoisonKind::Counterfeit => !self.authentic(e),
        }
    }

    /// Whether `e` binds `(victim, lookalike)` with no window restriction.
    fn binds(&self, e: &TransferEvent, victim: Address, lookalike: Address) -> bool {
        if e.from == e.to {
            return false;
        }
        let authentic = self.authentic(e);
        (e.from == lookalike && e.to == victim && authentic && !e.value.is_zero() && self.tiny_value(e))
            || (e.from == victim && e.to == lookalike && (!authentic || e.value.is_zero()))
    }
}

struct PayoffCandidate {
    event: EventId,
    victim: Address,
    intended: Address,
    destination: Address,
    first: EventId,
}

/// Derive labels from planted roles under `config`.
///
/// Poisonings are checked only against their planted intended address, so
/// chance similarities in benign traffic are ignored; at the default
/// thresholds they occur with probability around `16^-7` per pair.
pub fn ground_truth(chain: &ChainData, config: &ChainConfig) -> Result<GroundTruth, ScenarioError> {
    let registry = TokenRegistry::from_entries(chain.registry.iter().cloned())
        .map_err(|e| ScenarioError::Invalid(format!("registry: {e}")))?;
    let prices = PriceTable::from_rows(chain.prices.iter().cloned())
        .map_err(|e| ScenarioError::Invalid(format!("prices: {e}")))?;
    let rules = Rules {
        cfg: config,
        registry: &registry,
        pricer: Pricer::new(config, &registry, &prices),
    };
    let m = config.window_blocks;

    let mut triggers: HashMap<(Address, Address), Triggers> = HashMap::new();
    let mut labels: BTreeMap<EventId, TransferLabel> = BTreeMap::new();
    let set = |labels: &mut BTreeMap<EventId, TransferLabel>, id: EventId, l: TransferLabel| {
        let slot = labels.entry(id).or_insert(TransferLabel::Benign);
        if l.precedence() > slot.precedence() {
            *slot = l;
        }
    };
    let mut candidates: Vec<PayoffCandidate> = Vec::new();

    let events = &chain.events;
    let mut i = 0;
    while i < events.len() {
        let block = events[i].block_number;
        let mut end = i;
        while end < events.len() && events[end].block_number == block {
            end += 1;
        }
        let mut pending: Vec<(Address, Address, EventId)> = Vec::new();
        let mut tx_start = i;
        while tx_start < end {
            let mut tx_end = tx_start;
            while tx_end < end && events[tx_end].tx_hash == events[tx_start].tx_hash {
                tx_end += 1;
            }
            let tx = &events[tx_start..tx_end];
            let mut in_window = Vec::new();
            let mut other = Vec::new();
            let mut payoff_ids = BTreeSet::new();
            for e in tx {
                match chain.planted.get(&e.id()) {
                    Some(Planted::Poison {
                        kind,
                        victim,
                        intended,
                        lookalike,
                        ..
                    }) => {
                        if e.from == e.to || !rules.similar(intended, lookalike) {
                            continue;
                        }
                        let Some(t) = triggers.get(&(*victim, *intended)) else {
                            continue;
                        };
                        if rules.window_kind(e, *kind) && t.last.block + m + 1 >= block {
                            in_window.push((e.id(), t.last));
                        } else if rules.sibling_kind(e, *kind) {
                            other.push((e.id(), t.last));
                        }
                    }
                    Some(Planted::Payoff {
                        victim,
                        intended,
                        lookalike,
                        ..
                    })
                    | Some(Planted::Typo {
                        victim,
                        intended,
                        destination: lookalike,
                    }) => {
                        if !rules.authentic(e) || e.value.is_zero() || e.from == e.to {
                            continue;
                        }
                        if triggers.contains_key(&(*victim, *lookalike)) || !rules.similar(intended, lookalike) {
                            continue;
                        }
                        let Some(t) = triggers.get(&(*victim, *intended)) else {
                            continue;
                        };
                        payoff_ids.insert(e.id());
                        candidates.push(PayoffCandidate {
                            event: e.id(),
                            victim: *victim,
                            intended: *intended,
                            destination: *lookalike,
                            first: t.first,
                        });
                    }
                    None => {}
                }
            }
            let expand = !in_window.is_empty() && tx.len() > 1;
            for (id, trigger) in in_window.into_iter().chain(other.into_iter().filter(|_| expand)) {
                let kind = match chain.planted.get(&id) {
                    Some(Planted::Poison { kind, .. }) => *kind,
                    _ => continue,
                };
                set(&mut labels, id, poison_label(kind));
                set(&mut labels, trigger, TransferLabel::Intended);
            }
            for e in tx {
                if e.from != e.to && !e.value.is_zero() && rules.stable(e) && !payoff_ids.contains(&e.id()) {
                    pending.push((e.from, e.to, e.id()));
                }
            }
            tx_start = tx_end;
        }
        for (v, r, id) in pending {
            triggers
                .entry((v, r))
                .and_modify(|t| t.last = id)
                .or_insert(Triggers { first: id, last: id });
        }
        i = end;
    }

    // payoffs: confirmed by any binding poisoning after the first intended payment
    let by_id: BTreeMap<EventId, &TransferEvent> = events.iter().map(|e| (e.id(), e)).collect();
    let mut spenders = BTreeSet::new();
    for e in events {
        if !e.value.is_zero() && rules.authentic(e) {
            spenders.insert(e.from);
        }
    }
    let mut accidental = BTreeSet::new();
    for c in &candidates {
        let confirmed = chain.planted.iter().any(|(id, p)| {
            matches!(p, Planted::Poison { victim, lookalike, .. } if *victim == c.victim && *lookalike == c.destination)
                && *id > c.first
                && *id < c.event
                && by_id.get(id).is_some_and(|e| rules.binds(e, c.victim, c.destination))
        });
        let label = if confirmed {
            TransferLabel::PayoffConfirmed
        } else if positional_match_count(&c.destination, &c.intended) > config.typo_digit_bound
            && !spenders.contains(&c.destination)
        {
            accidental.insert(c.event);
            TransferLabel::Accidental
        } else {
            TransferLabel::PayoffUnconfirmed
        };
        set(&mut labels, c.event, label);
    }

    let mut out: BTreeMap<EventId, TruthEvent> = labels
        .into_iter()
        .map(|(id, label)| {
            (
                id,
                TruthEvent {
                    event: id,
                    label,
                    owner: None,
                    victim: None,
                    lookalike: None,
                    planted: false,
                },
            )
        })
        .collect();
    let mut contests = Vec::new();
    for (id, p) in &chain.planted {
        let t = out.entry(*id).or_insert(TruthEvent {
            event: *id,
            label: TransferLabel::Benign,
            owner: None,
            victim: None,
            lookalike: None,
            planted: true,
        });
        t.planted = true;
        match p {
            Planted::Poison {
                victim,
                lookalike,
                group,
                bot,
                ..
            } => {
                t.owner = match (group, bot) {
                    (_, Some(b)) => Some(Owner::Bot(*b)),
                    (Some(g), None) => Some(Owner::Group(*g)),
                    (None, None) => None,
                };
                t.victim = Some(*victim);
                t.lookalike = Some(*lookalike);
            }
            Planted::Payoff {
                victim,
                lookalike,
                group,
                contest,
                ..
            } => {
                t.owner = group.map(Owner::Group);
                t.victim = Some(*victim);
                t.lookalike = Some(*lookalike);
                if let (Some(ci), TransferLabel::PayoffConfirmed) = (contest, t.label) {
                    if let Some((groups, winner)) = chain.contests.get(*ci as usize) {
                        contests.push(Contest {
                            payoff: *id,
                            winner: *winner,
                            groups: groups.clone(),
                        });
                    }
                }
            }
            Planted::Typo {
                victim, destination, ..
            } => {
                t.victim = Some(*victim);
                t.lookalike = Some(*destination);
            }
        }
    }
    Ok(GroundTruth {
        chain_id: config.chain_id,
        config: config.clone(),
        events: out,
        bots: chain.bots.clone(),
        accidental,
        contests,
    })
}

fn poison_label(kind: PoisonKind) -> TransferLabel {
    match kind {
        PoisonKind::Tiny => TransferLabel::TinyPoison,
        PoisonKind::Zero => TransferLabel::ZeroValuePoison,
        PoisonKind::Counterfeit => TransferLabel::CounterfeitPoison,
    }
}
