//! Brute-force labeler used as an oracle for the streaming detector.
//!
//! Every candidate event is compared against every earlier payment of the
//! same payer with no masks or indexes; windows are checked from the
//! complete trigger history.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use poison_core::detector::{Pricer, TransferLabel};
use poison_core::similarity::{positional_match_count, prefix_suffix_score};
use poison_core::{Address, ChainConfig, EventId, PriceTable, TokenRegistry, TransferEvent};

#[derive(Clone, Copy)]
struct Paid {
    first: EventId,
    last: EventId,
}

pub fn reference_labels(
    events: &[TransferEvent],
    config: &ChainConfig,
    registry: &TokenRegistry,
    prices: &PriceTable,
) -> BTreeMap<EventId, TransferLabel> {
    let pricer = Pricer::new(config, registry, prices);
    let chain = config.chain_id;
    let authentic = |e: &TransferEvent| registry.is_authentic(chain, &e.token);
    let stable = |e: &TransferEvent| registry.is_stablecoin(chain, &e.token);
    let tiny = |e: &TransferEvent| {
        matches!(pricer.event_usd(e), Ok(u) if u.is_positive() && u < config.tiny_threshold_usd)
    };
    let passes = |r: &Address, l: &Address| prefix_suffix_score(r, l).passes(config.a_min, config.b_min);
    let m = config.window_blocks;

    // payer -> recipient -> first/last trigger, as of the previous block
    let mut paid: HashMap<Address, BTreeMap<Address, Paid>> = HashMap::new();
    let mut labels: BTreeMap<EventId, TransferLabel> = BTreeMap::new();
    let put = |labels: &mut BTreeMap<EventId, TransferLabel>, id: EventId, l: TransferLabel| {
        let slot = labels.entry(id).or_insert(TransferLabel::Benign);
        if l.precedence() > slot.precedence() {
            *slot = l;
        }
    };
    // (payoff event, victim, intended, lookalike, first trigger)
    let mut payoffs: Vec<(EventId, Address, Address, Address, EventId)> = Vec::new();

    let mut start = 0;
    while start < events.len() {
        let block = events[start].block_number;
        let end = start + events[start..].iter().take_while(|e| e.block_number == block).count();
        let mut new_triggers = Vec::new();
        let mut t0 = start;
        while t0 < end {
            let t1 = t0 + events[t0..end].iter().take_while(|e| e.tx_hash == events[t0].tx_hash).count();
            let tx = &events[t0..t1];
            let mut payoff_ids = BTreeSet::new();
            // (event, victim, intended, lookalike, trigger)
            let mut hits: Vec<(EventId, Address, Address, Address, EventId)> = Vec::new();
            let empty = BTreeMap::new();
            for e in tx {
                if e.from == e.to {
                    continue;
                }
                let window = |v: Address, l: Address, hits: &mut Vec<_>| {
                    for (r, p) in paid.get(&v).unwrap_or(&empty) {
                        if p.last.block + m + 1 >= block && passes(r, &l) {
                            hits.push((e.id(), v, *r, l, p.last));
                        }
                    }
                };
                if stable(e) && !e.value.is_zero() && tiny(e) {
                    window(e.to, e.from, &mut hits);
                }
                if authentic(e) && !e.value.is_zero() {
                    let mine = paid.get(&e.from).unwrap_or(&empty);
                    if !mine.contains_key(&e.to) {
                        for (r, p) in mine {
                            if passes(r, &e.to) {
                                payoff_ids.insert(e.id());
                                payoffs.push((e.id(), e.from, *r, e.to, p.first));
                            }
                        }
                    }
                } else if (stable(e) && e.value.is_zero()) || !authentic(e) {
                    window(e.from, e.to, &mut hits);
                }
            }
            if !hits.is_empty() && tx.len() > 1 {
                for e in tx {
                    if e.from == e.to {
                        continue;
                    }
                    let any = |v: Address, l: Address, hits: &mut Vec<_>| {
                        for (r, p) in paid.get(&v).unwrap_or(&empty) {
                            if passes(r, &l) {
                                hits.push((e.id(), v, *r, l, p.last));
                            }
                        }
                    };
                    if authentic(e) && !e.value.is_zero() && tiny(e) {
                        any(e.to, e.from, &mut hits);
                    }
                    if !authentic(e) || e.value.is_zero() {
                        any(e.from, e.to, &mut hits);
                    }
                }
            }
            for (id, _, _, _, trigger) in &hits {
                let e = tx.iter().find(|e| e.id() == *id).unwrap();
                let label = if !authentic(e) {
                    TransferLabel::CounterfeitPoison
                } else if e.value.is_zero() {
                    TransferLabel::ZeroValuePoison
                } else {
                    TransferLabel::TinyPoison
                };
                put(&mut labels, *id, label);
                put(&mut labels, *trigger, TransferLabel::Intended);
            }
            for e in tx {
                if e.from != e.to && !e.value.is_zero() && stable(e) && !payoff_ids.contains(&e.id()) {
                    new_triggers.push((e.from, e.to, e.id()));
                }
            }
            t0 = t1;
        }
        for (v, r, id) in new_triggers {
            paid.entry(v)
                .or_default()
                .entry(r)
                .and_modify(|p| p.last = id)
                .or_insert(Paid { first: id, last: id });
        }
        start = end;
    }

    let spenders: BTreeSet<Address> = events
        .iter()
        .filter(|e| !e.value.is_zero() && authentic(e))
        .map(|e| e.from)
        .collect();
    let binds = |e: &TransferEvent, v: Address, l: Address| {
        e.from != e.to
            && ((e.from == l && e.to == v && authentic(e) && !e.value.is_zero() && tiny(e))
                || (e.from == v && e.to == l && (!authentic(e) || e.value.is_zero())))
    };
    for (id, v, r, l, first) in payoffs {
        let confirmed = events.iter().any(|e| e.id() > first && e.id() < id && binds(e, v, l));
        let label = if confirmed {
            TransferLabel::PayoffConfirmed
        } else if positional_match_count(&l, &r) > config.typo_digit_bound && !spenders.contains(&l) {
            TransferLabel::Accidental
        } else {
            TransferLabel::PayoffUnconfirmed
        };
        put(&mut labels, id, label);
    }
    labels.retain(|_, l| *l != TransferLabel::Benign);
    labels
}
