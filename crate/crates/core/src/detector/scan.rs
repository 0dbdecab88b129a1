use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};

use super::report::{DetectionReport, Diagnostics, Finding, Quarantine, UnpricedEvent, VictimInfo};
use super::{Pricer, TransferLabel};
use crate::address::{Address, TxHash};
use crate::amount::TokenAmount;
use crate::config::ChainConfig;
use crate::error::OrderError;
use crate::event::{EventId, TransferEvent};
use crate::prices::PriceTable;
use crate::similarity::{birthday_collision_prob, prefix_suffix_score, SimilarityScore};
use crate::token::TokenRegistry;

#[derive(Debug, Clone)]
struct TriggerRef {
    id: EventId,
    tx_hash: TxHash,
    timestamp: u64,
    token: Address,
    value: TokenAmount,
}

impl TriggerRef {
    fn of(e: &TransferEvent) -> Self {
        TriggerRef {
            id: e.id(),
            tx_hash: e.tx_hash,
            timestamp: e.timestamp,
            token: e.token,
            value: e.value,
        }
    }
}

#[derive(Debug, Clone)]
struct RecipientState {
    first: TriggerRef,
    last: TriggerRef,
}

#[derive(Debug, Default)]
struct VictimState {
    /// Recipients paid recently enough to still have an open window,
    /// with the block of their latest trigger.
    active: Vec<(Address, u64)>,
    counterparties: u64,
}

type MaskKey = [u8; 20];

/// Nibble mask that keeps the first `a` and last `b` digits.
fn digit_mask(a: u8, b: u8) -> MaskKey {
    let mut mask = [0u8; 20];
    for i in 0..40usize {
        if i < a as usize || i >= 40usize.saturating_sub(b as usize) {
            mask[i / 2] |= if i % 2 == 0 { 0xf0 } else { 0x0f };
        }
    }
    mask
}

fn apply_mask(addr: &Address, mask: &MaskKey) -> MaskKey {
    let mut out = *addr.as_bytes();
    for (o, m) in out.iter_mut().zip(mask) {
        *o &= m;
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Tiny,
    Zero,
    Counterfeit,
}

impl Role {
    fn label(self) -> TransferLabel {
        match self {
            Role::Tiny => TransferLabel::TinyPoison,
            Role::Zero => TransferLabel::ZeroValuePoison,
            Role::Counterfeit => TransferLabel::CounterfeitPoison,
        }
    }
}

/// Streaming detector. Feed events in total order with [`Scanner::push`],
/// then call [`Scanner::finish`].
///
/// Events of block `b` are classified against triggers from blocks `< b`;
/// block `b`'s own triggers are registered when the block closes.
pub struct Scanner<'a> {
    pricer: Pricer<'a>,
    mask: MaskKey,
    recipients: HashMap<(Address, Address), RecipientState>,
    index: HashMap<(Address, MaskKey), Vec<Address>>,
    victims: HashMap<Address, VictimState>,
    payoff_pairs: HashSet<(Address, Address)>,
    pending: Vec<(Address, Address, TriggerRef)>,
    tx_buf: Vec<TransferEvent>,
    block_txs: HashSet<TxHash>,
    current_block: Option<u64>,
    last_id: Option<EventId>,
    last_sweep: u64,
    contexts: HashSet<(EventId, Address, Address, Address)>,
    unpriced_seen: HashSet<EventId>,
    findings: Vec<Finding>,
    unpriced: Vec<UnpricedEvent>,
    diagnostics: Diagnostics,
    first_block: Option<u64>,
    events_scanned: u64,
}

impl<'a> Scanner<'a> {
    pub fn new(config: &'a ChainConfig, registry: &'a TokenRegistry, prices: &'a PriceTable) -> Self {
        Scanner {
            pricer: Pricer::new(config, registry, prices),
            mask: digit_mask(config.a_min, config.b_min),
            recipients: HashMap::new(),
            index: HashMap::new(),
            victims: HashMap::new(),
            payoff_pairs: HashSet::new(),
            pending: Vec::new(),
            tx_buf: Vec::new(),
            block_txs: HashSet::new(),
            current_block: None,
            last_id: None,
            last_sweep: 0,
            contexts: HashSet::new(),
            unpriced_seen: HashSet::new(),
            findings: Vec::new(),
            unpriced: Vec::new(),
            diagnostics: Diagnostics::default(),
            first_block: None,
            events_scanned: 0,
        }
    }

    fn cfg(&self) -> &'a ChainConfig {
        self.pricer.config
    }

    pub fn push(&mut self, e: &TransferEvent) -> Result<(), OrderError> {
        let id = e.id();
        if let Some(prev) = self.last_id {
            if id <= prev {
                return Err(OrderError::OutOfOrder {
                    prev_block: prev.block,
                    prev_log_index: prev.log_index,
                    block: id.block,
                    log_index: id.log_index,
                });
            }
        }
        self.last_id = Some(id);
        self.events_scanned += 1;
        if self.first_block.is_none() {
            self.first_block = Some(e.block_number);
        }
        if self.current_block != Some(e.block_number) {
            self.flush_tx();
            self.close_block();
            self.current_block = Some(e.block_number);
            self.maybe_sweep(e.block_number);
        } else if self.tx_buf.last().is_some_and(|p| p.tx_hash != e.tx_hash) {
            self.flush_tx();
        }
        if self.tx_buf.is_empty() && self.block_txs.contains(&e.tx_hash) {
            return Err(OrderError::SplitTransaction(format!("{}", e.tx_hash)));
        }
        self.tx_buf.push(e.clone());
        Ok(())
    }

    pub fn push_all<'e, I: IntoIterator<Item = &'e TransferEvent>>(&mut self, events: I) -> Result<(), OrderError> {
        for e in events {
            self.push(e)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> DetectionReport {
        self.flush_tx();
        self.close_block();
        let mut victims = BTreeMap::new();
        for f in &self.findings {
            victims.entry(f.victim).or_insert_with(|| {
                let r = self.victims.get(&f.victim).map_or(0, |v| v.counterparties);
                VictimInfo {
                    counterparties: r,
                    collision_prob: birthday_collision_prob(r),
                    excluded: false,
                }
            });
        }
        let cfg = self.cfg().clone();
        self.diagnostics.unpriced = self.unpriced.len() as u64;
        let mut report = DetectionReport {
            chain_id: cfg.chain_id,
            config: cfg,
            first_block: self.first_block,
            last_block: self.last_id.map(|id| id.block),
            events_scanned: self.events_scanned,
            findings: self.findings,
            victims,
            quarantine: Quarantine {
                findings: Vec::new(),
                unpriced: self.unpriced,
            },
            diagnostics: self.diagnostics,
        };
        report.sort_findings();
        report
    }

    fn window_open(&self, last_trigger_block: u64, block: u64) -> bool {
        last_trigger_block + self.cfg().window_blocks + 1 >= block
    }

    fn maybe_sweep(&mut self, block: u64) {
        let span = self.cfg().window_blocks + 1;
        if block < self.last_sweep + span {
            return;
        }
        self.last_sweep = block;
        for v in self.victims.values_mut() {
            v.active.retain(|&(_, last)| last + span >= block);
        }
    }

    fn close_block(&mut self) {
        self.block_txs.clear();
        let pending = core::mem::take(&mut self.pending);
        for (v, r, t) in pending {
            let block = t.id.block;
            match self.recipients.get_mut(&(v, r)) {
                Some(st) => st.last = t,
                None => {
                    self.recipients.insert(
                        (v, r),
                        RecipientState {
                            first: t.clone(),
                            last: t,
                        },
                    );
                    self.index.entry((v, apply_mask(&r, &self.mask))).or_default().push(r);
                    let vs = self.victims.entry(v).or_default();
                    if !self.payoff_pairs.contains(&(v, r)) {
                        vs.counterparties += 1;
                    }
                }
            }
            let vs = self.victims.entry(v).or_default();
            match vs.active.iter_mut().find(|(a, _)| *a == r) {
                Some(slot) => slot.1 = block,
                None => vs.active.push((r, block)),
            }
        }
    }

    fn flush_tx(&mut self) {
        if self.tx_buf.is_empty() {
            return;
        }
        let tx = core::mem::take(&mut self.tx_buf);
        self.block_txs.insert(tx[0].tx_hash);
        let mut poisoned = false;
        let mut payoff_events: HashSet<EventId> = HashSet::new();
        for e in &tx {
            let (p, is_payoff) = self.classify_window(e);
            poisoned |= p;
            if is_payoff {
                payoff_events.insert(e.id());
            }
        }
        if poisoned && tx.len() > 1 {
            for e in &tx {
                self.classify_sibling(e);
            }
        }
        let chain = self.cfg().chain_id;
        for e in &tx {
            if e.from != e.to
                && !e.value.is_zero()
                && self.pricer.registry.is_stablecoin(chain, &e.token)
                && !payoff_events.contains(&e.id())
            {
                self.pending.push((e.from, e.to, TriggerRef::of(e)));
            }
        }
        self.tx_buf = tx;
        self.tx_buf.clear();
    }

    fn mark_unpriced(&mut self, e: &TransferEvent, reason: alloc::string::String) {
        if self.unpriced_seen.insert(e.id()) {
            self.unpriced.push(UnpricedEvent {
                event: e.id(),
                token: e.token,
                reason,
            });
        }
    }

    /// Returns (found a poisoning, is a payoff candidate).
    fn classify_window(&mut self, e: &TransferEvent) -> (bool, bool) {
        if e.from == e.to {
            return (false, false);
        }
        let cfg = self.cfg();
        let entry = self.pricer.registry.get(cfg.chain_id, &e.token);
        let authentic = entry.is_some_and(|t| t.authentic);
        let stable = entry.is_some_and(|t| t.stablecoin);
        let b = e.block_number;
        let mut poisoned = false;

        // incoming to a victim: tiny transfer from a lookalike
        if stable && !e.value.is_zero() {
            poisoned |= self.window_match(e, e.to, e.from, b, Role::Tiny);
        }

        // outgoing from a victim
        let mut payoff = false;
        if authentic && !e.value.is_zero() {
            payoff = self.payoff_candidate(e);
        } else if stable && e.value.is_zero() {
            poisoned |= self.window_match(e, e.from, e.to, b, Role::Zero);
        } else if !authentic {
            poisoned |= self.window_match(e, e.from, e.to, b, Role::Counterfeit);
        }
        (poisoned, payoff)
    }

    fn window_match(&mut self, e: &TransferEvent, victim: Address, other: Address, b: u64, role: Role) -> bool {
        let Some(vs) = self.victims.get(&victim) else {
            return false;
        };
        if vs.active.is_empty() {
            return false;
        }
        let (a_min, b_min) = (self.cfg().a_min, self.cfg().b_min);
        let mut hits: Vec<(Address, SimilarityScore)> = Vec::new();
        for &(r, last) in &vs.active {
            if !self.window_open(last, b) {
                continue;
            }
            let score = prefix_suffix_score(&r, &other);
            if score.passes(a_min, b_min) {
                hits.push((r, score));
            } else if !score.identical && score.digits() >= a_min + b_min {
                self.diagnostics.near_misses += 1;
            }
        }
        let mut found = false;
        for (r, score) in hits {
            found |= self.emit(e, role, victim, r, other, score, false);
        }
        found
    }

    /// Records the finding; returns whether a poisoning label was assigned.
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        e: &TransferEvent,
        role: Role,
        victim: Address,
        r: Address,
        l: Address,
        score: SimilarityScore,
        via_sibling: bool,
    ) -> bool {
        if self.contexts.contains(&(e.id(), victim, r, l)) {
            return false;
        }
        let usd = if role == Role::Tiny {
            match self.pricer.event_usd(e) {
                Ok(v) => {
                    if !(v.is_positive() && v < self.cfg().tiny_threshold_usd) {
                        return false;
                    }
                    Some(v)
                }
                Err(err) => {
                    self.mark_unpriced(e, format!("{err}"));
                    return false;
                }
            }
        } else {
            self.pricer.event_usd(e).ok()
        };
        let Some(state) = self.recipients.get(&(victim, r)) else {
            return false;
        };
        let trigger = state.last.clone();
        self.contexts.insert((e.id(), victim, r, l));
        self.findings.push(Finding {
            event: e.id(),
            tx_hash: e.tx_hash,
            timestamp: e.timestamp,
            token: e.token,
            from: e.from,
            to: e.to,
            label: role.label(),
            victim,
            intended: r,
            lookalike: l,
            score,
            usd,
            trigger: trigger.id,
            via_sibling,
            evidence: None,
            edit_distance: None,
        });
        if self.contexts.insert((trigger.id, victim, r, l)) {
            let usd = self
                .pricer
                .value(&trigger.token, &trigger.value, crate::prices::date_of(trigger.timestamp))
                .ok();
            self.findings.push(Finding {
                event: trigger.id,
                tx_hash: trigger.tx_hash,
                timestamp: trigger.timestamp,
                token: trigger.token,
                from: victim,
                to: r,
                label: TransferLabel::Intended,
                victim,
                intended: r,
                lookalike: l,
                score,
                usd,
                trigger: trigger.id,
                via_sibling: false,
                evidence: None,
                edit_distance: None,
            });
        }
        true
    }

    /// Recipients of `victim` that `other` imitates, from the full index.
    fn indexed_matches(&self, victim: Address, other: Address) -> Vec<(Address, SimilarityScore)> {
        let (a_min, b_min) = (self.cfg().a_min, self.cfg().b_min);
        let Some(list) = self.index.get(&(victim, apply_mask(&other, &self.mask))) else {
            return Vec::new();
        };
        list.iter()
            .filter_map(|r| {
                let s = prefix_suffix_score(r, &other);
                s.passes(a_min, b_min).then_some((*r, s))
            })
            .collect()
    }

    fn payoff_candidate(&mut self, e: &TransferEvent) -> bool {
        let (v, l) = (e.from, e.to);
        if self.recipients.contains_key(&(v, l)) {
            return false;
        }
        let hits = self.indexed_matches(v, l);
        if hits.is_empty() {
            return false;
        }
        if self.pricer.registry.is_stablecoin(self.cfg().chain_id, &e.token) && self.payoff_pairs.insert((v, l)) {
            self.victims.entry(v).or_default().counterparties += 1;
        }
        let usd = match self.pricer.event_usd(e) {
            Ok(u) => Some(u),
            Err(err) => {
                self.mark_unpriced(e, format!("{err}"));
                None
            }
        };
        for (r, score) in hits {
            if !self.contexts.insert((e.id(), v, r, l)) {
                continue;
            }
            let first = self.recipients[&(v, r)].first.id;
            self.findings.push(Finding {
                event: e.id(),
                tx_hash: e.tx_hash,
                timestamp: e.timestamp,
                token: e.token,
                from: v,
                to: l,
                label: TransferLabel::PayoffUnconfirmed,
                victim: v,
                intended: r,
                lookalike: l,
                score,
                usd,
                trigger: first,
                via_sibling: false,
                evidence: None,
                edit_distance: None,
            });
        }
        true
    }

    fn classify_sibling(&mut self, e: &TransferEvent) {
        if e.from == e.to {
            return;
        }
        let cfg = self.cfg();
        let authentic = self.pricer.registry.is_authentic(cfg.chain_id, &e.token);
        if authentic && !e.value.is_zero() {
            for (r, s) in self.indexed_matches(e.to, e.from) {
                self.emit(e, Role::Tiny, e.to, r, e.from, s, true);
            }
        }
        let role = if !authentic {
            Some(Role::Counterfeit)
        } else if e.value.is_zero() {
            Some(Role::Zero)
        } else {
            None
        };
        if let Some(role) = role {
            for (r, s) in self.indexed_matches(e.from, e.to) {
                self.emit(e, role, e.from, r, e.to, s, true);
            }
        }
    }
}

/// Run the detector over an ordered slice.
pub fn scan(
    events: &[TransferEvent],
    config: &ChainConfig,
    registry: &TokenRegistry,
    prices: &PriceTable,
) -> Result<DetectionReport, OrderError> {
    let mut s = Scanner::new(config, registry, prices);
    s.push_all(events)?;
    Ok(s.finish())
}

/// Other transfers of the poisoning event's transaction, which get
/// classified regardless of the window.
pub fn sibling_expansion<'e>(poison: &TransferEvent, tx_events: &'e [TransferEvent]) -> Vec<&'e TransferEvent> {
    tx_events
        .iter()
        .filter(|e| e.tx_hash == poison.tx_hash && e.id() != poison.id())
        .collect()
}
