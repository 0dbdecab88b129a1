use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tiny_keccak::{Hasher, Keccak};

use super::{ChainData, ChainSpec, GroupSpec, Planted, PoisonKind, Scenario, ScenarioSpec};
use crate::address::{Address, TxHash, ADDRESS_DIGITS};
use crate::amount::TokenAmount;
use crate::config::ChainConfig;
use crate::error::ScenarioError;
use crate::event::{validate_order, EventId, TransactionRecord, TransferEvent};
use crate::money::UsdPrice;
use crate::prices::{date_of, AssetId, PriceRow};
use crate::token::TokenEntry;

/// Blocks kept free after the last poisoning for payoffs and cash-outs.
const PAYOFF_ROOM: u64 = 30;
const STABLE_UNIT: u128 = 1_000_000;
const WETH_USD: u64 = 2_000;

fn random_address(rng: &mut ChaCha20Rng) -> Address {
    let mut b = [0u8; 20];
    rng.fill_bytes(&mut b);
    Address::from_bytes(b)
}

fn other_digit(rng: &mut ChaCha20Rng, d: u8) -> u8 {
    (d + rng.gen_range(1..16u8)) % 16
}

/// An address sharing exactly the first `a` and last `b` digits with `r`.
pub(crate) fn lookalike(rng: &mut ChaCha20Rng, r: &Address, a: u8, b: u8) -> Address {
    let src = r.nibbles();
    let mut d = src;
    let (lo, hi) = (a as usize, ADDRESS_DIGITS - 1 - b as usize);
    for x in d.iter_mut().take(hi + 1).skip(lo) {
        *x = rng.gen_range(0..16u8);
    }
    d[lo] = other_digit(rng, src[lo]);
    d[hi] = other_digit(rng, src[hi]);
    Address::from_nibbles(&d)
}

/// A single-edit typo of `r` inside its middle digits.
pub(crate) fn typo(rng: &mut ChaCha20Rng, r: &Address) -> Address {
    let mut d = r.nibbles();
    if rng.gen_bool(0.5) {
        for _ in 0..8 {
            let p = rng.gen_range(8..31usize);
            if d[p] != d[p + 1] {
                d.swap(p, p + 1);
                return Address::from_nibbles(&d);
            }
        }
    }
    let p = rng.gen_range(8..32usize);
    d[p] = other_digit(rng, d[p]);
    Address::from_nibbles(&d)
}

/// Addresses shared by all chains.
struct Population {
    users: Vec<Address>,
    targets: Vec<Address>,
    accounts: Vec<Vec<Address>>,
    contracts: Vec<Address>,
    bots: Vec<Address>,
}

impl Population {
    fn new(spec: &ScenarioSpec, rng: &mut ChaCha20Rng) -> Self {
        let users = (0..spec.n_benign_users).map(|_| random_address(rng)).collect();
        let targets = (0..spec.popular_targets).map(|_| random_address(rng)).collect();
        let accounts = spec
            .groups
            .iter()
            .map(|g| (0..g.accounts).map(|_| random_address(rng)).collect())
            .collect();
        let contracts = spec.groups.iter().map(|_| random_address(rng)).collect();
        let bots = spec.bots.iter().map(|_| random_address(rng)).collect();
        Population {
            users,
            targets,
            accounts,
            contracts,
            bots,
        }
    }
}

struct PlanTransfer {
    token: Address,
    from: Address,
    to: Address,
    value: TokenAmount,
    role: Option<Planted>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Origin {
    Benign,
    Group(u32),
    Bot,
}

struct PlanTx {
    block: u64,
    rank: u64,
    sub: u32,
    initiator: Address,
    target: Option<Address>,
    origin: Origin,
    transfers: Vec<PlanTransfer>,
}

/// One attack context as planted, kept for cross-chain replay.
#[derive(Clone)]
struct AttackRecord {
    group: u32,
    victim: Address,
    intended: Address,
    lookalike: Address,
    kind: PoisonKind,
    offsets: Vec<u64>,
    amount: u128,
    paid: bool,
}

struct Tokens {
    usdt: Address,
    usdc: Address,
    weth: Address,
    spam: Vec<Address>,
    counterfeit: Vec<Vec<Address>>,
    bot_counterfeit: Vec<Address>,
}

struct ChainGen<'s> {
    spec: &'s ScenarioSpec,
    pop: &'s Population,
    config: ChainConfig,
    block_time: u64,
    rng: ChaCha20Rng,
    tokens: Tokens,
    txs: Vec<PlanTx>,
    records: Vec<AttackRecord>,
    contests: Vec<(Vec<u32>, u32)>,
}

impl<'s> ChainGen<'s> {
    fn new(spec: &'s ScenarioSpec, pop: &'s Population, index: usize, chain: &ChainSpec) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        rng.set_stream(index as u64 + 1);
        let mut config = ChainConfig::for_block_time(chain.chain_id, chain.block_time_secs);
        if chain.chain_id == 56 {
            config.native_asset = String::from("BNB");
        }
        let tokens = Tokens {
            usdt: random_address(&mut rng),
            usdc: random_address(&mut rng),
            weth: random_address(&mut rng),
            spam: (0..3).map(|_| random_address(&mut rng)).collect(),
            counterfeit: spec
                .groups
                .iter()
                .map(|g| (0..g.counterfeit_tokens).map(|_| random_address(&mut rng)).collect())
                .collect(),
            bot_counterfeit: spec.bots.iter().map(|_| random_address(&mut rng)).collect(),
        };
        ChainGen {
            spec,
            pop,
            config,
            block_time: chain.block_time_secs,
            rng,
            tokens,
            txs: Vec::new(),
            records: Vec::new(),
            contests: Vec::new(),
        }
    }

    fn m(&self) -> u64 {
        self.config.window_blocks
    }

    fn push_tx(&mut self, block: u64, initiator: Address, target: Option<Address>, origin: Origin, transfers: Vec<PlanTransfer>) {
        let rank = self.rng.next_u64();
        self.txs.push(PlanTx {
            block,
            rank,
            sub: 0,
            initiator,
            target,
            origin,
            transfers,
        });
    }

    fn payment(&mut self, block: u64, token: Address, from: Address, to: Address, value: u128, role: Option<Planted>) {
        let t = PlanTransfer {
            token,
            from,
            to,
            value: TokenAmount::from_u128(value),
            role,
        };
        self.push_tx(block, from, Some(token), Origin::Benign, vec![t]);
    }

    fn stablecoin(&mut self) -> Address {
        if self.rng.gen_bool(0.5) {
            self.tokens.usdt
        } else {
            self.tokens.usdc
        }
    }

    fn pick_victim(&mut self) -> Address {
        self.pop.users[self.rng.gen_range(0..self.spec.n_victims as usize)]
    }

    fn pick_recipient(&mut self, payer: Address) -> Address {
        if !self.pop.targets.is_empty() && self.rng.gen_bool(self.spec.popular_share) {
            return self.pop.targets[self.rng.gen_range(0..self.pop.targets.len())];
        }
        loop {
            let u = self.pop.users[self.rng.gen_range(0..self.pop.users.len())];
            if u != payer || self.pop.users.len() == 1 {
                return u;
            }
        }
    }

    fn draw_offset(&mut self, g: &GroupSpec) -> u64 {
        if g.offsets.is_empty() {
            self.rng.gen_range(1..=self.m() + 1)
        } else {
            g.offsets[self.rng.gen_range(0..g.offsets.len())]
        }
    }

    fn draw_kind(&mut self, g: &GroupSpec) -> PoisonKind {
        let x = self.rng.gen::<f64>() * (g.tiny + g.zero + g.counterfeit);
        if x < g.tiny {
            PoisonKind::Tiny
        } else if x < g.tiny + g.zero {
            PoisonKind::Zero
        } else if g.counterfeit > 0.0 {
            PoisonKind::Counterfeit
        } else if g.zero > 0.0 {
            PoisonKind::Zero
        } else {
            PoisonKind::Tiny
        }
    }

    fn intended_amount(&mut self) -> u128 {
        self.rng.gen_range(100..=10_000u128) * STABLE_UNIT
    }

    /// Latest trigger block that leaves room for `span` more blocks.
    fn latest_start(&self, span: u64) -> Result<u64, ScenarioError> {
        let n = self.spec.n_blocks;
        if span + PAYOFF_ROOM >= n {
            return Err(ScenarioError::Invalid(format!(
                "n_blocks {n} leaves no room for poisoning delays up to {span}"
            )));
        }
        Ok(n - span - PAYOFF_ROOM)
    }

    #[allow(clippy::too_many_arguments)]
    fn poison_transfer(
        &mut self,
        gi: u32,
        kind: PoisonKind,
        token: Address,
        victim: Address,
        intended: Address,
        lookalike: Address,
        amount: u128,
    ) -> PlanTransfer {
        let role = Some(Planted::Poison {
            kind,
            victim,
            intended,
            lookalike,
            group: Some(gi),
            bot: None,
        });
        match kind {
            PoisonKind::Tiny => PlanTransfer {
                token,
                from: lookalike,
                to: victim,
                value: TokenAmount::from_u128(self.rng.gen_range(1..10 * STABLE_UNIT)),
                role,
            },
            PoisonKind::Zero => PlanTransfer {
                token,
                from: victim,
                to: lookalike,
                value: TokenAmount::ZERO,
                role,
            },
            PoisonKind::Counterfeit => {
                let fakes = &self.tokens.counterfeit[gi as usize];
                let fake = fakes[self.rng.gen_range(0..fakes.len())];
                PlanTransfer {
                    token: fake,
                    from: victim,
                    to: lookalike,
                    value: TokenAmount::from_u128(amount),
                    role,
                }
            }
        }
    }

    fn attack_target(&self, gi: u32, first: &PlanTransfer) -> Option<Address> {
        if self.spec.groups[gi as usize].use_contract {
            Some(self.pop.contracts[gi as usize])
        } else {
            Some(first.token)
        }
    }

    fn payoff(&mut self, after: u64, token: Address, rec: &AttackRecord, contest: Option<u32>) {
        let block = after + self.rng.gen_range(1..=20);
        let role = Planted::Payoff {
            victim: rec.victim,
            intended: rec.intended,
            lookalike: rec.lookalike,
            group: Some(rec.group),
            contest,
        };
        self.payment(block, token, rec.victim, rec.lookalike, rec.amount, Some(role));
        let cash = block + self.rng.gen_range(1..=5);
        let sink = self.pop.accounts[rec.group as usize][0];
        self.payment(cash, token, rec.lookalike, sink, rec.amount, None);
    }

    fn plan_group(&mut self, gi: u32) -> Result<(), ScenarioError> {
        let g = self.spec.groups[gi as usize].clone();
        let m = self.m();
        let stale = g.bundle_size > 1 && g.stale_fraction > 0.0;
        let mut attack = 0u32;
        let mut chunk_index = 0usize;
        while attack < g.attacks {
            let size = g.bundle_size.min(g.attacks - attack);
            attack += size;
            let mut offsets: Vec<u64> = (0..g.poisons_per_attack).map(|_| self.draw_offset(&g)).collect();
            offsets.sort_unstable();
            let max_off = *offsets.last().unwrap_or(&1);
            let lo = if stale { 2 * m + 4 } else { 1 };
            let hi = self.latest_start(max_off)?;
            if lo > hi {
                return Err(ScenarioError::Invalid(format!("n_blocks too small for stale bundles in group {gi}")));
            }
            let t0 = self.rng.gen_range(lo..=hi);
            let first_poison = t0 + offsets[0];

            let mut members = Vec::with_capacity(size as usize);
            for k in 0..size {
                let victim = self.pick_victim();
                let intended = self.pick_recipient(victim);
                let kind = self.draw_kind(&g);
                let (a, b) = g.shapes[self.rng.gen_range(0..g.shapes.len())];
                let lookalike = lookalike(&mut self.rng, &intended, a, b);
                let token = self.stablecoin();
                let amount = self.intended_amount();
                let t = if k == 0 {
                    t0
                } else if stale && self.rng.gen_bool(g.stale_fraction) {
                    first_poison - (m + 2 + self.rng.gen_range(0..=m))
                } else {
                    first_poison.saturating_sub(self.draw_offset(&g)).max(1)
                };
                self.payment(t, token, victim, intended, amount, None);
                members.push((
                    token,
                    AttackRecord {
                        group: gi,
                        victim,
                        intended,
                        lookalike,
                        kind,
                        offsets: offsets.iter().map(|o| t0 + o - t).collect(),
                        amount,
                        paid: false,
                    },
                ));
            }

            let accounts = &self.pop.accounts[gi as usize];
            for (round, off) in offsets.iter().enumerate() {
                let account = accounts[(chunk_index + round) % accounts.len()];
                let mut transfers = Vec::with_capacity(members.len());
                for (token, r) in &members {
                    let p = self.poison_transfer(gi, r.kind, *token, r.victim, r.intended, r.lookalike, r.amount);
                    transfers.push(p);
                }
                let target = self.attack_target(gi, &transfers[0]);
                self.push_tx(t0 + off, account, target, Origin::Group(gi), transfers);
            }

            let last = t0 + max_off;
            for (token, mut r) in members {
                r.paid = self.rng.gen_bool(g.payoff_probability);
                if r.paid {
                    self.payoff(last, token, &r, None);
                }
                self.records.push(r);
            }
            chunk_index += 1;
        }
        Ok(())
    }

    fn plan_contests(&mut self) -> Result<(), ScenarioError> {
        let m = self.m();
        let spec = self.spec;
        for c in &spec.contests {
            for &winner in &c.winners {
                let hi = self.latest_start(m + 1)?;
                let t = self.rng.gen_range(1..=hi);
                let victim = self.pick_victim();
                let intended = self.pick_recipient(victim);
                let token = self.stablecoin();
                let amount = self.intended_amount();
                self.payment(t, token, victim, intended, amount, None);
                // distinct delays so every competitor has its own block
                let mut slots: Vec<u64> = (1..=m + 1).collect();
                let mut last = t;
                let mut win_record = None;
                for &gi in &c.groups {
                    let g = &spec.groups[gi];
                    let off = slots.swap_remove(self.rng.gen_range(0..slots.len()));
                    let kind = self.draw_kind(g);
                    let (a, b) = g.shapes[self.rng.gen_range(0..g.shapes.len())];
                    let l = lookalike(&mut self.rng, &intended, a, b);
                    let gi = gi as u32;
                    let p = self.poison_transfer(gi, kind, token, victim, intended, l, amount);
                    let target = self.attack_target(gi, &p);
                    let account = self.pop.accounts[gi as usize][0];
                    self.push_tx(t + off, account, target, Origin::Group(gi), vec![p]);
                    last = last.max(t + off);
                    if gi as usize == winner {
                        win_record = Some(AttackRecord {
                            group: gi,
                            victim,
                            intended,
                            lookalike: l,
                            kind,
                            offsets: vec![off],
                            amount,
                            paid: true,
                        });
                    }
                }
                let index = self.contests.len() as u32;
                self.contests
                    .push((c.groups.iter().map(|g| *g as u32).collect(), winner as u32));
                if let Some(r) = win_record {
                    self.payoff(last, token, &r, Some(index));
                }
            }
        }
        Ok(())
    }

    /// Replay attack contexts from another chain with rescaled delays.
    fn plan_replays(&mut self, records: &[AttackRecord], other_window: u64) -> Result<(), ScenarioError> {
        let m = self.m();
        for r in records {
            let offsets: Vec<u64> = r
                .offsets
                .iter()
                .map(|&o| {
                    let scaled = (o * m).div_ceil(other_window).max(1);
                    if o <= other_window + 1 {
                        scaled.min(m + 1)
                    } else {
                        scaled.max(m + 2)
                    }
                })
                .collect();
            let max_off = offsets.iter().copied().max().unwrap_or(1);
            let t = self.rng.gen_range(1..=self.latest_start(max_off)?);
            let token = self.stablecoin();
            self.payment(t, token, r.victim, r.intended, r.amount, None);
            let account = self.pop.accounts[r.group as usize][0];
            for off in &offsets {
                let p = self.poison_transfer(r.group, r.kind, token, r.victim, r.intended, r.lookalike, r.amount);
                let target = self.attack_target(r.group, &p);
                self.push_tx(t + off, account, target, Origin::Group(r.group), vec![p]);
            }
            if r.paid {
                self.payoff(t + max_off, token, r, None);
            }
        }
        Ok(())
    }

    fn plan_bots(&mut self) {
        let originals: Vec<usize> = (0..self.txs.len())
            .filter(|&i| matches!(self.txs[i].origin, Origin::Group(_)))
            .collect();
        let spec = self.spec;
        for (bi, bot) in spec.bots.iter().enumerate() {
            let account = self.pop.bots[bi];
            let fake = self.tokens.bot_counterfeit[bi];
            for &i in &originals {
                let (block, rank, gi) = match self.txs[i].origin {
                    Origin::Group(gi) => (self.txs[i].block, self.txs[i].rank, gi),
                    _ => continue,
                };
                if !bot.copies.contains(&(gi as usize)) || block < bot.start_block {
                    continue;
                }
                let at = block + bot.delay_blocks;
                if at > self.spec.n_blocks {
                    continue;
                }
                let mut copies = Vec::new();
                for t in &self.txs[i].transfers {
                    let Some(Planted::Poison {
                        kind,
                        victim,
                        intended,
                        lookalike,
                        ..
                    }) = t.role
                    else {
                        continue;
                    };
                    // tiny transfers spend the lookalike's own balance and cannot be replayed
                    if kind == PoisonKind::Tiny {
                        continue;
                    }
                    copies.push((kind, t.token, t.from, t.to, t.value, victim, intended, lookalike));
                }
                if copies.is_empty() {
                    continue;
                }
                let mut transfers = Vec::with_capacity(copies.len());
                for (kind, token, from, to, value, victim, intended, lookalike) in copies {
                    let mut value = value;
                    if bot.mutate && !value.is_zero() {
                        value = TokenAmount::from_u128(value.to_u128().unwrap_or(0) + self.rng.gen_range(1..=STABLE_UNIT));
                    }
                    transfers.push(PlanTransfer {
                        token: if kind == PoisonKind::Counterfeit { fake } else { token },
                        from,
                        to,
                        value,
                        role: Some(Planted::Poison {
                            kind,
                            victim,
                            intended,
                            lookalike,
                            group: None,
                            bot: Some(bi as u32),
                        }),
                    });
                }
                let target = Some(transfers[0].token);
                self.txs.push(PlanTx {
                    block: at,
                    rank,
                    sub: 1 + bi as u32,
                    initiator: account,
                    target,
                    origin: Origin::Bot,
                    transfers,
                });
            }
        }
    }

    fn plan_typos(&mut self) {
        let n = self.spec.n_blocks;
        for ui in 0..self.pop.users.len() {
            if !self.rng.gen_bool(self.spec.typo_rate) {
                continue;
            }
            let victim = self.pop.users[ui];
            let intended = self.pick_recipient(victim);
            let t = self.rng.gen_range(1..=n / 2);
            let token = self.stablecoin();
            let amount = self.intended_amount();
            self.payment(t, token, victim, intended, amount, None);
            let dest = typo(&mut self.rng, &intended);
            let at = self.rng.gen_range(t + 1..=n);
            let role = Some(Planted::Typo {
                victim,
                intended,
                destination: dest,
            });
            if self.rng.gen_bool(0.5) {
                self.payment(at, token, victim, dest, amount, role);
            } else {
                let wei = self.rng.gen_range(1..=10_000u128) * 100_000_000_000_000;
                let weth = self.tokens.weth;
                self.payment(at, weth, victim, dest, wei, role);
            }
        }
    }

    fn plan_benign(&mut self) {
        for block in 1..=self.spec.n_blocks {
            for _ in 0..self.spec.benign_per_block {
                let x = self.rng.gen::<f64>();
                if x < 0.1 {
                    let spam = self.tokens.spam[self.rng.gen_range(0..self.tokens.spam.len())];
                    let from = random_address(&mut self.rng);
                    let to = self.pop.users[self.rng.gen_range(0..self.pop.users.len())];
                    let v = self.rng.gen_range(1..=1_000_000u128) * 1_000_000_000_000;
                    self.payment(block, spam, from, to, v, None);
                    continue;
                }
                let from = self.pop.users[self.rng.gen_range(0..self.pop.users.len())];
                let to = self.pick_recipient(from);
                if x < 0.75 {
                    let token = self.stablecoin();
                    let v = self.rng.gen_range(10..=5_000u128) * STABLE_UNIT;
                    self.payment(block, token, from, to, v, None);
                } else {
                    let wei = self.rng.gen_range(1..=10_000u128) * 100_000_000_000_000;
                    let weth = self.tokens.weth;
                    self.payment(block, weth, from, to, wei, None);
                }
            }
        }
    }

    fn registry(&self) -> Vec<TokenEntry> {
        let chain_id = self.config.chain_id;
        let entry = |address, symbol: &str, decimals, stablecoin| TokenEntry {
            chain_id,
            address,
            symbol: String::from(symbol),
            decimals,
            authentic: true,
            stablecoin,
        };
        vec![
            entry(self.tokens.usdt, "USDT", 6, true),
            entry(self.tokens.usdc, "USDC", 6, true),
            entry(self.tokens.weth, "WETH", 18, false),
        ]
    }

    fn prices(&self, first_ts: u64, last_ts: u64) -> Vec<PriceRow> {
        let native = if self.config.native_asset == "BNB" { 300 } else { WETH_USD };
        let mut rows = Vec::new();
        let mut day = date_of(first_ts);
        let end = date_of(last_ts);
        while day <= end {
            for (asset, usd) in [
                (AssetId::Token(self.tokens.usdt), 1),
                (AssetId::Token(self.tokens.usdc), 1),
                (AssetId::Token(self.tokens.weth), WETH_USD),
                (AssetId::Native(self.config.native_asset.clone()), native),
            ] {
                rows.push(PriceRow {
                    asset,
                    date: day,
                    usd_price: UsdPrice::from_atto(usd as u128 * 1_000_000_000_000_000_000).unwrap_or(UsdPrice::ONE),
                });
            }
            match day.succ_opt() {
                Some(d) => day = d,
                None => break,
            }
        }
        rows
    }

    fn finish(mut self) -> Result<ChainData, ScenarioError> {
        let chain_id = self.config.chain_id;
        let mut txs = core::mem::take(&mut self.txs);
        txs.sort_by_key(|t| (t.block, t.rank, t.sub));

        let mut events = Vec::new();
        let mut records = BTreeMap::new();
        let mut planted = BTreeMap::new();
        let mut poisoning: BTreeMap<Address, (u64, Origin)> = BTreeMap::new();
        let mut log_index = 0u32;
        let mut block = 0u64;
        for (seq, tx) in txs.into_iter().enumerate() {
            if tx.block != block {
                block = tx.block;
                log_index = 0;
            }
            let hash = tx_hash(chain_id, seq as u64);
            if tx.origin != Origin::Benign {
                records.insert(
                    hash,
                    TransactionRecord {
                        tx_hash: hash,
                        block_number: tx.block,
                        initiator: tx.initiator,
                        target: tx.target,
                        gas_used: self.spec.gas_used,
                        gas_price: self.spec.gas_price,
                        native_value: 0,
                    },
                );
                poisoning.entry(tx.initiator).or_insert((0, tx.origin)).0 += 1;
            }
            for t in tx.transfers {
                let e = TransferEvent {
                    chain_id,
                    block_number: tx.block,
                    timestamp: self.spec.start_timestamp + tx.block * self.block_time,
                    tx_hash: hash,
                    log_index,
                    token: t.token,
                    from: t.from,
                    to: t.to,
                    value: t.value,
                };
                if let Some(role) = t.role {
                    planted.insert(EventId { block: tx.block, log_index }, role);
                }
                log_index += 1;
                events.push(e);
            }
        }
        validate_order(&events).map_err(|e| ScenarioError::Invalid(format!("generated stream: {e}")))?;

        let mut history = BTreeMap::new();
        for (account, (n, origin)) in poisoning {
            let total = match origin {
                Origin::Group(gi) => {
                    let extra = self.spec.groups[gi as usize].extra_history;
                    n + libm::round(n as f64 * extra) as u64
                }
                _ => {
                    let bi = self.pop.bots.iter().position(|b| *b == account).unwrap_or(0);
                    n * (1 + self.spec.bots[bi].extra_history)
                }
            };
            history.insert(account, total);
        }
        let (first_ts, last_ts) = match (events.first(), events.last()) {
            (Some(a), Some(b)) => (a.timestamp, b.timestamp),
            _ => (self.spec.start_timestamp, self.spec.start_timestamp),
        };
        Ok(ChainData {
            registry: self.registry(),
            prices: self.prices(first_ts, last_ts),
            config: self.config,
            events,
            txs: records,
            history,
            planted,
            bots: self.pop.bots.iter().copied().collect::<BTreeSet<_>>(),
            contests: self.contests,
        })
    }
}

fn tx_hash(chain_id: u64, seq: u64) -> TxHash {
    let mut k = Keccak::v256();
    k.update(&chain_id.to_be_bytes());
    k.update(&seq.to_be_bytes());
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    TxHash::from_bytes(out)
}

/// Build every chain of the scenario. Deterministic for a fixed spec.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let pop = Population::new(spec, &mut rng);
    let mut chains = Vec::with_capacity(spec.chains.len());
    let mut first: Option<(Vec<AttackRecord>, u64)> = None;
    for (i, cs) in spec.chains.iter().enumerate() {
        let mut g = ChainGen::new(spec, &pop, i, cs);
        for gi in 0..spec.groups.len() {
            g.plan_group(gi as u32)?;
        }
        if i == 0 {
            g.plan_contests()?;
        } else if spec.cross_chain_reuse {
            if let Some((records, window)) = &first {
                let picked: Vec<AttackRecord> = records
                    .iter()
                    .filter(|_| g.rng.gen_bool(spec.reuse_fraction))
                    .cloned()
                    .collect();
                g.plan_replays(&picked, *window)?;
            }
        }
        g.plan_bots();
        g.plan_typos();
        g.plan_benign();
        if i == 0 {
            first = Some((g.records.clone(), g.m()));
        }
        chains.push(g.finish()?);
    }
    Ok(Scenario { chains })
}
