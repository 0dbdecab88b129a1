//! Guilt-by-association grouping of poisoning transfers.
//!
//! Each poisoning transfer yields a set `{TX, L, CT, AC, A}`. Two sets are
//! merged when they share a transaction, a lookalike or an initiating
//! account; counterfeit tokens and attack contracts never merge sets.
//! Accounts that spend most of their transactions on other things are
//! copy bots and are dropped before merging.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};
use tiny_keccak::{Hasher, Keccak};

use crate::address::{Address, TxHash};
use crate::detector::{DetectionReport, Finding};
use crate::error::ClusterError;
use crate::event::{EventId, TransactionRecord};

/// `{TX, L, CT, AC, A}` of one poisoning transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackTransferSet {
    pub transfer: EventId,
    pub tx: TxHash,
    pub lookalike: Address,
    pub counterfeit_token: Option<Address>,
    pub attack_contract: Option<Address>,
    pub account: Address,
    pub victim: Address,
    /// Intended addresses imitated by this transfer.
    pub intended: Vec<Address>,
    pub timestamp: u64,
    /// Tiny-transfer outflow in USD micro-units, zero for other kinds.
    pub tiny_usd_micros: i128,
}

/// Build one transfer set per distinct poisoning event of the report.
pub fn transfer_sets(
    report: &DetectionReport,
    txs: &BTreeMap<TxHash, TransactionRecord>,
) -> Result<Vec<AttackTransferSet>, ClusterError> {
    let mut by_event: BTreeMap<EventId, Vec<&Finding>> = BTreeMap::new();
    for f in report.poisons() {
        by_event.entry(f.event).or_default().push(f);
    }
    let mut out = Vec::with_capacity(by_event.len());
    for (id, fs) in by_event {
        let f = fs[0];
        let tx = txs
            .get(&f.tx_hash)
            .ok_or_else(|| ClusterError::MissingTransaction(f.tx_hash.to_string()))?;
        let mut intended: Vec<Address> = fs.iter().map(|f| f.intended).collect();
        intended.sort();
        intended.dedup();
        let counterfeit = fs.iter().any(|f| f.label == crate::detector::TransferLabel::CounterfeitPoison);
        let tiny = fs.iter().any(|f| f.label == crate::detector::TransferLabel::TinyPoison);
        out.push(AttackTransferSet {
            transfer: id,
            tx: f.tx_hash,
            lookalike: f.lookalike,
            counterfeit_token: counterfeit.then_some(f.token),
            attack_contract: tx.target.filter(|t| *t != f.token),
            account: tx.initiator,
            victim: f.victim,
            intended,
            timestamp: f.timestamp,
            tiny_usd_micros: if tiny { f.usd.map_or(0, |u| u.micros()) } else { 0 },
        });
    }
    Ok(out)
}

/// Share of an account's transactions spent on poisoning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountProfile {
    pub account: Address,
    pub total: u64,
    pub poisoning: u64,
    pub attack_ratio: f64,
}

/// Attack ratio per initiating account. Accounts absent from `history`
/// get ratio 1.0.
pub fn attack_ratio(
    sets: &[AttackTransferSet],
    history: &BTreeMap<Address, u64>,
) -> Result<BTreeMap<Address, AccountProfile>, ClusterError> {
    let mut txs: BTreeMap<Address, BTreeSet<TxHash>> = BTreeMap::new();
    for s in sets {
        txs.entry(s.account).or_default().insert(s.tx);
    }
    let mut out = BTreeMap::new();
    for (account, set) in txs {
        let poisoning = set.len() as u64;
        let profile = match history.get(&account) {
            Some(&total) => {
                if poisoning > total {
                    return Err(ClusterError::History {
                        account: account.to_string(),
                        poisoning,
                        total,
                    });
                }
                AccountProfile {
                    account,
                    total,
                    poisoning,
                    attack_ratio: poisoning as f64 / total as f64,
                }
            }
            None => AccountProfile {
                account,
                total: poisoning,
                poisoning,
                attack_ratio: 1.0,
            },
        };
        out.insert(account, profile);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    /// Accounts with a ratio strictly below this are copy bots.
    pub bot_threshold: f64,
    pub exclude_verified: bool,
    /// Attack contracts with published source.
    pub verified_contracts: BTreeSet<Address>,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            bot_threshold: 0.5,
            exclude_verified: false,
            verified_contracts: BTreeSet::new(),
        }
    }
}

/// One connected component of transfer sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackGroup {
    /// Keccak-256 of the sorted member ids.
    pub id: String,
    pub members: Vec<EventId>,
    pub lookalikes: Vec<Address>,
    pub counterfeit_tokens: Vec<Address>,
    pub accounts: Vec<Address>,
    pub attack_contracts: Vec<Address>,
    pub intended: Vec<Address>,
    pub victims: Vec<Address>,
    pub transactions: Vec<TxHash>,
    /// Distinct attack-contract bytecodes, when every contract's code is known.
    pub distinct_bytecode: Option<u64>,
    pub first_block: u64,
    pub last_block: u64,
    pub first_timestamp: u64,
    pub last_timestamp: u64,
}

/// Sizes of a group along each dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub lookalikes: usize,
    pub counterfeit_tokens: usize,
    pub accounts: usize,
    pub attack_contracts: usize,
    pub intended: usize,
    pub transfers: usize,
    pub transactions: usize,
}

impl AttackGroup {
    pub fn counts(&self) -> GroupCounts {
        GroupCounts {
            lookalikes: self.lookalikes.len(),
            counterfeit_tokens: self.counterfeit_tokens.len(),
            accounts: self.accounts.len(),
            attack_contracts: self.attack_contracts.len(),
            intended: self.intended.len(),
            transfers: self.members.len(),
            transactions: self.transactions.len(),
        }
    }

    /// Fill `distinct_bytecode` from a contract-to-code-hash map. Stays
    /// `None` if any contract of the group is missing from it.
    pub fn set_bytecode(&mut self, codes: &BTreeMap<Address, String>) {
        let mut seen = BTreeSet::new();
        for c in &self.attack_contracts {
            match codes.get(c) {
                Some(code) => {
                    seen.insert(code.as_str());
                }
                None => {
                    self.distinct_bytecode = None;
                    return;
                }
            }
        }
        self.distinct_bytecode = Some(seen.len() as u64);
    }
}

/// Content-addressed id of a member set.
pub fn group_id(members: &[EventId]) -> String {
    let mut sorted = members.to_vec();
    sorted.sort();
    let mut k = Keccak::v256();
    for m in &sorted {
        k.update(&m.block.to_be_bytes());
        k.update(&m.log_index.to_be_bytes());
    }
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    let mut s = String::with_capacity(66);
    s.push_str("0x");
    for b in out {
        s.push(char::from_digit((b >> 4) as u32, 16).unwrap_or('0'));
        s.push(char::from_digit((b & 15) as u32, 16).unwrap_or('0'));
    }
    s
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: alloc::vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            core::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Tx(TxHash),
    Lookalike(Address),
    Account(Address),
}

/// Whether a set survives bot and verified-contract filtering.
pub fn retained(set: &AttackTransferSet, profiles: &BTreeMap<Address, AccountProfile>, opts: &ClusterOptions) -> bool {
    let ratio = profiles.get(&set.account).map_or(1.0, |p| p.attack_ratio);
    if ratio < opts.bot_threshold {
        return false;
    }
    if opts.exclude_verified {
        if let Some(ac) = set.attack_contract {
            if opts.verified_contracts.contains(&ac) {
                return false;
            }
        }
    }
    true
}

/// Union-find over `{TX, L, A}` of the retained sets, largest lookalike
/// count first.
pub fn cluster(
    sets: &[AttackTransferSet],
    profiles: &BTreeMap<Address, AccountProfile>,
    opts: &ClusterOptions,
) -> Vec<AttackGroup> {
    let kept: Vec<&AttackTransferSet> = sets.iter().filter(|s| retained(s, profiles, opts)).collect();
    let mut uf = UnionFind::new(kept.len());
    let mut owner: HashMap<Key, usize> = HashMap::new();
    for (i, s) in kept.iter().enumerate() {
        for key in [Key::Tx(s.tx), Key::Lookalike(s.lookalike), Key::Account(s.account)] {
            match owner.get(&key) {
                Some(&j) => uf.union(i, j),
                None => {
                    owner.insert(key, i);
                }
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..kept.len() {
        let r = uf.find(i);
        comps.entry(r).or_default().push(i);
    }
    let mut groups: Vec<AttackGroup> = comps.into_values().map(|idx| build_group(&kept, &idx)).collect();
    groups.sort_by(|a, b| b.lookalikes.len().cmp(&a.lookalikes.len()).then_with(|| a.id.cmp(&b.id)));
    groups
}

fn sorted<T: Ord + Copy, I: IntoIterator<Item = T>>(it: I) -> Vec<T> {
    let set: BTreeSet<T> = it.into_iter().collect();
    set.into_iter().collect()
}

fn build_group(kept: &[&AttackTransferSet], idx: &[usize]) -> AttackGroup {
    let sets: Vec<&AttackTransferSet> = idx.iter().map(|&i| kept[i]).collect();
    let members = sorted(sets.iter().map(|s| s.transfer));
    let attack_contracts = sorted(sets.iter().filter_map(|s| s.attack_contract));
    AttackGroup {
        id: group_id(&members),
        lookalikes: sorted(sets.iter().map(|s| s.lookalike)),
        counterfeit_tokens: sorted(sets.iter().filter_map(|s| s.counterfeit_token)),
        accounts: sorted(sets.iter().map(|s| s.account)),
        distinct_bytecode: None,
        attack_contracts,
        intended: sorted(sets.iter().flat_map(|s| s.intended.iter().copied())),
        victims: sorted(sets.iter().map(|s| s.victim)),
        transactions: sorted(sets.iter().map(|s| s.tx)),
        first_block: members.first().map_or(0, |m| m.block),
        last_block: members.last().map_or(0, |m| m.block),
        first_timestamp: sets.iter().map(|s| s.timestamp).min().unwrap_or(0),
        last_timestamp: sets.iter().map(|s| s.timestamp).max().unwrap_or(0),
        members,
    }
}

/// One group as seen at one checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalGroup {
    pub rank: usize,
    pub group_id: String,
    /// Identity carried across checkpoints: the id of the group where this
    /// lineage started.
    pub lineage: String,
    /// Group at the previous checkpoint with the largest member overlap.
    pub predecessor: Option<String>,
    pub lookalikes: usize,
    pub transfers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub block: u64,
    pub groups: Vec<TemporalGroup>,
}

/// Re-cluster the prefix of the data up to each checkpoint block and link
/// groups across checkpoints by member overlap. Only the top `k` groups
/// of each checkpoint are reported.
pub fn temporal_clusters(
    sets: &[AttackTransferSet],
    profiles: &BTreeMap<Address, AccountProfile>,
    opts: &ClusterOptions,
    checkpoints: &[u64],
    k: usize,
) -> Vec<Checkpoint> {
    let mut out = Vec::new();
    let mut prev: Vec<(AttackGroup, String)> = Vec::new();
    for &x in checkpoints {
        let prefix: Vec<AttackTransferSet> = sets.iter().filter(|s| s.transfer.block <= x).cloned().collect();
        let groups = cluster(&prefix, profiles, opts);
        let mut member_of: HashMap<EventId, usize> = HashMap::new();
        for (i, (g, _)) in prev.iter().enumerate() {
            for m in &g.members {
                member_of.insert(*m, i);
            }
        }
        // best predecessor of each group by overlap, ties to the lower index
        let mut best: Vec<Option<(usize, usize)>> = Vec::with_capacity(groups.len());
        for g in &groups {
            let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
            for m in &g.members {
                if let Some(&p) = member_of.get(m) {
                    *overlap.entry(p).or_default() += 1;
                }
            }
            let pick = overlap
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
            best.push(pick);
        }
        // each predecessor passes its lineage to its largest-overlap successor
        let mut heir: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (gi, b) in best.iter().enumerate() {
            if let Some((p, n)) = *b {
                let better = match heir.get(&p) {
                    Some(&(_, cur)) => n > cur,
                    None => true,
                };
                if better {
                    heir.insert(p, (gi, n));
                }
            }
        }
        let mut current: Vec<(AttackGroup, String)> = Vec::with_capacity(groups.len());
        let mut rows = Vec::new();
        for (gi, g) in groups.into_iter().enumerate() {
            let (lineage, predecessor) = match best[gi] {
                Some((p, _)) => {
                    let pred = prev[p].0.id.clone();
                    if heir.get(&p).map(|h| h.0) == Some(gi) {
                        (prev[p].1.clone(), Some(pred))
                    } else {
                        (g.id.clone(), Some(pred))
                    }
                }
                None => (g.id.clone(), None),
            };
            if gi < k {
                rows.push(TemporalGroup {
                    rank: gi + 1,
                    group_id: g.id.clone(),
                    lineage: lineage.clone(),
                    predecessor,
                    lookalikes: g.lookalikes.len(),
                    transfers: g.members.len(),
                });
            }
            current.push((g, lineage));
        }
        out.push(Checkpoint { block: x, groups: rows });
        prev = current;
    }
    out
}

/// Addresses shared by one group with everything seen on another chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseRow {
    pub group_id: String,
    pub chain_id: u64,
    pub other_chain_id: u64,
    pub shared_lookalikes: u64,
    pub shared_victims: u64,
}

/// For every ordered pair of chains and every group on the first, count
/// its lookalikes and victims that also occur in any group of the second.
pub fn cross_chain_reuse(chains: &[(u64, &[AttackGroup])]) -> Vec<ReuseRow> {
    let mut rows = Vec::new();
    let all: Vec<(u64, BTreeSet<Address>, BTreeSet<Address>)> = chains
        .iter()
        .map(|(c, gs)| {
            (
                *c,
                gs.iter().flat_map(|g| g.lookalikes.iter().copied()).collect(),
                gs.iter().flat_map(|g| g.victims.iter().copied()).collect(),
            )
        })
        .collect();
    for (i, (chain, groups)) in chains.iter().enumerate() {
        for (j, (other, ls, vs)) in all.iter().enumerate() {
            if i == j {
                continue;
            }
            for g in groups.iter() {
                rows.push(ReuseRow {
                    group_id: g.id.clone(),
                    chain_id: *chain,
                    other_chain_id: *other,
                    shared_lookalikes: g.lookalikes.iter().filter(|l| ls.contains(l)).count() as u64,
                    shared_victims: g.victims.iter().filter(|v| vs.contains(v)).count() as u64,
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: u8) -> Address {
        Address::from_bytes([n; 20])
    }
    fn t(n: u8) -> TxHash {
        TxHash::from_bytes([n; 32])
    }
    fn set(id: u32, tx: u8, l: u8, acct: u8) -> AttackTransferSet {
        AttackTransferSet {
            transfer: EventId {
                block: id as u64,
                log_index: 0,
            },
            tx: t(tx),
            lookalike: a(l),
            counterfeit_token: None,
            attack_contract: Some(a(200)),
            account: a(acct),
            victim: a(150),
            intended: alloc::vec![a(151)],
            timestamp: 0,
            tiny_usd_micros: 0,
        }
    }

    #[test]
    fn merges_on_shared_keys_only() {
        // 1-2 share tx, 1-3 share L, 4 shares only the attack contract
        let sets = [set(1, 1, 10, 100), set(2, 1, 11, 101), set(3, 2, 10, 102), set(4, 3, 12, 103)];
        let groups = cluster(&sets, &BTreeMap::new(), &ClusterOptions::default());
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].members.len(), 3);
        assert_eq!(groups[0].counts().lookalikes, 2);
        assert_eq!(groups[1].members.len(), 1);
    }

    #[test]
    fn bots_are_removed_before_merging() {
        let sets = [set(1, 1, 10, 100), set(2, 2, 20, 101), set(3, 3, 10, 199), set(4, 4, 20, 199)];
        let mut history = BTreeMap::new();
        history.insert(a(199), 20u64);
        let profiles = attack_ratio(&sets, &history).unwrap();
        assert!((profiles[&a(199)].attack_ratio - 0.1).abs() < 1e-12);
        assert_eq!(profiles[&a(100)].attack_ratio, 1.0);
        let strict = ClusterOptions::default();
        assert_eq!(cluster(&sets, &profiles, &strict).len(), 2);
        let lax = ClusterOptions {
            bot_threshold: 0.0,
            ..strict
        };
        assert_eq!(cluster(&sets, &profiles, &lax).len(), 1);
    }

    #[test]
    fn ratios() {
        let mk = |n: u8| set(n as u32, n, 1, 9);
        let sets: Vec<_> = (0..6).map(mk).collect();
        let mut h = BTreeMap::new();
        h.insert(a(9), 10u64);
        assert!((attack_ratio(&sets, &h).unwrap()[&a(9)].attack_ratio - 0.6).abs() < 1e-12);
        h.insert(a(9), 5u64);
        assert!(matches!(attack_ratio(&sets, &h), Err(ClusterError::History { .. })));
    }

    #[test]
    fn ids_are_content_addressed() {
        let x = group_id(&[EventId { block: 2, log_index: 0 }, EventId { block: 1, log_index: 3 }]);
        let y = group_id(&[EventId { block: 1, log_index: 3 }, EventId { block: 2, log_index: 0 }]);
        assert_eq!(x, y);
        assert_eq!(x.len(), 66);
    }

    #[test]
    fn bytecode_is_unknown_when_absent() {
        let mut g = cluster(&[set(1, 1, 1, 1)], &BTreeMap::new(), &ClusterOptions::default()).remove(0);
        g.set_bytecode(&BTreeMap::new());
        assert_eq!(g.distinct_bytecode, None);
        let mut codes = BTreeMap::new();
        codes.insert(a(200), String::from("0xabc"));
        g.set_bytecode(&codes);
        assert_eq!(g.distinct_bytecode, Some(1));
    }

    #[test]
    fn lineage_survives_growth() {
        let sets = [set(1, 1, 10, 100), set(5, 2, 10, 100), set(9, 3, 30, 103)];
        let cps = temporal_clusters(&sets, &BTreeMap::new(), &ClusterOptions::default(), &[1, 5, 9], 5);
        let first = &cps[0].groups[0];
        let mid = &cps[1].groups[0];
        assert_eq!(first.lineage, mid.lineage);
        assert_ne!(first.group_id, mid.group_id);
        assert_eq!(cps[2].groups.len(), 2);
        let single = temporal_clusters(&sets, &BTreeMap::new(), &ClusterOptions::default(), &[9], 5);
        let direct = cluster(&sets, &BTreeMap::new(), &ClusterOptions::default());
        assert_eq!(single[0].groups[0].group_id, direct[0].id);
    }

    #[test]
    fn reuse_counts_shared_addresses() {
        let g1 = cluster(&[set(1, 1, 10, 100)], &BTreeMap::new(), &ClusterOptions::default());
        let g2 = cluster(&[set(1, 1, 10, 101)], &BTreeMap::new(), &ClusterOptions::default());
        let g3 = cluster(&[set(1, 1, 11, 101)], &BTreeMap::new(), &ClusterOptions::default());
        let rows = cross_chain_reuse(&[(1, &g1), (56, &g2)]);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.shared_lookalikes == 1 && r.shared_victims == 1));
        let rows = cross_chain_reuse(&[(1, &g1), (56, &g3)]);
        assert_eq!(rows[0].shared_lookalikes, 0);
    }
}
