//! Deterministic synthetic chains with planted attacks and their ground truth.
//!
//! Lookalikes are built by editing the intended address's digits to hit an
//! exact `(a, b)` shape, so no key search is involved. Ground truth is
//! derived from the planted roles of each event (victim, intended,
//! lookalike) and the detection parameters, not by searching for
//! similarities.

mod generate;
mod score;
mod truth;

pub use generate::generate;
pub use score::{rand_index, score_labels, LabelScore};
pub use truth::{ground_truth, shared_addresses, Contest, GroundTruth, Owner, TruthEvent};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::address::{Address, TxHash};
use crate::config::ChainConfig;
use crate::error::ScenarioError;
use crate::event::{EventId, TransactionRecord, TransferEvent};
use crate::prices::PriceRow;
use crate::token::TokenEntry;

/// One attack group's behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupSpec {
    pub attacks: u32,
    /// Relative weights of the three poisoning kinds.
    pub tiny: f64,
    pub zero: f64,
    pub counterfeit: f64,
    /// Lookalike `(a, b)` shapes, drawn uniformly.
    pub shapes: Vec<(u8, u8)>,
    /// Poisoning delays after the intended payment, in blocks, drawn
    /// uniformly. Empty means uniform over the detection window.
    pub offsets: Vec<u64>,
    /// Poisoning transfers per transaction.
    pub bundle_size: u32,
    /// Share of bundled attacks whose intended payment lies before the window.
    pub stale_fraction: f64,
    pub payoff_probability: f64,
    pub accounts: u32,
    /// Separate poisoning transactions per attack (unbundled groups).
    pub poisons_per_attack: u32,
    pub use_contract: bool,
    pub counterfeit_tokens: u32,
    /// Non-poisoning transactions per poisoning transaction in the
    /// accounts' history.
    pub extra_history: f64,
}

impl Default for GroupSpec {
    fn default() -> Self {
        GroupSpec {
            attacks: 10,
            tiny: 1.0,
            zero: 1.0,
            counterfeit: 1.0,
            shapes: vec![(3, 4)],
            offsets: Vec::new(),
            bundle_size: 1,
            stale_fraction: 0.0,
            payoff_probability: 0.2,
            accounts: 1,
            poisons_per_attack: 1,
            use_contract: true,
            counterfeit_tokens: 1,
            extra_history: 0.0,
        }
    }
}

/// A copy bot replaying other groups' poisoning transactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BotSpec {
    /// Indexes into `ScenarioSpec::groups`.
    pub copies: Vec<usize>,
    /// 0 puts the copy in the same block as the original.
    pub delay_blocks: u64,
    /// Copies change the transferred value where it is non-zero.
    pub mutate: bool,
    /// Non-poisoning transactions per copy in the bot's history.
    pub extra_history: u64,
    /// Only transactions from this block on are copied.
    pub start_block: u64,
}

impl Default for BotSpec {
    fn default() -> Self {
        BotSpec {
            copies: Vec::new(),
            delay_blocks: 0,
            mutate: false,
            extra_history: 9,
            start_block: 0,
        }
    }
}

/// Victims poisoned by several groups at once; `winners[i]` is the group
/// paid in the i-th contest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContestSpec {
    pub groups: Vec<usize>,
    pub winners: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub chain_id: u64,
    pub block_time_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_blocks: u64,
    pub n_benign_users: u32,
    /// Benign transfers per block.
    pub benign_per_block: u32,
    /// Size of the pool attacks draw victims from (a prefix of the users).
    pub n_victims: u32,
    /// Shared intended addresses such as exchange deposit addresses.
    pub popular_targets: u32,
    pub popular_share: f64,
    pub groups: Vec<GroupSpec>,
    pub bots: Vec<BotSpec>,
    pub contests: Vec<ContestSpec>,
    /// Probability that a benign user makes one typo payment.
    pub typo_rate: f64,
    pub chains: Vec<ChainSpec>,
    /// Replay some attacks of the first chain on the second with the same
    /// victims, intended addresses and lookalikes.
    pub cross_chain_reuse: bool,
    pub reuse_fraction: f64,
    pub gas_used: u64,
    pub gas_price: u128,
    pub start_timestamp: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 1,
            n_blocks: 2_000,
            n_benign_users: 200,
            benign_per_block: 2,
            n_victims: 100,
            popular_targets: 5,
            popular_share: 0.2,
            groups: vec![GroupSpec::default()],
            bots: Vec::new(),
            contests: Vec::new(),
            typo_rate: 0.0,
            chains: vec![ChainSpec {
                chain_id: 1,
                block_time_secs: 12,
            }],
            cross_chain_reuse: false,
            reuse_fraction: 0.5,
            gas_used: 60_000,
            gas_price: 20_000_000_000,
            start_timestamp: 1_700_000_000,
        }
    }
}

fn probability(name: &'static str, p: f64) -> Result<(), ScenarioError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ScenarioError::Probability(name))
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        probability("popular_share", self.popular_share)?;
        probability("typo_rate", self.typo_rate)?;
        probability("reuse_fraction", self.reuse_fraction)?;
        let attacks = self.groups.iter().any(|g| g.attacks > 0) || !self.contests.is_empty();
        if attacks && self.groups.is_empty() {
            return Err(ScenarioError::NoGroups);
        }
        if !self.contests.is_empty() && self.groups.is_empty() {
            return Err(ScenarioError::NoGroups);
        }
        if self.chains.is_empty() || self.chains.len() > 2 {
            return Err(ScenarioError::Invalid(format!("1 or 2 chains, got {}", self.chains.len())));
        }
        if self.n_blocks < 100 {
            return Err(ScenarioError::Invalid(format!("n_blocks must be at least 100, got {}", self.n_blocks)));
        }
        if self.n_victims == 0 || self.n_victims > self.n_benign_users {
            return Err(ScenarioError::Invalid(format!(
                "n_victims must be in 1..={}",
                self.n_benign_users
            )));
        }
        for (i, g) in self.groups.iter().enumerate() {
            probability("stale_fraction", g.stale_fraction)?;
            probability("payoff_probability", g.payoff_probability)?;
            if !(g.tiny >= 0.0 && g.zero >= 0.0 && g.counterfeit >= 0.0) || g.tiny + g.zero + g.counterfeit <= 0.0 {
                return Err(ScenarioError::Invalid(format!("group {i}: strategy weights")));
            }
            if g.shapes.is_empty() {
                return Err(ScenarioError::Invalid(format!("group {i}: no lookalike shapes")));
            }
            for &(a, b) in &g.shapes {
                if a as u32 + b as u32 >= 40 {
                    return Err(ScenarioError::Shape { a, b });
                }
            }
            if g.accounts == 0 || g.bundle_size == 0 || g.poisons_per_attack == 0 {
                return Err(ScenarioError::Invalid(format!("group {i}: zero count")));
            }
            // the accounts of a group must end up connected through shared lookalikes
            if g.accounts > 1 && (g.bundle_size > 1 || g.poisons_per_attack < 2) {
                return Err(ScenarioError::Invalid(format!(
                    "group {i}: several accounts need unbundled attacks with at least 2 poisonings each"
                )));
            }
            if g.counterfeit > 0.0 && g.counterfeit_tokens == 0 {
                return Err(ScenarioError::Invalid(format!("group {i}: counterfeit kind without tokens")));
            }
            if !(g.extra_history >= 0.0) {
                return Err(ScenarioError::Invalid(format!("group {i}: extra_history")));
            }
        }
        for b in &self.bots {
            if b.copies.iter().any(|g| *g >= self.groups.len()) {
                return Err(ScenarioError::Invalid(format!("bot copies unknown group {:?}", b.copies)));
            }
        }
        for c in &self.contests {
            if c.groups.len() < 2 || c.groups.iter().any(|g| *g >= self.groups.len()) {
                return Err(ScenarioError::Invalid(format!("contest groups {:?}", c.groups)));
            }
            if c.winners.iter().any(|w| !c.groups.contains(w)) {
                return Err(ScenarioError::Invalid(format!("contest winners {:?}", c.winners)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonKind {
    Tiny,
    Zero,
    Counterfeit,
}

/// Role of a generated event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Planted {
    Poison {
        kind: PoisonKind,
        victim: Address,
        intended: Address,
        lookalike: Address,
        group: Option<u32>,
        bot: Option<u32>,
    },
    Payoff {
        victim: Address,
        intended: Address,
        lookalike: Address,
        group: Option<u32>,
        contest: Option<u32>,
    },
    Typo {
        victim: Address,
        intended: Address,
        destination: Address,
    },
}

/// One generated chain.
#[derive(Debug, Clone)]
pub struct ChainData {
    pub config: ChainConfig,
    pub events: Vec<TransferEvent>,
    /// Metadata for poisoning transactions.
    pub txs: BTreeMap<TxHash, TransactionRecord>,
    pub registry: Vec<TokenEntry>,
    pub prices: Vec<PriceRow>,
    /// Total transactions per attacker and bot account.
    pub history: BTreeMap<Address, u64>,
    pub planted: BTreeMap<EventId, Planted>,
    pub bots: BTreeSet<Address>,
    /// Per contest: competing groups and the winner.
    pub contests: Vec<(Vec<u32>, u32)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub chains: Vec<ChainData>,
}

#[cfg(test)]
mod tests;
