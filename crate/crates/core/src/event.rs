//! Transfer events, transaction metadata, and ordered streams of both.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::address::{Address, TxHash};
use crate::amount::TokenAmount;
use crate::error::OrderError;

/// Position of a transfer log in the chain's total order.
///
/// Log indexes are block-wide, so `(block, log_index)` is unique and its
/// lexicographic order matches the stream order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId {
    pub block: u64,
    pub log_index: u32,
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.block, self.log_index)
    }
}

/// One ERC-20 `Transfer` log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub chain_id: u64,
    pub block_number: u64,
    pub timestamp: u64,
    pub tx_hash: TxHash,
    pub log_index: u32,
    pub token: Address,
    pub from: Address,
    pub to: Address,
    pub value: TokenAmount,
}

impl TransferEvent {
    #[inline]
    pub fn id(&self) -> EventId {
        EventId {
            block: self.block_number,
            log_index: self.log_index,
        }
    }
}

/// Metadata of the transaction that emitted one or more transfers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub tx_hash: TxHash,
    pub block_number: u64,
    /// Externally owned account that signed the transaction.
    pub initiator: Address,
    /// Called contract, if any.
    pub target: Option<Address>,
    pub gas_used: u64,
    /// Price per gas unit in the native asset's smallest unit.
    pub gas_price: u128,
    #[serde(default)]
    pub native_value: u128,
}

impl TransactionRecord {
    /// `gas_used * gas_price` in native base units.
    pub fn fee(&self) -> TokenAmount {
        // < 2^192, cannot overflow 256 bits
        TokenAmount::from_u128(self.gas_price)
            .checked_mul_u64(self.gas_used)
            .unwrap_or(TokenAmount::ZERO)
    }
}

/// Check that events follow the strict total order and that every
/// transaction's transfers are contiguous.
pub fn validate_order(events: &[TransferEvent]) -> Result<(), OrderError> {
    let mut seen_done: hashbrown::HashSet<TxHash> = hashbrown::HashSet::new();
    let mut current: Option<TxHash> = None;
    for pair in events.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.id() <= a.id() {
            return Err(OrderError::OutOfOrder {
                prev_block: a.block_number,
                prev_log_index: a.log_index,
                block: b.block_number,
                log_index: b.log_index,
            });
        }
    }
    for e in events {
        if current != Some(e.tx_hash) {
            if let Some(prev) = current {
                seen_done.insert(prev);
            }
            if seen_done.contains(&e.tx_hash) {
                return Err(OrderError::SplitTransaction(format!("{}", e.tx_hash)));
            }
            current = Some(e.tx_hash);
        }
    }
    Ok(())
}

/// A validated, totally ordered set of transfers with optional tx metadata.
#[derive(Debug, Clone, Default)]
pub struct EventStream {
    events: Vec<TransferEvent>,
    txs: BTreeMap<TxHash, TransactionRecord>,
}

impl EventStream {
    pub fn new(events: Vec<TransferEvent>, txs: BTreeMap<TxHash, TransactionRecord>) -> Result<Self, OrderError> {
        validate_order(&events)?;
        Ok(EventStream { events, txs })
    }

    pub fn events(&self) -> &[TransferEvent] {
        &self.events
    }

    pub fn txs(&self) -> &BTreeMap<TxHash, TransactionRecord> {
        &self.txs
    }

    pub fn tx(&self, hash: &TxHash) -> Option<&TransactionRecord> {
        self.txs.get(hash)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Binary search by id.
    pub fn find(&self, id: EventId) -> Option<&TransferEvent> {
        self.events
            .binary_search_by(|e| e.id().cmp(&id))
            .ok()
            .map(|i| &self.events[i])
    }

    /// Events with `block_number <= last_block`.
    pub fn prefix(&self, last_block: u64) -> &[TransferEvent] {
        let end = self.events.partition_point(|e| e.block_number <= last_block);
        &self.events[..end]
    }

    pub fn into_parts(self) -> (Vec<TransferEvent>, BTreeMap<TxHash, TransactionRecord>) {
        (self.events, self.txs)
    }
}
