//! Small fixtures shared by unit tests.

use alloc::string::String;
use alloc::vec::Vec;

use crate::address::{Address, TxHash};
use crate::amount::TokenAmount;
use crate::event::TransferEvent;
use crate::money::UsdPrice;
use crate::prices::{date_of, AssetId, PriceTable};
use crate::token::{TokenEntry, TokenRegistry};

pub const USDT: &str = "0xdac17f958d2ee523a2206206994597c13d831ec7";
pub const WETH: &str = "0xc02aaa39b223fe8d0a0e5c4f27ead9083c756cc2";
pub const FAKE: &str = "0x1111111111111111111111111111111111111111";

pub fn addr(s: &str) -> Address {
    Address::parse(s).unwrap()
}

/// Address whose digits are `prefix`, then `fill` repeated, then `suffix`.
pub fn shaped(prefix: &str, fill: char, suffix: &str) -> Address {
    let mut s = String::from(prefix);
    while s.len() < 40 - suffix.len() {
        s.push(fill);
    }
    s.push_str(suffix);
    addr(&s)
}

pub fn registry() -> TokenRegistry {
    TokenRegistry::from_entries([
        TokenEntry {
            chain_id: 1,
            address: addr(USDT),
            symbol: "USDT".into(),
            decimals: 6,
            authentic: true,
            stablecoin: true,
        },
        TokenEntry {
            chain_id: 1,
            address: addr(WETH),
            symbol: "WETH".into(),
            decimals: 18,
            authentic: true,
            stablecoin: false,
        },
    ])
    .unwrap()
}

/// Prices for USDT, WETH and ETH on every day touched by `events`.
pub fn prices_for(events: &[TransferEvent]) -> PriceTable {
    let mut t = PriceTable::new();
    let mut days: Vec<_> = events.iter().map(|e| date_of(e.timestamp)).collect();
    days.sort();
    days.dedup();
    for d in days {
        t.insert(AssetId::Token(addr(USDT)), d, UsdPrice::ONE).unwrap();
        t.insert(AssetId::Token(addr(WETH)), d, UsdPrice::parse("2000").unwrap()).unwrap();
        t.insert(AssetId::Native("ETH".into()), d, UsdPrice::parse("2000").unwrap()).unwrap();
    }
    t
}

pub struct Builder {
    pub events: Vec<TransferEvent>,
    tx_counter: u64,
}

impl Builder {
    pub fn new() -> Self {
        Builder {
            events: Vec::new(),
            tx_counter: 0,
        }
    }

    fn next_tx(&mut self) -> TxHash {
        self.tx_counter += 1;
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&self.tx_counter.to_be_bytes());
        TxHash::from_bytes(b)
    }

    fn next_log(&self, block: u64) -> u32 {
        self.events
            .iter()
            .filter(|e| e.block_number == block)
            .map(|e| e.log_index + 1)
            .max()
            .unwrap_or(0)
    }

    /// One single-transfer transaction.
    pub fn transfer(&mut self, block: u64, token: &str, from: Address, to: Address, value: u128) -> &mut Self {
        let tx = self.next_tx();
        self.bundle(block, tx, &[(token, from, to, value)]);
        self
    }

    /// One transaction emitting several transfers.
    pub fn bundle(&mut self, block: u64, tx: TxHash, parts: &[(&str, Address, Address, u128)]) -> TxHash {
        for (token, from, to, value) in parts {
            let log = self.next_log(block);
            self.events.push(TransferEvent {
                chain_id: 1,
                block_number: block,
                timestamp: 1_700_000_000 + block * 12,
                tx_hash: tx,
                log_index: log,
                token: addr(token),
                from: *from,
                to: *to,
                value: TokenAmount::from_u128(*value),
            });
        }
        tx
    }

    pub fn new_tx(&mut self) -> TxHash {
        self.next_tx()
    }

    pub fn build(&mut self) -> Vec<TransferEvent> {
        self.events.sort_by_key(|e| e.id());
        self.events.clone()
    }
}
