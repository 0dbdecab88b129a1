//! Detection, clustering and economics of blockchain address-poisoning
//! attacks, plus the probability models and key search behind lookalike
//! address generation.
//!
//! The crate is `no_std` with `alloc`; file formats, RPC and the command
//! line live in the `poisonscan` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod addrgen;
pub mod address;
pub mod amount;
pub mod analytics;
pub mod clustering;
pub mod config;
pub mod detector;
pub mod error;
pub mod event;
pub mod money;
pub mod prices;
pub mod scenario;
pub mod similarity;
pub mod token;

#[cfg(test)]
mod testutil;

pub use address::{Address, TxHash};
pub use amount::TokenAmount;
pub use config::ChainConfig;
pub use event::{EventId, EventStream, TransactionRecord, TransferEvent};
pub use money::{Usd, UsdPrice};
pub use prices::{AssetId, PriceTable};
pub use token::{TokenEntry, TokenRegistry};
