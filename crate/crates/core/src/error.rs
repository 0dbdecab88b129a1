use alloc::string::String;

use chrono::NaiveDate;
use thiserror::Error;

use crate::address::Address;
use crate::prices::AssetId;

/// Malformed textual input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("`{input}`: expected {expected} hex digits, found {found}")]
    Length {
        input: String,
        expected: usize,
        found: usize,
    },
    #[error("`{0}`: non-hex character")]
    NonHex(String),
    #[error("`{0}`: not a valid non-negative decimal")]
    Decimal(String),
    #[error("`{0}`: price must be strictly positive")]
    NonPositivePrice(String),
    #[error("`{0}`: not an ISO-8601 date (YYYY-MM-DD)")]
    Date(String),
}

/// Price lookups and conversions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PriceError {
    #[error("no USD price for {asset} on {date}")]
    Missing { asset: AssetId, date: NaiveDate },
    #[error("USD value of {value} units of {token} overflows")]
    Overflow { token: Address, value: String },
    #[error("duplicate price for {asset} on {date}")]
    Duplicate { asset: AssetId, date: NaiveDate },
}

/// Registry construction.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("token {token} on chain {chain_id}: decimals {decimals} exceeds 77")]
    Decimals {
        chain_id: u64,
        token: Address,
        decimals: u8,
    },
    #[error("token {token} on chain {chain_id} is marked stablecoin but not authentic")]
    StablecoinNotAuthentic { chain_id: u64, token: Address },
    #[error("token {token} on chain {chain_id} listed twice")]
    Duplicate { chain_id: u64, token: Address },
}

/// Invalid chain configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("window_blocks must be >= 1")]
    Window,
    #[error("tiny_threshold_usd must be > 0")]
    TinyThreshold,
    #[error("birthday threshold must lie strictly between 0 and 1, got {0}")]
    Birthday(f64),
    #[error("similarity thresholds must be <= 40, got ({0}, {1})")]
    Similarity(u8, u8),
    #[error("typo digit bound must be <= 40, got {0}")]
    TypoBound(u8),
}

/// Stream ordering violations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("event ({block}, {log_index}) does not follow ({prev_block}, {prev_log_index})")]
    OutOfOrder {
        prev_block: u64,
        prev_log_index: u32,
        block: u64,
        log_index: u32,
    },
    #[error("transaction {0} is not contiguous in the stream")]
    SplitTransaction(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("no transaction metadata for {0}")]
    MissingTransaction(String),
    #[error("account {account} has {poisoning} poisoning transactions but only {total} in its history")]
    History {
        account: String,
        poisoning: u64,
        total: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("rank correlation needs at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("rank correlation is undefined when one variable is constant")]
    ConstantInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("private key must lie in [1, n) of secp256k1")]
    OutOfRange,
    #[error("private key must be 32 bytes of hex: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search budget must be positive")]
    Budget,
    #[error("target matching requested with an empty target set")]
    NoTargets,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("{0} must be a probability in [0, 1]")]
    Probability(&'static str),
    #[error("lookalike shape ({a}, {b}) is infeasible: a + b must be below 40")]
    Shape { a: u8, b: u8 },
    #[error("attacks requested but no group configured")]
    NoGroups,
    #[error("{0}")]
    Invalid(String),
    #[error("ground truth and output disagree on event {0}")]
    Mismatch(String),
}
