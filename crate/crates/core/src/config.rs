//! Per-chain detection parameters.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::money::Usd;

/// Detection parameters for one chain.
///
/// The window covers blocks `n+1 ..= n+m+1` after a trigger in block `n`,
/// which is about twenty minutes at either block time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub chain_id: u64,
    pub window_blocks: u64,
    pub tiny_threshold_usd: Usd,
    pub a_min: u8,
    pub b_min: u8,
    pub birthday_threshold: f64,
    pub typo_digit_bound: u8,
    /// Price-table key for the chain's native asset (gas fees).
    pub native_asset: String,
    /// Price stablecoins at 1.00 USD when the table has no row.
    pub assume_stablecoin_par: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig::ethereum()
    }
}

impl ChainConfig {
    /// Roughly 12 s blocks.
    pub fn ethereum() -> Self {
        ChainConfig {
            chain_id: 1,
            window_blocks: 100,
            tiny_threshold_usd: Usd::from_whole(10),
            a_min: 3,
            b_min: 4,
            birthday_threshold: 0.999,
            typo_digit_bound: 20,
            native_asset: String::from("ETH"),
            assume_stablecoin_par: false,
        }
    }

    /// Roughly 3 s blocks.
    pub fn bsc() -> Self {
        ChainConfig {
            chain_id: 56,
            window_blocks: 400,
            native_asset: String::from("BNB"),
            ..ChainConfig::ethereum()
        }
    }

    /// Twenty-minute window for a given block time.
    pub fn for_block_time(chain_id: u64, block_time_secs: u64) -> Self {
        let window = (1200 / block_time_secs.max(1)).max(1);
        ChainConfig {
            chain_id,
            window_blocks: window,
            ..ChainConfig::ethereum()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window_blocks < 1 {
            return Err(ConfigError::Window);
        }
        if !self.tiny_threshold_usd.is_positive() {
            return Err(ConfigError::TinyThreshold);
        }
        if !(self.birthday_threshold > 0.0 && self.birthday_threshold < 1.0) {
            return Err(ConfigError::Birthday(self.birthday_threshold));
        }
        if self.a_min > 40 || self.b_min > 40 {
            return Err(ConfigError::Similarity(self.a_min, self.b_min));
        }
        if self.typo_digit_bound > 40 {
            return Err(ConfigError::TypoBound(self.typo_digit_bound));
        }
        Ok(())
    }
}
