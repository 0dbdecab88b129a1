//! Token metadata and the authentic-token registry.

use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::error::RegistryError;

/// Largest supported `decimals`; 10^77 is the largest power of ten below 2^256.
pub const MAX_DECIMALS: u8 = 77;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRef {
    pub chain_id: u64,
    pub address: Address,
    pub symbol: String,
    pub decimals: u8,
}

/// One line of a registry file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub chain_id: u64,
    pub address: Address,
    pub symbol: String,
    pub decimals: u8,
    pub authentic: bool,
    #[serde(default)]
    pub stablecoin: bool,
}

impl TokenEntry {
    pub fn token_ref(&self) -> TokenRef {
        TokenRef {
            chain_id: self.chain_id,
            address: self.address,
            symbol: self.symbol.clone(),
            decimals: self.decimals,
        }
    }
}

/// Known tokens. A token absent from the authentic set is counterfeit.
#[derive(Debug, Clone, Default)]
pub struct TokenRegistry {
    entries: HashMap<(u64, Address), TokenEntry>,
}

impl TokenRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I: IntoIterator<Item = TokenEntry>>(entries: I) -> Result<Self, RegistryError> {
        let mut reg = TokenRegistry::new();
        for e in entries {
            reg.insert(e)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, entry: TokenEntry) -> Result<(), RegistryError> {
        if entry.decimals > MAX_DECIMALS {
            return Err(RegistryError::Decimals {
                chain_id: entry.chain_id,
                token: entry.address,
                decimals: entry.decimals,
            });
        }
        if entry.stablecoin && !entry.authentic {
            return Err(RegistryError::StablecoinNotAuthentic {
                chain_id: entry.chain_id,
                token: entry.address,
            });
        }
        let key = (entry.chain_id, entry.address);
        if self.entries.contains_key(&key) {
            return Err(RegistryError::Duplicate {
                chain_id: entry.chain_id,
                token: entry.address,
            });
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    #[inline]
    pub fn get(&self, chain_id: u64, token: &Address) -> Option<&TokenEntry> {
        self.entries.get(&(chain_id, *token))
    }

    #[inline]
    pub fn is_authentic(&self, chain_id: u64, token: &Address) -> bool {
        self.get(chain_id, token).is_some_and(|e| e.authentic)
    }

    #[inline]
    pub fn is_stablecoin(&self, chain_id: u64, token: &Address) -> bool {
        self.get(chain_id, token).is_some_and(|e| e.stablecoin)
    }

    /// Entries sorted by (chain, address).
    pub fn entries(&self) -> Vec<&TokenEntry> {
        let mut out: Vec<&TokenEntry> = self.entries.values().collect();
        out.sort_by_key(|e| (e.chain_id, e.address));
        out
    }

    pub fn stablecoins(&self, chain_id: u64) -> Vec<Address> {
        self.entries()
            .into_iter()
            .filter(|e| e.chain_id == chain_id && e.stablecoin)
            .map(|e| e.address)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
