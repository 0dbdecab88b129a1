//! Daily USD prices keyed by asset.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, NaiveDate};
use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::amount::TokenAmount;
use crate::error::{ParseError, PriceError};
use crate::money::{self, Usd, UsdPrice};
use crate::token::TokenRef;

/// Either a token contract or a chain's native asset (by symbol).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AssetId {
    Token(Address),
    Native(String),
}

impl AssetId {
    /// Addresses parse as tokens; anything else is an uppercase native symbol.
    pub fn parse(text: &str) -> AssetId {
        match Address::parse(text) {
            Ok(a) => AssetId::Token(a),
            Err(_) => AssetId::Native(text.trim().to_ascii_uppercase()),
        }
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssetId::Token(a) => write!(f, "{a}"),
            AssetId::Native(s) => f.write_str(s),
        }
    }
}

impl fmt::Debug for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<AssetId> for String {
    fn from(a: AssetId) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for AssetId {
    type Error = core::convert::Infallible;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Ok(AssetId::parse(&s))
    }
}

pub fn parse_date(text: &str) -> Result<NaiveDate, ParseError> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").map_err(|_| ParseError::Date(String::from(text)))
}

/// UTC calendar date of a unix timestamp.
pub fn date_of(timestamp: u64) -> NaiveDate {
    DateTime::from_timestamp(timestamp as i64, 0)
        .map(|dt| dt.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

/// One row of a price file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceRow {
    pub asset: AssetId,
    pub date: NaiveDate,
    pub usd_price: UsdPrice,
}

#[derive(Debug, Clone, Default)]
pub struct PriceTable {
    prices: HashMap<(AssetId, NaiveDate), UsdPrice>,
}

impl PriceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows<I: IntoIterator<Item = PriceRow>>(rows: I) -> Result<Self, PriceError> {
        let mut t = PriceTable::new();
        for r in rows {
            t.insert(r.asset, r.date, r.usd_price)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, asset: AssetId, date: NaiveDate, price: UsdPrice) -> Result<(), PriceError> {
        if self.prices.contains_key(&(asset.clone(), date)) {
            return Err(PriceError::Duplicate { asset, date });
        }
        self.prices.insert((asset, date), price);
        Ok(())
    }

    pub fn get(&self, asset: &AssetId, date: NaiveDate) -> Result<UsdPrice, PriceError> {
        // avoid cloning the key for lookups
        self.prices
            .get(&(asset.clone(), date))
            .copied()
            .ok_or_else(|| PriceError::Missing {
                asset: asset.clone(),
                date,
            })
    }

    pub fn token_price(&self, token: &Address, date: NaiveDate) -> Result<UsdPrice, PriceError> {
        self.get(&AssetId::Token(*token), date)
    }

    /// Rows sorted by (asset, date).
    pub fn rows(&self) -> Vec<PriceRow> {
        let mut out: Vec<PriceRow> = self
            .prices
            .iter()
            .map(|((asset, date), p)| PriceRow {
                asset: asset.clone(),
                date: *date,
                usd_price: *p,
            })
            .collect();
        out.sort_by(|a, b| (&a.asset, a.date).cmp(&(&b.asset, b.date)));
        out
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// USD value of `value` base units of `token` on `date`.
pub fn to_usd(token: &TokenRef, value: &TokenAmount, date: NaiveDate, prices: &PriceTable) -> Result<Usd, PriceError> {
    if value.is_zero() {
        return Ok(Usd::ZERO);
    }
    let price = prices.token_price(&token.address, date)?;
    money::convert(value, token.decimals, price).ok_or_else(|| PriceError::Overflow {
        token: token.address,
        value: value.to_string(),
    })
}
