use chrono::NaiveDate;

use crate::address::Address;
use crate::amount::TokenAmount;
use crate::config::ChainConfig;
use crate::error::PriceError;
use crate::event::{TransactionRecord, TransferEvent};
use crate::money::{self, Usd, UsdPrice};
use crate::prices::{date_of, AssetId, PriceTable};
use crate::token::TokenRegistry;

/// USD valuation of transfers and gas for one chain.
#[derive(Clone, Copy)]
pub struct Pricer<'a> {
    pub config: &'a ChainConfig,
    pub registry: &'a TokenRegistry,
    pub prices: &'a PriceTable,
}

impl<'a> Pricer<'a> {
    pub fn new(config: &'a ChainConfig, registry: &'a TokenRegistry, prices: &'a PriceTable) -> Self {
        Pricer {
            config,
            registry,
            prices,
        }
    }

    fn token_price(&self, token: &Address, date: NaiveDate) -> Result<UsdPrice, PriceError> {
        match self.prices.token_price(token, date) {
            Ok(p) => Ok(p),
            Err(e) => {
                if self.config.assume_stablecoin_par && self.registry.is_stablecoin(self.config.chain_id, token) {
                    Ok(UsdPrice::ONE)
                } else {
                    Err(e)
                }
            }
        }
    }

    /// Value of `amount` of `token` on `date`. Tokens missing from the
    /// registry have unknown decimals and are reported as unpriced.
    pub fn value(&self, token: &Address, amount: &TokenAmount, date: NaiveDate) -> Result<Usd, PriceError> {
        if amount.is_zero() {
            return Ok(Usd::ZERO);
        }
        let Some(entry) = self.registry.get(self.config.chain_id, token) else {
            return Err(PriceError::Missing {
                asset: AssetId::Token(*token),
                date,
            });
        };
        let price = self.token_price(token, date)?;
        money::convert(amount, entry.decimals, price).ok_or_else(|| PriceError::Overflow {
            token: *token,
            value: alloc::string::ToString::to_string(amount),
        })
    }

    pub fn event_usd(&self, e: &TransferEvent) -> Result<Usd, PriceError> {
        self.value(&e.token, &e.value, date_of(e.timestamp))
    }

    /// Gas fee of `tx` in USD at the native-asset price of `date`.
    pub fn fee_usd(&self, tx: &TransactionRecord, date: NaiveDate) -> Result<Usd, PriceError> {
        let fee = tx.fee();
        if fee.is_zero() {
            return Ok(Usd::ZERO);
        }
        let asset = AssetId::Native(self.config.native_asset.clone());
        let price = self.prices.get(&asset, date)?;
        money::convert(&fee, 18, price).ok_or_else(|| PriceError::Overflow {
            token: Address::ZERO,
            value: alloc::string::ToString::to_string(&fee),
        })
    }
}
