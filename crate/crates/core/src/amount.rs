//! Unsigned 256-bit token amounts in base units.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crypto_bigint::{Encoding, Limb, NonZero, U256};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseError;

/// A token transfer value in the token's smallest unit.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TokenAmount(U256);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(U256::ZERO);

    pub const fn from_u128(v: u128) -> Self {
        TokenAmount(U256::from_u128(v))
    }

    pub const fn from_u256(v: U256) -> Self {
        TokenAmount(v)
    }

    pub const fn as_u256(&self) -> &U256 {
        &self.0
    }

    pub fn from_be_bytes(bytes: [u8; 32]) -> Self {
        TokenAmount(U256::from_be_bytes(bytes))
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        self.0.to_be_bytes()
    }

    pub fn is_zero(&self) -> bool {
        self.0 == U256::ZERO
    }

    /// The value as `u128` if it fits.
    pub fn to_u128(&self) -> Option<u128> {
        let bytes = self.0.to_be_bytes();
        if bytes[..16].iter().any(|&b| b != 0) {
            return None;
        }
        let mut low = [0u8; 16];
        low.copy_from_slice(&bytes[16..]);
        Some(u128::from_be_bytes(low))
    }

    /// `self * k`, or `None` on overflow.
    pub fn checked_mul_u64(&self, k: u64) -> Option<Self> {
        let (lo, hi) = self.0.mul_wide(&U256::from_u64(k));
        if hi == U256::ZERO {
            Some(TokenAmount(lo))
        } else {
            None
        }
    }

    /// Parse a non-negative decimal integer string.
    pub fn parse_decimal(text: &str) -> Result<Self, ParseError> {
        let bad = || ParseError::Decimal(String::from(text));
        if text.is_empty() || !text.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let ten = U256::from_u8(10);
        let mut acc = U256::ZERO;
        for c in text.bytes() {
            let (lo, hi) = acc.mul_wide(&ten);
            if hi != U256::ZERO {
                return Err(bad());
            }
            let (sum, carry) = lo.adc(&U256::from_u8(c - b'0'), Limb::ZERO);
            if carry != Limb::ZERO {
                return Err(bad());
            }
            acc = sum;
        }
        Ok(TokenAmount(acc))
    }
}

impl From<u128> for TokenAmount {
    fn from(v: u128) -> Self {
        TokenAmount::from_u128(v)
    }
}

impl From<u64> for TokenAmount {
    fn from(v: u64) -> Self {
        TokenAmount(U256::from_u64(v))
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(small) = self.to_u128() {
            return write!(f, "{small}");
        }
        let ten = NonZero::new(Limb::from_u8(10)).unwrap();
        let mut digits: Vec<u8> = Vec::with_capacity(78);
        let mut rest = self.0;
        while rest != U256::ZERO {
            let (q, r) = rest.div_rem_limb(ten);
            digits.push(b'0' + r.0 as u8);
            rest = q;
        }
        digits.reverse();
        f.write_str(core::str::from_utf8(&digits).map_err(|_| fmt::Error)?)
    }
}

impl fmt::Debug for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for TokenAmount {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TokenAmount::parse_decimal(s)
    }
}

impl Serialize for TokenAmount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TokenAmount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct AmountVisitor;
        impl Visitor<'_> for AmountVisitor {
            type Value = TokenAmount;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative decimal integer string")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<TokenAmount, E> {
                TokenAmount::parse_decimal(v).map_err(E::custom)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<TokenAmount, E> {
                Ok(TokenAmount::from(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<TokenAmount, E> {
                u64::try_from(v)
                    .map(TokenAmount::from)
                    .map_err(|_| E::custom("negative token amount"))
            }
        }
        deserializer.deserialize_any(AmountVisitor)
    }
}
