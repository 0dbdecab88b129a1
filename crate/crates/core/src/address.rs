//! Account addresses and transaction hashes.
//!
//! Addresses are compared on their canonical lowercase hex form. Mixed-case
//! (checksummed) input is accepted and folded; the checksum itself is never
//! validated.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseError;

/// Number of hex digits in an address.
pub const ADDRESS_DIGITS: usize = 40;

const HEX: &[u8; 16] = b"0123456789abcdef";

fn nibble(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}

/// Decode an optional `0x`-prefixed hex string into exactly `N` bytes.
pub(crate) fn decode_fixed<const N: usize>(text: &str) -> Result<[u8; N], ParseError> {
    let body = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    if body.len() != 2 * N {
        return Err(ParseError::Length {
            input: String::from(text),
            expected: 2 * N,
            found: body.len(),
        });
    }
    let raw = body.as_bytes();
    let mut out = [0u8; N];
    for (i, byte) in out.iter_mut().enumerate() {
        let hi = nibble(raw[2 * i]);
        let lo = nibble(raw[2 * i + 1]);
        match (hi, lo) {
            (Some(hi), Some(lo)) => *byte = (hi << 4) | lo,
            _ => return Err(ParseError::NonHex(String::from(text))),
        }
    }
    Ok(out)
}

fn write_hex(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    f.write_str("0x")?;
    for b in bytes {
        let pair = [HEX[(b >> 4) as usize], HEX[(b & 0xf) as usize]];
        // both bytes are ASCII
        f.write_str(core::str::from_utf8(&pair).unwrap_or("??"))?;
    }
    Ok(())
}

/// A 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address([u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        Address(bytes)
    }

    pub const fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// Parse `0x` + 40 hex digits (prefix optional, any case).
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        decode_fixed::<20>(text).map(Address)
    }

    /// Hex digit at position `i` (0 = most significant), as a value 0..16.
    #[inline]
    pub fn nibble(&self, i: usize) -> u8 {
        let b = self.0[i / 2];
        if i % 2 == 0 {
            b >> 4
        } else {
            b & 0xf
        }
    }

    /// All 40 hex digits as values 0..16.
    pub fn nibbles(&self) -> [u8; ADDRESS_DIGITS] {
        let mut out = [0u8; ADDRESS_DIGITS];
        for (i, n) in out.iter_mut().enumerate() {
            *n = self.nibble(i);
        }
        out
    }

    /// Build an address from 40 digit values (each < 16).
    pub fn from_nibbles(digits: &[u8; ADDRESS_DIGITS]) -> Self {
        let mut bytes = [0u8; 20];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = ((digits[2 * i] & 0xf) << 4) | (digits[2 * i + 1] & 0xf);
        }
        Address(bytes)
    }

    /// The 40 lowercase hex digits without the `0x` prefix.
    pub fn hex_digits(&self) -> String {
        self.nibbles()
            .iter()
            .map(|&n| HEX[n as usize] as char)
            .collect()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(f, &self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(f, &self.0)
    }
}

impl FromStr for Address {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::parse(s)
    }
}

/// A 32-byte transaction hash.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TxHash([u8; 32]);

impl TxHash {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        TxHash(bytes)
    }

    pub const fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        decode_fixed::<32>(text).map(TxHash)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(f, &self.0)
    }
}

impl fmt::Debug for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(f, &self.0)
    }
}

impl FromStr for TxHash {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TxHash::parse(s)
    }
}

macro_rules! hex_serde {
    ($ty:ident, $what:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                struct HexVisitor;
                impl Visitor<'_> for HexVisitor {
                    type Value = $ty;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        f.write_str($what)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$ty, E> {
                        $ty::parse(v).map_err(E::custom)
                    }
                }
                deserializer.deserialize_str(HexVisitor)
            }
        }
    };
}

hex_serde!(Address, "a 0x-prefixed 40-digit hex address");
hex_serde!(TxHash, "a 0x-prefixed 64-digit hex hash");

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    #[test]
    fn checksummed_input_folds_to_lowercase() {
        let a = Address::parse("0xB6e84DF1cE401117C450221ccc6EF502cb0e2284").unwrap();
        assert_eq!(a.to_string(), "0xb6e84df1ce401117c450221ccc6ef502cb0e2284");
    }

    #[test]
    fn zero_address() {
        let text = format!("0x{}", "0".repeat(40));
        assert_eq!(Address::parse(&text).unwrap(), Address::ZERO);
        assert_eq!(Address::ZERO.to_string(), text);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let err = Address::parse("0x12345").unwrap_err();
        assert!(matches!(err, ParseError::Length { found: 5, .. }));
        assert!(err.to_string().contains("0x12345"));
    }

    #[test]
    fn non_hex_is_rejected() {
        let text = format!("0x{}g", "0".repeat(39));
        assert!(matches!(Address::parse(&text), Err(ParseError::NonHex(_))));
    }

    #[test]
    fn nibble_round_trip() {
        let a = Address::parse("0x00112233445566778899aabbccddeeff01234567").unwrap();
        assert_eq!(a.nibble(0), 0);
        assert_eq!(a.nibble(3), 1);
        assert_eq!(a.nibble(39), 7);
        assert_eq!(Address::from_nibbles(&a.nibbles()), a);
        assert_eq!(a.hex_digits().len(), 40);
    }

    #[test]
    fn tx_hash_round_trip() {
        let text = "0x725eaedf8857e243587020de97ed503fb8bd8899bcbe8c685cf57fbce6810cc5";
        assert_eq!(TxHash::parse(text).unwrap().to_string(), text);
    }
}
