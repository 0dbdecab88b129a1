//! Fixed-point USD arithmetic.
//!
//! [`Usd`] carries micro-dollars (6 fractional digits) and [`UsdPrice`]
//! carries atto-dollars per whole token unit (18 fractional digits). All
//! conversions round half to even at the sixth fractional digit.

use alloc::string::String;
use core::fmt;
use core::iter::Sum;
use core::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use core::str::FromStr;

use crypto_bigint::{Encoding, NonZero, U512};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::amount::TokenAmount;
use crate::error::ParseError;

pub const USD_SCALE: u32 = 6;
pub const PRICE_SCALE: u32 = 18;

/// Parse a plain decimal `[-]digits[.digits]` into an integer scaled by
/// `10^scale`, rounding extra fractional digits half to even.
fn parse_scaled(text: &str, scale: u32) -> Option<i128> {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|c| c.is_ascii_digit()) || !frac_part.bytes().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mut acc: i128 = 0;
    for c in int_part.bytes() {
        acc = acc.checked_mul(10)?.checked_add(i128::from(c - b'0'))?;
    }
    let frac = frac_part.as_bytes();
    for i in 0..scale as usize {
        let d = frac.get(i).map_or(0, |c| c - b'0');
        acc = acc.checked_mul(10)?.checked_add(i128::from(d))?;
    }
    if frac.len() > scale as usize {
        let rest = &frac[scale as usize..];
        let first = rest[0] - b'0';
        let tail_nonzero = rest[1..].iter().any(|&c| c != b'0');
        let round_up = first > 5 || (first == 5 && (tail_nonzero || acc % 2 == 1));
        if round_up {
            acc = acc.checked_add(1)?;
        }
    }
    Some(if negative { -acc } else { acc })
}

fn write_scaled(f: &mut fmt::Formatter<'_>, value: i128, scale: u32) -> fmt::Result {
    let unit = 10i128.pow(scale);
    let sign = if value < 0 { "-" } else { "" };
    let abs = value.unsigned_abs();
    let unit = unit as u128;
    write!(
        f,
        "{sign}{}.{:0width$}",
        abs / unit,
        abs % unit,
        width = scale as usize
    )
}

/// A USD amount in micro-dollars.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Usd(i128);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub const fn from_micros(micros: i128) -> Self {
        Usd(micros)
    }

    pub const fn from_whole(dollars: i64) -> Self {
        Usd(dollars as i128 * 1_000_000)
    }

    pub const fn micros(&self) -> i128 {
        self.0
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parse_scaled(text, USD_SCALE)
            .map(Usd)
            .ok_or_else(|| ParseError::Decimal(String::from(text)))
    }

    /// Lossy conversion for statistics (medians, deviations, correlations).
    pub fn to_f64(&self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn checked_add(self, rhs: Usd) -> Option<Usd> {
        self.0.checked_add(rhs.0).map(Usd)
    }

    pub fn is_positive(&self) -> bool {
        self.0 > 0
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_scaled(f, self.0, USD_SCALE)
    }
}

impl fmt::Debug for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Usd({self})")
    }
}

impl FromStr for Usd {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Usd::parse(s)
    }
}

impl Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        self.0 += rhs.0;
    }
}

impl Sub for Usd {
    type Output = Usd;
    fn sub(self, rhs: Usd) -> Usd {
        Usd(self.0 - rhs.0)
    }
}

impl SubAssign for Usd {
    fn sub_assign(&mut self, rhs: Usd) {
        self.0 -= rhs.0;
    }
}

impl Neg for Usd {
    type Output = Usd;
    fn neg(self) -> Usd {
        Usd(-self.0)
    }
}

impl Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Usd> for Usd {
    fn sum<I: Iterator<Item = &'a Usd>>(iter: I) -> Usd {
        iter.copied().sum()
    }
}

/// A strictly positive USD price per whole token unit, in atto-dollars.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UsdPrice(u128);

impl UsdPrice {
    pub const ONE: UsdPrice = UsdPrice(1_000_000_000_000_000_000);

    pub fn from_atto(atto: u128) -> Option<Self> {
        (atto > 0).then_some(UsdPrice(atto))
    }

    pub const fn atto(&self) -> u128 {
        self.0
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let bad = || ParseError::Decimal(String::from(text));
        let scaled = parse_scaled(text, PRICE_SCALE).ok_or_else(bad)?;
        if scaled <= 0 {
            return Err(ParseError::NonPositivePrice(String::from(text)));
        }
        Ok(UsdPrice(scaled as u128))
    }
}

impl fmt::Display for UsdPrice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // trim trailing zeros but keep at least two fractional digits
        let unit = 10u128.pow(PRICE_SCALE);
        let int = self.0 / unit;
        let mut frac = self.0 % unit;
        let mut width = PRICE_SCALE as usize;
        while width > 2 && frac % 10 == 0 {
            frac /= 10;
            width -= 1;
        }
        write!(f, "{int}.{frac:0width$}")
    }
}

impl fmt::Debug for UsdPrice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UsdPrice({self})")
    }
}

impl FromStr for UsdPrice {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UsdPrice::parse(s)
    }
}

fn pow10_u512(exp: u32) -> U512 {
    let ten = U512::from_u8(10);
    let mut out = U512::ONE;
    for _ in 0..exp {
        out = out.wrapping_mul(&ten);
    }
    out
}

/// `value / 10^decimals * price`, rounded half to even at micro-dollars.
///
/// Returns `None` only when the result does not fit the `Usd` range.
pub fn convert(value: &TokenAmount, decimals: u8, price: UsdPrice) -> Option<Usd> {
    if value.is_zero() {
        return Some(Usd::ZERO);
    }
    let wide_value: U512 = value.as_u256().resize::<{ U512::LIMBS }>();
    let numerator = wide_value.wrapping_mul(&U512::from_u128(price.atto()));
    // price scale 18, usd scale 6
    let divisor = pow10_u512(u32::from(decimals) + PRICE_SCALE - USD_SCALE);
    let divisor_nz = NonZero::new(divisor).unwrap();
    let (mut quotient, remainder) = numerator.div_rem(&divisor_nz);
    let twice = remainder.shl_vartime(1);
    let odd = quotient.to_le_bytes()[0] & 1 == 1;
    if twice > divisor || (twice == divisor && odd) {
        quotient = quotient.wrapping_add(&U512::ONE);
    }
    if quotient.bits() > 126 {
        return None;
    }
    let bytes = quotient.to_le_bytes();
    let mut low = [0u8; 16];
    low.copy_from_slice(&bytes[..16]);
    Some(Usd(u128::from_le_bytes(low) as i128))
}

macro_rules! decimal_serde {
    ($ty:ident, $what:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                struct DecVisitor;
                impl Visitor<'_> for DecVisitor {
                    type Value = $ty;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        f.write_str($what)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$ty, E> {
                        $ty::parse(v).map_err(E::custom)
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$ty, E> {
                        $ty::parse(&alloc::format!("{v}")).map_err(E::custom)
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$ty, E> {
                        $ty::parse(&alloc::format!("{v}")).map_err(E::custom)
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$ty, E> {
                        $ty::parse(&alloc::format!("{v}")).map_err(E::custom)
                    }
                }
                deserializer.deserialize_any(DecVisitor)
            }
        }
    };
}

decimal_serde!(Usd, "a decimal USD amount");
decimal_serde!(UsdPrice, "a positive decimal USD price");
