//! Fixed-point quantities.
//!
//! Every monetary value is an `i128` mantissa with twelve implied decimal
//! digits. The unit (native coin, intertoken, gas, ...) lives in the type
//! parameter so a native amount can never be added to an intertoken amount
//! by accident. Cross-unit conversions go through [`Ratio`].

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of fractional decimal digits.
pub const DECIMALS: u32 = 12;
/// Mantissa of one whole unit.
pub const SCALE: i128 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountError {
    #[error("fixed-point overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative amount {0}")]
    NegativeSqrt(String),
    #[error("cannot parse decimal `{0}`")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, AmountError>;

pub trait Unit: Copy + Default + fmt::Debug + Send + Sync + 'static {
    const SYMBOL: &'static str;
}

macro_rules! unit {
    ($name:ident, $sym:expr) => {
        #[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name;
        impl Unit for $name {
            const SYMBOL: &'static str = $sym;
        }
    };
}

unit!(Native, "native");
unit!(Intertoken, "intertoken");
unit!(Gas, "gas");
unit!(Alien, "alien");
// Product units: intertoken × native. Interpool coins are measured in these.
unit!(Share, "share");

/// A fixed-point amount tagged with its unit.
pub struct Amount<U: Unit> {
    mantissa: i128,
    unit: PhantomData<U>,
}

pub type NativeAmount = Amount<Native>;
pub type IntertokenAmount = Amount<Intertoken>;
pub type GasAmount = Amount<Gas>;
pub type AlienAmount = Amount<Alien>;
pub type ShareAmount = Amount<Share>;

impl<U: Unit> Clone for Amount<U> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<U: Unit> Copy for Amount<U> {}
impl<U: Unit> PartialEq for Amount<U> {
    fn eq(&self, other: &Self) -> bool {
        self.mantissa == other.mantissa
    }
}
impl<U: Unit> Eq for Amount<U> {}
impl<U: Unit> PartialOrd for Amount<U> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<U: Unit> Ord for Amount<U> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mantissa.cmp(&other.mantissa)
    }
}
impl<U: Unit> Hash for Amount<U> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.mantissa.hash(state)
    }
}
impl<U: Unit> Default for Amount<U> {
    fn default() -> Self {
        Self::ZERO
    }
}

impl<U: Unit> Amount<U> {
    pub const ZERO: Self = Self::from_mantissa(0);
    pub const ONE: Self = Self::from_mantissa(SCALE);
    /// Smallest positive step (one unit in the last place).
    pub const ULP: Self = Self::from_mantissa(1);

    pub const fn from_mantissa(mantissa: i128) -> Self {
        Self { mantissa, unit: PhantomData }
    }

    pub const fn mantissa(self) -> i128 {
        self.mantissa
    }

    pub fn from_int(units: i64) -> Self {
        Self::from_mantissa(units as i128 * SCALE)
    }

    /// Parses a decimal literal such as `"10"`, `"-5.00"` or `"0.000000000001"`.
    /// Digits beyond the twelfth decimal are rejected rather than rounded.
    pub fn parse_decimal(text: &str) -> Result<Self> {
        parse_mantissa(text).map(Self::from_mantissa)
    }

    /// Lossy conversion for analytics and plotting.
    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 / SCALE as f64
    }

    /// Nearest representable value to `value`; only used by workload generators.
    pub fn from_f64(value: f64) -> Self {
        Self::from_mantissa((value * SCALE as f64).round() as i128)
    }

    pub fn is_zero(self) -> bool {
        self.mantissa == 0
    }

    pub fn is_negative(self) -> bool {
        self.mantissa < 0
    }

    pub fn is_positive(self) -> bool {
        self.mantissa > 0
    }

    pub fn abs(self) -> Self {
        Self::from_mantissa(self.mantissa.abs())
    }

    pub fn checked_add(self, rhs: Self) -> Result<Self> {
        self.mantissa.checked_add(rhs.mantissa).map(Self::from_mantissa).ok_or(AmountError::Overflow)
    }

    pub fn checked_sub(self, rhs: Self) -> Result<Self> {
        self.mantissa.checked_sub(rhs.mantissa).map(Self::from_mantissa).ok_or(AmountError::Overflow)
    }

    /// `max(self, 0)`.
    pub fn clamp_non_negative(self) -> Self {
        if self.mantissa < 0 {
            Self::ZERO
        } else {
            self
        }
    }

    /// Multiplies by a dimensionless ratio, truncating toward zero.
    pub fn scale(self, factor: Ratio) -> Result<Self> {
        mul_fixed(self.mantissa, factor.mantissa()).map(Self::from_mantissa)
    }

    /// Divides by a dimensionless ratio, truncating toward zero.
    pub fn unscale(self, divisor: Ratio) -> Result<Self> {
        div_fixed(self.mantissa, divisor.mantissa()).map(Self::from_mantissa)
    }

    /// Ratio of two amounts of the same unit.
    pub fn ratio_to(self, denominator: Self) -> Result<Ratio> {
        div_fixed(self.mantissa, denominator.mantissa).map(Ratio::from_mantissa)
    }

    /// Reinterprets the mantissa under a different unit (1:1 parity conversions).
    pub fn cast<V: Unit>(self) -> Amount<V> {
        Amount::from_mantissa(self.mantissa)
    }

    /// Largest representable `r` with `r·r ≤ self`.
    pub fn sqrt(self) -> Result<Self> {
        if self.mantissa < 0 {
            return Err(AmountError::NegativeSqrt(self.to_string()));
        }
        match (self.mantissa as u128).checked_mul(SCALE as u128) {
            Some(widened) => Ok(Self::from_mantissa(widened.isqrt() as i128)),
            None => {
                let widened = num_bigint::BigUint::from(self.mantissa as u128) * SCALE as u128;
                let root = u128::try_from(widened.sqrt()).map_err(|_| AmountError::Overflow)?;
                Ok(Self::from_mantissa(root as i128))
            }
        }
    }

    /// Round-half-even to two decimals, for human-facing reports.
    pub fn display2(self) -> String {
        format_rounded(self.mantissa, 2)
    }

    /// Round-half-even to `places` decimals (≤ 12).
    pub fn round_dp(self, places: u32) -> Self {
        let step = 10i128.pow(DECIMALS - places.min(DECIMALS));
        Self::from_mantissa(round_half_even(self.mantissa, step) * step)
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl Amount<Intertoken> {
    /// Native value of an intertoken amount at `ratio` native per intertoken.
    pub fn to_native(self, ratio: Ratio) -> Result<NativeAmount> {
        mul_fixed(self.mantissa, ratio.mantissa()).map(Amount::from_mantissa)
    }

    /// Product units `self × native`.
    pub fn times_native(self, native: NativeAmount) -> Result<ShareAmount> {
        mul_fixed(self.mantissa, native.mantissa()).map(Amount::from_mantissa)
    }
}

impl Amount<Native> {
    /// Intertoken amount worth `self` at `ratio` native per intertoken.
    pub fn to_intertoken(self, ratio: Ratio) -> Result<IntertokenAmount> {
        div_fixed(self.mantissa, ratio.mantissa()).map(Amount::from_mantissa)
    }
}

impl Amount<Gas> {
    /// Fee paid for `self` gas at `price` native per gas unit.
    pub fn cost(self, price: NativeAmount) -> Result<NativeAmount> {
        mul_fixed(self.mantissa, price.mantissa()).map(Amount::from_mantissa)
    }
}

impl<U: Unit> Add for Amount<U> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("amount overflow")
    }
}
impl<U: Unit> Sub for Amount<U> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("amount overflow")
    }
}
impl<U: Unit> AddAssign for Amount<U> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}
impl<U: Unit> SubAssign for Amount<U> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}
impl<U: Unit> Neg for Amount<U> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_mantissa(self.mantissa.checked_neg().expect("amount overflow"))
    }
}
impl<U: Unit> Sum for Amount<U> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

impl<U: Unit> fmt::Display for Amount<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_exact(self.mantissa))
    }
}
impl<U: Unit> fmt::Debug for Amount<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", format_exact(self.mantissa), U::SYMBOL)
    }
}
impl<U: Unit> FromStr for Amount<U> {
    type Err = AmountError;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse_decimal(s)
    }
}

// Dumps and reports carry the scaled integer; configs use `decimal`.
impl<U: Unit> Serialize for Amount<U> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_i128(self.mantissa)
    }
}
impl<'de, U: Unit> Deserialize<'de> for Amount<U> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        i128::deserialize(deserializer).map(Self::from_mantissa)
    }
}

/// A dimensionless fixed-point number: exchange ratios (native per
/// intertoken), fee rates and configuration fractions.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ratio(i128);

impl Ratio {
    pub const ZERO: Ratio = Ratio(0);
    pub const ONE: Ratio = Ratio(SCALE);

    pub const fn from_mantissa(mantissa: i128) -> Self {
        Ratio(mantissa)
    }

    pub const fn mantissa(self) -> i128 {
        self.0
    }

    pub fn from_int(value: i64) -> Self {
        Ratio(value as i128 * SCALE)
    }

    /// `numerator / denominator` for small integers, e.g. `Ratio::fraction(1, 1000)`.
    pub fn fraction(numerator: i64, denominator: i64) -> Self {
        Ratio(numerator as i128 * SCALE / denominator as i128)
    }

    pub fn parse_decimal(text: &str) -> Result<Self> {
        parse_mantissa(text).map(Ratio)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Checked, unlike `std::ops::Mul`.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Ratio) -> Result<Ratio> {
        mul_fixed(self.0, rhs.0).map(Ratio)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, rhs: Ratio) -> Result<Ratio> {
        div_fixed(self.0, rhs.0).map(Ratio)
    }

    pub fn checked_sub(self, rhs: Ratio) -> Result<Ratio> {
        self.0.checked_sub(rhs.0).map(Ratio).ok_or(AmountError::Overflow)
    }

    pub fn display2(self) -> String {
        format_rounded(self.0, 2)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_exact(self.0))
    }
}
impl fmt::Debug for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ratio({})", format_exact(self.0))
    }
}
impl FromStr for Ratio {
    type Err = AmountError;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse_decimal(s)
    }
}
impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_i128(self.0)
    }
}
impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        i128::deserialize(deserializer).map(Ratio)
    }
}

/// `serde(with = ...)` adapters that read and write decimal strings.
pub mod decimal {
    use super::*;

    pub trait Decimal: Sized {
        fn to_decimal(&self) -> String;
        fn from_decimal(text: &str) -> Result<Self>;
    }

    impl<U: Unit> Decimal for Amount<U> {
        fn to_decimal(&self) -> String {
            format_trimmed(self.mantissa)
        }
        fn from_decimal(text: &str) -> Result<Self> {
            Self::parse_decimal(text)
        }
    }

    impl Decimal for Ratio {
        fn to_decimal(&self) -> String {
            format_trimmed(self.0)
        }
        fn from_decimal(text: &str) -> Result<Self> {
            Self::parse_decimal(text)
        }
    }

    pub fn serialize<T: Decimal, S: Serializer>(value: &T, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&value.to_decimal())
    }

    pub fn deserialize<'de, T: Decimal, D: Deserializer<'de>>(deserializer: D) -> std::result::Result<T, D::Error> {
        let text = String::deserialize(deserializer)?;
        T::from_decimal(&text).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<T: Decimal, S: Serializer>(
            value: &Option<T>,
            serializer: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            match value {
                Some(v) => serializer.serialize_some(&v.to_decimal()),
                None => serializer.serialize_none(),
            }
        }

        pub fn deserialize<'de, T: Decimal, D: Deserializer<'de>>(
            deserializer: D,
        ) -> std::result::Result<Option<T>, D::Error> {
            Option::<String>::deserialize(deserializer)?
                .map(|text| T::from_decimal(&text).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

fn mul_fixed(a: i128, b: i128) -> Result<i128> {
    a.checked_mul(b).map(|p| p / SCALE).ok_or(AmountError::Overflow)
}

fn div_fixed(a: i128, b: i128) -> Result<i128> {
    if b == 0 {
        return Err(AmountError::DivisionByZero);
    }
    a.checked_mul(SCALE).map(|p| p / b).ok_or(AmountError::Overflow)
}

fn parse_mantissa(text: &str) -> Result<i128> {
    let err = || AmountError::Parse(text.to_string());
    let trimmed = text.trim();
    let (negative, body) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    if frac.len() > DECIMALS as usize {
        return Err(err());
    }
    let whole_value: i128 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| err())? };
    let mut frac_value: i128 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
    frac_value *= 10i128.pow(DECIMALS - frac.len() as u32);
    let magnitude = whole_value
        .checked_mul(SCALE)
        .and_then(|w| w.checked_add(frac_value))
        .ok_or(AmountError::Overflow)?;
    Ok(if negative { -magnitude } else { magnitude })
}

fn format_exact(mantissa: i128) -> String {
    let sign = if mantissa < 0 { "-" } else { "" };
    let abs = mantissa.unsigned_abs();
    let scale = SCALE as u128;
    format!("{sign}{}.{:012}", abs / scale, abs % scale)
}

fn format_trimmed(mantissa: i128) -> String {
    let exact = format_exact(mantissa);
    let trimmed = exact.trim_end_matches('0');
    trimmed.strip_suffix('.').unwrap_or(trimmed).to_string()
}

fn round_half_even(mantissa: i128, step: i128) -> i128 {
    let quotient = mantissa.div_euclid(step);
    let remainder = mantissa.rem_euclid(step);
    match (2 * remainder).cmp(&step) {
        Ordering::Less => quotient,
        Ordering::Greater => quotient + 1,
        Ordering::Equal => quotient + (quotient & 1),
    }
}

fn format_rounded(mantissa: i128, places: u32) -> String {
    let step = 10i128.pow(DECIMALS - places);
    let units = round_half_even(mantissa, step);
    let sign = if units < 0 { "-" } else { "" };
    let abs = units.unsigned_abs();
    let denom = 10u128.pow(places);
    if places == 0 {
        format!("{sign}{abs}")
    } else {
        format!("{sign}{}.{:0width$}", abs / denom, abs % denom, width = places as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn native(text: &str) -> NativeAmount {
        text.parse().unwrap()
    }

    /// Independent floor-sqrt: bisection on the mantissa at doubled scale.
    fn sqrt_oracle(mantissa: i128) -> i128 {
        let target = mantissa as u128 * SCALE as u128;
        let (mut lo, mut hi) = (0u128, 1u128 << 64);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if mid.checked_mul(mid).is_some_and(|sq| sq <= target) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo as i128
    }

    #[test]
    fn sqrt_of_huge_mantissa() {
        let a = NativeAmount::from_mantissa(1i128 << 120);
        let r = a.sqrt().unwrap().mantissa();
        let (lo, hi) = (num_bigint::BigInt::from(r), num_bigint::BigInt::from(r + 1));
        let target = num_bigint::BigInt::from(1i128 << 120) * SCALE;
        assert!(&lo * &lo <= target && &hi * &hi > target);
    }

    #[test]
    fn sqrt_of_ten_matches_integer_oracle() {
        assert_eq!(sqrt_oracle(10 * SCALE), 3_162_277_660_168);
        assert_eq!(native("10").sqrt().unwrap(), native("3.162277660168"));
    }

    #[test]
    fn sqrt_identities() {
        assert_eq!(NativeAmount::ZERO.sqrt().unwrap(), NativeAmount::ZERO);
        assert_eq!(NativeAmount::ONE.sqrt().unwrap(), NativeAmount::ONE);
        assert!(matches!(native("-1").sqrt(), Err(AmountError::NegativeSqrt(_))));
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(native("2.5").mantissa(), 2_500_000_000_000);
        assert_eq!(native("-5.00").mantissa(), -5 * SCALE);
        assert_eq!(native(".5").mantissa(), SCALE / 2);
        assert!(NativeAmount::parse_decimal("1.0000000000001").is_err());
        assert!(NativeAmount::parse_decimal("abc").is_err());
        assert!(NativeAmount::parse_decimal("").is_err());
        assert_eq!(native("9.1421356").to_string(), "9.142135600000");
    }

    #[test]
    fn display_rounds_half_even() {
        assert_eq!(native("2.125").display2(), "2.12");
        assert_eq!(native("2.135").display2(), "2.14");
        assert_eq!(native("-5.004").display2(), "-5.00");
        assert_eq!(native("7.0710678").display2(), "7.07");
        assert_eq!(native("-0.005").display2(), "0.00");
    }

    #[test]
    fn overflow_is_an_error() {
        let big = NativeAmount::from_mantissa(i128::MAX);
        assert_eq!(big.checked_add(NativeAmount::ULP), Err(AmountError::Overflow));
        assert_eq!(big.scale(Ratio::from_int(2)), Err(AmountError::Overflow));
        assert_eq!(native("1").unscale(Ratio::ZERO), Err(AmountError::DivisionByZero));
    }

    #[test]
    fn cross_unit_conversions() {
        let ratio = Ratio::parse_decimal("2.5").unwrap();
        let it: IntertokenAmount = "2".parse().unwrap();
        assert_eq!(it.to_native(ratio).unwrap(), native("5"));
        assert_eq!(native("5").to_intertoken(ratio).unwrap(), it);
        assert_eq!(it.times_native(native("5")).unwrap(), "10".parse::<ShareAmount>().unwrap());
    }

    #[test]
    fn decimal_serde_round_trip() {
        #[derive(Serialize, Deserialize)]
        struct Cfg {
            #[serde(with = "decimal")]
            deposit: NativeAmount,
        }
        let cfg: Cfg = serde_json::from_str(r#"{"deposit":"10.25"}"#).unwrap();
        assert_eq!(cfg.deposit, native("10.25"));
        assert_eq!(serde_json::to_string(&cfg).unwrap(), r#"{"deposit":"10.25"}"#);
        assert_eq!(serde_json::to_string(&native("1")).unwrap(), "1000000000000");
    }

    proptest! {
        #[test]
        fn sqrt_brackets_input(m in 0i128..(1i128 << 86)) {
            let a = NativeAmount::from_mantissa(m);
            let r = a.sqrt().unwrap().mantissa() as u128;
            let target = m as u128 * SCALE as u128;
            prop_assert!(r * r <= target);
            prop_assert!((r + 1) * (r + 1) > target);
            prop_assert_eq!(r as i128, sqrt_oracle(m));
        }

        #[test]
        fn add_sub_exact(a in -(1i128 << 100)..(1i128 << 100), b in -(1i128 << 100)..(1i128 << 100)) {
            let (x, y) = (NativeAmount::from_mantissa(a), NativeAmount::from_mantissa(b));
            prop_assert_eq!((x + y) - y, x);
        }

        #[test]
        fn mul_div_truncate_toward_zero(a in -(1i128 << 60)..(1i128 << 60), r in 1i128..(1i128 << 50)) {
            let x = NativeAmount::from_mantissa(a);
            let ratio = Ratio::from_mantissa(r);
            prop_assert_eq!(x.scale(ratio).unwrap().mantissa(), a * r / SCALE);
            prop_assert_eq!(x.unscale(ratio).unwrap().mantissa(), a * SCALE / r);
        }

        #[test]
        fn decimal_text_round_trips(m in any::<i64>()) {
            let x = NativeAmount::from_mantissa(m as i128);
            let text = decimal::Decimal::to_decimal(&x);
            prop_assert_eq!(NativeAmount::parse_decimal(&text).unwrap(), x);
        }
    }
}
