//! Exact rational time, work and speed quantities.
//!
//! Every timing quantity in the library is a [`Rational`]. Completion
//! instants under fractional speeds are not integral, and event ordering
//! must never depend on floating-point rounding.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::Error;

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// `num/den`; panics on a zero denominator.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Renders `r` as `"p/q"` in lowest terms (`q` is always present).
pub fn format(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Lowest common multiple of two positive rationals: the smallest positive
/// rational that is an integer multiple of both.
pub fn lcm(a: &Rational, b: &Rational) -> Rational {
    let num = a.numer().lcm(b.numer());
    let den = a.denom().gcd(b.denom());
    Rational::new(num, den)
}

pub fn ceil_to_u64(r: &Rational) -> Option<u64> {
    r.ceil().to_integer().to_u64()
}

/// Parses `"p/q"`, an integer, or a decimal literal (optionally with an
/// exponent) into an exact rational. Decimal text is converted digit by
/// digit, so `"0.714"` is exactly `357/500`.
pub fn parse(text: &str) -> Result<Rational, Error> {
    let bad = || Error::ParseRational(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let num = parse_decimal(n.trim()).ok_or_else(bad)?;
        let den = parse_decimal(d.trim()).ok_or_else(bad)?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(num / den);
    }
    parse_decimal(s).ok_or_else(bad)
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let joined = format!("{whole}{frac}");
    let mut value = Rational::from_integer(joined.parse::<BigInt>().ok()?);
    let scale = exponent - frac.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Some(if negative { -value } else { value })
}

/// `t` or "+infinity", used for the contention horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instant {
    At(Rational),
    Infinity,
}

impl Instant {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Instant::At(t) => Some(t),
            Instant::Infinity => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Instant::Infinity)
    }
}

impl PartialOrd for Instant {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Instant {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Instant::At(a), Instant::At(b)) => a.cmp(b),
            (Instant::At(_), Instant::Infinity) => Less,
            (Instant::Infinity, Instant::At(_)) => Greater,
            (Instant::Infinity, Instant::Infinity) => Equal,
        }
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instant::At(t) => write!(f, "{}", format(t)),
            Instant::Infinity => write!(f, "inf"),
        }
    }
}

impl serde::Serialize for Instant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Instant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Instant::parse(&text).map_err(serde::de::Error::custom)
    }
}

impl Instant {
    /// Inverse of `Display`: `"inf"` or a rational literal.
    pub fn parse(text: &str) -> Result<Instant, Error> {
        match text.trim() {
            "inf" | "+inf" | "infinity" => Ok(Instant::Infinity),
            t => parse(t).map(Instant::At),
        }
    }
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn zero() -> Rational {
    Rational::zero()
}

/// Serde adapter: rationals are written as `"p/q"` strings and read from
/// either such strings or JSON numbers.
pub mod serde_q {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use super::Rational;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Literal {
        Text(String),
        Number(serde_json::Number),
    }

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = match Literal::deserialize(d)? {
            Literal::Text(t) => t,
            Literal::Number(n) => n.to_string(),
        };
        super::parse(&text).map_err(de::Error::custom)
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        use super::Rational;

        pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
            match r {
                Some(r) => super::serialize(r, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] Rational);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}
