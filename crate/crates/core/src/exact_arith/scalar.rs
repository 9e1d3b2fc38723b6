//! Exact scalars: arbitrary-precision rationals and dyadic numbers.

use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ArithError;

/// Exact rational number, always held in lowest terms with a positive denominator.
pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `2^-n` as a rational.
pub fn pow2_neg(n: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << n)
}

/// `2^n` as a rational.
pub fn pow2(n: u32) -> Rational {
    Rational::from_integer(BigInt::one() << n)
}

/// `4^-n` as a rational.
pub fn pow4_neg(n: u32) -> Rational {
    pow2_neg(2 * n)
}

/// Parses `"p/q"`, `"p"` or a finite decimal such as `"0.125"`.
pub fn parse_rational(s: &str) -> Result<Rational, ArithError> {
    let s = s.trim();
    let bad = || ArithError::Parse(s.to_string());
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let neg = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches('-'), frac);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let q = Rational::new(n, d);
        return Ok(if neg { -q } else { q });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

/// Lossy conversion for human-facing output only.
pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Largest integer `s` with `s*s <= n` (n >= 0).
pub fn isqrt(n: &BigInt) -> BigInt {
    if n.sign() == Sign::Minus {
        return BigInt::zero();
    }
    n.sqrt()
}

/// Exact square root when `q` is the square of a rational.
pub fn exact_sqrt(q: &Rational) -> Option<Rational> {
    if q.is_negative() {
        return None;
    }
    let n = isqrt(q.numer());
    let d = isqrt(q.denom());
    if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
        Some(Rational::new(n, d))
    } else {
        None
    }
}

/// Rational enclosure `lo <= sqrt(q) <= hi` with `hi - lo <= 2^-bits`;
/// both ends coincide when `q` is a rational square.
pub fn sqrt_bounds(q: &Rational, bits: u32) -> (Rational, Rational) {
    if let Some(s) = exact_sqrt(q) {
        return (s.clone(), s);
    }
    let scaled = q * pow2(2 * bits);
    let floor = scaled.floor().to_integer();
    let lo_int = isqrt(&floor);
    let lo = Rational::new(lo_int.clone(), BigInt::one() << bits);
    let hi = Rational::new(lo_int + 1, BigInt::one() << bits);
    (lo, hi)
}

/// A dyadic rational `mantissa * 2^-exponent`, the only values an oracle emits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    pub mantissa: BigInt,
    pub exponent: u32,
}

impl Dyadic {
    pub fn new(mantissa: BigInt, exponent: u32) -> Self {
        Self { mantissa, exponent }
    }

    pub fn to_rational(&self) -> Rational {
        Rational::new(self.mantissa.clone(), BigInt::one() << self.exponent)
    }

    /// Whether `q` lies on the grid `2^-n Z`.
    pub fn is_on_grid(q: &Rational, n: u32) -> bool {
        (q * pow2(n)).is_integer()
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^-{}", self.mantissa, self.exponent)
    }
}

/// Nearest point of `2^-n Z` to `v`; exact halves go toward -inf.
/// The error is at most `2^-(n+1)`.
pub fn round_to_dyadic(v: &Rational, n: u32) -> Dyadic {
    let t = v * pow2(n) - rat(1, 2);
    Dyadic::new(t.ceil().to_integer(), n)
}

/// Reduce a dyadic to the smallest exponent representing the same value.
pub fn normalize_dyadic(d: &Dyadic) -> Dyadic {
    let mut k = d.mantissa.clone();
    let mut n = d.exponent;
    while n > 0 && k.is_even() {
        k >>= 1;
        n -= 1;
    }
    Dyadic::new(k, n)
}

#[derive(Serialize, Deserialize)]
struct RationalRepr {
    num: String,
    den: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RationalInput {
    Repr(RationalRepr),
    Text(String),
    Int(i64),
}

/// Serde adapter: rationals travel as `{"num": "...", "den": "..."}`.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        RationalRepr {
            num: q.numer().to_string(),
            den: q.denom().to_string(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        use serde::de::Error;
        match RationalInput::deserialize(d)? {
            RationalInput::Repr(r) => {
                let n: BigInt = r.num.parse().map_err(D::Error::custom)?;
                let den: BigInt = r.den.parse().map_err(D::Error::custom)?;
                if !den.is_positive() {
                    return Err(D::Error::custom("denominator must be positive"));
                }
                Ok(Rational::new(n, den))
            }
            RationalInput::Text(t) => parse_rational(&t).map_err(D::Error::custom),
            RationalInput::Int(i) => Ok(int(i)),
        }
    }
}

pub mod serde_rational_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for q in v {
            seq.serialize_element(&RationalRepr {
                num: q.numer().to_string(),
                den: q.denom().to_string(),
            })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "serde_rational")] Rational);
        let v: Vec<W> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|w| w.0).collect())
    }
}

pub mod serde_rational_opt {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match q {
            Some(q) => serde_rational::serialize(q, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "serde_rational")] Rational);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Serialize, Deserialize)]
struct DyadicRepr {
    k: String,
    n: u32,
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DyadicRepr {
            k: self.mantissa.to_string(),
            n: self.exponent,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = DyadicRepr::deserialize(d)?;
        let k: BigInt = r.k.parse().map_err(D::Error::custom)?;
        Ok(Dyadic::new(k, r.n))
    }
}

/// Formats a rational as `num/den` (or `num` when integral).
pub fn fmt_rational(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}
