//! Number types the engine can run over.
//!
//! Everything that evaluates a program is generic over [`Scalar`], so the same
//! code path runs in machine floating point and, for replay against the exact
//! oracles, in arbitrary-precision rationals.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Ordered field element used by evaluation, ASD and reverse mode.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    /// Converts a program constant. Exact for rationals.
    fn from_f64(c: f64) -> Self;

    /// Nearest machine float.
    fn to_f64(&self) -> f64;

    fn is_finite(&self) -> bool;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }
}

impl Scalar for BigRational {
    /// Panics on non-finite input; program constants are validated finite.
    fn from_f64(c: f64) -> Self {
        BigRational::from_float(c).expect("non-finite constant")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_finite(&self) -> bool {
        true
    }

    fn abs_val(&self) -> Self {
        Signed::abs(self)
    }
}

/// Exact rational copy of a float. `None` for NaN and infinities.
pub fn rational(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

/// Exact rational copies of a float vector.
pub fn rationals(xs: &[f64]) -> Option<Vec<BigRational>> {
    xs.iter().map(|&x| rational(x)).collect()
}

pub fn to_floats<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(Scalar::to_f64).collect()
}

/// Parses `p/q` or a decimal literal into an exact rational.
///
/// Decimal literals are read exactly as written (`0.1` is one tenth), which is
/// what the oracle paths want.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    let (neg, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(numer);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -value } else { value })
}
