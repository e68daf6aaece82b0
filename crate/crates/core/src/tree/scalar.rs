use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Number type of a tree market: exact rationals or `f64` with a 1e-12 tolerance.
pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialOrd
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + Send
    + Sync
{
    /// Equality for exact types, `|a − b| ≤ 1e-12 · max(1, |a|, |b|)` for floats.
    fn close(&self, other: &Self) -> bool;
    fn ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn parse(text: &str) -> Option<Self>;

    fn power(&self, e: usize) -> Self {
        let mut out = Self::one();
        for _ in 0..e {
            out = out * self.clone();
        }
        out
    }
}

pub const FLOAT_TOLERANCE: f64 = 1e-12;

impl Scalar for f64 {
    fn close(&self, other: &Self) -> bool {
        (self - other).abs() <= FLOAT_TOLERANCE * 1f64.max(self.abs()).max(other.abs())
    }

    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse(text: &str) -> Option<Self> {
        match text.split_once('/') {
            Some((n, d)) => Some(n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?),
            None => text.trim().parse().ok(),
        }
    }
}

impl Scalar for BigRational {
    fn close(&self, other: &Self) -> bool {
        self == other
    }

    fn ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Ok(r) = BigRational::from_str(text) {
            return Some(r);
        }
        // Finite decimals such as `0.6` are exact rationals too.
        let (int, frac) = text.split_once('.')?;
        let negative = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        let num = BigInt::from_str(&digits).ok()?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let r = BigRational::new(num, den);
        Some(if negative { -r } else { r })
    }
}

/// Converts an `f64` into the scalar type, exactly for rationals.
pub fn from_f64<S: Scalar>(x: f64) -> S {
    S::parse(&format!("{x}")).unwrap_or_else(S::zero)
}

pub(crate) fn is_negative<S: Scalar>(x: &S) -> bool {
    *x < S::zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rationals_and_decimals() {
        let r = <BigRational as Scalar>::parse("3/5").unwrap();
        assert_eq!(r, BigRational::ratio(3, 5));
        assert_eq!(<BigRational as Scalar>::parse("0.6").unwrap(), BigRational::ratio(3, 5));
        assert_eq!(<BigRational as Scalar>::parse("-1.25").unwrap(), BigRational::ratio(-5, 4));
        assert_eq!(<BigRational as Scalar>::parse("7").unwrap(), BigRational::ratio(7, 1));
        assert_eq!(<f64 as Scalar>::parse("1/4").unwrap(), 0.25);
        assert!(<f64 as Scalar>::parse("x").is_none());
    }

    #[test]
    fn float_perturbation_is_exact_for_rationals() {
        let e: BigRational = from_f64(1e-6);
        assert_eq!(e, BigRational::ratio(1, 1_000_000));
    }

    #[test]
    fn closeness() {
        assert!(1.0f64.close(&(1.0 + 1e-13)));
        assert!(!1.0f64.close(&(1.0 + 1e-9)));
        assert!(!BigRational::ratio(1, 3).close(&BigRational::ratio(333, 1000)));
    }
}
