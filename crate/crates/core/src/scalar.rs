//! Scalar abstractions.
//!
//! Two tiers are used throughout the crate:
//!
//! * [`Field`] covers anything with exact-or-approximate field arithmetic and is
//!   what the linear-algebra and design checks are written against. It is
//!   implemented for `f32`, `f64` and [`Rational`].
//! * [`Real`] adds transcendental functions and is what every energy,
//!   derivative and optimization routine is generic over (`f32`, `f64`).

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// Arbitrary precision rational number used on the exact path.
pub type Rational = BigRational;

pub trait Field:
    Clone + Debug + PartialEq + PartialOrd + Num + Neg<Output = Self> + Send + Sync + 'static
{
    /// `true` when arithmetic is exact, so identities are checked for equality.
    const EXACT: bool;

    fn from_int(v: i128) -> Self;

    fn from_ratio(num: i128, den: i128) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    fn from_rational(r: &Rational) -> Self;

    /// Exact rational value, if the representation is exact.
    fn to_rational(&self) -> Option<Rational>;

    fn to_f64_lossy(&self) -> f64;

    fn magnitude(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

macro_rules! float_field {
    ($t:ty) => {
        impl Field for $t {
            const EXACT: bool = false;

            fn from_int(v: i128) -> Self {
                v as $t
            }

            fn from_rational(r: &Rational) -> Self {
                rational_to_f64(r) as $t
            }

            fn to_rational(&self) -> Option<Rational> {
                None
            }

            fn to_f64_lossy(&self) -> f64 {
                *self as f64
            }
        }
    };
}

float_field!(f32);
float_field!(f64);

impl Field for Rational {
    const EXACT: bool = true;

    fn from_int(v: i128) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_ratio(num: i128, den: i128) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_rational(&self) -> Option<Rational> {
        Some(self.clone())
    }

    fn to_f64_lossy(&self) -> f64 {
        rational_to_f64(self)
    }

    fn magnitude(&self) -> Self {
        self.abs()
    }
}

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Huge numerator/denominator: scale both down first.
            let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000);
            let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Exact rational from a finite `f64` (binary expansion, no rounding).
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    BigRational::from_float(x)
}

/// Floating-point scalar all numerical routines are generic over.
pub trait Real:
    Field
    + Float
    + FloatConst
    + FromPrimitive
    + Copy
    + Default
    + Sum
    + Display
    + LowerExp
    + serde::Serialize
{
    /// Converts an `f64` literal. Never fails for the supported types.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64_lossy()
    }

    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Relative closeness `|a - b| <= tol * max(|a|, |b|, floor)`.
pub fn close<T: Real>(a: T, b: T, tol: T, floor: T) -> bool {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() <= tol * scale
}

/// Parses `"p/q"`, `"p"` or a decimal string into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    if let Ok(p) = s.parse::<BigInt>() {
        return Some(BigRational::from_integer(p));
    }
    // Finite decimal such as "0.25": exact as a decimal fraction.
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.')?;
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    Some(BigRational::new(numer * sign, denom))
}

/// Formats a rational as `"p"` or `"p/q"`.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/4"), Some(Rational::from_ratio(3, 4)));
        assert_eq!(parse_rational("-6/8"), Some(Rational::from_ratio(-3, 4)));
        assert_eq!(parse_rational("7"), Some(Rational::from_int(7)));
        assert_eq!(parse_rational("0.125"), Some(Rational::from_ratio(1, 8)));
        assert_eq!(parse_rational("-1.5"), Some(Rational::from_ratio(-3, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(format_rational(&Rational::from_ratio(6, 4)), "3/2");
        assert_eq!(format_rational(&Rational::from_int(-2)), "-2");
    }

    #[test]
    fn field_conversions() {
        let r = Rational::from_ratio(1, 3);
        assert!((r.to_f64_lossy() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(<f64 as Field>::from_rational(&r), 1.0 / 3.0);
        assert_eq!(Rational::from_int(-5).magnitude(), Rational::from_int(5));
        assert_eq!((-2.5f64).magnitude(), 2.5);
        assert_eq!(rational_from_f64(0.75), Some(Rational::from_ratio(3, 4)));
    }
}
