//! Exact rational numbers.
//!
//! Every cost, payment, ratio and approximation factor in the engine is a
//! [`Rational`]. Values are kept in lowest terms with a positive denominator,
//! so equality and ordering are structural. Arithmetic is checked: an `i128`
//! overflow panics instead of wrapping, which at the instance sizes this crate
//! targets indicates a bug rather than a large input.

use core::fmt;
use core::iter::Sum;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use core::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, Zero};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Rational(Ratio<i128>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    /// Returns `None` when `denom` is zero.
    pub fn new(numer: i128, denom: i128) -> Option<Self> {
        if denom == 0 {
            None
        } else {
            Some(Rational(Ratio::new(numer, denom)))
        }
    }

    pub fn integer(value: i128) -> Self {
        Rational(Ratio::from_integer(value))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rational(self.0.recip())
    }

    /// Largest integer not above the value.
    pub fn floor(&self) -> i128 {
        self.0.floor().to_integer()
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl From<i128> for Rational {
    fn from(value: i128) -> Self {
        Rational::integer(value)
    }
}

impl From<i64> for Rational {
    fn from(value: i64) -> Self {
        Rational::integer(value as i128)
    }
}

impl From<u32> for Rational {
    fn from(value: u32) -> Self {
        Rational::integer(value as i128)
    }
}

impl From<usize> for Rational {
    fn from(value: usize) -> Self {
        Rational::integer(value as i128)
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0.checked_add(&rhs.0).expect("rational overflow in add"))
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0.checked_sub(&rhs.0).expect("rational overflow in sub"))
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0.checked_mul(&rhs.0).expect("rational overflow in mul"))
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        assert!(!rhs.is_zero(), "rational division by zero");
        Rational(self.0.checked_div(&rhs.0).expect("rational overflow in div"))
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        *self = *self + rhs;
    }
}

impl SubAssign for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        *self = *self - rhs;
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, x| acc + *x)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseRationalError {
    #[error("malformed rational literal")]
    Malformed,
    #[error("zero denominator")]
    ZeroDenominator,
}

/// Accepts `"7"`, `"-3"` and `"5/2"`.
impl FromStr for Rational {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s, "1"),
        };
        let n: i128 = n.parse().map_err(|_| ParseRationalError::Malformed)?;
        let d: i128 = d.parse().map_err(|_| ParseRationalError::Malformed)?;
        Rational::new(n, d).ok_or(ParseRationalError::ZeroDenominator)
    }
}

impl One for Rational {
    fn one() -> Self {
        Rational::ONE
    }
}

impl Zero for Rational {
    fn zero() -> Self {
        Rational::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d).unwrap()
    }

    #[test]
    fn canonical_form() {
        let x = r(6, -4);
        assert_eq!(x.numer(), -3);
        assert_eq!(x.denom(), 2);
        assert_eq!(r(2, 4), r(1, 2));
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(Rational::new(1, 0).is_none());
        assert_eq!("3/0".parse::<Rational>(), Err(ParseRationalError::ZeroDenominator));
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("5/2".parse::<Rational>().unwrap(), r(5, 2));
        assert_eq!(" 7 ".parse::<Rational>().unwrap(), Rational::integer(7));
        assert_eq!(r(10, 4).to_string(), "5/2");
        assert_eq!(r(4, 2).to_string(), "2");
        assert!("x/2".parse::<Rational>().is_err());
    }

    #[test]
    fn arithmetic_is_exact() {
        let k = r(5, 2);
        let beta = Rational::integer(2) - k.recip();
        assert_eq!(beta, r(8, 5));
        assert_eq!(r(1, 3) + r(1, 6), r(1, 2));
        assert!(r(1, 3) < r(34, 100));
    }
}
