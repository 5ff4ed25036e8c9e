//! Exact rational helpers shared by every probability computation.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Arbitrary-precision rational, always kept in lowest terms.
pub type Rational = BigRational;

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Parses `p/q` or an integer literal. Decimal points are rejected.
pub fn parse_fraction(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let valid = |s: &str| {
        let digits = s.strip_prefix('-').unwrap_or(s);
        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
    };
    if !valid(num) || !valid(den) {
        return None;
    }
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = den.parse().ok()?;
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

/// Renders as `p/q`, or `p` when the denominator is one.
pub fn format_fraction(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn is_probability(value: &Rational) -> bool {
    !value.is_negative() && value <= &one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions() {
        assert_eq!(parse_fraction("1/2"), Some(ratio(1, 2)));
        assert_eq!(parse_fraction(" 2/4 "), Some(ratio(1, 2)));
        assert_eq!(parse_fraction("1"), Some(one()));
        assert_eq!(parse_fraction("0.5"), None);
        assert_eq!(parse_fraction("1/0"), None);
        assert_eq!(parse_fraction("/3"), None);
    }

    #[test]
    fn formats_in_lowest_terms() {
        assert_eq!(format_fraction(&ratio(2, 4)), "1/2");
        assert_eq!(format_fraction(&ratio(3, 3)), "1");
        assert_eq!(format_fraction(&zero()), "0");
    }
}
