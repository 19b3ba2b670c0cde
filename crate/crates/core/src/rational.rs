//! Exact rational arithmetic helpers.
//!
//! Everything structural in this crate is a [`Rat`] so that the identities
//! the math promises (normalization, consistency, round trips) can be
//! asserted exactly. This module holds the small amount of glue: literals,
//! parsing `"p/q"` strings, rendering, and float conversion for reporting.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::ToPrimitive;

use crate::{Error, Result};

pub use num::{One, Signed, Zero};

/// Arbitrary-precision rational number.
pub type Rat = BigRational;

/// Exact rational `n / d`. Panics if `d == 0`; intended for literals.
pub fn rat(n: i64, d: i64) -> Rat {
    assert!(d != 0, "rational literal with zero denominator");
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Exact integer as a rational.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exact `usize` as a rational.
pub fn rat_usize(n: usize) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `base^exp` with the convention `x^0 = 1` (including `0^0`).
pub fn rat_pow(base: &Rat, exp: usize) -> Rat {
    if exp == 0 {
        Rat::one()
    } else {
        num::pow::pow(base.clone(), exp)
    }
}

/// Parse `"p/q"` or `"p"` (optionally signed, ASCII digits) as a rational.
///
/// ```
/// use xifreeze_core::rational::{parse_rat, rat};
/// assert_eq!(parse_rat("-3/4").unwrap(), rat(-3, 4));
/// assert_eq!(parse_rat("7").unwrap(), rat(7, 1));
/// assert!(parse_rat("1/0").is_err());
/// assert!(parse_rat("0.5").is_err());
/// ```
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let parse_int = |t: &str| -> Result<BigInt> {
        t.parse::<BigInt>()
            .map_err(|_| Error::Parse(format!("`{t}` is not an integer")))
    };
    match s.split_once('/') {
        None => Ok(Rat::from_integer(parse_int(s)?)),
        Some((num, den)) => {
            let den = parse_int(den)?;
            if den.is_zero() {
                return Err(Error::Parse(format!("`{s}` has zero denominator")));
            }
            Ok(Rat::new(parse_int(num)?, den))
        }
    }
}

/// Render a rational as `"p/q"`, or `"p"` when the denominator is one.
pub fn render_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nearest `f64` to an exact rational (for reports and sampling only).
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back through a scaled division for magnitudes outside f64
        // range; good enough for reporting.
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_round_trip() {
        for s in ["0", "1", "-1", "2/3", "-7/3", "1000000000000000000000/7"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(render_rat(&r), s);
        }
    }

    #[test]
    fn parse_normalizes() {
        assert_eq!(render_rat(&parse_rat("4/6").unwrap()), "2/3");
        assert_eq!(render_rat(&parse_rat("3/-6").unwrap()), "-1/2");
        assert_eq!(render_rat(&parse_rat(" 5 ").unwrap()), "5");
    }

    #[test]
    fn parse_rejects_garbage() {
        for s in ["", "a", "1/0", "0.5", "1/2/3", "1e3"] {
            assert!(parse_rat(s).is_err(), "accepted {s:?}");
        }
    }

    #[test]
    fn pow_edge_cases() {
        assert_eq!(rat_pow(&rat(0, 1), 0), rat(1, 1));
        assert_eq!(rat_pow(&rat(2, 3), 3), rat(8, 27));
    }
}
