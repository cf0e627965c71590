//! Scalar abstractions shared by the speedup models and the numeric oracle.
//!
//! Speedup arithmetic is written against [`Scalar`] so it runs on exact
//! rationals (the default for every reported number) as well as on `f32`/`f64`
//! for quick exploration. The attention oracle needs transcendental functions
//! and is written against [`num_traits::Float`] instead.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Num, Signed, ToPrimitive};
use std::fmt::Debug;

/// Field-like scalar: exact rationals or IEEE floats.
pub trait Scalar: Num + Clone + PartialOrd + Debug {
    fn from_u64(v: u64) -> Self;

    /// Lossy conversion for presentation.
    fn to_f64_lossy(&self) -> f64;
}

impl Scalar for f32 {
    fn from_u64(v: u64) -> Self {
        v as f32
    }
    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for f64 {
    fn from_u64(v: u64) -> Self {
        v as f64
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl<T> Scalar for Ratio<T>
where
    T: Integer + Signed + Clone + Debug + ToPrimitive + From<i64>,
{
    fn from_u64(v: u64) -> Self {
        let v = i64::try_from(v).expect("count fits in i64");
        Ratio::from_integer(T::from(v))
    }
    fn to_f64_lossy(&self) -> f64 {
        let n = self.numer().to_f64().unwrap_or(f64::NAN);
        let d = self.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    }
}

/// Exact rational with a wide integer backing; every count ratio in this
/// crate fits comfortably.
pub type Rational = Ratio<i128>;

pub(crate) fn ratio(num: u128, den: u128) -> Rational {
    Rational::new(
        i128::try_from(num).expect("numerator overflow"),
        i128::try_from(den).expect("denominator overflow"),
    )
}

/// Rounds `value` to `places` decimals with ties to even, returning the
/// scaled integer (`round(value · 10^places)`).
pub fn round_half_even_scaled(value: &Rational, places: u32) -> i128 {
    let scale = 10i128.pow(places);
    let scaled = value * Rational::from_integer(scale);
    let floor = scaled.floor();
    let frac = scaled - floor;
    let half = Rational::new(1, 2);
    let base = *floor.numer();
    if frac > half || (frac == half && base.is_odd()) {
        base + 1
    } else {
        base
    }
}

/// Decimal string with exactly `places` fractional digits, ties to even.
pub fn format_decimal(value: &Rational, places: u32) -> String {
    let scaled = round_half_even_scaled(value, places);
    let neg = scaled < 0;
    let abs = scaled.unsigned_abs();
    if places == 0 {
        return format!("{}{}", if neg { "-" } else { "" }, abs);
    }
    let scale = 10u128.pow(places);
    format!(
        "{}{}.{:0width$}",
        if neg { "-" } else { "" },
        abs / scale,
        abs % scale,
        width = places as usize
    )
}

/// The rounded value as an `f64`, suitable for JSON numbers.
pub fn rounded_f64(value: &Rational, places: u32) -> f64 {
    format_decimal(value, places).parse().expect("decimal string parses")
}

/// Parses a decimal (`0.607`), integer, or fraction (`100/9`) into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i128 = n.trim().parse().ok()?;
        let d: i128 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let denom = 10i128.checked_pow(u32::try_from(frac_part.len()).ok()?)?;
    let r = Rational::new(numer, denom);
    Some(if neg { -r } else { r })
}

/// Exact rational from an `f64` via its shortest round-trip decimal form,
/// so `0.607` becomes `607/1000` rather than the nearest binary fraction.
pub fn rational_from_f64(v: f64) -> Option<Rational> {
    if !v.is_finite() {
        return None;
    }
    parse_rational(&format!("{v}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_even_ties() {
        assert_eq!(format_decimal(&Rational::new(1125, 1000), 2), "1.12");
        assert_eq!(format_decimal(&Rational::new(1135, 1000), 2), "1.14");
        assert_eq!(format_decimal(&Rational::new(100, 9), 2), "11.11");
        assert_eq!(format_decimal(&Rational::new(-5, 2), 0), "-2");
        assert_eq!(format_decimal(&Rational::new(7, 1), 1), "7.0");
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("0.607"), Some(Rational::new(607, 1000)));
        assert_eq!(parse_rational("100/9"), Some(Rational::new(100, 9)));
        assert_eq!(parse_rational("3"), Some(Rational::from_integer(3)));
        assert_eq!(parse_rational("-.5"), Some(Rational::new(-1, 2)));
        assert_eq!(parse_rational("x"), None);
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(rational_from_f64(0.518), Some(Rational::new(518, 1000)));
    }

    #[test]
    fn rounded_json_number() {
        assert_eq!(rounded_f64(&Rational::new(100, 9), 2), 11.11);
        assert_eq!(rounded_f64(&Rational::new(36, 11), 2), 3.27);
    }
}
