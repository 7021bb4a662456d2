//! Text formatting for numbers written to CSV and JSON.
//!
//! Every finite value is written with its shortest round-trip digits, padded
//! with zeros to at least ten significant digits, so files parse back to the
//! exact `f64` and still read at a fixed precision.

use serde_json::{Number, Value};

const MIN_DIGITS: usize = 10;

/// Formats `x` for output. Non-finite values become `inf`, `-inf` or `NaN`;
/// negative zero is written as zero.
pub fn fmt_num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{x:e}");
    let (mantissa, exp) = sci.split_once('e').expect("LowerExp always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let mut digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    while digits.len() < MIN_DIGITS {
        digits.push('0');
    }
    if (-5..16).contains(&exp) {
        let point = exp + 1;
        if point <= 0 {
            format!("{sign}0.{}{digits}", "0".repeat((-point) as usize))
        } else {
            let point = point as usize;
            while digits.len() <= point {
                digits.push('0');
            }
            format!("{sign}{}.{}", &digits[..point], &digits[point..])
        }
    } else {
        format!("{sign}{}.{}e{exp}", &digits[..1], &digits[1..])
    }
}

/// JSON number with the same text as [`fmt_num`]; non-finite values become `null`.
pub fn json_num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(Number::from_string_unchecked(fmt_num(x)))
    } else {
        Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_positional() {
        assert_eq!(fmt_num(0.6), "0.6000000000");
        assert_eq!(fmt_num(0.0), "0.000000000");
        assert_eq!(fmt_num(-0.0), "0.000000000");
        assert_eq!(fmt_num(-1.0), "-1.000000000");
        assert_eq!(fmt_num(1234.5), "1234.500000");
        assert_eq!(fmt_num(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(fmt_num(1e-5), "0.00001000000000");
        assert_eq!(fmt_num(123456789012.0), "123456789012.0");
    }

    #[test]
    fn scientific_outside_range() {
        assert_eq!(fmt_num(1e-7), "1.000000000e-7");
        assert_eq!(fmt_num(-2.5e20), "-2.500000000e20");
    }

    #[test]
    fn round_trips() {
        for &x in &[0.6, 1.0 / 3.0, -7.25e-9, 6.02214076e23, f64::MIN_POSITIVE, f64::MAX, 5e-324] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x, "{x}");
        }
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert!(json_num(f64::NAN).is_null());
        assert_eq!(json_num(0.5).to_string(), "0.5000000000");
    }
}
