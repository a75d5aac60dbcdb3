//! Floating point scalar abstraction used by the numeric parts of the pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic function, evaluated without overflow for large negative inputs.
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Formats like C's `%.{digits}g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(1.48f64) - 0.814_572_580_7).abs() < 1e-6);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert!((sigmoid(0.3f32) - 0.574_442_5).abs() < 1e-6);
    }

    #[test]
    fn sig_digits() {
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(1.313_261_687_518_222_8, 9), "1.31326169");
        assert_eq!(format_sig(1.5, 9), "1.5");
        assert_eq!(format_sig(8.18e-10, 9), "8.18e-10");
        assert_eq!(format_sig(123_456_789_012.0, 9), "1.23456789e+11");
        assert_eq!(format_sig(-0.000_123, 9), "-0.000123");
        assert_eq!(format_sig(3.0, 9), "3");
    }
}
