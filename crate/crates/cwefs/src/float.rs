//! Scalar abstraction used throughout the crate.
//!
//! Every numeric routine is generic over [`Float`] so the same code runs in
//! `f32` or `f64`. The trait bundles the ndarray/num-traits bounds the
//! implementations need plus a few conversion helpers with infallible
//! semantics for the small constants used here.

use std::iter::Sum;
use std::str::FromStr;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Scalar type for all matrix computations.
///
/// Implemented for `f32` and `f64`. `NdFloat` brings the arithmetic and
/// ndarray scalar-ops bounds, `FromPrimitive` the lossy conversions from
/// integers and `f64` literals, and `Sum`/`FromStr` support reductions and
/// parsing.
pub trait Float: NdFloat + FromPrimitive + Sum + FromStr + Default {
    /// Converts an `f64` constant, panicking only for values no IEEE float
    /// can represent (never for finite literals).
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal converts to any float type")
    }

    /// Converts a count to the scalar type (exact for the sizes used here).
    fn from_usize_lit(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to any float type")
    }

    /// Widens to `f64` for reporting and metric aggregation.
    fn to_f64_lossy(self) -> f64;
}

impl Float for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Formats a float with 17 significant digits so that the decimal text
/// round-trips to the identical bit pattern when reparsed.
pub fn fmt_g17<F: Float>(x: F) -> String {
    format!("{:.16e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_g17_round_trips_f64() {
        let values = [
            0.1_f64,
            1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            6.02214076e23,
            -7.25,
            0.0,
        ];
        for &v in &values {
            let text = fmt_g17(v);
            let back: f64 = text.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "value {v} text {text}");
        }
    }

    #[test]
    fn fmt_g17_round_trips_f32() {
        let values = [0.1_f32, 1.0 / 3.0, std::f32::consts::E, -42.5, 1e-30];
        for &v in &values {
            let text = fmt_g17(v);
            let back: f32 = text.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "value {v} text {text}");
        }
    }

    #[test]
    fn literal_conversions_are_exact_for_small_ints() {
        assert_eq!(f64::from_usize_lit(300), 300.0);
        assert_eq!(f32::from_f64_lit(0.1), 0.1_f32);
    }
}
