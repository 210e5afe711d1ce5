//! Power-of-two weight values and the log-domain quantizer.
//!
//! A trained weight is replaced by `sign * 2^exponent` with the exponent held
//! in `[-6, 0]`, or by exact zero when its magnitude falls below the smallest
//! representable step. Multiplication by such a weight is a bit shift, which
//! is what lets the array cells run without multipliers.

use std::fmt;

use crate::error::{Error, Result};

/// Smallest representable weight exponent (`2^-6`).
pub const MIN_EXP: i32 = -6;
/// Largest representable weight exponent (`2^0`).
pub const MAX_EXP: i32 = 0;

/// Any value whose magnitude is below `2^-6.5` quantizes to zero: in the log
/// domain that is the midpoint between "too small to keep" and the smallest
/// kept exponent, with the tie resolved toward keeping.
pub const ZERO_THRESHOLD_LOG2: f64 = -6.5;

/// A quantized weight: zero, or a signed power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowTwoWeight {
    Zero,
    Pow { negative: bool, exponent: i8 },
}

impl PowTwoWeight {
    /// Builds a non-zero weight, checking the exponent range.
    pub fn new(negative: bool, exponent: i32) -> Result<Self> {
        if !(MIN_EXP..=MAX_EXP).contains(&exponent) {
            return Err(Error::invalid(format!(
                "weight exponent {exponent} outside [{MIN_EXP}, {MAX_EXP}]"
            )));
        }
        Ok(PowTwoWeight::Pow {
            negative,
            exponent: exponent as i8,
        })
    }

    /// `+2^exponent`. Panics on an out-of-range exponent; test helper.
    pub fn pos(exponent: i32) -> Self {
        Self::new(false, exponent).unwrap()
    }

    /// `-2^exponent`. Panics on an out-of-range exponent; test helper.
    pub fn neg(exponent: i32) -> Self {
        Self::new(true, exponent).unwrap()
    }

    pub fn is_zero(self) -> bool {
        matches!(self, PowTwoWeight::Zero)
    }

    /// The exponent of a non-zero weight.
    pub fn exponent(self) -> Option<i32> {
        match self {
            PowTwoWeight::Zero => None,
            PowTwoWeight::Pow { exponent, .. } => Some(exponent as i32),
        }
    }

    /// `-1` or `+1` for non-zero weights, `0` for zero.
    pub fn signum(self) -> i32 {
        match self {
            PowTwoWeight::Zero => 0,
            PowTwoWeight::Pow { negative: true, .. } => -1,
            PowTwoWeight::Pow {
                negative: false, ..
            } => 1,
        }
    }

    /// The real value this weight stands for.
    pub fn as_f64(self) -> f64 {
        match self {
            PowTwoWeight::Zero => 0.0,
            PowTwoWeight::Pow { negative, exponent } => {
                let mag = (exponent as f64).exp2();
                if negative {
                    -mag
                } else {
                    mag
                }
            }
        }
    }
}

impl fmt::Display for PowTwoWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PowTwoWeight::Zero => write!(f, "0"),
            PowTwoWeight::Pow { negative, exponent } => {
                write!(f, "{}2^{}", if negative { "-" } else { "+" }, exponent)
            }
        }
    }
}

/// Rounds to the nearest integer with halves going toward +infinity.
///
/// This is the rounding used everywhere we round in the log domain; `f64::round`
/// would send `-1.5` to `-2` instead of `-1`.
pub(crate) fn round_log2_half_up(t: f64) -> i32 {
    (t + 0.5).floor() as i32
}

/// Quantizes a real weight to the nearest power of two in the log domain.
///
/// Magnitudes below `2^-6.5` become [`PowTwoWeight::Zero`]; otherwise the
/// exponent is `round(log2(|x|))` (halves toward +infinity) clamped to
/// `[-6, 0]` and the sign is kept.
pub fn log_quantize(x: f64) -> PowTwoWeight {
    let mag = x.abs();
    if mag.log2() < ZERO_THRESHOLD_LOG2 {
        return PowTwoWeight::Zero;
    }
    let exponent = round_log2_half_up(mag.log2()).clamp(MIN_EXP, MAX_EXP);
    PowTwoWeight::Pow {
        negative: x < 0.0,
        exponent: exponent as i8,
    }
}
