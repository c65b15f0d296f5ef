//! Signed fixed-point formats and the lossy round-trip quantizer.
//!
//! A format `Q(I, F)` has `I` integer bits (the sign bit counts as one of
//! them) and `F` fractional bits, for a total width of `N = I + F` bits. It
//! represents the grid of multiples of `2^-F` inside
//! `[-2^(I-1), 2^(I-1) - 2^-F]`. Quantizing rounds to the nearest grid point
//! (ties to even) and saturates at the range ends; the result is returned as
//! an ordinary `f64`, so downstream arithmetic stays in floating point and
//! only the representation error is retained.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A signed fixed-point format with `I` integer bits (sign included) and `F`
/// fractional bits. Total width is capped at 32 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointFormat {
    integer_bits: u32,
    fractional_bits: u32,
}

impl FixedPointFormat {
    pub const MAX_WIDTH: u32 = 32;

    pub fn new(integer_bits: u32, fractional_bits: u32) -> Result<Self> {
        if integer_bits < 1 {
            return Err(Error::InvalidFormat(format!(
                "integer bits must be >= 1 (sign bit), got {integer_bits}"
            )));
        }
        let width = integer_bits + fractional_bits;
        if width > Self::MAX_WIDTH {
            return Err(Error::InvalidFormat(format!(
                "total width {width} exceeds {} bits (I={integer_bits}, F={fractional_bits})",
                Self::MAX_WIDTH
            )));
        }
        Ok(FixedPointFormat {
            integer_bits,
            fractional_bits,
        })
    }

    pub fn integer_bits(&self) -> u32 {
        self.integer_bits
    }

    pub fn fractional_bits(&self) -> u32 {
        self.fractional_bits
    }

    /// Total width `N = I + F` in bits.
    pub fn width(&self) -> u32 {
        self.integer_bits + self.fractional_bits
    }

    /// Grid spacing `2^-F`. Exact in `f64`.
    pub fn step(&self) -> f64 {
        1.0 / (1u64 << self.fractional_bits) as f64
    }

    /// Smallest representable value, `-2^(I-1)`.
    pub fn min_value(&self) -> f64 {
        -((1u64 << (self.integer_bits - 1)) as f64)
    }

    /// Largest representable value, `2^(I-1) - 2^-F`.
    pub fn max_value(&self) -> f64 {
        (1u64 << (self.integer_bits - 1)) as f64 - self.step()
    }
}

/// Formats as `I.F`, e.g. `1.3` for one integer and three fractional bits.
impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.integer_bits, self.fractional_bits)
    }
}

impl FromStr for FixedPointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (i, f) = s
            .split_once('.')
            .ok_or_else(|| Error::parse(format!("expected I.F format string, got {s:?}")))?;
        let integer_bits = i
            .parse::<u32>()
            .map_err(|_| Error::parse(format!("bad integer bit count in {s:?}")))?;
        let fractional_bits = f
            .parse::<u32>()
            .map_err(|_| Error::parse(format!("bad fractional bit count in {s:?}")))?;
        FixedPointFormat::new(integer_bits, fractional_bits)
    }
}

impl Serialize for FixedPointFormat {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FixedPointFormat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rounds `x` to the nearest point of the format's grid (ties to even) and
/// saturates to the representable range. Non-finite input is rejected.
pub fn quantize(x: f64, fmt: FixedPointFormat) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            value: x,
            index: None,
        });
    }
    let scale = (1u64 << fmt.fractional_bits()) as f64;
    let min_code = -((1u64 << (fmt.width() - 1)) as f64);
    let max_code = (1u64 << (fmt.width() - 1)) as f64 - 1.0;
    // x * scale may overflow to infinity for extreme inputs; clamp handles it.
    let code = (x * scale).round_ties_even().clamp(min_code, max_code);
    Ok(code / scale)
}

/// Elementwise [`quantize`]; shape is preserved. On a non-finite element the
/// error carries the offending flat index.
pub fn quantize_tensor(t: &Tensor, fmt: FixedPointFormat) -> Result<Tensor> {
    let mut out = Vec::with_capacity(t.len());
    for (i, &x) in t.data().iter().enumerate() {
        match quantize(x, fmt) {
            Ok(q) => out.push(q),
            Err(Error::NonFinite { value, .. }) => {
                return Err(Error::NonFinite {
                    value,
                    index: Some(i),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Tensor::from_vec(t.shape().to_vec(), out)
}

/// Worst-case rounding error for in-range inputs: half the grid step,
/// `2^(-F-1)`.
pub fn max_abs_error(fmt: FixedPointFormat) -> f64 {
    fmt.step() * 0.5
}
