//! Linear/dB power conversions and the validated linear SNR newtype.

use std::fmt;

use crate::capacity::CapacityError;

/// Converts a power ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to dB. Zero maps to `-inf`.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Average SNR as a linear power ratio (never dB).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct LinearSnr(f64);

impl LinearSnr {
    pub const ZERO: LinearSnr = LinearSnr(0.0);

    pub fn new(value: f64) -> Result<Self, CapacityError> {
        if !value.is_finite() || value < 0.0 {
            return Err(CapacityError::Domain {
                what: "linear SNR",
                value,
            });
        }
        Ok(LinearSnr(value))
    }

    pub fn from_db(db: f64) -> Result<Self, CapacityError> {
        if db == f64::NEG_INFINITY {
            return Ok(LinearSnr::ZERO);
        }
        Self::new(db_to_linear(db))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn db(self) -> f64 {
        linear_to_db(self.0)
    }
}

impl fmt::Display for LinearSnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ({:.2} dB)", self.0, self.db())
    }
}
