//! Funding classes: five dollar buckets with lower-inclusive bounds at
//! $1M, $10M, $100M and $1B.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FundingClass {
    #[serde(rename = "100K-1M")]
    UpTo1M,
    #[serde(rename = "1M-10M")]
    UpTo10M,
    #[serde(rename = "10M-100M")]
    UpTo100M,
    #[serde(rename = "100M-1B")]
    UpTo1B,
    #[serde(rename = "1B+")]
    Over1B,
}

/// Empirical success probability per class reported for the original cohort,
/// in ascending class order.
pub const REFERENCE_SUCCESS_PROBS: [f64; 5] = [0.0127, 0.0841, 0.8089, 0.9535, 1.0];

/// Lower edge of the lowest class's nominal range; smaller amounts still map
/// to that class but carry a low-range flag.
pub const NOMINAL_FLOOR: f64 = 100e3;

impl FundingClass {
    pub const ALL: [FundingClass; 5] = [
        FundingClass::UpTo1M,
        FundingClass::UpTo10M,
        FundingClass::UpTo100M,
        FundingClass::UpTo1B,
        FundingClass::Over1B,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FundingClass::UpTo1M => "100K-1M",
            FundingClass::UpTo10M => "1M-10M",
            FundingClass::UpTo100M => "10M-100M",
            FundingClass::UpTo1B => "100M-1B",
            FundingClass::Over1B => "1B+",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Half-open `[lower, upper)` bounds; the lowest class starts at zero.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            FundingClass::UpTo1M => (0.0, 1e6),
            FundingClass::UpTo10M => (1e6, 1e7),
            FundingClass::UpTo100M => (1e7, 1e8),
            FundingClass::UpTo1B => (1e8, 1e9),
            FundingClass::Over1B => (1e9, f64::INFINITY),
        }
    }

    pub fn of(amount: f64) -> FundingClass {
        match amount {
            a if a >= 1e9 => FundingClass::Over1B,
            a if a >= 1e8 => FundingClass::UpTo1B,
            a if a >= 1e7 => FundingClass::UpTo100M,
            a if a >= 1e6 => FundingClass::UpTo10M,
            _ => FundingClass::UpTo1M,
        }
    }

    pub fn parse(label: &str) -> Option<FundingClass> {
        FundingClass::ALL.into_iter().find(|c| c.label() == label)
    }
}

impl fmt::Display for FundingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAssignment {
    pub class: FundingClass,
    /// Set when the amount lies below the lowest class's nominal $100K floor.
    pub below_range: bool,
}

pub fn funding_class(amount: f64) -> Result<ClassAssignment> {
    if !(amount > 0.0) {
        return Err(Error::Range(format!("funding amount must be positive, got {amount}")));
    }
    Ok(ClassAssignment {
        class: FundingClass::of(amount),
        below_range: amount < NOMINAL_FLOOR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_examples() {
        assert_eq!(funding_class(5e6).unwrap().class, FundingClass::UpTo10M);
        assert_eq!(funding_class(1e9).unwrap().class, FundingClass::Over1B);
        assert_eq!(funding_class(999_999.0).unwrap().class, FundingClass::UpTo1M);
        let low = funding_class(50e3).unwrap();
        assert!(low.below_range && low.class == FundingClass::UpTo1M);
        assert!(funding_class(0.0).is_err());
        assert!(funding_class(f64::NAN).is_err());
    }

    #[test]
    fn bounds_partition() {
        for w in FundingClass::ALL.windows(2) {
            assert_eq!(w[0].bounds().1, w[1].bounds().0);
            assert_eq!(FundingClass::of(w[1].bounds().0), w[1]);
        }
        assert_eq!(serde_json::to_string(&FundingClass::Over1B).unwrap(), "\"1B+\"");
    }
}
