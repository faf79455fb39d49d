//! Signed log-scale numbers.
//!
//! Quantiles of tail-exponent-zero laws overflow every fixed-width integer,
//! so walk magnitudes are carried as `(sign, ln|x|)`. Values that came from an
//! exact integer keep it, which makes comparisons between nearby integers
//! exact even where their logarithms round to the same double.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogMagnitude {
    sign: i8,
    lnmag: f64,
    exact: Option<u64>,
}

impl LogMagnitude {
    pub const ZERO: LogMagnitude = LogMagnitude {
        sign: 0,
        lnmag: 0.0,
        exact: Some(0),
    };

    pub fn from_i64(x: i64) -> Self {
        if x == 0 {
            return Self::ZERO;
        }
        let abs = x.unsigned_abs();
        LogMagnitude {
            sign: x.signum() as i8,
            lnmag: (abs as f64).ln(),
            exact: Some(abs),
        }
    }

    pub fn from_u64(x: u64) -> Self {
        if x == 0 {
            return Self::ZERO;
        }
        LogMagnitude {
            sign: 1,
            lnmag: (x as f64).ln(),
            exact: Some(x),
        }
    }

    /// A value known only through its log-magnitude.
    pub fn from_ln(sign: i8, lnmag: f64) -> Self {
        if sign == 0 {
            return Self::ZERO;
        }
        LogMagnitude {
            sign: sign.signum(),
            lnmag,
            exact: None,
        }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    /// `ln|x|`; meaningless (returned as 0) for zero.
    pub fn lnmag(&self) -> f64 {
        self.lnmag
    }

    /// The exact absolute value, when it is an integer we still hold.
    pub fn exact_abs(&self) -> Option<u64> {
        self.exact
    }

    pub fn to_i64(&self) -> Option<i64> {
        let abs = i64::try_from(self.exact?).ok()?;
        Some(self.sign as i64 * abs)
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn abs(&self) -> Self {
        let mut out = *self;
        if out.sign != 0 {
            out.sign = 1;
        }
        out
    }

    pub fn with_sign(&self, sign: i8) -> Self {
        if self.sign == 0 {
            return *self;
        }
        let mut out = *self;
        out.sign = sign.signum();
        out
    }

    /// Multiplication by a positive scalar.
    pub fn scale(&self, c: f64) -> Self {
        assert!(c > 0.0, "scale factor must be positive");
        if self.sign == 0 {
            return *self;
        }
        LogMagnitude {
            sign: self.sign,
            lnmag: self.lnmag + c.ln(),
            exact: None,
        }
    }

    /// Approximate value as a double (may be infinite).
    pub fn to_f64(&self) -> f64 {
        match self.exact {
            Some(v) => self.sign as f64 * v as f64,
            None => self.sign as f64 * self.lnmag.exp(),
        }
    }

    fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.exact, other.exact) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => self.lnmag.total_cmp(&other.lnmag),
        }
    }
}

impl PartialEq for LogMagnitude {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for LogMagnitude {}

impl PartialOrd for LogMagnitude {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogMagnitude {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Ordering::Equal,
                1 => self.cmp_abs(other),
                _ => other.cmp_abs(self),
            },
            ord => ord,
        }
    }
}

impl fmt::Display for LogMagnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.sign, self.exact) {
            (0, _) => write!(f, "0"),
            (s, Some(v)) => write!(f, "{}", if s < 0 { -(v as i128) } else { v as i128 }),
            (s, None) => write!(f, "{}exp({})", if s < 0 { "-" } else { "" }, self.lnmag),
        }
    }
}
