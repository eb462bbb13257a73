//! Integer-nanosecond time values.
//!
//! All analysis arithmetic is exact: a [`Duration`] is a count of
//! nanoseconds and overflow is reported, never wrapped or saturated.
//! Inter-arrival times additionally admit an infinite value, which encodes
//! a one-shot stage.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const NANOS_PER_US: u64 = 1_000;
pub const NANOS_PER_MS: u64 = 1_000_000;
pub const NANOS_PER_SEC: u64 = 1_000_000_000;
pub const NANOS_PER_MIN: u64 = 60 * NANOS_PER_SEC;
pub const NANOS_PER_HOUR: u64 = 60 * NANOS_PER_MIN;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("time arithmetic overflow")]
    Overflow,
    #[error("invalid duration `{token}`: {reason}")]
    Parse { token: String, reason: &'static str },
}

/// A non-negative span of time in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(u64);

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn from_nanos(ns: u64) -> Self {
        Duration(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        Duration(us * NANOS_PER_US)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Duration(ms * NANOS_PER_MS)
    }

    pub const fn from_secs(s: u64) -> Self {
        Duration(s * NANOS_PER_SEC)
    }

    pub const fn from_hours(h: u64) -> Self {
        Duration(h * NANOS_PER_HOUR)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Duration) -> Result<Duration, TimeError> {
        self.0.checked_add(rhs.0).map(Duration).ok_or(TimeError::Overflow)
    }

    pub fn checked_mul(self, k: u64) -> Result<Duration, TimeError> {
        self.0.checked_mul(k).map(Duration).ok_or(TimeError::Overflow)
    }

    pub fn saturating_sub(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_sub(rhs.0))
    }

    /// `ceil(self / divisor)`; `divisor` must be non-zero.
    pub fn div_ceil(self, divisor: Duration) -> u64 {
        debug_assert!(divisor.0 > 0);
        self.0.div_ceil(divisor.0)
    }
}

impl fmt::Display for Duration {
    /// Emits the value in the largest unit that represents it exactly,
    /// e.g. `1500us`, `2h`, `0ns`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const UNITS: [(&str, u64); 6] = [
            ("h", NANOS_PER_HOUR),
            ("min", NANOS_PER_MIN),
            ("s", NANOS_PER_SEC),
            ("ms", NANOS_PER_MS),
            ("us", NANOS_PER_US),
            ("ns", 1),
        ];
        for (suffix, scale) in UNITS {
            if self.0 != 0 && self.0.is_multiple_of(scale) {
                return write!(f, "{}{}", self.0 / scale, suffix);
            }
        }
        write!(f, "{}ns", self.0)
    }
}

impl FromStr for Duration {
    type Err = TimeError;

    /// Parses `<decimal><unit>` with units `ns`, `us`/`µs`, `ms`, `s`,
    /// `min`, `h`. The value must be an exact whole number of nanoseconds.
    fn from_str(token: &str) -> Result<Self, Self::Err> {
        let err = |reason| TimeError::Parse {
            token: token.to_string(),
            reason,
        };
        let s = token.trim();
        let split = s
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .ok_or_else(|| err("missing unit suffix"))?;
        let (number, unit) = s.split_at(split);
        let scale = match unit {
            "ns" => 1,
            "us" | "µs" | "μs" => NANOS_PER_US,
            "ms" => NANOS_PER_MS,
            "s" => NANOS_PER_SEC,
            "min" => NANOS_PER_MIN,
            "h" => NANOS_PER_HOUR,
            _ => return Err(err("unknown unit")),
        };
        let (int_part, frac_part) = match number.split_once('.') {
            Some((i, f)) => (i, f),
            None => (number, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err("missing number"));
        }
        if frac_part.contains('.') {
            return Err(err("malformed number"));
        }
        let int_value: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| err("malformed number"))?
        };
        let mut total = int_value.checked_mul(scale).ok_or_else(|| err("overflow"))?;
        // fractional digits: value = digits / 10^len, scaled
        let frac_digits = frac_part.trim_end_matches('0');
        if !frac_digits.is_empty() {
            let len = frac_digits.len() as u32;
            let denom = 10u128.checked_pow(len).ok_or_else(|| err("too many digits"))?;
            let digits: u128 = frac_digits.parse().map_err(|_| err("malformed number"))?;
            let scaled = digits * scale as u128;
            if !scaled.is_multiple_of(denom) {
                return Err(err("not a whole number of nanoseconds"));
            }
            let extra = u64::try_from(scaled / denom).map_err(|_| err("overflow"))?;
            total = total.checked_add(extra).ok_or_else(|| err("overflow"))?;
        }
        Ok(Duration(total))
    }
}

/// Minimum inter-arrival time of a stage; `Infinite` marks a one-shot stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterArrival {
    Finite(Duration),
    Infinite,
}

impl InterArrival {
    pub fn finite(self) -> Option<Duration> {
        match self {
            InterArrival::Finite(d) => Some(d),
            InterArrival::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, InterArrival::Infinite)
    }
}

impl From<Duration> for InterArrival {
    fn from(d: Duration) -> Self {
        InterArrival::Finite(d)
    }
}

impl fmt::Display for InterArrival {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterArrival::Finite(d) => d.fmt(f),
            InterArrival::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for InterArrival {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "inf" {
            Ok(InterArrival::Infinite)
        } else {
            s.parse().map(InterArrival::Finite)
        }
    }
}

/// Period in nanoseconds of an event stream at `hz` events per second,
/// floored to a whole nanosecond.
pub fn period_of_frequency(hz: &crate::Rational) -> Option<Duration> {
    use num::{BigInt, ToPrimitive, Zero};
    if hz <= &crate::Rational::zero() {
        return None;
    }
    let ns = (crate::Rational::from_integer(BigInt::from(NANOS_PER_SEC)) / hz).floor();
    ns.to_integer().to_u64().filter(|v| *v > 0).map(Duration)
}
