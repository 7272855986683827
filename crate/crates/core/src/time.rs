//! Integer-nanosecond simulation time.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

const NANOS_PER_SEC: u64 = 1_000_000_000;
const NANOS_PER_MILLI: u64 = 1_000_000;

/// A point on (or a span of) the simulation timeline, in nanoseconds since start.
///
/// Arithmetic through the operators panics on overflow/underflow; use the
/// `checked_*` variants where the operands come from user input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * NANOS_PER_MILLI)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * NANOS_PER_SEC)
    }

    /// Converts fractional seconds, rounding half-up to the nearest nanosecond.
    ///
    /// Returns `None` for negative, non-finite or out-of-range inputs.
    pub fn try_from_secs_f64(s: f64) -> Option<Self> {
        if !s.is_finite() || s < 0.0 {
            return None;
        }
        let ns = (s * NANOS_PER_SEC as f64 + 0.5).floor();
        if ns >= u64::MAX as f64 {
            return None;
        }
        Some(SimTime(ns as u64))
    }

    /// Like [`SimTime::try_from_secs_f64`] but panics on invalid input.
    pub fn from_secs_f64(s: f64) -> Self {
        Self::try_from_secs_f64(s).unwrap_or_else(|| panic!("invalid time {s} s"))
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        Self::from_secs_f64(ms / 1e3)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_MILLI as f64
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Signed difference `self - rhs` in nanoseconds.
    pub fn signed_diff(self, rhs: SimTime) -> i128 {
        self.0 as i128 - rhs.0 as i128
    }
}

/// `round(num / den)` with ties rounded up, for non-negative integers.
pub(crate) fn div_round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Time tag of the `k`-th sample of a `rate_hz` periodic reporting grid,
/// i.e. `round(k / rate_hz)` seconds on the nanosecond grid.
pub fn periodic_tick(k: u64, rate_hz: u32) -> SimTime {
    SimTime(div_round_half_up(k as u128 * NANOS_PER_SEC as u128, rate_hz as u128) as u64)
}

/// Index of the first tick of a `rate_hz` grid at or after `t`.
pub fn first_tick_at_or_after(t: SimTime, rate_hz: u32) -> u64 {
    let mut k = (t.0 as u128 * rate_hz as u128 / NANOS_PER_SEC as u128) as u64;
    while periodic_tick(k, rate_hz) < t {
        k += 1;
    }
    while k > 0 && periodic_tick(k - 1, rate_hz) >= t {
        k -= 1;
    }
    k
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        self.checked_add(rhs).expect("SimTime overflow")
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        self.checked_sub(rhs).expect("SimTime underflow")
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}s", self.0 / NANOS_PER_SEC, self.0 % NANOS_PER_SEC)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(SimTime::from_secs_f64(1.5e-9), SimTime::from_nanos(2));
        assert_eq!(SimTime::from_secs_f64(1.49e-9), SimTime::from_nanos(1));
        assert_eq!(div_round_half_up(5, 2), 3);
        assert_eq!(div_round_half_up(4, 2), 2);
        assert!(SimTime::try_from_secs_f64(-1.0).is_none());
        assert!(SimTime::try_from_secs_f64(f64::NAN).is_none());
    }

    #[test]
    fn pmu_grid_ticks() {
        assert_eq!(periodic_tick(0, 30), SimTime::ZERO);
        assert_eq!(periodic_tick(1, 30), SimTime::from_nanos(33_333_333));
        assert_eq!(periodic_tick(2, 30), SimTime::from_nanos(66_666_667));
        assert_eq!(periodic_tick(33, 30), SimTime::from_millis(1100));
        assert_eq!(periodic_tick(30, 30), SimTime::from_secs(1));
        assert_eq!(first_tick_at_or_after(SimTime::from_millis(1100), 30), 33);
        assert_eq!(first_tick_at_or_after(SimTime::from_nanos(1_100_000_001), 30), 34);
        assert_eq!(first_tick_at_or_after(SimTime::ZERO, 30), 0);
    }

    #[test]
    fn checked_arithmetic() {
        assert!(SimTime::MAX.checked_add(SimTime::from_nanos(1)).is_none());
        assert!(SimTime::ZERO.checked_sub(SimTime::from_nanos(1)).is_none());
        assert_eq!(SimTime::from_millis(5).to_string(), "0.005000000s");
    }
}
