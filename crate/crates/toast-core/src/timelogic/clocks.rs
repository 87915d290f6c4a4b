//! Clocks, exact time values, and clock valuations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::timelogic::TimeError;

/// A named clock. Names are interned per type definition; the valuation
/// domain is the finite set of clocks occurring in the types under analysis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClockId(String);

impl ClockId {
    pub fn new(name: impl Into<String>) -> Self {
        ClockId(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for ClockId {
    fn from(s: &str) -> Self {
        ClockId::new(s)
    }
}

/// A non-negative time quantity with exact rational arithmetic.
///
/// Urgency and persistency checks compare strict against non-strict bounds,
/// so no floating point is used anywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeValue(Ratio<i64>);

impl TimeValue {
    pub const ZERO: TimeValue = TimeValue(Ratio::new_raw(0, 1));

    pub fn new(numer: i64, denom: i64) -> Result<Self, TimeError> {
        if denom == 0 {
            return Err(TimeError::ZeroDenominator);
        }
        let r = Ratio::new(numer, denom);
        if r.is_negative() {
            return Err(TimeError::NegativeTime(format!("{r}")));
        }
        Ok(TimeValue(r))
    }

    pub fn from_nat(n: u64) -> Self {
        TimeValue(Ratio::from_integer(n as i64))
    }

    /// Half-integer constructor used by the representative-delay grid.
    pub fn halves(n: u64) -> Self {
        TimeValue(Ratio::new(n as i64, 2))
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, other: &TimeValue) -> TimeValue {
        TimeValue(self.0 + other.0)
    }

    /// `self - other`, defined only when the result stays non-negative.
    pub fn checked_sub(&self, other: &TimeValue) -> Option<TimeValue> {
        let r = self.0 - other.0;
        if r.is_negative() {
            None
        } else {
            Some(TimeValue(r))
        }
    }

    /// Smallest natural number `>=` this value.
    pub fn ceil_nat(&self) -> u64 {
        self.0.ceil().to_integer().max(0) as u64
    }

    pub fn cmp_nat(&self, n: u64) -> std::cmp::Ordering {
        self.0.cmp(&Ratio::from_integer(n as i64))
    }
}

impl fmt::Display for TimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for TimeValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TimeValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let mut parts = text.splitn(2, '/');
        let numer: i64 = parts
            .next()
            .unwrap_or("0")
            .parse()
            .map_err(serde::de::Error::custom)?;
        let denom: i64 = match parts.next() {
            Some(p) => p.parse().map_err(serde::de::Error::custom)?,
            None => 1,
        };
        TimeValue::new(numer, denom).map_err(serde::de::Error::custom)
    }
}

/// A total map from the declared clock set to time values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Valuation {
    assignment: BTreeMap<ClockId, TimeValue>,
}

impl Valuation {
    /// The initial valuation mapping every declared clock to zero.
    pub fn zero(clocks: impl IntoIterator<Item = ClockId>) -> Self {
        Valuation {
            assignment: clocks
                .into_iter()
                .map(|c| (c, TimeValue::ZERO))
                .collect(),
        }
    }

    pub fn from_map(assignment: BTreeMap<ClockId, TimeValue>) -> Self {
        Valuation { assignment }
    }

    pub fn clocks(&self) -> impl Iterator<Item = &ClockId> {
        self.assignment.keys()
    }

    pub fn get(&self, clock: &ClockId) -> Option<&TimeValue> {
        self.assignment.get(clock)
    }

    /// `nu + t`: every clock advances by the same amount.
    pub fn advance(&self, t: &TimeValue) -> Valuation {
        Valuation {
            assignment: self
                .assignment
                .iter()
                .map(|(c, v)| (c.clone(), v.add(t)))
                .collect(),
        }
    }

    /// `nu[lambda -> 0]`: clocks in `lambda` are zeroed, the rest unchanged.
    pub fn reset(&self, lambda: &BTreeSet<ClockId>) -> Result<Valuation, TimeError> {
        for c in lambda {
            if !self.assignment.contains_key(c) {
                return Err(TimeError::UnknownClock(c.name().to_string()));
            }
        }
        Ok(Valuation {
            assignment: self
                .assignment
                .iter()
                .map(|(c, v)| {
                    let v = if lambda.contains(c) { TimeValue::ZERO } else { *v };
                    (c.clone(), v)
                })
                .collect(),
        })
    }

    /// Extends the domain with `clock -> 0` when absent.
    pub fn ensure_clock(&mut self, clock: &ClockId) {
        self.assignment
            .entry(clock.clone())
            .or_insert(TimeValue::ZERO);
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (c, v)) in self.assignment.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}:{v}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(pairs: &[(&str, i64, i64)]) -> Valuation {
        Valuation::from_map(
            pairs
                .iter()
                .map(|(n, a, b)| (ClockId::new(*n), TimeValue::new(*a, *b).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn advance_from_zero_is_uniform_shift() {
        let nu0 = Valuation::zero([ClockId::new("x"), ClockId::new("y")]);
        let shifted = nu0.advance(&TimeValue::from_nat(3));
        assert_eq!(shifted, val(&[("x", 3, 1), ("y", 3, 1)]));
    }

    #[test]
    fn advance_zero_is_identity() {
        let nu = val(&[("x", 1, 1), ("y", 2, 1)]);
        assert_eq!(nu.advance(&TimeValue::ZERO), nu);
    }

    #[test]
    fn advance_is_componentwise() {
        let nu = val(&[("x", 1, 1), ("y", 2, 1)]);
        let shifted = nu.advance(&TimeValue::new(3, 2).unwrap());
        assert_eq!(shifted, val(&[("x", 5, 2), ("y", 7, 2)]));
    }

    #[test]
    fn reset_zeroes_selected_clocks() {
        let nu = val(&[("x", 4, 1), ("y", 2, 1)]);
        let out = nu.reset(&[ClockId::new("x")].into_iter().collect()).unwrap();
        assert_eq!(out, val(&[("x", 0, 1), ("y", 2, 1)]));
    }

    #[test]
    fn reset_empty_is_identity() {
        let nu = val(&[("x", 4, 1), ("y", 2, 1)]);
        assert_eq!(nu.reset(&BTreeSet::new()).unwrap(), nu);
    }

    #[test]
    fn reset_of_zero_valuation_is_zero() {
        let nu0 = Valuation::zero([ClockId::new("x"), ClockId::new("y")]);
        let lambda: BTreeSet<_> = [ClockId::new("x"), ClockId::new("y")].into_iter().collect();
        assert_eq!(nu0.reset(&lambda).unwrap(), nu0);
    }

    #[test]
    fn reset_unknown_clock_errors() {
        let nu = val(&[("x", 4, 1)]);
        let lambda: BTreeSet<_> = [ClockId::new("zz")].into_iter().collect();
        assert!(nu.reset(&lambda).is_err());
    }

    #[test]
    fn reset_is_idempotent_and_advance_associates() {
        let nu = val(&[("x", 4, 1), ("y", 2, 1)]);
        let lambda: BTreeSet<_> = [ClockId::new("x")].into_iter().collect();
        let once = nu.reset(&lambda).unwrap();
        assert_eq!(once.reset(&lambda).unwrap(), once);

        let s = TimeValue::new(1, 2).unwrap();
        let t = TimeValue::new(5, 2).unwrap();
        assert_eq!(nu.advance(&s).advance(&t), nu.advance(&s.add(&t)));
    }
}
