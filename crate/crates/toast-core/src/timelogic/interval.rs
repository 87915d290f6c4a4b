//! Exact one-dimensional interval sets over the delay axis.
//!
//! Projecting a guard onto the delays reachable from a valuation gives a
//! finite union of intervals with rational endpoints. Deadline-guard
//! correspondence, urgency, and reading checks compare such sets exactly
//! instead of sampling.

use std::fmt;

use num_rational::Ratio;

use crate::timelogic::clocks::{TimeValue, Valuation};
use crate::timelogic::constraint::Constraint;

type Rat = Ratio<i64>;

/// One interval of delays. `hi = None` means unbounded above.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rat,
    pub lo_closed: bool,
    pub hi: Option<Rat>,
    pub hi_closed: bool,
}

impl Interval {
    fn is_empty(&self) -> bool {
        match self.hi {
            None => false,
            Some(h) => {
                self.lo > h || (self.lo == h && !(self.lo_closed && self.hi_closed))
            }
        }
    }

    fn contains(&self, t: Rat) -> bool {
        let lo_ok = t > self.lo || (t == self.lo && self.lo_closed);
        let hi_ok = match self.hi {
            None => true,
            Some(h) => t < h || (t == h && self.hi_closed),
        };
        lo_ok && hi_ok
    }

    fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = match (self.hi, other.hi) {
            (None, None) => (None, false),
            (Some(h), None) => (Some(h), self.hi_closed),
            (None, Some(h)) => (Some(h), other.hi_closed),
            (Some(a), Some(b)) => {
                if a < b {
                    (Some(a), self.hi_closed)
                } else if b < a {
                    (Some(b), other.hi_closed)
                } else {
                    (Some(a), self.hi_closed && other.hi_closed)
                }
            }
        };
        Interval { lo, lo_closed, hi, hi_closed }
    }
}

/// A normalized, sorted, pairwise-disjoint union of intervals over `t >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: vec![] }
    }

    /// The full axis `[0, inf)`.
    pub fn all() -> Self {
        IntervalSet {
            parts: vec![Interval { lo: Ratio::from_integer(0), lo_closed: true, hi: None, hi_closed: false }],
        }
    }

    /// `[0, bound)` or `[0, bound]`.
    pub fn upto(bound: &TimeValue, closed: bool) -> Self {
        IntervalSet {
            parts: vec![Interval {
                lo: Ratio::from_integer(0),
                lo_closed: true,
                hi: Some(bound.ratio()),
                hi_closed: closed,
            }],
        }
        .normalized()
    }

    /// `{0}`, the window of a non-positive deadline.
    pub fn point_zero() -> Self {
        IntervalSet {
            parts: vec![Interval {
                lo: Ratio::from_integer(0),
                lo_closed: true,
                hi: Some(Ratio::from_integer(0)),
                hi_closed: true,
            }],
        }
    }

    fn from_parts(parts: Vec<Interval>) -> Self {
        IntervalSet { parts }.normalized()
    }

    fn normalized(mut self) -> Self {
        self.parts.retain(|p| !p.is_empty());
        self.parts.sort_by(|a, b| {
            a.lo.cmp(&b.lo).then_with(|| b.lo_closed.cmp(&a.lo_closed))
        });
        let mut merged: Vec<Interval> = Vec::new();
        for p in self.parts {
            if let Some(last) = merged.last_mut() {
                // merge when touching or overlapping
                let touching = match last.hi {
                    None => true,
                    Some(h) => {
                        p.lo < h
                            || (p.lo == h && (p.lo_closed || last.hi_closed))
                    }
                };
                if touching {
                    match (last.hi, p.hi) {
                        (None, _) => {}
                        (Some(a), None) => {
                            let _ = a;
                            last.hi = None;
                            last.hi_closed = false;
                        }
                        (Some(a), Some(b)) => {
                            if b > a || (b == a && p.hi_closed && !last.hi_closed) {
                                last.hi = Some(b);
                                last.hi_closed = p.hi_closed;
                            }
                        }
                    }
                    continue;
                }
            }
            merged.push(p);
        }
        IntervalSet { parts: merged }
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, t: &TimeValue) -> bool {
        self.parts.iter().any(|p| p.contains(t.ratio()))
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut parts = Vec::new();
        for a in &self.parts {
            for b in &other.parts {
                parts.push(a.intersect(b));
            }
        }
        IntervalSet::from_parts(parts)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        IntervalSet::from_parts(parts)
    }

    /// Complement within `[0, inf)`.
    pub fn complement(&self) -> IntervalSet {
        let mut parts = Vec::new();
        let mut lo = Ratio::from_integer(0);
        let mut lo_closed = true;
        for p in &self.parts {
            let gap = Interval {
                lo,
                lo_closed,
                hi: Some(p.lo),
                hi_closed: !p.lo_closed,
            };
            parts.push(gap);
            match p.hi {
                None => return IntervalSet::from_parts(parts),
                Some(h) => {
                    lo = h;
                    lo_closed = !p.hi_closed;
                }
            }
        }
        parts.push(Interval { lo, lo_closed, hi: None, hi_closed: false });
        IntervalSet::from_parts(parts)
    }

    /// The least element together with whether it is attained. An open
    /// lower endpoint is reported as not attained.
    pub fn infimum(&self) -> Option<(TimeValue, bool)> {
        self.parts.first().map(|p| {
            let tv = TimeValue::new(*p.lo.numer(), *p.lo.denom())
                .expect("delay-axis endpoints are non-negative");
            (tv, p.lo_closed)
        })
    }

    /// Lexicographic comparison of starting points: an attained start at `v`
    /// precedes a non-attained start at `v`.
    pub fn starts_strictly_before(&self, other: &IntervalSet) -> bool {
        match (self.infimum(), other.infimum()) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some((a, a_att)), Some((b, b_att))) => a < b || (a == b && a_att && !b_att),
        }
    }

    pub fn equals(&self, other: &IntervalSet) -> bool {
        self.parts == other.parts
    }

    /// Translates every interval up by a non-negative amount.
    pub fn shifted_up(&self, amount: &TimeValue) -> IntervalSet {
        let a = amount.ratio();
        IntervalSet {
            parts: self
                .parts
                .iter()
                .map(|p| Interval {
                    lo: p.lo + a,
                    lo_closed: p.lo_closed,
                    hi: p.hi.map(|h| h + a),
                    hi_closed: p.hi_closed,
                })
                .collect(),
        }
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "{{}}");
        }
        for (k, p) in self.parts.iter().enumerate() {
            if k > 0 {
                write!(f, " u ")?;
            }
            write!(f, "{}{}", if p.lo_closed { '[' } else { '(' }, p.lo)?;
            match p.hi {
                None => write!(f, ", inf)")?,
                Some(h) => write!(f, ", {}{}", h, if p.hi_closed { ']' } else { ')' })?,
            }
        }
        Ok(())
    }
}

/// The delay set `{ t >= 0 : nu + t |= delta }`, computed exactly.
/// Difference atoms are invariant under uniform delay, so they contribute
/// either the full axis or nothing.
pub fn delay_projection(nu: &Valuation, delta: &Constraint) -> IntervalSet {
    match delta {
        Constraint::True => IntervalSet::all(),
        Constraint::Gt(x, n) => match nu.get(x) {
            None => IntervalSet::empty(),
            Some(v) => {
                let b = Ratio::from_integer(*n as i64) - v.ratio();
                half_line_above(b, false)
            }
        },
        Constraint::EqC(x, n) => match nu.get(x) {
            None => IntervalSet::empty(),
            Some(v) => {
                let b = Ratio::from_integer(*n as i64) - v.ratio();
                if b < Ratio::from_integer(0) {
                    IntervalSet::empty()
                } else {
                    IntervalSet {
                        parts: vec![Interval { lo: b, lo_closed: true, hi: Some(b), hi_closed: true }],
                    }
                }
            }
        },
        Constraint::DiffGt(..) | Constraint::DiffEq(..) => {
            if delta.sat(nu) {
                IntervalSet::all()
            } else {
                IntervalSet::empty()
            }
        }
        Constraint::Not(d) => delay_projection(nu, d).complement(),
        Constraint::And(a, b) => delay_projection(nu, a).intersect(&delay_projection(nu, b)),
    }
}

fn half_line_above(bound: Rat, closed: bool) -> IntervalSet {
    let zero = Ratio::from_integer(0);
    let (lo, lo_closed) = if bound < zero {
        (zero, true)
    } else {
        (bound, closed)
    };
    IntervalSet { parts: vec![Interval { lo, lo_closed, hi: None, hi_closed: false }] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timelogic::clocks::ClockId;

    fn nu(pairs: &[(&str, i64, i64)]) -> Valuation {
        Valuation::from_map(
            pairs
                .iter()
                .map(|(n, a, b)| (ClockId::new(*n), TimeValue::new(*a, *b).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn projection_of_interval_guard() {
        // from x=1.5, guard 3<x<5 holds for t in (1.5, 3.5)
        let s = delay_projection(&nu(&[("x", 3, 2)]), &Constraint::between(3, "x", 5));
        assert!(!s.contains(&TimeValue::new(3, 2).unwrap()));
        assert!(s.contains(&TimeValue::new(2, 1).unwrap()));
        assert!(!s.contains(&TimeValue::new(7, 2).unwrap()));
        assert_eq!(s.infimum().unwrap(), (TimeValue::new(3, 2).unwrap(), false));
    }

    #[test]
    fn projection_matches_pointwise_evaluation() {
        let v = nu(&[("x", 1, 2), ("y", 0, 1)]);
        let delta = Constraint::and(
            Constraint::or(Constraint::lt("x", 2), Constraint::gt("y", 4)),
            Constraint::not(Constraint::eq("x", 1)),
        );
        let s = delay_projection(&v, &delta);
        for k in 0..24 {
            let t = TimeValue::new(k, 4).unwrap();
            assert_eq!(s.contains(&t), delta.sat(&v.advance(&t)), "t={t}");
        }
    }

    #[test]
    fn complement_and_union_round_trip() {
        let s = IntervalSet::upto(&TimeValue::from_nat(3), false);
        let c = s.complement();
        assert!(s.union(&c).equals(&IntervalSet::all()));
        assert!(s.intersect(&c).is_empty());
    }

    #[test]
    fn deadline_windows() {
        let lt3 = IntervalSet::upto(&TimeValue::from_nat(3), false);
        assert!(lt3.contains(&TimeValue::new(5, 2).unwrap()));
        assert!(!lt3.contains(&TimeValue::from_nat(3)));
        let le3 = IntervalSet::upto(&TimeValue::from_nat(3), true);
        assert!(le3.contains(&TimeValue::from_nat(3)));
        let pz = IntervalSet::point_zero();
        assert!(pz.contains(&TimeValue::ZERO));
        assert!(!pz.contains(&TimeValue::new(1, 2).unwrap()));
    }

    #[test]
    fn starts_strictly_before_orders_attained_first() {
        let open3 = delay_projection(&nu(&[("x", 0, 1)]), &Constraint::gt("x", 3));
        let closed0 = IntervalSet::all();
        assert!(closed0.starts_strictly_before(&open3));
        assert!(!open3.starts_strictly_before(&closed0));
    }
}
