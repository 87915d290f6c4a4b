//! The clock-constraint grammar and direct satisfaction.
//!
//! A constraint is `true | x>n | x=n | x-y>n | x-y=n | !d | d && d` with
//! natural constants. Everything else (`x<n`, `x<=n`, `x>=n`, `a<x<b`,
//! disjunction) is sugar built from negation and conjunction.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::timelogic::clocks::{ClockId, TimeValue, Valuation};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    True,
    /// `x > n`
    Gt(ClockId, u64),
    /// `x = n`
    EqC(ClockId, u64),
    /// `x - y > n`
    DiffGt(ClockId, ClockId, u64),
    /// `x - y = n`
    DiffEq(ClockId, ClockId, u64),
    Not(Box<Constraint>),
    And(Box<Constraint>, Box<Constraint>),
}

impl Constraint {
    pub fn and(a: Constraint, b: Constraint) -> Constraint {
        Constraint::And(Box::new(a), Box::new(b))
    }

    pub fn not(a: Constraint) -> Constraint {
        Constraint::Not(Box::new(a))
    }

    /// `a || b` desugared as `!(!a && !b)`.
    pub fn or(a: Constraint, b: Constraint) -> Constraint {
        Constraint::not(Constraint::and(Constraint::not(a), Constraint::not(b)))
    }

    /// `x < n` desugared as `!(x>n) && !(x=n)`.
    pub fn lt(x: impl Into<ClockId>, n: u64) -> Constraint {
        let x = x.into();
        Constraint::and(
            Constraint::not(Constraint::Gt(x.clone(), n)),
            Constraint::not(Constraint::EqC(x, n)),
        )
    }

    /// `x <= n` desugared as `!(x>n)`.
    pub fn le(x: impl Into<ClockId>, n: u64) -> Constraint {
        Constraint::not(Constraint::Gt(x.into(), n))
    }

    /// `x >= n` desugared as `x>n || x=n`.
    pub fn ge(x: impl Into<ClockId>, n: u64) -> Constraint {
        let x = x.into();
        Constraint::or(Constraint::Gt(x.clone(), n), Constraint::EqC(x, n))
    }

    /// `a < x < b`.
    pub fn between(a: u64, x: impl Into<ClockId>, b: u64) -> Constraint {
        let x = x.into();
        Constraint::and(Constraint::Gt(x.clone(), a), Constraint::lt(x, b))
    }

    pub fn gt(x: impl Into<ClockId>, n: u64) -> Constraint {
        Constraint::Gt(x.into(), n)
    }

    pub fn eq(x: impl Into<ClockId>, n: u64) -> Constraint {
        Constraint::EqC(x.into(), n)
    }

    /// The unsatisfiable constraint, spelled `!true`.
    pub fn falsum() -> Constraint {
        Constraint::not(Constraint::True)
    }

    /// Every clock syntactically occurring in the constraint.
    pub fn clocks(&self) -> BTreeSet<ClockId> {
        let mut out = BTreeSet::new();
        self.collect_clocks(&mut out);
        out
    }

    fn collect_clocks(&self, out: &mut BTreeSet<ClockId>) {
        match self {
            Constraint::True => {}
            Constraint::Gt(x, _) | Constraint::EqC(x, _) => {
                out.insert(x.clone());
            }
            Constraint::DiffGt(x, y, _) | Constraint::DiffEq(x, y, _) => {
                out.insert(x.clone());
                out.insert(y.clone());
            }
            Constraint::Not(d) => d.collect_clocks(out),
            Constraint::And(a, b) => {
                a.collect_clocks(out);
                b.collect_clocks(out);
            }
        }
    }

    /// Largest natural constant in any atom; 0 when there is none.
    pub fn max_constant(&self) -> u64 {
        match self {
            Constraint::True => 0,
            Constraint::Gt(_, n) | Constraint::EqC(_, n) => *n,
            Constraint::DiffGt(_, _, n) | Constraint::DiffEq(_, _, n) => *n,
            Constraint::Not(d) => d.max_constant(),
            Constraint::And(a, b) => a.max_constant().max(b.max_constant()),
        }
    }

    /// Standard satisfaction `nu |= delta`. Clocks missing from `nu` make an
    /// atom false rather than erroring; callers keep domains aligned.
    pub fn sat(&self, nu: &Valuation) -> bool {
        match self {
            Constraint::True => true,
            Constraint::Gt(x, n) => nu
                .get(x)
                .map(|v| v.cmp_nat(*n) == std::cmp::Ordering::Greater)
                .unwrap_or(false),
            Constraint::EqC(x, n) => nu
                .get(x)
                .map(|v| v.cmp_nat(*n) == std::cmp::Ordering::Equal)
                .unwrap_or(false),
            Constraint::DiffGt(x, y, n) => match (nu.get(x), nu.get(y)) {
                (Some(vx), Some(vy)) => {
                    vx.ratio() - vy.ratio() > num_rational::Ratio::from_integer(*n as i64)
                }
                _ => false,
            },
            Constraint::DiffEq(x, y, n) => match (nu.get(x), nu.get(y)) {
                (Some(vx), Some(vy)) => {
                    vx.ratio() - vy.ratio() == num_rational::Ratio::from_integer(*n as i64)
                }
                _ => false,
            },
            Constraint::Not(d) => !d.sat(nu),
            Constraint::And(a, b) => a.sat(nu) && b.sat(nu),
        }
    }

    /// Treats the constraint as a predicate on a single delay variable and
    /// evaluates it at `t` (every syntactic clock is bound to `t`).
    pub fn sat_delay(&self, t: &TimeValue) -> bool {
        let nu = Valuation::from_map(self.clocks().into_iter().map(|c| (c, *t)).collect());
        self.sat(&nu)
    }
}

impl Constraint {
    /// Renders the desugared encodings of `x<n`, `x<=n`, `x>=n`, and
    /// `a<x<b` back in their surface spelling. The parser reproduces the
    /// identical tree from these spellings, so display stays round-trip
    /// stable.
    fn sugar(&self) -> Option<String> {
        match self {
            // x<n is !(x>n) && !(x=n)
            Constraint::And(a, b) => {
                if let (Constraint::Not(p), Constraint::Not(q)) = (&**a, &**b) {
                    if let (Constraint::Gt(x1, n1), Constraint::EqC(x2, n2)) = (&**p, &**q) {
                        if x1 == x2 && n1 == n2 {
                            return Some(format!("{x1}<{n1}"));
                        }
                    }
                }
                // a<x<b is x>a && (!(x>b) && !(x=b))
                if let (Constraint::Gt(x1, lo), Constraint::And(p, q)) = (&**a, &**b) {
                    if let (Constraint::Not(p), Constraint::Not(q)) = (&**p, &**q) {
                        if let (Constraint::Gt(x2, hi1), Constraint::EqC(x3, hi2)) = (&**p, &**q) {
                            if x1 == x2 && x2 == x3 && hi1 == hi2 {
                                return Some(format!("{lo}<{x1}<{hi1}"));
                            }
                        }
                    }
                }
                None
            }
            Constraint::Not(d) => match &**d {
                // x<=n is !(x>n)
                Constraint::Gt(x, n) => Some(format!("{x}<={n}")),
                // x>=n is !(!(x>n) && !(x=n))
                Constraint::And(a, b) => {
                    if let (Constraint::Not(p), Constraint::Not(q)) = (&**a, &**b) {
                        if let (Constraint::Gt(x1, n1), Constraint::EqC(x2, n2)) = (&**p, &**q) {
                            if x1 == x2 && n1 == n2 {
                                return Some(format!("{x1}>={n1}"));
                            }
                        }
                    }
                    None
                }
                _ => None,
            },
            _ => None,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = self.sugar() {
            return write!(f, "{s}");
        }
        match self {
            Constraint::True => write!(f, "true"),
            Constraint::Gt(x, n) => write!(f, "{x}>{n}"),
            Constraint::EqC(x, n) => write!(f, "{x}={n}"),
            Constraint::DiffGt(x, y, n) => write!(f, "{x}-{y}>{n}"),
            Constraint::DiffEq(x, y, n) => write!(f, "{x}-{y}={n}"),
            Constraint::Not(d) => match **d {
                Constraint::And(..) => write!(f, "!({d})"),
                _ => write!(f, "!{d}"),
            },
            Constraint::And(a, b) => {
                let wrap = |c: &Constraint, f: &mut fmt::Formatter<'_>| match c {
                    Constraint::And(..) if c.sugar().is_none() => write!(f, "({c})"),
                    _ => write!(f, "{c}"),
                };
                wrap(a, f)?;
                write!(f, " && ")?;
                wrap(b, f)
            }
        }
    }
}

/// The half-integer grid `{0, 1/2, 1, ..., M, M+1/2, M+1}`.
pub fn half_grid(max_constant: u64) -> Vec<TimeValue> {
    (0..=2 * (max_constant + 1)).map(TimeValue::halves).collect()
}

/// All representative delays in the grid up to `M+1` satisfying `delta`,
/// read as a predicate on the delay variable. Truth of every atom is
/// constant beyond the maximal constant, so `M+1` stands in for all larger
/// delays when `delta` is unbounded.
pub fn representative_delays(delta: &Constraint, max_constant: u64) -> Vec<TimeValue> {
    half_grid(max_constant)
        .into_iter()
        .filter(|t| delta.sat_delay(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(pairs: &[(&str, i64, i64)]) -> Valuation {
        Valuation::from_map(
            pairs
                .iter()
                .map(|(n, a, b)| (ClockId::new(*n), TimeValue::new(*a, *b).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn sat_sugar_lt() {
        assert!(Constraint::lt("x", 5).sat(&v(&[("x", 0, 1)])));
        assert!(!Constraint::lt("x", 5).sat(&v(&[("x", 5, 1)])));
    }

    #[test]
    fn sat_open_interval() {
        let c = Constraint::between(3, "x", 5);
        assert!(c.sat(&v(&[("x", 4, 1)])));
        assert!(!c.sat(&v(&[("x", 3, 1)])));
        assert!(!c.sat(&v(&[("x", 5, 1)])));
    }

    #[test]
    fn sat_strict_bound() {
        assert!(!Constraint::gt("x", 3).sat(&v(&[("x", 3, 1)])));
        assert!(Constraint::gt("x", 3).sat(&v(&[("x", 7, 2)])));
    }

    #[test]
    fn sat_difference_atoms() {
        let c = Constraint::DiffGt(ClockId::new("x"), ClockId::new("y"), 1);
        assert!(c.sat(&v(&[("x", 3, 1), ("y", 1, 1)])));
        assert!(!c.sat(&v(&[("x", 2, 1), ("y", 1, 1)])));
        let e = Constraint::DiffEq(ClockId::new("x"), ClockId::new("y"), 2);
        assert!(e.sat(&v(&[("x", 7, 2), ("y", 3, 2)])));
    }

    #[test]
    fn max_constant_examples() {
        assert_eq!(Constraint::between(3, "x", 5).max_constant(), 5);
        assert_eq!(Constraint::True.max_constant(), 0);
    }

    #[test]
    fn representative_delays_bounded() {
        let d = Constraint::le("t", 4);
        let out = representative_delays(&d, 4);
        let expected: Vec<TimeValue> = (0..=8).map(TimeValue::halves).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn representative_delays_contradiction() {
        let d = Constraint::and(Constraint::lt("t", 3), Constraint::gt("t", 3));
        assert!(representative_delays(&d, 3).is_empty());
    }

    #[test]
    fn representative_delays_unbounded_includes_witness() {
        let out = representative_delays(&Constraint::True, 2);
        let expected: Vec<TimeValue> = (0..=6).map(TimeValue::halves).collect();
        assert_eq!(out, expected);
        assert_eq!(*out.last().unwrap(), TimeValue::from_nat(3));
    }
}
