//! The session type AST with duality, substitution, unfolding, and
//! unfold-equivalence.
//!
//! Types are immutable; share freely across threads.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timelogic::{ClockId, Constraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Send,
    Recv,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Send => Direction::Recv,
            Direction::Recv => Direction::Send,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Direction::Send => '!',
            Direction::Recv => '?',
        }
    }
}

/// Payload sorts. `Delegate` carries the initialization constraint and the
/// delegated protocol of a higher-order payload.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sort {
    Nat,
    Bool,
    Str,
    None,
    Delegate(Constraint, Box<SessionType>),
}

impl Sort {
    pub fn is_base(&self) -> bool {
        !matches!(self, Sort::Delegate(..))
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Nat => write!(f, "nat"),
            Sort::Bool => write!(f, "bool"),
            Sort::Str => write!(f, "string"),
            Sort::None => write!(f, "none"),
            Sort::Delegate(d, s) => write!(f, "({d}, {s})"),
        }
    }
}

/// One option of a choice: `(!|?) label<payload>(guard, {resets}).continuation`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeOption {
    pub direction: Direction,
    pub label: String,
    pub payload: Sort,
    pub guard: Constraint,
    pub resets: BTreeSet<ClockId>,
    pub continuation: SessionType,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionType {
    Choice(Vec<TypeOption>),
    Rec(String, Box<SessionType>),
    Var(String),
    End,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("unfold applied to non-recursive type")]
    UnfoldNonRec,
    #[error("duplicate label `{0}` in choice")]
    DuplicateLabel(String),
    #[error("empty choice")]
    EmptyChoice,
    #[error("type is not contractive at `{0}`")]
    NotContractive(String),
    #[error("free recursion variable `{0}`")]
    FreeVariable(String),
}

static FRESH: AtomicU64 = AtomicU64::new(0);

fn fresh_name(base: &str) -> String {
    let n = FRESH.fetch_add(1, Ordering::Relaxed);
    let stem = base.split('#').next().unwrap_or(base);
    format!("{stem}#{n}")
}

impl SessionType {
    pub fn rec(var: impl Into<String>, body: SessionType) -> SessionType {
        SessionType::Rec(var.into(), Box::new(body))
    }

    pub fn var(name: impl Into<String>) -> SessionType {
        SessionType::Var(name.into())
    }

    /// The co-type: all directions flipped, everything else unchanged.
    pub fn dual(&self) -> SessionType {
        match self {
            SessionType::End => SessionType::End,
            SessionType::Var(a) => SessionType::Var(a.clone()),
            SessionType::Rec(a, body) => SessionType::rec(a.clone(), body.dual()),
            SessionType::Choice(opts) => SessionType::Choice(
                opts.iter()
                    .map(|o| TypeOption { direction: o.direction.flip(), continuation: o.continuation.dual(), ..o.clone() })
                    .collect(),
            ),
        }
    }

    /// Free recursion variables.
    pub fn free_names(&self) -> BTreeSet<String> {
        match self {
            SessionType::End => BTreeSet::new(),
            SessionType::Var(a) => [a.clone()].into_iter().collect(),
            SessionType::Rec(a, body) => {
                let mut fn_ = body.free_names();
                fn_.remove(a);
                fn_
            }
            SessionType::Choice(opts) => opts
                .iter()
                .flat_map(|o| o.continuation.free_names())
                .collect(),
        }
    }

    /// Capture-avoiding substitution `self[replacement/var]`. Bound
    /// variables that would capture free names of `replacement` are
    /// freshened first.
    pub fn substitute(&self, var: &str, replacement: &SessionType) -> SessionType {
        match self {
            SessionType::End => SessionType::End,
            SessionType::Var(a) => {
                if a == var {
                    replacement.clone()
                } else {
                    SessionType::Var(a.clone())
                }
            }
            SessionType::Rec(a, body) => {
                if a == var {
                    // var is shadowed here
                    SessionType::rec(a.clone(), (**body).clone())
                } else if replacement.free_names().contains(a) && body.free_names().contains(var) {
                    let fresh = fresh_name(a);
                    let renamed = body.substitute(a, &SessionType::Var(fresh.clone()));
                    SessionType::rec(fresh, renamed.substitute(var, replacement))
                } else {
                    SessionType::rec(a.clone(), body.substitute(var, replacement))
                }
            }
            SessionType::Choice(opts) => SessionType::Choice(
                opts.iter()
                    .map(|o| TypeOption {
                        continuation: o.continuation.substitute(var, replacement),
                        ..o.clone()
                    })
                    .collect(),
            ),
        }
    }

    /// One unfolding of a top-level recursion.
    pub fn unfold(&self) -> Result<SessionType, TypeError> {
        match self {
            SessionType::Rec(a, body) => Ok(body.substitute(a, self)),
            _ => Err(TypeError::UnfoldNonRec),
        }
    }

    /// Unfolds top-level recursions until the head is a choice, `end`, or a
    /// variable. Terminates on contractive types. Memoized: the semantics
    /// and the checker unfold the same heads at every visited state.
    pub fn unfold_head(&self) -> SessionType {
        if !matches!(self, SessionType::Rec(..)) {
            return self.clone();
        }
        thread_local! {
            static HEADS: std::cell::RefCell<std::collections::BTreeMap<SessionType, SessionType>> =
                std::cell::RefCell::new(std::collections::BTreeMap::new());
        }
        if let Some(hit) = HEADS.with(|c| c.borrow().get(self).cloned()) {
            return hit;
        }
        let mut t = self.clone();
        while let SessionType::Rec(..) = t {
            t = t.unfold().expect("head is Rec");
        }
        HEADS.with(|c| c.borrow_mut().insert(self.clone(), t.clone()));
        t
    }

    /// Decides unfold-equivalence by coinductive comparison with a visited
    /// pair set. Options are matched by label; order inside a choice is not
    /// semantically meaningful. Results are memoized: the checker probes
    /// the same pairs at every call site and visited state.
    pub fn unfold_equiv(&self, other: &SessionType) -> bool {
        thread_local! {
            static EQUIV: std::cell::RefCell<BTreeSet<(SessionType, SessionType)>> =
                std::cell::RefCell::new(BTreeSet::new());
            static INEQUIV: std::cell::RefCell<BTreeSet<(SessionType, SessionType)>> =
                std::cell::RefCell::new(BTreeSet::new());
        }
        let key = (self.clone(), other.clone());
        if EQUIV.with(|c| c.borrow().contains(&key)) {
            return true;
        }
        if INEQUIV.with(|c| c.borrow().contains(&key)) {
            return false;
        }
        let out = self.unfold_equiv_uncached(other);
        if out {
            EQUIV.with(|c| c.borrow_mut().insert(key));
        } else {
            INEQUIV.with(|c| c.borrow_mut().insert(key));
        }
        out
    }

    fn unfold_equiv_uncached(&self, other: &SessionType) -> bool {
        fn go(a: &SessionType, b: &SessionType, seen: &mut BTreeSet<(SessionType, SessionType)>) -> bool {
            let key = (a.clone(), b.clone());
            if !seen.insert(key) {
                return true;
            }
            let ua = a.unfold_head();
            let ub = b.unfold_head();
            match (&ua, &ub) {
                (SessionType::End, SessionType::End) => true,
                (SessionType::Var(x), SessionType::Var(y)) => x == y,
                (SessionType::Choice(xs), SessionType::Choice(ys)) => {
                    if xs.len() != ys.len() {
                        return false;
                    }
                    for x in xs {
                        let Some(y) = ys.iter().find(|y| y.label == x.label) else {
                            return false;
                        };
                        if x.direction != y.direction
                            || x.guard != y.guard
                            || x.resets != y.resets
                            || !sorts_equiv(&x.payload, &y.payload, seen)
                            || !go(&x.continuation, &y.continuation, seen)
                        {
                            return false;
                        }
                    }
                    true
                }
                _ => false,
            }
        }
        fn sorts_equiv(
            a: &Sort,
            b: &Sort,
            seen: &mut BTreeSet<(SessionType, SessionType)>,
        ) -> bool {
            match (a, b) {
                (Sort::Delegate(d1, s1), Sort::Delegate(d2, s2)) => d1 == d2 && go(s1, s2, seen),
                _ => a == b,
            }
        }
        go(self, other, &mut BTreeSet::new())
    }

    /// `S` is final when it is `end` up to unfolding. Memoized: finality is
    /// probed at every visited state of the explorers.
    pub fn is_end(&self) -> bool {
        thread_local! {
            static IS_END: std::cell::RefCell<std::collections::BTreeMap<SessionType, bool>> =
                std::cell::RefCell::new(std::collections::BTreeMap::new());
        }
        if let Some(hit) = IS_END.with(|c| c.borrow().get(self).copied()) {
            return hit;
        }
        let out = self.unfold_equiv(&SessionType::End);
        IS_END.with(|c| c.borrow_mut().insert(self.clone(), out));
        out
    }

    /// Clocks occurring in guards and reset sets of this session (the
    /// delegated payload protocols live in their own clock namespaces).
    pub fn clocks(&self) -> BTreeSet<ClockId> {
        match self {
            SessionType::End | SessionType::Var(_) => BTreeSet::new(),
            SessionType::Rec(_, body) => body.clocks(),
            SessionType::Choice(opts) => {
                let mut out = BTreeSet::new();
                for o in opts {
                    out.extend(o.guard.clocks());
                    out.extend(o.resets.iter().cloned());
                    out.extend(o.continuation.clocks());
                }
                out
            }
        }
    }

    /// Largest natural constant anywhere in the type, including delegated
    /// payloads.
    pub fn max_constant(&self) -> u64 {
        match self {
            SessionType::End | SessionType::Var(_) => 0,
            SessionType::Rec(_, body) => body.max_constant(),
            SessionType::Choice(opts) => opts
                .iter()
                .map(|o| {
                    let payload = match &o.payload {
                        Sort::Delegate(d, s) => d.max_constant().max(s.max_constant()),
                        _ => 0,
                    };
                    o.guard
                        .max_constant()
                        .max(payload)
                        .max(o.continuation.max_constant())
                })
                .max()
                .unwrap_or(0),
        }
    }

    /// Structural checks applied at parse time: non-empty choices, pairwise
    /// distinct labels, contractivity, and closedness.
    pub fn validate_closed(&self) -> Result<(), TypeError> {
        self.validate_inner()?;
        if let Some(a) = self.free_names().into_iter().next() {
            return Err(TypeError::FreeVariable(a));
        }
        Ok(())
    }

    fn validate_inner(&self) -> Result<(), TypeError> {
        match self {
            SessionType::End | SessionType::Var(_) => Ok(()),
            SessionType::Rec(a, body) => {
                // strip nested recs; a bound variable at the head means the
                // unfolding never reaches a communication
                let mut head = &**body;
                while let SessionType::Rec(_, inner) = head {
                    head = inner;
                }
                if let SessionType::Var(v) = head {
                    if v == a {
                        return Err(TypeError::NotContractive(a.clone()));
                    }
                }
                body.validate_inner()
            }
            SessionType::Choice(opts) => {
                if opts.is_empty() {
                    return Err(TypeError::EmptyChoice);
                }
                let mut labels = BTreeSet::new();
                for o in opts {
                    if !labels.insert(o.label.clone()) {
                        return Err(TypeError::DuplicateLabel(o.label.clone()));
                    }
                    if let Sort::Delegate(_, s) = &o.payload {
                        s.validate_inner()?;
                    }
                    o.continuation.validate_inner()?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionType::End => write!(f, "end"),
            SessionType::Var(a) => write!(f, "{a}"),
            SessionType::Rec(a, body) => write!(f, "rec {a} . {body}"),
            SessionType::Choice(opts) => {
                write!(f, "{{ ")?;
                for (i, o) in opts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}{}", o.direction.symbol(), o.label)?;
                    if o.payload != Sort::None {
                        write!(f, "<{}>", o.payload)?;
                    }
                    write!(f, "({}", o.guard)?;
                    if !o.resets.is_empty() {
                        write!(f, ", {{")?;
                        for (k, c) in o.resets.iter().enumerate() {
                            if k > 0 {
                                write!(f, ", ")?;
                            }
                            write!(f, "{c}")?;
                        }
                        write!(f, "}}")?;
                    }
                    write!(f, ").{}", o.continuation)?;
                }
                write!(f, " }}")
            }
        }
    }
}

/// Convenience constructor used heavily in tests.
pub fn opt(
    direction: Direction,
    label: &str,
    payload: Sort,
    guard: Constraint,
    resets: &[&str],
    continuation: SessionType,
) -> TypeOption {
    TypeOption {
        direction,
        label: label.to_string(),
        payload,
        guard,
        resets: resets.iter().map(|r| ClockId::new(*r)).collect(),
        continuation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timelogic::Constraint as C;
    use Direction::{Recv, Send};

    fn weak_persistency_s() -> SessionType {
        SessionType::Choice(vec![
            opt(Send, "data", Sort::Str, C::lt("x", 3), &[], SessionType::End),
            opt(Recv, "timeout", Sort::None, C::gt("x", 4), &[], SessionType::End),
        ])
    }

    #[test]
    fn dual_end_is_end() {
        assert_eq!(SessionType::End.dual(), SessionType::End);
    }

    #[test]
    fn dual_flips_directions_only() {
        let s = weak_persistency_s();
        let d = s.dual();
        match &d {
            SessionType::Choice(opts) => {
                assert_eq!(opts[0].direction, Recv);
                assert_eq!(opts[0].label, "data");
                assert_eq!(opts[1].direction, Send);
                assert_eq!(opts[1].label, "timeout");
                assert_eq!(opts[0].guard, C::lt("x", 3));
            }
            _ => panic!("expected choice"),
        }
        assert_eq!(d.dual(), s);
    }

    #[test]
    fn substitute_examples() {
        let end = SessionType::End;
        assert_eq!(SessionType::var("a").substitute("a", &end), end);
        let rec_b = SessionType::rec("b", SessionType::var("b"));
        assert_eq!(rec_b.substitute("a", &end), rec_b);
    }

    #[test]
    fn unfold_examples() {
        assert_eq!(
            SessionType::rec("a", SessionType::End).unfold().unwrap(),
            SessionType::End
        );
        let loop_a = SessionType::rec(
            "a",
            SessionType::Choice(vec![opt(
                Recv,
                "a",
                Sort::None,
                C::lt("x", 1),
                &[],
                SessionType::var("a"),
            )]),
        );
        let unfolded = loop_a.unfold().unwrap();
        match &unfolded {
            SessionType::Choice(opts) => assert_eq!(opts[0].continuation, loop_a),
            _ => panic!("expected choice"),
        }
        assert_eq!(SessionType::var("a").unfold(), Err(TypeError::UnfoldNonRec));
    }

    #[test]
    fn unfold_equiv_examples() {
        let nested = SessionType::rec("a1", SessionType::rec("a2", SessionType::End));
        assert!(nested.unfold_equiv(&SessionType::End));

        let loop_a = SessionType::rec(
            "a",
            SessionType::Choice(vec![opt(
                Send,
                "a",
                Sort::None,
                C::True,
                &[],
                SessionType::var("a"),
            )]),
        );
        assert!(!SessionType::End.unfold_equiv(&loop_a));
        assert!(loop_a.unfold_equiv(&loop_a.unfold().unwrap()));
    }

    #[test]
    fn free_names_examples() {
        assert_eq!(
            SessionType::var("a").free_names(),
            ["a".to_string()].into_iter().collect()
        );
        assert!(SessionType::rec("a", SessionType::var("a"))
            .free_names()
            .is_empty());
        let s = SessionType::Choice(vec![opt(
            Send,
            "a",
            Sort::None,
            C::True,
            &[],
            SessionType::var("b"),
        )]);
        assert_eq!(s.free_names(), ["b".to_string()].into_iter().collect());
    }

    #[test]
    fn is_end_examples() {
        assert!(SessionType::End.is_end());
        assert!(SessionType::rec("a", SessionType::End).is_end());
        assert!(!weak_persistency_s().is_end());
    }

    #[test]
    fn dual_commutes_with_unfold() {
        let s = SessionType::rec(
            "a",
            SessionType::Choice(vec![opt(
                Send,
                "ping",
                Sort::None,
                C::le("x", 3),
                &["x"],
                SessionType::var("a"),
            )]),
        );
        assert_eq!(s.dual().unfold().unwrap(), s.unfold().unwrap().dual());
    }

    #[test]
    fn contractivity_rejected() {
        let bad = SessionType::rec("a", SessionType::var("a"));
        assert_eq!(
            bad.validate_closed(),
            Err(TypeError::NotContractive("a".into()))
        );
        let nested_bad = SessionType::rec("a", SessionType::rec("b", SessionType::var("a")));
        assert!(nested_bad.validate_closed().is_err());
    }

    #[test]
    fn substitution_free_name_law() {
        let s = SessionType::Choice(vec![opt(
            Send,
            "m",
            Sort::None,
            C::True,
            &[],
            SessionType::var("a"),
        )]);
        let r = SessionType::var("b");
        let out = s.substitute("a", &r);
        let mut expected: BTreeSet<String> = s.free_names();
        expected.remove("a");
        expected.extend(r.free_names());
        assert_eq!(out.free_names(), expected);
    }
}
