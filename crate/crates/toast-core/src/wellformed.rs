//! The formation-rule checker: feasibility, mixed-choice safety, and
//! delegation soundness, producing accept/reject reports with rule traces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::timelogic::{
    constraint_reset, entails, past, satisfiable, normalize_over, Constraint, Valuation,
};
use crate::typesys::{SessionType, Sort, TypeOption};

/// Environment of recursion variables and the constraints they were bound
/// at. Duplicate bindings are freshened away before insertion.
#[derive(Debug, Clone, Default)]
pub struct RecEnv {
    bindings: BTreeMap<String, Constraint>,
}

impl RecEnv {
    pub fn empty() -> Self {
        RecEnv::default()
    }

    pub fn lookup(&self, var: &str) -> Option<&Constraint> {
        self.bindings.get(var)
    }

    pub fn bind(&self, var: &str, delta: Constraint) -> RecEnv {
        let mut next = self.clone();
        next.bindings.insert(var.to_string(), delta);
        next
    }

    pub fn contains(&self, var: &str) -> bool {
        self.bindings.contains_key(var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PremiseTag {
    Feasibility,
    MixedChoice,
    Delegation,
    VarUndefined,
}

impl fmt::Display for PremiseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PremiseTag::Feasibility => write!(f, "feasibility"),
            PremiseTag::MixedChoice => write!(f, "mixed-choice"),
            PremiseTag::Delegation => write!(f, "delegation"),
            PremiseTag::VarUndefined => write!(f, "var-undefined"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailingPremise {
    pub rule: String,
    pub premise: PremiseTag,
    pub detail: String,
    /// For mixed-choice violations: a valuation in the overlap of the two
    /// guards under the reachable context.
    pub witness: Option<Valuation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WfTrace {
    pub rule: String,
    pub judgment: String,
    pub accepted: bool,
    pub children: Vec<WfTrace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WfReport {
    pub accepted: bool,
    pub trace: WfTrace,
    pub failing_premise: Option<FailingPremise>,
}

impl WfReport {
    fn accept(trace: WfTrace) -> Self {
        WfReport { accepted: true, trace, failing_premise: None }
    }

    fn reject(trace: WfTrace, failing: FailingPremise) -> Self {
        WfReport { accepted: false, trace, failing_premise: Some(failing) }
    }
}

fn render(theta: &RecEnv, delta: &Constraint, s: &SessionType) -> String {
    let env: Vec<String> = theta
        .bindings
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect();
    format!("{{{}}}; {} |- {}", env.join(", "), delta, s)
}

thread_local! {
    static CANON_CACHE: std::cell::RefCell<BTreeMap<SessionType, Constraint>> =
        std::cell::RefCell::new(BTreeMap::new());
    static WF_CACHE: std::cell::RefCell<BTreeMap<SessionType, bool>> =
        std::cell::RefCell::new(BTreeMap::new());
}

/// The canonical constraint the formation rules assign to a type: `true`
/// for `end`, the weak past of the guard disjunction for a choice, the
/// body's constraint for a recursion. Memoized per type: the checker and
/// the explorers ask for the same types at every visited state.
pub fn canonical_constraint(s: &SessionType) -> Constraint {
    if let Some(hit) = CANON_CACHE.with(|c| c.borrow().get(s).cloned()) {
        return hit;
    }
    let out = match s {
        SessionType::End | SessionType::Var(_) => Constraint::True,
        SessionType::Rec(_, body) => canonical_constraint(body),
        SessionType::Choice(opts) => {
            let disj = guard_disjunction(opts);
            past(&disj).expect("guards carry natural constants")
        }
    };
    CANON_CACHE.with(|c| c.borrow_mut().insert(s.clone(), out.clone()));
    out
}

fn guard_disjunction(opts: &[TypeOption]) -> Constraint {
    let mut it = opts.iter();
    let first = it.next().expect("choices are non-empty").guard.clone();
    it.fold(first, |acc, o| Constraint::or(acc, o.guard.clone()))
}

/// The strongest future environment of an option: the guard after applying
/// the option's resets.
pub fn future_env(option: &TypeOption) -> Constraint {
    constraint_reset(&option.guard, &option.resets, &[])
        .expect("guards carry natural constants")
}

/// Checks the judgment `theta; delta |- s`.
///
/// The choice rule accepts any caller constraint entailing the canonical
/// `past` of the guard disjunction, and evaluates the mixed-choice overlap
/// under that caller constraint (the reachable context). Rule `var`
/// requires the call-site constraint to entail the registered one.
pub fn wf_judgment(theta: &RecEnv, delta: &Constraint, s: &SessionType) -> WfReport {
    let judgment = render(theta, delta, s);
    match s {
        SessionType::End => WfReport::accept(WfTrace {
            rule: "end".into(),
            judgment,
            accepted: true,
            children: vec![],
        }),
        SessionType::Var(a) => match theta.lookup(a) {
            None => WfReport::reject(
                WfTrace { rule: "var".into(), judgment, accepted: false, children: vec![] },
                FailingPremise {
                    rule: "var".into(),
                    premise: PremiseTag::VarUndefined,
                    detail: format!("recursion variable `{a}` is not bound"),
                    witness: None,
                },
            ),
            Some(bound) => {
                if entails(delta, bound) {
                    WfReport::accept(WfTrace {
                        rule: "var".into(),
                        judgment,
                        accepted: true,
                        children: vec![],
                    })
                } else {
                    WfReport::reject(
                        WfTrace { rule: "var".into(), judgment, accepted: false, children: vec![] },
                        FailingPremise {
                            rule: "var".into(),
                            premise: PremiseTag::VarUndefined,
                            detail: format!(
                                "call-site constraint {delta} does not entail the registered {bound} for `{a}`"
                            ),
                            witness: None,
                        },
                    )
                }
            }
        },
        SessionType::Rec(a, body) => {
            // duplicate binders are freshened so the environment never
            // holds two entries for one name
            let (name, body) = if theta.contains(a) {
                let fresh = format!("{a}'");
                (fresh.clone(), body.substitute(a, &SessionType::Var(fresh)))
            } else {
                (a.clone(), (**body).clone())
            };
            let inner = wf_judgment(&theta.bind(&name, delta.clone()), delta, &body);
            let accepted = inner.accepted;
            let failing = inner.failing_premise.clone();
            let trace = WfTrace {
                rule: "rec".into(),
                judgment,
                accepted,
                children: vec![inner.trace],
            };
            if accepted {
                WfReport::accept(trace)
            } else {
                WfReport::reject(trace, failing.expect("rejection carries a premise"))
            }
        }
        SessionType::Choice(opts) => check_choice(theta, delta, opts, judgment),
    }
}

fn check_choice(
    theta: &RecEnv,
    delta: &Constraint,
    opts: &[TypeOption],
    judgment: String,
) -> WfReport {
    let mut children = Vec::new();

    // context: the caller constraint must entail the weak past of the
    // guard disjunction fixed by the rule's conclusion
    let disj = guard_disjunction(opts);
    let conclusion = past(&disj).expect("guards carry natural constants");
    if satisfiable(delta) && !entails(delta, &conclusion) {
        let trace = WfTrace { rule: "choice".into(), judgment, accepted: false, children };
        return WfReport::reject(
            trace,
            FailingPremise {
                rule: "choice".into(),
                premise: PremiseTag::Feasibility,
                detail: format!(
                    "state constraint {delta} does not entail the past of the options {conclusion}: some reachable valuation can never enable an option"
                ),
                witness: None,
            },
        );
    }

    // (mixed-choice): options of different directions must have disjoint
    // guards within the reachable context
    for (i, a) in opts.iter().enumerate() {
        for b in opts.iter().skip(i + 1) {
            if a.direction == b.direction {
                continue;
            }
            let overlap = Constraint::and(
                delta.clone(),
                Constraint::and(a.guard.clone(), b.guard.clone()),
            );
            if satisfiable(&overlap) {
                let max = overlap.max_constant();
                let witness = normalize_over(&overlap, &[]).grid_witness(max);
                let trace =
                    WfTrace { rule: "choice".into(), judgment, accepted: false, children };
                return WfReport::reject(
                    trace,
                    FailingPremise {
                        rule: "choice".into(),
                        premise: PremiseTag::MixedChoice,
                        detail: format!(
                            "options `{}{}` and `{}{}` of different directions are enabled together",
                            a.direction.symbol(),
                            a.label,
                            b.direction.symbol(),
                            b.label
                        ),
                        witness,
                    },
                );
            }
        }
    }

    // (feasibility): each continuation is well-formed under the strongest
    // future environment of its option
    for o in opts {
        let future = future_env(o);
        let sub = wf_judgment(theta, &future, &o.continuation);
        let ok = sub.accepted;
        let failing = sub.failing_premise.clone();
        children.push(sub.trace);
        if !ok {
            let trace = WfTrace { rule: "choice".into(), judgment, accepted: false, children };
            return WfReport::reject(trace, failing.expect("rejection carries a premise"));
        }
    }

    // (delegation): each delegated protocol is well-formed under its own
    // initialization constraint, with an empty environment
    for o in opts {
        if let Sort::Delegate(init, proto) = &o.payload {
            let sub = wf_judgment(&RecEnv::empty(), init, proto);
            let ok = sub.accepted;
            children.push(sub.trace);
            if !ok {
                let trace =
                    WfTrace { rule: "choice".into(), judgment, accepted: false, children };
                return WfReport::reject(
                    trace,
                    FailingPremise {
                        rule: "choice".into(),
                        premise: PremiseTag::Delegation,
                        detail: format!(
                            "delegated protocol of option `{}` is not well-formed under {init}",
                            o.label
                        ),
                        witness: None,
                    },
                );
            }
        }
    }

    WfReport::accept(WfTrace { rule: "choice".into(), judgment, accepted: true, children })
}

/// Well-formedness of a configuration: the canonical constraint accepts and
/// the valuation satisfies it. The valuation-independent part is memoized.
pub fn wf_config(nu: &Valuation, s: &SessionType) -> bool {
    let delta = canonical_constraint(s);
    if !delta.sat(nu) {
        return false;
    }
    if let Some(hit) = WF_CACHE.with(|c| c.borrow().get(s).copied()) {
        return hit;
    }
    let ok = wf_judgment(&RecEnv::empty(), &delta, s).accepted;
    WF_CACHE.with(|c| c.borrow_mut().insert(s.clone(), ok));
    ok
}

/// A closed type is well-formed when it is well-formed against the zero
/// valuation over its own clocks.
pub fn wf_type(s: &SessionType) -> WfReport {
    let delta = canonical_constraint(s);
    let nu0 = Valuation::zero(s.clocks());
    let mut report = wf_judgment(&RecEnv::empty(), &delta, s);
    if report.accepted && !delta.sat(&nu0) {
        report.accepted = false;
        report.failing_premise = Some(FailingPremise {
            rule: "choice".into(),
            premise: PremiseTag::Feasibility,
            detail: format!("initial valuation does not satisfy the state constraint {delta}"),
            witness: None,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timelogic::Constraint as C;
    use crate::typesys::{opt, Direction::*, SessionType as S, Sort};

    fn junk_type(reset_x: bool) -> S {
        let inner = S::Choice(vec![
            opt(Send, "b", Sort::None, C::eq("y", 2), &[], S::End),
            opt(Recv, "c", Sort::None, C::between(2, "x", 5), &[], S::End),
        ]);
        let resets: &[&str] = if reset_x { &["x"] } else { &[] };
        S::Choice(vec![opt(Send, "a", Sort::None, C::gt("x", 3), resets, inner)])
    }

    #[test]
    fn junk_type_rejected_on_feasibility() {
        let report = wf_type(&junk_type(false));
        assert!(!report.accepted);
        assert_eq!(
            report.failing_premise.unwrap().premise,
            PremiseTag::Feasibility
        );
    }

    #[test]
    fn amended_junk_type_accepted() {
        let report = wf_type(&junk_type(true));
        assert!(report.accepted, "{:?}", report.failing_premise);
    }

    #[test]
    fn unsafe_mixed_choice_rejected() {
        let s1 = S::Choice(vec![
            opt(Recv, "a", Sort::None, C::lt("x", 5), &[], S::End),
            opt(Send, "b", Sort::None, C::eq("x", 0), &[], S::End),
        ]);
        let report = wf_type(&s1);
        assert!(!report.accepted);
        let failing = report.failing_premise.unwrap();
        assert_eq!(failing.premise, PremiseTag::MixedChoice);
        assert!(failing.witness.is_some());
    }

    #[test]
    fn end_always_well_formed() {
        assert!(wf_type(&S::End).accepted);
        let nu9 = Valuation::from_map(
            [(crate::timelogic::ClockId::new("x"), crate::timelogic::TimeValue::from_nat(9))]
                .into_iter()
                .collect(),
        );
        assert!(wf_config(&nu9, &S::End));
    }

    #[test]
    fn weak_persistency_types_accepted() {
        let s = S::Choice(vec![
            opt(Send, "data", Sort::Str, C::lt("x", 3), &[], S::End),
            opt(Recv, "timeout", Sort::None, C::gt("x", 4), &[], S::End),
        ]);
        assert!(wf_type(&s).accepted);
        assert!(wf_type(&s.dual()).accepted);
    }

    #[test]
    fn stale_configuration_rejected() {
        let s = S::Choice(vec![opt(Send, "a", Sort::None, C::lt("x", 5), &[], S::End)]);
        let nu6 = Valuation::from_map(
            [(crate::timelogic::ClockId::new("x"), crate::timelogic::TimeValue::from_nat(6))]
                .into_iter()
                .collect(),
        );
        assert!(!wf_config(&nu6, &s));
        let nu0 = Valuation::zero(s.clocks());
        assert!(wf_config(&nu0, &s));
    }

    #[test]
    fn future_env_examples() {
        let o = opt(Send, "a", Sort::None, C::gt("x", 3), &["x"], S::End);
        assert!(crate::timelogic::equivalent(&future_env(&o), &C::eq("x", 0)));
        let o = opt(Recv, "c", Sort::None, C::between(2, "x", 5), &[], S::End);
        assert!(crate::timelogic::equivalent(&future_env(&o), &C::between(2, "x", 5)));
        let o = opt(
            Send,
            "a",
            Sort::None,
            C::and(C::lt("x", 3), C::eq("y", 1)),
            &["x"],
            S::End,
        );
        assert!(crate::timelogic::equivalent(
            &future_env(&o),
            &C::and(C::eq("x", 0), C::eq("y", 1))
        ));
    }

    #[test]
    fn monotone_in_the_state_constraint() {
        let s = S::Choice(vec![
            opt(Send, "data", Sort::None, C::lt("x", 3), &[], S::End),
            opt(Recv, "timeout", Sort::None, C::gt("x", 4), &[], S::End),
        ]);
        let canonical = canonical_constraint(&s);
        assert!(wf_judgment(&RecEnv::empty(), &canonical, &s).accepted);
        let stronger = C::eq("x", 0);
        assert!(entails(&stronger, &canonical));
        assert!(wf_judgment(&RecEnv::empty(), &stronger, &s).accepted);
    }

    #[test]
    fn delegation_premise_checks_payload_protocol() {
        let bad_inner = S::Choice(vec![opt(
            Send,
            "b",
            Sort::None,
            C::eq("z", 2),
            &[],
            S::End,
        )]);
        // init constraint z>3 can never reach z=2
        let bad = S::Choice(vec![opt(
            Send,
            "give",
            Sort::Delegate(C::gt("z", 3), Box::new(bad_inner)),
            C::True,
            &[],
            S::End,
        )]);
        let report = wf_type(&bad);
        assert!(!report.accepted);
        assert_eq!(
            report.failing_premise.unwrap().premise,
            PremiseTag::Delegation
        );
    }
}
