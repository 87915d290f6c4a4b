//! The timed process calculus: AST, well-formedness, the partial
//! time-passing function, and the reduction engine.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::timelogic::{representative_delays, Constraint, TimeValue, Valuation};

/// Payload values. `Ref` is a name: either a variable bound by a receive or
/// a session endpoint used for delegation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Nat(u64),
    Bool(bool),
    Str(String),
    Unit,
    Ref(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Unit => write!(f, "()"),
            Value::Ref(x) => write!(f, "{x}"),
        }
    }
}

/// Receive deadlines: `<n` or `<=n` with `n > 0`, `inf`, or `<=0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Deadline {
    Bounded { strict: bool, bound: TimeValue },
    Infinite,
    NonPositive,
}

impl Deadline {
    pub fn lt(n: u64) -> Deadline {
        Deadline::Bounded { strict: true, bound: TimeValue::from_nat(n) }
    }

    pub fn le(n: u64) -> Deadline {
        if n == 0 {
            Deadline::NonPositive
        } else {
            Deadline::Bounded { strict: false, bound: TimeValue::from_nat(n) }
        }
    }

    /// Does the instant `t` fall inside the deadline window?
    pub fn admits(&self, t: &TimeValue) -> bool {
        match self {
            Deadline::Infinite => true,
            Deadline::NonPositive => t.is_zero(),
            Deadline::Bounded { strict: true, bound } => t < bound,
            Deadline::Bounded { strict: false, bound } => t <= bound,
        }
    }

    pub fn max_constant(&self) -> u64 {
        match self {
            Deadline::Bounded { bound, .. } => bound.ceil_nat(),
            _ => 0,
        }
    }
}

impl fmt::Display for Deadline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deadline::Infinite => write!(f, "inf"),
            Deadline::NonPositive => write!(f, "<=0"),
            Deadline::Bounded { strict: true, bound } => write!(f, "<{bound}"),
            Deadline::Bounded { strict: false, bound } => write!(f, "<={bound}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchArm {
    pub label: String,
    pub binder: Option<String>,
    pub body: Process,
}

/// Queue endpoint: messages in transit from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueueId {
    pub from: String,
    pub to: String,
}

impl fmt::Display for QueueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.from.len() == 1 && self.to.len() == 1 {
            write!(f, "{}{}", self.from, self.to)
        } else {
            write!(f, "{}>{}", self.from, self.to)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Process {
    Term,
    SetTimer(String, Box<Process>),
    Send { role: String, label: String, value: Value, cont: Box<Process> },
    Branch { role: String, deadline: Deadline, branches: Vec<BranchArm> },
    Timeout { role: String, deadline: Deadline, branches: Vec<BranchArm>, after: Box<Process> },
    If { cond: Constraint, then_p: Box<Process>, else_p: Box<Process> },
    DelaySym { delta: Constraint, cont: Box<Process> },
    DelayT { t: TimeValue, cont: Box<Process> },
    Def {
        name: String,
        val_params: Vec<String>,
        role_params: Vec<String>,
        body: Box<Process>,
        cont: Box<Process>,
    },
    Call { name: String, val_args: Vec<Value>, role_args: Vec<String> },
    Scope { p: String, q: String, body: Box<Process> },
    Par(Box<Process>, Box<Process>),
    Queue { id: QueueId, items: Vec<(String, Value)> },
}

/// The timer environment: a map from timer names to their current values.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimerEnv {
    timers: BTreeMap<String, TimeValue>,
}

impl TimerEnv {
    pub fn empty() -> Self {
        TimerEnv::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, TimeValue)>) -> Self {
        TimerEnv { timers: pairs.into_iter().collect() }
    }

    pub fn get(&self, x: &str) -> Option<&TimeValue> {
        self.timers.get(x)
    }

    pub fn contains(&self, x: &str) -> bool {
        self.timers.contains_key(x)
    }

    pub fn set_zero(&self, x: &str) -> TimerEnv {
        let mut t = self.clone();
        t.timers.insert(x.to_string(), TimeValue::ZERO);
        t
    }

    /// `theta + t`.
    pub fn advance(&self, t: &TimeValue) -> TimerEnv {
        TimerEnv {
            timers: self.timers.iter().map(|(k, v)| (k.clone(), v.add(t))).collect(),
        }
    }

    /// Satisfaction of a timer constraint; false when a mentioned timer is
    /// undefined (the checker enforces pre-declaration separately).
    pub fn sat(&self, delta: &Constraint) -> bool {
        let mentioned = delta.clocks();
        if mentioned.iter().any(|c| !self.timers.contains_key(c.name())) {
            return false;
        }
        let nu = Valuation::from_map(
            self.timers
                .iter()
                .map(|(k, v)| (crate::timelogic::ClockId::new(k.clone()), *v))
                .collect(),
        );
        delta.sat(&nu)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TimeValue)> {
        self.timers.iter()
    }

    pub fn insert(&mut self, name: String, v: TimeValue) {
        self.timers.insert(name, v);
    }

    pub fn split(&self, left_names: &BTreeSet<String>) -> (TimerEnv, TimerEnv) {
        let mut l = TimerEnv::empty();
        let mut r = TimerEnv::empty();
        for (k, v) in &self.timers {
            if left_names.contains(k) {
                l.timers.insert(k.clone(), *v);
            } else {
                r.timers.insert(k.clone(), *v);
            }
        }
        (l, r)
    }
}

impl fmt::Display for TimerEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.timers.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}:{v}")?;
        }
        write!(f, "}}")
    }
}

static FRESH_ROLE: AtomicU64 = AtomicU64::new(0);

fn fresh_role(base: &str) -> String {
    let n = FRESH_ROLE.fetch_add(1, Ordering::Relaxed);
    let stem = base.split('#').next().unwrap_or(base);
    format!("{stem}#{n}")
}

impl Process {
    pub fn par(a: Process, b: Process) -> Process {
        Process::Par(Box::new(a), Box::new(b))
    }

    pub fn send(role: &str, label: &str, value: Value, cont: Process) -> Process {
        Process::Send { role: role.into(), label: label.into(), value, cont: Box::new(cont) }
    }

    pub fn delay_t(t: TimeValue, cont: Process) -> Process {
        Process::DelayT { t, cont: Box::new(cont) }
    }

    /// The free queues: queue processes not enclosed by their session scope.
    pub fn fq(&self) -> BTreeSet<QueueId> {
        match self {
            Process::Term | Process::Call { .. } => BTreeSet::new(),
            Process::Queue { id, .. } => [id.clone()].into_iter().collect(),
            Process::Scope { p, q, body } => {
                let mut set = body.fq();
                set.remove(&QueueId { from: p.clone(), to: q.clone() });
                set.remove(&QueueId { from: q.clone(), to: p.clone() });
                set
            }
            Process::Send { cont, .. }
            | Process::SetTimer(_, cont)
            | Process::DelaySym { cont, .. }
            | Process::DelayT { cont, .. } => cont.fq(),
            Process::Def { cont, .. } => cont.fq(),
            Process::Branch { branches, .. } => {
                branches.iter().flat_map(|b| b.body.fq()).collect()
            }
            Process::Timeout { branches, after, .. } => {
                let mut set: BTreeSet<QueueId> =
                    branches.iter().flat_map(|b| b.body.fq()).collect();
                set.extend(after.fq());
                set
            }
            Process::Par(a, b) => {
                let mut set = a.fq();
                set.extend(b.fq());
                set
            }
            Process::If { then_p, else_p, .. } => {
                let mut set = then_p.fq();
                set.extend(else_p.fq());
                set
            }
        }
    }

    /// Well-formedness: scoped sessions carry exactly their two queues, and
    /// sequential continuations are queue-free.
    pub fn wf_process(&self) -> bool {
        match self {
            Process::Term | Process::Call { .. } | Process::Queue { .. } => true,
            Process::Scope { p, q, body } => {
                let expected: BTreeSet<QueueId> = [
                    QueueId { from: p.clone(), to: q.clone() },
                    QueueId { from: q.clone(), to: p.clone() },
                ]
                .into_iter()
                .collect();
                body.wf_process() && body.fq() == expected
            }
            Process::Send { cont, .. }
            | Process::SetTimer(_, cont)
            | Process::DelaySym { cont, .. }
            | Process::DelayT { cont, .. } => cont.wf_process() && cont.fq().is_empty(),
            Process::Def { cont, .. } => cont.wf_process() && cont.fq().is_empty(),
            Process::Branch { branches, .. } => branches
                .iter()
                .all(|b| b.body.wf_process() && b.body.fq().is_empty()),
            Process::Timeout { branches, after, .. } => {
                branches
                    .iter()
                    .all(|b| b.body.wf_process() && b.body.fq().is_empty())
                    && after.wf_process()
            }
            Process::Par(a, b) => a.wf_process() && b.wf_process(),
            Process::If { then_p, else_p, .. } => then_p.wf_process() && else_p.wf_process(),
        }
    }

    /// Roles on which the process is waiting to receive.
    pub fn wait_set(&self) -> BTreeSet<String> {
        match self {
            Process::Branch { role, .. } | Process::Timeout { role, .. } => {
                [role.clone()].into_iter().collect()
            }
            Process::Scope { p, q, body } => {
                let mut set = body.wait_set();
                set.remove(p);
                set.remove(q);
                set
            }
            Process::Def { cont, .. } => cont.wait_set(),
            Process::Par(a, b) => {
                let mut set = a.wait_set();
                set.extend(b.wait_set());
                set
            }
            _ => BTreeSet::new(),
        }
    }

    /// Roles whose inbound queue is non-empty.
    pub fn neq_set(&self) -> BTreeSet<String> {
        match self {
            Process::Queue { id, items } if !items.is_empty() => {
                [id.to.clone()].into_iter().collect()
            }
            Process::Scope { p, q, body } => {
                let mut set = body.neq_set();
                set.remove(p);
                set.remove(q);
                set
            }
            Process::Def { cont, .. } => cont.neq_set(),
            Process::Par(a, b) => {
                let mut set = a.neq_set();
                set.extend(b.neq_set());
                set
            }
            _ => BTreeSet::new(),
        }
    }

    /// Timers the process reads or sets; used to split linear timer
    /// environments across parallel components.
    pub fn timers_used(&self) -> BTreeSet<String> {
        match self {
            Process::SetTimer(x, cont) => {
                let mut set = cont.timers_used();
                set.insert(x.clone());
                set
            }
            Process::If { cond, then_p, else_p } => {
                let mut set: BTreeSet<String> =
                    cond.clocks().into_iter().map(|c| c.name().to_string()).collect();
                set.extend(then_p.timers_used());
                set.extend(else_p.timers_used());
                set
            }
            Process::Send { cont, .. }
            | Process::DelaySym { cont, .. }
            | Process::DelayT { cont, .. } => cont.timers_used(),
            Process::Def { body, cont, .. } => {
                let mut set = body.timers_used();
                set.extend(cont.timers_used());
                set
            }
            Process::Branch { branches, .. } => {
                branches.iter().flat_map(|b| b.body.timers_used()).collect()
            }
            Process::Timeout { branches, after, .. } => {
                let mut set: BTreeSet<String> =
                    branches.iter().flat_map(|b| b.body.timers_used()).collect();
                set.extend(after.timers_used());
                set
            }
            Process::Scope { body, .. } => body.timers_used(),
            Process::Par(a, b) => {
                let mut set = a.timers_used();
                set.extend(b.timers_used());
                set
            }
            _ => BTreeSet::new(),
        }
    }

    /// Largest natural constant in deadlines, delays, and conditions.
    pub fn max_constant(&self) -> u64 {
        match self {
            Process::Term | Process::Call { .. } | Process::Queue { .. } => 0,
            Process::SetTimer(_, cont) | Process::Send { cont, .. } => cont.max_constant(),
            Process::Branch { deadline, branches, .. } => branches
                .iter()
                .map(|b| b.body.max_constant())
                .max()
                .unwrap_or(0)
                .max(deadline.max_constant()),
            Process::Timeout { deadline, branches, after, .. } => branches
                .iter()
                .map(|b| b.body.max_constant())
                .max()
                .unwrap_or(0)
                .max(deadline.max_constant())
                .max(after.max_constant()),
            Process::If { cond, then_p, else_p } => cond
                .max_constant()
                .max(then_p.max_constant())
                .max(else_p.max_constant()),
            Process::DelaySym { delta, cont } => delta.max_constant().max(cont.max_constant()),
            Process::DelayT { t, cont } => t.ceil_nat().max(cont.max_constant()),
            Process::Def { body, cont, .. } => body.max_constant().max(cont.max_constant()),
            Process::Scope { body, .. } => body.max_constant(),
            Process::Par(a, b) => a.max_constant().max(b.max_constant()),
        }
    }

    /// Structural normal form: `delay(0).P = P`, parallel compositions
    /// flattened, inert `0` components dropped, and components ordered
    /// canonically so exploration is schedule-independent.
    pub fn normalize(&self) -> Process {
        match self {
            Process::DelayT { t, cont } if t.is_zero() => cont.normalize(),
            Process::DelayT { t, cont } => Process::DelayT { t: *t, cont: Box::new(cont.normalize()) },
            Process::Par(..) => {
                let mut parts = Vec::new();
                flatten_soup(self, &mut parts);
                let mut parts: Vec<Process> =
                    parts.into_iter().map(|p| p.normalize()).filter(|p| *p != Process::Term).collect();
                parts.sort();
                rebuild_soup(parts)
            }
            Process::SetTimer(x, cont) => Process::SetTimer(x.clone(), Box::new(cont.normalize())),
            Process::Send { role, label, value, cont } => Process::Send {
                role: role.clone(),
                label: label.clone(),
                value: value.clone(),
                cont: Box::new(cont.normalize()),
            },
            Process::Branch { role, deadline, branches } => Process::Branch {
                role: role.clone(),
                deadline: *deadline,
                branches: branches
                    .iter()
                    .map(|b| BranchArm { label: b.label.clone(), binder: b.binder.clone(), body: b.body.normalize() })
                    .collect(),
            },
            Process::Timeout { role, deadline, branches, after } => Process::Timeout {
                role: role.clone(),
                deadline: *deadline,
                branches: branches
                    .iter()
                    .map(|b| BranchArm { label: b.label.clone(), binder: b.binder.clone(), body: b.body.normalize() })
                    .collect(),
                after: Box::new(after.normalize()),
            },
            Process::If { cond, then_p, else_p } => Process::If {
                cond: cond.clone(),
                then_p: Box::new(then_p.normalize()),
                else_p: Box::new(else_p.normalize()),
            },
            Process::DelaySym { delta, cont } => Process::DelaySym {
                delta: delta.clone(),
                cont: Box::new(cont.normalize()),
            },
            Process::Def { name, val_params, role_params, body, cont } => Process::Def {
                name: name.clone(),
                val_params: val_params.clone(),
                role_params: role_params.clone(),
                body: body.clone(),
                cont: Box::new(cont.normalize()),
            },
            Process::Scope { p, q, body } => Process::Scope {
                p: p.clone(),
                q: q.clone(),
                body: Box::new(body.normalize()),
            },
            _ => self.clone(),
        }
    }

    /// Every component is inert: `0`, an empty queue, or a scope of such.
    pub fn is_terminal_shape(&self) -> bool {
        match self {
            Process::Term => true,
            Process::Queue { items, .. } => items.is_empty(),
            Process::Scope { body, .. } => body.is_terminal_shape(),
            Process::Par(a, b) => a.is_terminal_shape() && b.is_terminal_shape(),
            Process::Def { cont, .. } => cont.is_terminal_shape(),
            _ => false,
        }
    }

    /// Substitutes a value for a name in value positions, respecting
    /// receive binders.
    pub fn subst_value(&self, var: &str, value: &Value) -> Process {
        let sv = |v: &Value| -> Value {
            match v {
                Value::Ref(x) if x == var => value.clone(),
                other => other.clone(),
            }
        };
        match self {
            Process::Term => Process::Term,
            Process::SetTimer(x, cont) => {
                Process::SetTimer(x.clone(), Box::new(cont.subst_value(var, value)))
            }
            Process::Send { role, label, value: v, cont } => Process::Send {
                role: role.clone(),
                label: label.clone(),
                value: sv(v),
                cont: Box::new(cont.subst_value(var, value)),
            },
            Process::Branch { role, deadline, branches } => Process::Branch {
                role: role.clone(),
                deadline: *deadline,
                branches: branches
                    .iter()
                    .map(|b| {
                        if b.binder.as_deref() == Some(var) {
                            b.clone()
                        } else {
                            BranchArm {
                                label: b.label.clone(),
                                binder: b.binder.clone(),
                                body: b.body.subst_value(var, value),
                            }
                        }
                    })
                    .collect(),
            },
            Process::Timeout { role, deadline, branches, after } => Process::Timeout {
                role: role.clone(),
                deadline: *deadline,
                branches: branches
                    .iter()
                    .map(|b| {
                        if b.binder.as_deref() == Some(var) {
                            b.clone()
                        } else {
                            BranchArm {
                                label: b.label.clone(),
                                binder: b.binder.clone(),
                                body: b.body.subst_value(var, value),
                            }
                        }
                    })
                    .collect(),
                after: Box::new(after.subst_value(var, value)),
            },
            Process::If { cond, then_p, else_p } => Process::If {
                cond: cond.clone(),
                then_p: Box::new(then_p.subst_value(var, value)),
                else_p: Box::new(else_p.subst_value(var, value)),
            },
            Process::DelaySym { delta, cont } => Process::DelaySym {
                delta: delta.clone(),
                cont: Box::new(cont.subst_value(var, value)),
            },
            Process::DelayT { t, cont } => {
                Process::DelayT { t: *t, cont: Box::new(cont.subst_value(var, value)) }
            }
            Process::Def { name, val_params, role_params, body, cont } => {
                let body = if val_params.iter().any(|p| p == var) {
                    body.clone()
                } else {
                    Box::new(body.subst_value(var, value))
                };
                Process::Def {
                    name: name.clone(),
                    val_params: val_params.clone(),
                    role_params: role_params.clone(),
                    body,
                    cont: Box::new(cont.subst_value(var, value)),
                }
            }
            Process::Call { name, val_args, role_args } => Process::Call {
                name: name.clone(),
                val_args: val_args.iter().map(sv).collect(),
                role_args: role_args.clone(),
            },
            Process::Scope { p, q, body } => Process::Scope {
                p: p.clone(),
                q: q.clone(),
                body: Box::new(body.subst_value(var, value)),
            },
            Process::Par(a, b) => {
                Process::par(a.subst_value(var, value), b.subst_value(var, value))
            }
            Process::Queue { id, items } => Process::Queue {
                id: id.clone(),
                items: items.iter().map(|(l, v)| (l.clone(), sv(v))).collect(),
            },
        }
    }

    /// Substitutes a role name for another in role positions, freshening
    /// scope binders that would capture.
    pub fn subst_role(&self, from: &str, to: &str) -> Process {
        let sr = |r: &String| -> String {
            if r == from {
                to.to_string()
            } else {
                r.clone()
            }
        };
        match self {
            Process::Term => Process::Term,
            Process::SetTimer(x, cont) => {
                Process::SetTimer(x.clone(), Box::new(cont.subst_role(from, to)))
            }
            Process::Send { role, label, value, cont } => Process::Send {
                role: sr(role),
                label: label.clone(),
                value: match value {
                    Value::Ref(x) if x == from => Value::Ref(to.to_string()),
                    v => v.clone(),
                },
                cont: Box::new(cont.subst_role(from, to)),
            },
            Process::Branch { role, deadline, branches } => Process::Branch {
                role: sr(role),
                deadline: *deadline,
                branches: branches
                    .iter()
                    .map(|b| BranchArm {
                        label: b.label.clone(),
                        binder: b.binder.clone(),
                        body: b.body.subst_role(from, to),
                    })
                    .collect(),
            },
            Process::Timeout { role, deadline, branches, after } => Process::Timeout {
                role: sr(role),
                deadline: *deadline,
                branches: branches
                    .iter()
                    .map(|b| BranchArm {
                        label: b.label.clone(),
                        binder: b.binder.clone(),
                        body: b.body.subst_role(from, to),
                    })
                    .collect(),
                after: Box::new(after.subst_role(from, to)),
            },
            Process::If { cond, then_p, else_p } => Process::If {
                cond: cond.clone(),
                then_p: Box::new(then_p.subst_role(from, to)),
                else_p: Box::new(else_p.subst_role(from, to)),
            },
            Process::DelaySym { delta, cont } => Process::DelaySym {
                delta: delta.clone(),
                cont: Box::new(cont.subst_role(from, to)),
            },
            Process::DelayT { t, cont } => {
                Process::DelayT { t: *t, cont: Box::new(cont.subst_role(from, to)) }
            }
            Process::Def { name, val_params, role_params, body, cont } => {
                let body = if role_params.iter().any(|p| p == from) {
                    body.clone()
                } else {
                    Box::new(body.subst_role(from, to))
                };
                Process::Def {
                    name: name.clone(),
                    val_params: val_params.clone(),
                    role_params: role_params.clone(),
                    body,
                    cont: Box::new(cont.subst_role(from, to)),
                }
            }
            Process::Call { name, val_args, role_args } => Process::Call {
                name: name.clone(),
                val_args: val_args
                    .iter()
                    .map(|v| match v {
                        Value::Ref(x) if x == from => Value::Ref(to.to_string()),
                        v => v.clone(),
                    })
                    .collect(),
                role_args: role_args.iter().map(sr).collect(),
            },
            Process::Scope { p, q, body } => {
                if p == from || q == from {
                    // binder shadows the substituted role
                    return self.clone();
                }
                if p == to || q == to {
                    let (fp, fq_) = (fresh_role(p), fresh_role(q));
                    let renamed = body.subst_role(p, &fp).subst_role(q, &fq_);
                    return Process::Scope {
                        p: fp,
                        q: fq_,
                        body: Box::new(renamed.subst_role(from, to)),
                    };
                }
                Process::Scope { p: p.clone(), q: q.clone(), body: Box::new(body.subst_role(from, to)) }
            }
            Process::Par(a, b) => Process::par(a.subst_role(from, to), b.subst_role(from, to)),
            Process::Queue { id, items } => Process::Queue {
                id: QueueId { from: sr(&id.from), to: sr(&id.to) },
                items: items
                    .iter()
                    .map(|(l, v)| {
                        let v = match v {
                            Value::Ref(x) if x == from => Value::Ref(to.to_string()),
                            v => v.clone(),
                        };
                        (l.clone(), v)
                    })
                    .collect(),
            },
        }
    }
}

fn flatten_soup(p: &Process, out: &mut Vec<Process>) {
    match p {
        Process::Par(a, b) => {
            flatten_soup(a, out);
            flatten_soup(b, out);
        }
        other => out.push(other.clone()),
    }
}

fn rebuild_soup(mut parts: Vec<Process>) -> Process {
    match parts.len() {
        0 => Process::Term,
        1 => parts.remove(0),
        _ => {
            let last = parts.pop().unwrap();
            parts.into_iter().rev().fold(last, |acc, p| Process::par(p, acc))
        }
    }
}

#[derive(Debug, Clone)]
struct DefFrame {
    name: String,
    val_params: Vec<String>,
    role_params: Vec<String>,
    body: Box<Process>,
}

/// Strips enclosing definition binders from a sequential component so that
/// its communication prefix can pair with queues outside the binders.
fn peel_defs(p: &Process) -> (Vec<DefFrame>, Process) {
    let mut frames = Vec::new();
    let mut cur = p.clone();
    while let Process::Def { name, val_params, role_params, body, cont } = cur {
        frames.push(DefFrame { name, val_params, role_params, body });
        cur = *cont;
    }
    (frames, cur)
}

fn wrap_defs(frames: &[DefFrame], leaf: Process) -> Process {
    frames.iter().rev().fold(leaf, |acc, f| Process::Def {
        name: f.name.clone(),
        val_params: f.val_params.clone(),
        role_params: f.role_params.clone(),
        body: f.body.clone(),
        cont: Box::new(acc),
    })
}

/// The time-passing function. `time_pass(p, 0)` is the identity; for
/// positive delays the partial case analysis applies and `None` means time
/// must not pass.
pub fn time_pass(p: &Process, t: &TimeValue) -> Option<Process> {
    if t.is_zero() {
        return Some(p.clone());
    }
    match p {
        Process::Timeout { role, deadline, branches, after } => match deadline {
            Deadline::Infinite => None,
            Deadline::NonPositive => time_pass(after, t),
            Deadline::Bounded { strict, bound } => {
                if deadline.admits(t) {
                    let rest = bound.checked_sub(t).expect("t within the deadline");
                    let deadline = if rest.is_zero() && !*strict {
                        Deadline::NonPositive
                    } else {
                        Deadline::Bounded { strict: *strict, bound: rest }
                    };
                    Some(Process::Timeout {
                        role: role.clone(),
                        deadline,
                        branches: branches.clone(),
                        after: after.clone(),
                    })
                } else {
                    let consumed = *bound;
                    let remaining = t.checked_sub(&consumed).expect("t beyond the deadline");
                    time_pass(after, &remaining)
                }
            }
        },
        Process::Branch { role, deadline, branches } => match deadline {
            Deadline::Infinite => Some(p.clone()),
            Deadline::NonPositive => None,
            Deadline::Bounded { strict, bound } => {
                if deadline.admits(t) {
                    let rest = bound.checked_sub(t).expect("t within the deadline");
                    let deadline = if rest.is_zero() && !*strict {
                        Deadline::NonPositive
                    } else {
                        Deadline::Bounded { strict: *strict, bound: rest }
                    };
                    Some(Process::Branch {
                        role: role.clone(),
                        deadline,
                        branches: branches.clone(),
                    })
                } else {
                    None
                }
            }
        },
        Process::DelayT { t: budget, cont } => {
            if budget >= t {
                let rest = budget.checked_sub(t).expect("budget >= t");
                Some(Process::DelayT { t: rest, cont: cont.clone() })
            } else {
                let remaining = t.checked_sub(budget).expect("t > budget");
                time_pass(cont, &remaining)
            }
        }
        Process::Par(a, b) => {
            if !a.wait_set().is_disjoint(&b.neq_set()) || !b.wait_set().is_disjoint(&a.neq_set()) {
                return None;
            }
            Some(Process::par(time_pass(a, t)?, time_pass(b, t)?))
        }
        Process::Term | Process::Queue { .. } => Some(p.clone()),
        Process::Scope { p: rp, q, body } => Some(Process::Scope {
            p: rp.clone(),
            q: q.clone(),
            body: Box::new(time_pass(body, t)?),
        }),
        Process::Def { name, val_params, role_params, body, cont } => Some(Process::Def {
            name: name.clone(),
            val_params: val_params.clone(),
            role_params: role_params.clone(),
            body: body.clone(),
            cont: Box::new(time_pass(cont, t)?),
        }),
        _ => None,
    }
}

/// One instantaneous reduction step: all successors of `(theta, p)`.
pub fn reduce_step(theta: &TimerEnv, p: &Process) -> Vec<(TimerEnv, Process)> {
    let mut out = Vec::new();
    match p {
        Process::SetTimer(x, cont) => {
            out.push((theta.set_zero(x), (**cont).clone()));
        }
        Process::If { cond, then_p, else_p } => {
            let defined = cond
                .clocks()
                .iter()
                .all(|c| theta.contains(c.name()));
            if defined {
                if theta.sat(cond) {
                    out.push((theta.clone(), (**then_p).clone()));
                } else {
                    out.push((theta.clone(), (**else_p).clone()));
                }
            }
        }
        Process::DelaySym { delta, cont } => {
            for t in representative_delays(delta, delta.max_constant()) {
                out.push((theta.clone(), Process::DelayT { t, cont: cont.clone() }));
            }
        }
        Process::Scope { p: rp, q, body } => {
            for (theta2, body2) in reduce_step(theta, body) {
                out.push((
                    theta2,
                    Process::Scope { p: rp.clone(), q: q.clone(), body: Box::new(body2) },
                ));
            }
        }
        Process::Def { name, val_params, role_params, body, cont } => {
            // context rule: the continuation reduces under the definition
            for (theta2, cont2) in reduce_step(theta, cont) {
                out.push((
                    theta2,
                    Process::Def {
                        name: name.clone(),
                        val_params: val_params.clone(),
                        role_params: role_params.clone(),
                        body: body.clone(),
                        cont: Box::new(cont2),
                    },
                ));
            }
            // rule Call: a top-level call in the continuation's soup unfolds
            let mut parts = Vec::new();
            flatten_soup(cont, &mut parts);
            for (i, part) in parts.iter().enumerate() {
                if let Process::Call { name: cname, val_args, role_args } = part {
                    if cname == name
                        && val_args.len() == val_params.len()
                        && role_args.len() == role_params.len()
                    {
                        let mut instance = (**body).clone();
                        for (param, arg) in role_params.iter().zip(role_args) {
                            instance = instance.subst_role(param, arg);
                        }
                        for (param, arg) in val_params.iter().zip(val_args) {
                            instance = instance.subst_value(param, arg);
                        }
                        let mut next = parts.clone();
                        next[i] = instance;
                        out.push((
                            theta.clone(),
                            Process::Def {
                                name: name.clone(),
                                val_params: val_params.clone(),
                                role_params: role_params.clone(),
                                body: body.clone(),
                                cont: Box::new(rebuild_soup(next)),
                            },
                        ));
                    }
                }
            }
        }
        Process::Par(..) => {
            let mut parts = Vec::new();
            flatten_soup(p, &mut parts);
            let peeled: Vec<(Vec<DefFrame>, Process)> =
                parts.iter().map(peel_defs).collect();
            // communication redexes across the soup, looking through
            // definition binders on both sides
            for (i, (frames_i, leaf_i)) in peeled.iter().enumerate() {
                match leaf_i {
                    Process::Send { role, label, value, cont } => {
                        for (j, (frames_j, leaf_j)) in peeled.iter().enumerate() {
                            if i == j {
                                continue;
                            }
                            if let Process::Queue { id, items } = leaf_j {
                                if id.from == *role {
                                    let mut items = items.clone();
                                    items.push((label.clone(), value.clone()));
                                    let mut next = parts.clone();
                                    next[i] = wrap_defs(frames_i, (**cont).clone());
                                    next[j] = wrap_defs(
                                        frames_j,
                                        Process::Queue { id: id.clone(), items },
                                    );
                                    out.push((theta.clone(), rebuild_soup(next)));
                                }
                            }
                        }
                    }
                    Process::Branch { role, branches, .. }
                    | Process::Timeout { role, branches, .. } => {
                        for (j, (frames_j, leaf_j)) in peeled.iter().enumerate() {
                            if i == j {
                                continue;
                            }
                            if let Process::Queue { id, items } = leaf_j {
                                if id.to == *role && !items.is_empty() {
                                    let (label, value) = items[0].clone();
                                    if let Some(arm) =
                                        branches.iter().find(|b| b.label == label)
                                    {
                                        let body = match &arm.binder {
                                            Some(x) => arm.body.subst_value(x, &value),
                                            None => arm.body.clone(),
                                        };
                                        let mut next = parts.clone();
                                        next[i] = wrap_defs(frames_i, body);
                                        next[j] = wrap_defs(
                                            frames_j,
                                            Process::Queue {
                                                id: id.clone(),
                                                items: items[1..].to_vec(),
                                            },
                                        );
                                        out.push((theta.clone(), rebuild_soup(next)));
                                    }
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            // component-local steps
            for (i, part) in parts.iter().enumerate() {
                for (theta2, part2) in reduce_step(theta, part) {
                    let mut next = parts.clone();
                    next[i] = part2;
                    out.push((theta2, rebuild_soup(next)));
                }
            }
        }
        _ => {}
    }
    out
}

/// Rule Delay: `(theta, P)` steps to `(theta+t, time_pass(P, t))` when the
/// time-passing function is defined.
pub fn reduce_delay(theta: &TimerEnv, p: &Process, t: &TimeValue) -> Option<(TimerEnv, Process)> {
    let next = time_pass(p, t)?;
    Some((theta.advance(t), next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    Exhaustive,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: u64,
    pub action: String,
    pub timers: String,
    pub process: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: Vec<TraceStep>,
    pub states_explored: usize,
    /// Normalized terminal states reached (no successor at all).
    pub terminals: Vec<String>,
    /// Some terminal state had the fully-finished shape.
    pub completed: bool,
    pub fuel_exhausted: bool,
}

fn successors(theta: &TimerEnv, p: &Process, grid: &[TimeValue]) -> Vec<(String, TimerEnv, Process)> {
    let mut out: Vec<(String, TimerEnv, Process)> = reduce_step(theta, p)
        .into_iter()
        .map(|(th, pr)| ("step".to_string(), th, pr.normalize()))
        .collect();
    for t in grid {
        if t.is_zero() {
            continue;
        }
        if let Some((th, pr)) = reduce_delay(theta, p, t) {
            out.push((format!("delay({t})"), th, pr.normalize()));
        }
    }
    out
}

/// No instantaneous step is enabled now or after any representative delay.
fn is_quiescent(theta: &TimerEnv, p: &Process, grid: &[TimeValue]) -> bool {
    if !reduce_step(theta, p).is_empty() {
        return false;
    }
    for t in grid {
        if t.is_zero() {
            continue;
        }
        if let Some((th, pr)) = reduce_delay(theta, p, t) {
            // consumed delays leave `delay(0)` husks that hide redexes
            if !reduce_step(&th, &pr.normalize()).is_empty() {
                return false;
            }
        }
    }
    true
}

/// Interleaves instantaneous steps and representative delays under the
/// schedule, recording every intermediate state.
pub fn run(theta: &TimerEnv, p: &Process, schedule: Schedule, fuel: u64) -> RunReport {
    let grid = crate::timelogic::half_grid(p.max_constant());
    let p0 = p.normalize();
    let mut report = RunReport {
        steps: Vec::new(),
        states_explored: 0,
        terminals: Vec::new(),
        completed: false,
        fuel_exhausted: false,
    };
    match schedule {
        Schedule::Exhaustive => {
            let mut visited: BTreeSet<(TimerEnv, Process)> = BTreeSet::new();
            let mut frontier: VecDeque<(TimerEnv, Process, u64)> = VecDeque::new();
            visited.insert((theta.clone(), p0.clone()));
            frontier.push_back((theta.clone(), p0, 0));
            while let Some((th, pr, depth)) = frontier.pop_front() {
                report.states_explored += 1;
                if is_quiescent(&th, &pr, &grid) {
                    if pr.is_terminal_shape() {
                        report.completed = true;
                    }
                    let digest = format!("{pr:?}");
                    if !report.terminals.contains(&digest) {
                        report.terminals.push(digest);
                    }
                    continue;
                }
                if depth == fuel {
                    report.fuel_exhausted = true;
                    continue;
                }
                for (_, th2, pr2) in successors(&th, &pr, &grid) {
                    if visited.insert((th2.clone(), pr2.clone())) {
                        frontier.push_back((th2, pr2, depth + 1));
                    }
                }
            }
        }
        Schedule::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut th = theta.clone();
            let mut pr = p0;
            for k in 0..fuel {
                report.states_explored += 1;
                if is_quiescent(&th, &pr, &grid) {
                    if pr.is_terminal_shape() {
                        report.completed = true;
                    }
                    report.terminals.push(format!("{pr:?}"));
                    return report;
                }
                let succ = successors(&th, &pr, &grid);
                let pick = rng.gen_range(0..succ.len());
                let (action, th2, pr2) = succ.into_iter().nth(pick).expect("index in range");
                report.steps.push(TraceStep {
                    index: k + 1,
                    action,
                    timers: th2.to_string(),
                    process: format!("{pr2:?}"),
                });
                th = th2;
                pr = pr2;
            }
            report.fuel_exhausted = true;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qid(from: &str, to: &str) -> QueueId {
        QueueId { from: from.into(), to: to.into() }
    }

    fn queue(from: &str, to: &str, items: Vec<(&str, Value)>) -> Process {
        Process::Queue {
            id: qid(from, to),
            items: items.into_iter().map(|(l, v)| (l.to_string(), v)).collect(),
        }
    }

    fn recv(role: &str, deadline: Deadline, arms: Vec<(&str, Option<&str>, Process)>) -> Process {
        Process::Branch {
            role: role.into(),
            deadline,
            branches: arms
                .into_iter()
                .map(|(l, b, p)| BranchArm {
                    label: l.to_string(),
                    binder: b.map(|s| s.to_string()),
                    body: p,
                })
                .collect(),
        }
    }

    #[test]
    fn fq_examples() {
        assert_eq!(
            queue("q", "p", vec![]).fq(),
            [qid("q", "p")].into_iter().collect()
        );
        let scoped = Process::Scope {
            p: "p".into(),
            q: "q".into(),
            body: Box::new(Process::par(queue("p", "q", vec![]), queue("q", "p", vec![]))),
        };
        assert!(scoped.fq().is_empty());
        assert!(Process::Term.fq().is_empty());
    }

    #[test]
    fn wf_process_examples() {
        let body = Process::par(
            Process::par(Process::Term, Process::Term),
            Process::par(queue("q", "p", vec![]), queue("p", "q", vec![])),
        );
        let scoped = Process::Scope { p: "p".into(), q: "q".into(), body: Box::new(body) };
        assert!(scoped.wf_process());

        let leaky = Process::send("p", "l", Value::Unit, queue("q", "p", vec![]));
        assert!(!leaky.wf_process());
        assert!(Process::Term.wf_process());
    }

    #[test]
    fn wait_and_neq_examples() {
        let b = recv("p", Deadline::Infinite, vec![("m", None, Process::Term)]);
        assert_eq!(b.wait_set(), ["p".to_string()].into_iter().collect());
        assert!(Process::send("p", "l", Value::Unit, Process::Term)
            .wait_set()
            .is_empty());
        let scoped = Process::Scope { p: "p".into(), q: "q".into(), body: Box::new(b) };
        assert!(scoped.wait_set().is_empty());

        assert_eq!(
            queue("q", "p", vec![("l", Value::Unit)]).neq_set(),
            ["p".to_string()].into_iter().collect()
        );
        assert!(queue("q", "p", vec![]).neq_set().is_empty());
        let soup = Process::par(
            queue("q", "p", vec![("l", Value::Unit)]),
            queue("p", "q", vec![]),
        );
        assert_eq!(soup.neq_set(), ["p".to_string()].into_iter().collect());
    }

    #[test]
    fn time_pass_shrinks_deadlines() {
        let b = recv("p", Deadline::lt(3), vec![("m", None, Process::Term)]);
        let shrunk = time_pass(&b, &TimeValue::from_nat(1)).unwrap();
        match shrunk {
            Process::Branch { deadline, .. } => assert_eq!(deadline, Deadline::lt(2)),
            _ => panic!("expected branch"),
        }
        // delay beyond a plain branch deadline is undefined
        assert!(time_pass(&b, &TimeValue::from_nat(3)).is_none());
    }

    #[test]
    fn time_pass_undefined_on_sends() {
        let s = Process::send("p", "l", Value::Unit, Process::Term);
        assert!(time_pass(&s, &TimeValue::from_nat(1)).is_none());
        assert_eq!(time_pass(&s, &TimeValue::ZERO), Some(s));
    }

    #[test]
    fn timeout_collapse_takes_after_branch() {
        // deadline <3, after-branch is a send: at exactly 3 the timeout
        // collapses via the zero-delay identity, beyond 3 it is undefined
        let t = Process::Timeout {
            role: "p".into(),
            deadline: Deadline::lt(3),
            branches: vec![BranchArm { label: "m".into(), binder: None, body: Process::Term }],
            after: Box::new(Process::send("p", "l", Value::Unit, Process::Term)),
        };
        let collapsed = time_pass(&t, &TimeValue::from_nat(3)).unwrap();
        assert_eq!(collapsed, Process::send("p", "l", Value::Unit, Process::Term));
        assert!(time_pass(&t, &TimeValue::from_nat(4)).is_none());

        // non-strict deadline: at the bound the window narrows to <=0 and
        // any later delay falls through to the after-branch
        let t2 = Process::Timeout {
            role: "p".into(),
            deadline: Deadline::le(3),
            branches: vec![BranchArm { label: "m".into(), binder: None, body: Process::Term }],
            after: Box::new(recv("p", Deadline::Infinite, vec![("n", None, Process::Term)])),
        };
        let narrowed = time_pass(&t2, &TimeValue::from_nat(3)).unwrap();
        match &narrowed {
            Process::Timeout { deadline, .. } => assert_eq!(*deadline, Deadline::NonPositive),
            _ => panic!("expected timeout"),
        }
        let fallen = time_pass(&narrowed, &TimeValue::from_nat(2)).unwrap();
        match fallen {
            Process::Branch { .. } => {}
            other => panic!("expected the after branch, got {other:?}"),
        }
    }

    #[test]
    fn delay_shrink_and_consume() {
        let d = Process::delay_t(TimeValue::from_nat(5), Process::Term);
        let out = time_pass(&d, &TimeValue::from_nat(2)).unwrap();
        assert_eq!(out, Process::delay_t(TimeValue::from_nat(3), Process::Term));
        // consuming the delay continues into the continuation
        let out = time_pass(&d, &TimeValue::from_nat(5)).unwrap();
        assert_eq!(out, Process::delay_t(TimeValue::ZERO, Process::Term));
        let d2 = Process::delay_t(TimeValue::from_nat(1), Process::Term);
        assert_eq!(time_pass(&d2, &TimeValue::from_nat(3)), Some(Process::Term));
    }

    #[test]
    fn phi_additivity_on_grid() {
        let p = Process::Timeout {
            role: "p".into(),
            deadline: Deadline::le(3),
            branches: vec![BranchArm { label: "m".into(), binder: None, body: Process::Term }],
            after: Box::new(recv("p", Deadline::Infinite, vec![("n", None, Process::Term)])),
        };
        let grid = crate::timelogic::half_grid(4);
        for s in &grid {
            for t in &grid {
                let joint = time_pass(&p, &s.add(t)).map(|x| x.normalize());
                let split = time_pass(&p, s)
                    .and_then(|mid| time_pass(&mid, t))
                    .map(|x| x.normalize());
                assert_eq!(joint, split, "additivity at s={s}, t={t}");
            }
        }
    }

    #[test]
    fn phi_defined_implies_wait_neq_disjoint() {
        let blocked = Process::par(
            recv("p", Deadline::Infinite, vec![("m", None, Process::Term)]),
            queue("q", "p", vec![("m", Value::Unit)]),
        );
        assert!(time_pass(&blocked, &TimeValue::from_nat(1)).is_none());
        assert!(!blocked.wait_set().is_disjoint(&blocked.neq_set()));
    }

    #[test]
    fn reduce_send_appends_to_queue() {
        let theta = TimerEnv::empty();
        let p = Process::par(
            Process::send("p", "l", Value::Nat(5), Process::Term),
            queue("p", "q", vec![("k", Value::Unit)]),
        );
        let succ = reduce_step(&theta, &p);
        assert_eq!(succ.len(), 1);
        let mut parts = Vec::new();
        flatten_soup(&succ[0].1, &mut parts);
        assert!(parts.iter().any(|c| matches!(c,
            Process::Queue { items, .. } if items.len() == 2 && items[1] == ("l".to_string(), Value::Nat(5)))));
    }

    #[test]
    fn reduce_recv_dequeues_and_substitutes() {
        let theta = TimerEnv::empty();
        let body = Process::send("p", "echo", Value::Ref("v".into()), Process::Term);
        let p = Process::par(
            recv("p", Deadline::Infinite, vec![("m", Some("v"), body)]),
            queue("q", "p", vec![("m", Value::Nat(7))]),
        );
        let succ = reduce_step(&theta, &p);
        assert_eq!(succ.len(), 1);
        let mut parts = Vec::new();
        flatten_soup(&succ[0].1, &mut parts);
        assert!(parts.iter().any(|c| matches!(c,
            Process::Send { value: Value::Nat(7), .. })));
        assert!(parts.iter().any(|c| matches!(c,
            Process::Queue { items, .. } if items.is_empty())));
    }

    #[test]
    fn reduce_set_resets_timer() {
        let theta = TimerEnv::from_pairs([("x".to_string(), TimeValue::from_nat(7))]);
        let p = Process::SetTimer("x".into(), Box::new(Process::Term));
        let succ = reduce_step(&theta, &p);
        assert_eq!(succ.len(), 1);
        assert_eq!(succ[0].0.get("x"), Some(&TimeValue::ZERO));
    }

    #[test]
    fn reduce_call_unfolds_with_substitution() {
        let theta = TimerEnv::empty();
        let body = Process::send("r", "hi", Value::Ref("v".into()), Process::Term);
        let p = Process::Def {
            name: "X".into(),
            val_params: vec!["v".into()],
            role_params: vec!["r".into()],
            body: Box::new(body),
            cont: Box::new(Process::Call {
                name: "X".into(),
                val_args: vec![Value::Nat(3)],
                role_args: vec!["p".into()],
            }),
        };
        let succ = reduce_step(&theta, &p);
        assert_eq!(succ.len(), 1);
        match &succ[0].1 {
            Process::Def { cont, .. } => match &**cont {
                Process::Send { role, value, .. } => {
                    assert_eq!(role, "p");
                    assert_eq!(*value, Value::Nat(3));
                }
                other => panic!("expected send, got {other:?}"),
            },
            other => panic!("expected def, got {other:?}"),
        }
    }

    #[test]
    fn recv_matches_at_most_one_branch() {
        let arms = vec![
            ("a", None, Process::Term),
            ("b", None, Process::Term),
        ];
        let p = Process::par(
            recv("p", Deadline::Infinite, arms),
            queue("q", "p", vec![("b", Value::Unit)]),
        );
        let succ = reduce_step(&TimerEnv::empty(), &p);
        assert_eq!(succ.len(), 1);
    }

    #[test]
    fn structural_congruence_delay_zero() {
        let p = Process::delay_t(TimeValue::ZERO, Process::send("p", "l", Value::Unit, Process::Term));
        assert_eq!(
            p.normalize(),
            Process::send("p", "l", Value::Unit, Process::Term)
        );
    }

    #[test]
    fn run_terminates_on_term() {
        let report = run(&TimerEnv::empty(), &Process::Term, Schedule::Exhaustive, 10);
        assert!(report.completed);
        assert!(!report.fuel_exhausted);
        assert!(report.steps.is_empty());
    }
}
