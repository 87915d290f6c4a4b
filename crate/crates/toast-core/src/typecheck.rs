//! The typing system: environments, t-reading and balance predicates,
//! session-environment reduction, the syntax-directed checker, and the
//! subject-reduction harness.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::calculus::{
    reduce_delay, reduce_step, BranchArm, Deadline, Process, QueueId, TimerEnv, Value,
};
use crate::semantics::{
    cfg_actions, compatible, Configuration, Message, MsgQueue, QueuedConfig, TransLabel,
};
use crate::timelogic::{
    delay_projection, half_grid, normalize, ClockId, IntervalSet, TimeValue, Valuation,
};
use crate::typesys::{Direction, SessionType, Sort};
use crate::wellformed::{canonical_constraint, wf_config};

/// Session environments: roles mapped to configurations and queue
/// endpoints mapped to type-level message queues.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionEnv {
    pub roles: BTreeMap<String, Configuration>,
    pub queues: BTreeMap<QueueId, Vec<Message>>,
}

impl SessionEnv {
    pub fn empty() -> Self {
        SessionEnv::default()
    }

    pub fn with_role(mut self, name: &str, cfg: Configuration) -> Self {
        self.roles.insert(name.to_string(), cfg);
        self
    }

    pub fn with_queue(mut self, id: QueueId, items: Vec<Message>) -> Self {
        self.queues.insert(id, items);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty() && self.queues.is_empty()
    }

    /// `Delta + t`: every role valuation shifts uniformly, queues unchanged.
    pub fn advance(&self, t: &TimeValue) -> SessionEnv {
        SessionEnv {
            roles: self
                .roles
                .iter()
                .map(|(k, c)| {
                    (k.clone(), Configuration { nu: c.nu.advance(t), s: c.s.clone() })
                })
                .collect(),
            queues: self.queues.clone(),
        }
    }

    fn remove_role(&self, name: &str) -> (Option<Configuration>, SessionEnv) {
        let mut next = self.clone();
        let cfg = next.roles.remove(name);
        (cfg, next)
    }

    pub fn max_constant(&self) -> u64 {
        self.roles
            .values()
            .map(|c| c.s.max_constant())
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for SessionEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .roles
            .iter()
            .map(|(k, c)| format!("{k}:({}, {})", c.nu, c.s))
            .collect();
        for (id, q) in &self.queues {
            let items: Vec<String> = q.iter().map(|m| m.to_string()).collect();
            parts.push(format!("{id}:[{}]", items.join(", ")));
        }
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// `theta + t`.
pub fn theta_advance(theta: &TimerEnv, t: &TimeValue) -> TimerEnv {
    theta.advance(t)
}

/// `Delta + t`.
pub fn delta_advance(delta: &SessionEnv, t: &TimeValue) -> SessionEnv {
    delta.advance(t)
}

fn direction_windows(cfg: &Configuration, dir: Direction) -> IntervalSet {
    let head = cfg.s.unfold_head();
    let SessionType::Choice(opts) = head else {
        return IntervalSet::empty();
    };
    let mut acc = IntervalSet::empty();
    for o in &opts {
        if o.direction == dir {
            acc = acc.union(&delay_projection(&cfg.nu, &o.guard));
        }
    }
    acc
}

/// Reading within a window: some role can perform a receive at a point of
/// the window with no send opportunity of the same role at or before that
/// point. A mixed choice whose send options open no later than its
/// receives masks them: the implementation may legitimately be on the
/// sending side of the choice. Send opportunities are measured from as far
/// back as the clocks allow, so the predicate is monotone along delays and
/// residual delays of a masked window stay masked.
fn reading_in_window(delta: &SessionEnv, window: &IntervalSet) -> bool {
    for cfg in delta.roles.values() {
        let recv = direction_windows(cfg, Direction::Recv).intersect(window);
        if recv.is_empty() {
            continue;
        }
        // shift the valuation back by the smallest clock value and widen
        // the send axis accordingly
        let lookback = cfg
            .nu
            .clocks()
            .filter_map(|c| cfg.nu.get(c).copied())
            .min()
            .unwrap_or(TimeValue::ZERO);
        let base = Configuration {
            nu: shift_back(&cfg.nu, &lookback),
            s: cfg.s.clone(),
        };
        let send = direction_windows(&base, Direction::Send);
        let recv_shifted = shift_window(&recv, &lookback);
        if send.is_empty() || recv_shifted.starts_strictly_before(&send) {
            return true;
        }
    }
    false
}

fn shift_back(nu: &Valuation, amount: &TimeValue) -> Valuation {
    Valuation::from_map(
        nu.clocks()
            .map(|c| {
                let v = nu.get(c).expect("clock in domain");
                (c.clone(), v.checked_sub(amount).expect("amount is the minimum"))
            })
            .collect(),
    )
}

fn shift_window(window: &IntervalSet, amount: &TimeValue) -> IntervalSet {
    window.shifted_up(amount)
}

/// `Delta` is t-reading: some role can receive strictly before `t`.
pub fn t_reading(delta: &SessionEnv, t: &TimeValue) -> bool {
    reading_in_window(delta, &IntervalSet::upto(t, false))
}

/// The deadline form of reading, with the window closed or open at the
/// bound according to the deadline.
pub fn deadline_reading(delta: &SessionEnv, e: &Deadline) -> bool {
    reading_in_window(delta, &deadline_window(e))
}

fn deadline_window(e: &Deadline) -> IntervalSet {
    match e {
        Deadline::Infinite => IntervalSet::all(),
        Deadline::NonPositive => IntervalSet::point_zero(),
        Deadline::Bounded { strict, bound } => IntervalSet::upto(bound, !strict),
    }
}

/// Every role configuration in the environment is well-formed.
pub fn wf_session(delta: &SessionEnv) -> bool {
    delta.roles.values().all(|c| wf_config(&c.nu, &c.s))
}

fn receivable(cfg: &Configuration, m: &Message) -> Option<Configuration> {
    cfg_actions(cfg).into_iter().find_map(|(l, c)| match l {
        TransLabel::RecvM(got) if got == *m => Some(c),
        _ => None,
    })
}

/// Balance: queued heads are receivable with balanced residuals, and roles
/// paired with their co-role are compatible. For a role whose partner
/// queue is absent, compatibility is probed with the empty queue.
pub fn balanced(delta: &SessionEnv) -> bool {
    balanced_inner(delta, &mut BTreeSet::new())
}

fn balanced_inner(delta: &SessionEnv, seen: &mut BTreeSet<SessionEnv>) -> bool {
    if !seen.insert(delta.clone()) {
        return true;
    }
    // (1) every queued head aimed at a present role is receivable and the
    // residual environment stays balanced
    for (id, items) in &delta.queues {
        if let Some(cfg) = delta.roles.get(&id.to) {
            if let Some(head) = items.first() {
                let Some(cfg2) = receivable(cfg, head) else {
                    return false;
                };
                let mut next = delta.clone();
                next.roles.insert(id.to.clone(), cfg2);
                next.queues.insert(id.clone(), items[1..].to_vec());
                if !balanced_inner(&next, seen) {
                    return false;
                }
            }
        }
    }
    // (2)/(3) roles with a present partner must form compatible pairs
    for (p, cfg1) in &delta.roles {
        for (q, cfg2) in &delta.roles {
            if p >= q {
                continue;
            }
            let qp = QueueId { from: q.clone(), to: p.clone() };
            let pq = QueueId { from: p.clone(), to: q.clone() };
            let in_p = delta.queues.get(&qp);
            let in_q = delta.queues.get(&pq);
            if in_p.is_none() && in_q.is_none() {
                continue;
            }
            let w1 = MsgQueue::from_items(in_p.cloned().unwrap_or_default());
            let w2 = MsgQueue::from_items(in_q.cloned().unwrap_or_default());
            let qc1 = QueuedConfig::new(cfg1.clone(), w1);
            let qc2 = QueuedConfig::new(cfg2.clone(), w2);
            if !compatible(&qc1, &qc2) {
                return false;
            }
        }
    }
    true
}

/// Fully balanced: balanced, and every role and queue endpoint appears in
/// a complete four-entry session.
pub fn fully_balanced(delta: &SessionEnv) -> bool {
    if !balanced(delta) {
        return false;
    }
    let complete = |p: &str, q: &str| -> bool {
        delta.roles.contains_key(p)
            && delta.roles.contains_key(q)
            && delta
                .queues
                .contains_key(&QueueId { from: p.to_string(), to: q.to_string() })
            && delta
                .queues
                .contains_key(&QueueId { from: q.to_string(), to: p.to_string() })
    };
    for p in delta.roles.keys() {
        let found = delta.roles.keys().any(|q| q != p && complete(p, q));
        if !found {
            return false;
        }
    }
    for id in delta.queues.keys() {
        if !complete(&id.from, &id.to) {
            return false;
        }
    }
    true
}

/// One-step session-environment reduction: a role sends into its outbound
/// queue, or consumes the head of its inbound queue.
pub fn session_step(delta: &SessionEnv) -> Vec<SessionEnv> {
    let mut out = Vec::new();
    for (p, cfg) in &delta.roles {
        // sends into each outbound queue present in the environment
        for (label, cfg2) in cfg_actions(cfg) {
            if let TransLabel::SendM(m) = label {
                for (id, items) in &delta.queues {
                    if id.from == *p {
                        let mut next = delta.clone();
                        next.roles.insert(p.clone(), cfg2.clone());
                        let mut items = items.clone();
                        items.push(m.clone());
                        next.queues.insert(id.clone(), items);
                        out.push(next);
                    }
                }
            }
        }
        // receive of the inbound head
        for (id, items) in &delta.queues {
            if id.to == *p {
                if let Some(head) = items.first() {
                    if let Some(cfg2) = receivable(cfg, head) {
                        let mut next = delta.clone();
                        next.roles.insert(p.clone(), cfg2);
                        next.queues.insert(id.clone(), items[1..].to_vec());
                        out.push(next);
                    }
                }
            }
        }
    }
    out
}

/// Variable environments: value sorts plus process-variable signatures.
#[derive(Debug, Clone, Default)]
pub struct VarEnv {
    values: BTreeMap<String, Sort>,
    procvars: BTreeMap<String, Rc<RefCell<ProcVarState>>>,
}

impl VarEnv {
    pub fn empty() -> Self {
        VarEnv::default()
    }

    pub fn with_value(mut self, name: &str, sort: Sort) -> Self {
        self.values.insert(name.to_string(), sort);
        self
    }

    fn value_sort(&self, name: &str) -> Option<&Sort> {
        self.values.get(name)
    }
}

/// The mutable collection state of one `def`: the finite sets of timer and
/// session environments observed at its call sites, and the body checks
/// still pending.
#[derive(Debug)]
struct ProcVarState {
    val_params: Vec<String>,
    role_params: Vec<String>,
    body: Process,
    val_sorts: Option<Vec<Sort>>,
    thetas: Vec<TimerEnv>,
    deltas: Vec<Vec<Configuration>>,
    checked: BTreeSet<(String, String)>,
    pending: VecDeque<(TimerEnv, Vec<Configuration>)>,
}

/// Region key for a timer or clock value with constants bounded by `m`:
/// the integer part capped at `m+1` plus whether the fractional part is
/// zero. Values beyond every constant share one class.
fn value_region(v: &TimeValue, m: u64) -> (u64, bool) {
    let r = v.ratio();
    let floor = r.floor().to_integer().max(0) as u64;
    if floor > m {
        (m + 1, false)
    } else {
        (floor, r.is_integer())
    }
}

fn theta_region(theta: &TimerEnv, m: u64) -> String {
    let parts: Vec<String> = theta
        .iter()
        .map(|(k, v)| {
            let (f, i) = value_region(v, m);
            format!("{k}:{f}:{i}")
        })
        .collect();
    parts.join(",")
}

fn configs_region(cfgs: &[Configuration], m: u64) -> String {
    let parts: Vec<String> = cfgs
        .iter()
        .map(|c| {
            let nu: Vec<String> = c
                .nu
                .clocks()
                .map(|k| {
                    let (f, i) = value_region(c.nu.get(k).expect("clock in domain"), m);
                    format!("{k}:{f}:{i}")
                })
                .collect();
            format!("({}|{})", nu.join(","), c.s)
        })
        .collect();
    parts.join(";")
}

fn config_equiv(a: &Configuration, b: &Configuration, m: u64) -> bool {
    if !a.s.unfold_equiv(&b.s) {
        return false;
    }
    let ka: BTreeSet<&ClockId> = a.nu.clocks().collect();
    let kb: BTreeSet<&ClockId> = b.nu.clocks().collect();
    if ka != kb {
        return false;
    }
    ka.iter().all(|k| {
        value_region(a.nu.get(k).expect("domain"), m)
            == value_region(b.nu.get(k).expect("domain"), m)
    })
}

fn theta_equiv(a: &TimerEnv, b: &TimerEnv, m: u64) -> bool {
    let names_a: BTreeSet<&String> = a.iter().map(|(k, _)| k).collect();
    let names_b: BTreeSet<&String> = b.iter().map(|(k, _)| k).collect();
    if names_a != names_b {
        return false;
    }
    names_a.iter().all(|k| {
        value_region(a.get(k).expect("present"), m) == value_region(b.get(k).expect("present"), m)
    })
}

/// One node of a derivation tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeriveNode {
    pub rule: String,
    pub judgment: String,
    pub status: String,
    pub children: Vec<DeriveNode>,
}

impl DeriveNode {
    fn ok(rule: &str, judgment: String, children: Vec<DeriveNode>) -> Self {
        DeriveNode { rule: rule.to_string(), judgment, status: "accepted".into(), children }
    }

    fn bad(rule: &str, judgment: String, children: Vec<DeriveNode>) -> Self {
        DeriveNode { rule: rule.to_string(), judgment, status: "rejected".into(), children }
    }

    /// Rule names in depth-first preorder.
    pub fn preorder_rules(&self) -> Vec<String> {
        let mut out = vec![self.rule.clone()];
        for c in &self.children {
            out.extend(c.preorder_rules());
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeReport {
    pub accepted: bool,
    pub derivation: DeriveNode,
    /// The deepest failing premise, carrying the rule name verbatim.
    pub failing_premise: Option<String>,
}

struct Failure {
    premise: String,
    node: DeriveNode,
}

type CheckResult = Result<DeriveNode, Failure>;

/// Scope bindings supply the configurations rule Res assigns to the two
/// endpoints of each restricted session.
#[derive(Debug, Clone, Default)]
pub struct ScopeBindings {
    pub sessions: BTreeMap<(String, String), (Configuration, Configuration)>,
}

impl ScopeBindings {
    pub fn bind(
        mut self,
        p: &str,
        q: &str,
        left: Configuration,
        right: Configuration,
    ) -> ScopeBindings {
        self.sessions.insert((p.to_string(), q.to_string()), (left, right));
        self
    }

    fn lookup(&self, p: &str, q: &str) -> Option<(Configuration, Configuration)> {
        if let Some((a, b)) = self.sessions.get(&(p.to_string(), q.to_string())) {
            return Some((a.clone(), b.clone()));
        }
        self.sessions
            .get(&(q.to_string(), p.to_string()))
            .map(|(a, b)| (b.clone(), a.clone()))
    }
}

pub struct Checker {
    bindings: ScopeBindings,
    max_const: u64,
    /// Iteration budget for the recursion fixpoint.
    rec_cap: usize,
    /// Judgment memo: the quantified premises re-derive identical
    /// sub-judgments (timer resets collapse the instants), so results are
    /// shared within and across runs. Scope judgments are never memoized
    /// (they are the only ones that consult the scope bindings). Entries
    /// carry the call-site environments harvested inside the subtree so
    /// recursion collection replays on hits.
    memo: Rc<RefCell<std::collections::HashMap<MemoKey, Memoized>>>,
    /// Flat log of call-site environments; a subtree's harvest is the log
    /// suffix written while it was being checked.
    harvest_log: Vec<Harvest>,
}

/// A judgment memo that can be shared across checker instances, e.g. by
/// the subject-reduction harness re-checking many related residuals.
pub type JudgmentMemo = Rc<RefCell<std::collections::HashMap<MemoKey, Memoized>>>;

pub fn fresh_memo() -> JudgmentMemo {
    Rc::new(RefCell::new(std::collections::HashMap::new()))
}

/// A 128-bit fingerprint of a judgment, hashed over the timers, the
/// process, the session environment, and the variable environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoKey(u64, u64);

fn memo_key(gamma: &VarEnv, theta: &TimerEnv, p: &Process, delta: &SessionEnv) -> MemoKey {
    use std::hash::{Hash, Hasher};
    let mut parts = [0u64; 2];
    for (i, salt) in [0x746f617374u64, 0x74696d6564u64].into_iter().enumerate() {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        salt.hash(&mut h);
        theta.hash(&mut h);
        p.hash(&mut h);
        delta.hash(&mut h);
        for (k, v) in &gamma.values {
            k.hash(&mut h);
            v.hash(&mut h);
        }
        for (k, st) in &gamma.procvars {
            k.hash(&mut h);
            st.borrow().val_sorts.hash(&mut h);
        }
        parts[i] = h.finish();
    }
    MemoKey(parts[0], parts[1])
}

#[derive(Debug, Clone)]
pub struct Memoized {
    rule: String,
    /// `None` on acceptance, the failing premise otherwise.
    premise: Option<String>,
    harvest: Vec<Harvest>,
}

type Harvest = Rc<(String, TimerEnv, Vec<Configuration>)>;

fn render_judgment(theta: &TimerEnv, p: &Process, delta: &SessionEnv) -> String {
    let head = match p {
        Process::Term => "0".to_string(),
        Process::Send { role, label, .. } => format!("{role}!{label}..."),
        Process::Branch { role, .. } => format!("{role}?{{...}}"),
        Process::Timeout { role, .. } => format!("{role}?{{...}} after ..."),
        Process::SetTimer(x, _) => format!("set({x})..."),
        Process::If { cond, .. } => format!("if ({cond})..."),
        Process::DelaySym { delta, .. } => format!("delay({delta})..."),
        Process::DelayT { t, .. } => format!("delay({t})..."),
        Process::Def { name, .. } => format!("def {name}=... in ..."),
        Process::Call { name, .. } => format!("{name}(...)"),
        Process::Scope { p, q, .. } => format!("new ({p} {q}) ..."),
        Process::Par(..) => "... | ...".to_string(),
        Process::Queue { id, .. } => format!("{id}:[...]"),
    };
    // roles are rendered with their valuations only; full type text at
    // every node would dwarf the actual checking work
    let mut dom: Vec<String> = delta.roles.iter().map(|(k, c)| format!("{k}@{}", c.nu)).collect();
    dom.extend(delta.queues.iter().map(|(id, q)| format!("{id}[{}]", q.len())));
    format!("{theta} |- {head} |> {{{}}}", dom.join(", "))
}

/// Sorts of runtime values; names resolve through the variable environment
/// first and then as delegated endpoints of the session environment.
fn classify_value(gamma: &VarEnv, delta: &SessionEnv, v: &Value) -> Option<Sort> {
    match v {
        Value::Nat(_) => Some(Sort::Nat),
        Value::Bool(_) => Some(Sort::Bool),
        Value::Str(_) => Some(Sort::Str),
        Value::Unit => Some(Sort::None),
        Value::Ref(x) => {
            if let Some(sort) = gamma.value_sort(x) {
                return Some(sort.clone());
            }
            delta
                .roles
                .get(x)
                .map(|cfg| Sort::Delegate(canonical_constraint(&cfg.s), Box::new(cfg.s.clone())))
        }
    }
}

fn value_has_sort(gamma: &VarEnv, v: &Value, sort: &Sort) -> bool {
    match (v, sort) {
        (Value::Nat(_), Sort::Nat)
        | (Value::Bool(_), Sort::Bool)
        | (Value::Str(_), Sort::Str)
        | (Value::Unit, Sort::None) => true,
        (Value::Ref(x), s) => gamma.value_sort(x) == Some(s),
        _ => false,
    }
}

impl Process {
    /// Roles a component mentions free, for the linear split of rule Par.
    fn roles_needed(&self) -> BTreeSet<String> {
        match self {
            Process::Term => BTreeSet::new(),
            Process::SetTimer(_, cont) => cont.roles_needed(),
            Process::Send { role, value, cont, .. } => {
                let mut set = cont.roles_needed();
                set.insert(role.clone());
                if let Value::Ref(x) = value {
                    set.insert(x.clone());
                }
                set
            }
            Process::Branch { role, branches, .. } => {
                let mut set: BTreeSet<String> =
                    branches.iter().flat_map(|b| b.body.roles_needed()).collect();
                set.insert(role.clone());
                set
            }
            Process::Timeout { role, branches, after, .. } => {
                let mut set: BTreeSet<String> =
                    branches.iter().flat_map(|b| b.body.roles_needed()).collect();
                set.extend(after.roles_needed());
                set.insert(role.clone());
                set
            }
            Process::If { then_p, else_p, .. } => {
                let mut set = then_p.roles_needed();
                set.extend(else_p.roles_needed());
                set
            }
            Process::DelaySym { cont, .. } | Process::DelayT { cont, .. } => cont.roles_needed(),
            Process::Def { body, role_params, cont, .. } => {
                let mut set = body.roles_needed();
                for rp in role_params {
                    set.remove(rp);
                }
                set.extend(cont.roles_needed());
                set
            }
            Process::Call { val_args, role_args, .. } => {
                let mut set: BTreeSet<String> = role_args.iter().cloned().collect();
                for v in val_args {
                    if let Value::Ref(x) = v {
                        set.insert(x.clone());
                    }
                }
                set
            }
            Process::Scope { p, q, body } => {
                let mut set = body.roles_needed();
                set.remove(p);
                set.remove(q);
                set
            }
            Process::Par(a, b) => {
                let mut set = a.roles_needed();
                set.extend(b.roles_needed());
                set
            }
            Process::Queue { items, .. } => items
                .iter()
                .filter_map(|(_, v)| match v {
                    Value::Ref(x) => Some(x.clone()),
                    _ => None,
                })
                .collect(),
        }
    }

    fn queues_needed(&self) -> BTreeSet<QueueId> {
        match self {
            Process::Queue { id, .. } => [id.clone()].into_iter().collect(),
            Process::Scope { p, q, body } => {
                let mut set = body.queues_needed();
                set.remove(&QueueId { from: p.clone(), to: q.clone() });
                set.remove(&QueueId { from: q.clone(), to: p.clone() });
                set
            }
            Process::SetTimer(_, cont)
            | Process::Send { cont, .. }
            | Process::DelaySym { cont, .. }
            | Process::DelayT { cont, .. } => cont.queues_needed(),
            Process::Def { cont, .. } => cont.queues_needed(),
            Process::Branch { branches, .. } => {
                branches.iter().flat_map(|b| b.body.queues_needed()).collect()
            }
            Process::Timeout { branches, after, .. } => {
                let mut set: BTreeSet<QueueId> =
                    branches.iter().flat_map(|b| b.body.queues_needed()).collect();
                set.extend(after.queues_needed());
                set
            }
            Process::If { then_p, else_p, .. } => {
                let mut set = then_p.queues_needed();
                set.extend(else_p.queues_needed());
                set
            }
            Process::Par(a, b) => {
                let mut set = a.queues_needed();
                set.extend(b.queues_needed());
                set
            }
            _ => BTreeSet::new(),
        }
    }
}

impl Checker {
    pub fn new(bindings: ScopeBindings) -> Self {
        Checker::with_memo(bindings, fresh_memo())
    }

    pub fn with_memo(bindings: ScopeBindings, memo: JudgmentMemo) -> Self {
        Checker { bindings, max_const: 0, rec_cap: 64, memo, harvest_log: Vec::new() }
    }

    /// Runs the judgment `gamma, theta |- p |> delta`.
    pub fn typecheck(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        p: &Process,
        delta: &SessionEnv,
    ) -> TypeReport {
        let mut m = p.max_constant().max(delta.max_constant());
        for (a, b) in self.bindings.sessions.values() {
            m = m.max(a.s.max_constant()).max(b.s.max_constant());
        }
        for (_, v) in theta.iter() {
            m = m.max(v.ceil_nat());
        }
        self.max_const = m;
        match self.check(gamma, theta, p, delta) {
            Ok(node) => TypeReport { accepted: true, derivation: node, failing_premise: None },
            Err(fail) => TypeReport {
                accepted: false,
                derivation: fail.node,
                failing_premise: Some(fail.premise),
            },
        }
    }

    /// Representative instants of a deadline window, on the grid up to
    /// `M+1` (the single beyond-all-constants point stands in for an
    /// unbounded tail).
    fn deadline_instants(&self, e: &Deadline) -> Vec<TimeValue> {
        half_grid(self.max_const).into_iter().filter(|t| e.admits(t)).collect()
    }

    fn check(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        p: &Process,
        delta: &SessionEnv,
    ) -> CheckResult {
        // leaves are cheaper to recompute than to hash
        let memoizable = matches!(
            p,
            Process::SetTimer(..)
                | Process::If { .. }
                | Process::DelaySym { .. }
                | Process::DelayT { .. }
                | Process::Branch { .. }
                | Process::Timeout { .. }
                | Process::Par(..)
                | Process::Def { .. }
        );
        if !memoizable {
            return self.check_inner(gamma, theta, p, delta);
        }
        let key = memo_key(gamma, theta, p, delta);
        let cached = self.memo.borrow().get(&key).cloned();
        if let Some(hit) = cached {
            for entry in &hit.harvest {
                let (name, th, cfgs) = &**entry;
                self.register_call_site(gamma, name, th, cfgs);
            }
            // the replayed sites also belong to every enclosing subtree
            self.harvest_log.extend(hit.harvest.iter().cloned());
            // the full subderivation lives at its first occurrence; repeats
            // are represented by a shared-reference node
            let judgment = format!("{} (shared subderivation)", render_judgment(theta, p, delta));
            return match hit.premise {
                None => Ok(DeriveNode::ok(&hit.rule, judgment, vec![])),
                Some(premise) => {
                    Err(Failure { premise, node: DeriveNode::bad(&hit.rule, judgment, vec![]) })
                }
            };
        }
        let start = self.harvest_log.len();
        let outcome = self.check_inner(gamma, theta, p, delta);
        let harvest: Vec<Harvest> = self.harvest_log[start..].to_vec();
        let stored = match &outcome {
            Ok(node) => Memoized { rule: node.rule.clone(), premise: None, harvest },
            Err(f) => Memoized {
                rule: f.node.rule.clone(),
                premise: Some(f.premise.clone()),
                harvest,
            },
        };
        self.memo.borrow_mut().insert(key, stored);
        outcome
    }

    /// Adds a call-site environment to a definition's collection sets,
    /// scheduling body checks for every new pairing.
    fn register_call_site(
        &mut self,
        gamma: &VarEnv,
        name: &str,
        theta: &TimerEnv,
        cfgs: &[Configuration],
    ) {
        let Some(state) = gamma.procvars.get(name).cloned() else {
            return;
        };
        let m = self.max_const;
        let mut st = state.borrow_mut();
        let theta_known = st.thetas.iter().any(|t| theta_equiv(t, theta, m));
        if !theta_known {
            st.thetas.push(theta.clone());
        }
        let delta_known = st.deltas.iter().any(|d| {
            d.len() == cfgs.len() && d.iter().zip(cfgs.iter()).all(|(a, b)| config_equiv(a, b, m))
        });
        if !delta_known {
            st.deltas.push(cfgs.to_vec());
        }
        if !theta_known || !delta_known {
            let thetas = st.thetas.clone();
            let deltas = st.deltas.clone();
            for t in &thetas {
                for d in &deltas {
                    let key = (theta_region(t, m), configs_region(d, m));
                    if st.checked.insert(key) {
                        st.pending.push_back((t.clone(), d.clone()));
                    }
                }
            }
        }
    }

    fn check_inner(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        p: &Process,
        delta: &SessionEnv,
    ) -> CheckResult {
        let judgment = render_judgment(theta, p, delta);
        match p {
            Process::Term => self.check_term(judgment, delta),
            Process::Queue { id, items } => {
                self.check_queue(gamma, theta, judgment, id, items, delta)
            }
            Process::Send { role, label, value, cont } => {
                self.check_send(gamma, theta, judgment, role, label, value, cont, delta)
            }
            Process::Branch { role, deadline, branches } => {
                self.check_receive(gamma, theta, judgment, role, deadline, branches, delta)
            }
            Process::Timeout { role, deadline, branches, after } => {
                self.check_timeout(gamma, theta, judgment, role, deadline, branches, after, delta)
            }
            Process::If { cond, then_p, else_p } => {
                let undefined: Vec<String> = cond
                    .clocks()
                    .into_iter()
                    .filter(|c| !theta.contains(c.name()))
                    .map(|c| c.name().to_string())
                    .collect();
                if !undefined.is_empty() {
                    return Err(Failure {
                        premise: format!(
                            "IfTrue: timer(s) {} not declared in theta",
                            undefined.join(", ")
                        ),
                        node: DeriveNode::bad("IfTrue", judgment, vec![]),
                    });
                }
                if theta.sat(cond) {
                    let sub = self.check(gamma, theta, then_p, delta)?;
                    Ok(DeriveNode::ok("IfTrue", judgment, vec![sub]))
                } else {
                    let sub = self.check(gamma, theta, else_p, delta)?;
                    Ok(DeriveNode::ok("IfFalse", judgment, vec![sub]))
                }
            }
            Process::DelaySym { delta: guard, cont } => {
                let mut children = Vec::new();
                for t in crate::timelogic::representative_delays(guard, self.max_const) {
                    let inner = Process::DelayT { t, cont: cont.clone() };
                    match self.check(gamma, theta, &inner, delta) {
                        Ok(node) => children.push(node),
                        Err(fail) => {
                            children.push(fail.node);
                            return Err(Failure {
                                premise: fail.premise,
                                node: DeriveNode::bad("Del[δ]", judgment, children),
                            });
                        }
                    }
                }
                Ok(DeriveNode::ok("Del[δ]", judgment, children))
            }
            Process::DelayT { t, cont } => {
                if t_reading(delta, t) {
                    return Err(Failure {
                        premise: "Del[t]: Δ not t-reading".into(),
                        node: DeriveNode::bad("Del[t]", judgment, vec![]),
                    });
                }
                let sub = self.check(gamma, &theta.advance(t), cont, &delta.advance(t))?;
                Ok(DeriveNode::ok("Del[t]", judgment, vec![sub]))
            }
            Process::SetTimer(x, cont) => {
                if !theta.contains(x) {
                    return Err(Failure {
                        premise: format!("Timer: timer `{x}` not declared in theta"),
                        node: DeriveNode::bad("Timer", judgment, vec![]),
                    });
                }
                let sub = self.check(gamma, &theta.set_zero(x), cont, delta)?;
                Ok(DeriveNode::ok("Timer", judgment, vec![sub]))
            }
            Process::Par(a, b) => self.check_par(gamma, theta, judgment, a, b, delta),
            Process::Scope { p: rp, q: rq, body } => {
                self.check_scope(gamma, theta, judgment, rp, rq, body, delta)
            }
            Process::Def { .. } => self.check_def(gamma, theta, judgment, p, delta),
            Process::Call { name, val_args, role_args } => {
                self.check_call(gamma, theta, judgment, name, val_args, role_args, delta)
            }
        }
    }

    fn check_term(&mut self, judgment: String, delta: &SessionEnv) -> CheckResult {
        if !delta.queues.is_empty() {
            return Err(Failure {
                premise: "End: Δ still carries queue endpoints".into(),
                node: DeriveNode::bad("End", judgment, vec![]),
            });
        }
        let mut children = Vec::new();
        for (name, cfg) in delta.roles.iter() {
            if cfg.s.is_end() {
                children.push(DeriveNode::ok(
                    "Weak",
                    format!("drop {name}:({}, end)", cfg.nu),
                    vec![],
                ));
            } else {
                return Err(Failure {
                    premise: format!("End: role `{name}` has not reached end"),
                    node: DeriveNode::bad("End", judgment, children),
                });
            }
        }
        children.push(DeriveNode::ok("End", "Δ is end".into(), vec![]));
        Ok(DeriveNode::ok("End", judgment, children))
    }

    #[allow(clippy::too_many_arguments)]
    fn check_queue(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        id: &QueueId,
        items: &[(String, Value)],
        delta: &SessionEnv,
    ) -> CheckResult {
        let Some(omega) = delta.queues.get(id).cloned() else {
            return Err(Failure {
                premise: format!("Empty: Δ has no entry for queue {id}"),
                node: DeriveNode::bad("Empty", judgment, vec![]),
            });
        };
        if items.is_empty() {
            if !omega.is_empty() {
                return Err(Failure {
                    premise: format!("Empty: queue {id} typed non-empty but holds no message"),
                    node: DeriveNode::bad("Empty", judgment, vec![]),
                });
            }
            // rule Empty demands exactly the queue entry; end roles weaken away
            let mut rest = delta.clone();
            rest.queues.remove(id);
            let mut children = Vec::new();
            for (name, cfg) in rest.roles.clone() {
                if cfg.s.is_end() {
                    children.push(DeriveNode::ok(
                        "Weak",
                        format!("drop {name}:({}, end)", cfg.nu),
                        vec![],
                    ));
                    rest.roles.remove(&name);
                }
            }
            if !rest.is_empty() {
                return Err(Failure {
                    premise: format!("Empty: Δ carries entries beyond queue {id}"),
                    node: DeriveNode::bad("Empty", judgment, children),
                });
            }
            children.push(DeriveNode::ok("Empty", format!("{id}:[] |> {id}:[]"), vec![]));
            return Ok(DeriveNode::ok("Empty", judgment, children));
        }
        let (label, value) = &items[0];
        let Some(head) = omega.first() else {
            return Err(Failure {
                premise: format!("VQue: queue {id} holds `{label}` but is typed empty"),
                node: DeriveNode::bad("VQue", judgment, vec![]),
            });
        };
        if head.label != *label {
            return Err(Failure {
                premise: format!(
                    "VQue: queue {id} head `{label}` does not match typed `{}`",
                    head.label
                ),
                node: DeriveNode::bad("VQue", judgment, vec![]),
            });
        }
        match &head.payload {
            Sort::Delegate(init, proto) => {
                // rule DQue: the payload names a role whose configuration is
                // consumed from Δ
                let Value::Ref(b) = value else {
                    return Err(Failure {
                        premise: format!("DQue: queue {id} head `{label}` must carry an endpoint"),
                        node: DeriveNode::bad("DQue", judgment, vec![]),
                    });
                };
                let (Some(cfg_b), mut rest) = delta.remove_role(b) else {
                    return Err(Failure {
                        premise: format!("DQue: delegated endpoint `{b}` not in Δ"),
                        node: DeriveNode::bad("DQue", judgment, vec![]),
                    });
                };
                if !cfg_b.s.unfold_equiv(proto) {
                    return Err(Failure {
                        premise: format!("DQue: `{b}`'s protocol differs from the queued payload"),
                        node: DeriveNode::bad("DQue", judgment, vec![]),
                    });
                }
                if !init.sat(&cfg_b.nu) {
                    return Err(Failure {
                        premise: format!(
                            "DQue: `{b}`'s valuation does not satisfy the initialization {init}"
                        ),
                        node: DeriveNode::bad("DQue", judgment, vec![]),
                    });
                }
                rest.queues.insert(id.clone(), omega[1..].to_vec());
                let tail = Process::Queue { id: id.clone(), items: items[1..].to_vec() };
                let sub = self.check(gamma, theta, &tail, &rest)?;
                Ok(DeriveNode::ok("DQue", judgment, vec![sub]))
            }
            base => {
                if !value_has_sort(gamma, value, base) {
                    return Err(Failure {
                        premise: format!(
                            "VQue: payload {value} of `{label}` is not of sort {base}"
                        ),
                        node: DeriveNode::bad("VQue", judgment, vec![]),
                    });
                }
                let mut rest = delta.clone();
                rest.queues.insert(id.clone(), omega[1..].to_vec());
                let tail = Process::Queue { id: id.clone(), items: items[1..].to_vec() };
                let sub = self.check(gamma, theta, &tail, &rest)?;
                Ok(DeriveNode::ok("VQue", judgment, vec![sub]))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn check_send(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        role: &str,
        label: &str,
        value: &Value,
        cont: &Process,
        delta: &SessionEnv,
    ) -> CheckResult {
        let Some(cfg) = delta.roles.get(role).cloned() else {
            return Err(Failure {
                premise: format!("VSend: role `{role}` not in Δ"),
                node: DeriveNode::bad("VSend", judgment, vec![]),
            });
        };
        let head = cfg.s.unfold_head();
        let SessionType::Choice(opts) = head else {
            return Err(Failure {
                premise: format!("VSend: type of `{role}` offers no choice"),
                node: DeriveNode::bad("VSend", judgment, vec![]),
            });
        };
        let Some(opt) = opts
            .iter()
            .find(|o| o.direction == Direction::Send && o.label == label)
        else {
            return Err(Failure {
                premise: format!("VSend: no sending option labelled `{label}`"),
                node: DeriveNode::bad("VSend", judgment, vec![]),
            });
        };
        if !opt.guard.sat(&cfg.nu) {
            return Err(Failure {
                premise: format!(
                    "VSend: guard {} of `{label}` unsatisfied at {}",
                    opt.guard, cfg.nu
                ),
                node: DeriveNode::bad("VSend", judgment, vec![]),
            });
        }
        let nu2 = cfg.nu.reset(&opt.resets).expect("resets within domain");
        let cfg2 = Configuration { nu: nu2, s: opt.continuation.clone() };
        match &opt.payload {
            Sort::Delegate(init, proto) => {
                let Value::Ref(b) = value else {
                    return Err(Failure {
                        premise: format!("DSend: `{label}` must carry a session endpoint"),
                        node: DeriveNode::bad("DSend", judgment, vec![]),
                    });
                };
                let (Some(cfg_b), mut rest) = delta.remove_role(b) else {
                    return Err(Failure {
                        premise: format!("DSend: delegated endpoint `{b}` not in Δ"),
                        node: DeriveNode::bad("DSend", judgment, vec![]),
                    });
                };
                if !cfg_b.s.unfold_equiv(proto) {
                    return Err(Failure {
                        premise: format!("DSend: `{b}`'s protocol differs from the payload type"),
                        node: DeriveNode::bad("DSend", judgment, vec![]),
                    });
                }
                if !init.sat(&cfg_b.nu) {
                    return Err(Failure {
                        premise: format!(
                            "DSend: `{b}`'s valuation does not satisfy the initialization {init}"
                        ),
                        node: DeriveNode::bad("DSend", judgment, vec![]),
                    });
                }
                rest.roles.insert(role.to_string(), cfg2);
                let sub = self.check(gamma, theta, cont, &rest)?;
                Ok(DeriveNode::ok("DSend", judgment, vec![sub]))
            }
            base => {
                if !value_has_sort(gamma, value, base) {
                    return Err(Failure {
                        premise: format!("VSend: payload {value} is not of sort {base}"),
                        node: DeriveNode::bad("VSend", judgment, vec![]),
                    });
                }
                let mut rest = delta.clone();
                rest.roles.insert(role.to_string(), cfg2);
                let sub = self.check(gamma, theta, cont, &rest)?;
                Ok(DeriveNode::ok("VSend", judgment, vec![sub]))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn check_receive(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        role: &str,
        deadline: &Deadline,
        branches: &[BranchArm],
        delta: &SessionEnv,
    ) -> CheckResult {
        let Some(cfg) = delta.roles.get(role).cloned() else {
            return Err(Failure {
                premise: format!("Branch: role `{role}` not in Δ"),
                node: DeriveNode::bad("Branch", judgment, vec![]),
            });
        };
        let head = cfg.s.unfold_head();
        let SessionType::Choice(opts) = head else {
            return Err(Failure {
                premise: format!("Branch: type of `{role}` offers no choice"),
                node: DeriveNode::bad("Branch", judgment, vec![]),
            });
        };
        if opts.len() == 1 && branches.len() == 1 {
            // singleton receptions dispatch to VRecv / DRecv directly
            return self.check_single_recv(
                gamma, theta, judgment, role, deadline, &branches[0], &cfg, &opts[0], delta,
            );
        }
        let mut children = Vec::new();
        for opt in &opts {
            if !opt.guard.sat(&cfg.nu) {
                continue;
            }
            if opt.direction != Direction::Recv {
                return Err(Failure {
                    premise: format!(
                        "Branch: enabled option `!{}` is a selection, not a reception",
                        opt.label
                    ),
                    node: DeriveNode::bad("Branch", judgment, children),
                });
            }
            let Some(arm) = branches.iter().find(|b| b.label == opt.label) else {
                return Err(Failure {
                    premise: format!("Branch: no branch for enabled reception `?{}`", opt.label),
                    node: DeriveNode::bad("Branch", judgment, children),
                });
            };
            let singleton =
                Configuration { nu: cfg.nu.clone(), s: SessionType::Choice(vec![opt.clone()]) };
            let mut delta_j = delta.clone();
            delta_j.roles.insert(role.to_string(), singleton.clone());
            let sub_judgment = format!(
                "{theta} |- {role}?{{{}}} |> {role}:({}, {})",
                arm.label, singleton.nu, singleton.s
            );
            match self.check_single_recv(
                gamma, theta, sub_judgment, role, deadline, arm, &singleton, opt, &delta_j,
            ) {
                Ok(node) => children.push(node),
                Err(fail) => {
                    children.push(fail.node);
                    return Err(Failure {
                        premise: fail.premise,
                        node: DeriveNode::bad("Branch", judgment, children),
                    });
                }
            }
        }
        Ok(DeriveNode::ok("Branch", judgment, children))
    }

    #[allow(clippy::too_many_arguments)]
    fn check_single_recv(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        role: &str,
        deadline: &Deadline,
        arm: &BranchArm,
        cfg: &Configuration,
        opt: &crate::typesys::TypeOption,
        delta: &SessionEnv,
    ) -> CheckResult {
        let is_delegation = matches!(opt.payload, Sort::Delegate(..));
        let rule = if is_delegation { "DRecv" } else { "VRecv" };
        if opt.direction != Direction::Recv {
            return Err(Failure {
                premise: format!("{rule}: option `{}` is not a reception", opt.label),
                node: DeriveNode::bad(rule, judgment, vec![]),
            });
        }
        if arm.label != opt.label {
            return Err(Failure {
                premise: format!(
                    "{rule}: branch label `{}` does not match `{}`",
                    arm.label, opt.label
                ),
                node: DeriveNode::bad(rule, judgment, vec![]),
            });
        }
        // receive urgency across the rest of the environment
        let (_, rest) = delta.remove_role(role);
        if deadline_reading(&rest, deadline) {
            return Err(Failure {
                premise: format!("{rule}: Δ not e-reading"),
                node: DeriveNode::bad(rule, judgment, vec![]),
            });
        }
        // the deadline window must coincide with the guard's delay set
        let guard_set = delay_projection(&cfg.nu, &opt.guard);
        if !guard_set.equals(&deadline_window(deadline)) {
            return Err(Failure {
                premise: format!(
                    "{rule}: deadline {deadline} differs from the guard window {guard_set}"
                ),
                node: DeriveNode::bad(rule, judgment, vec![]),
            });
        }
        let mut children = Vec::new();
        for t in self.deadline_instants(deadline) {
            let nu_t = cfg.nu.advance(&t).reset(&opt.resets).expect("resets in domain");
            let mut delta_t = rest.advance(&t);
            delta_t
                .roles
                .insert(role.to_string(), Configuration { nu: nu_t, s: opt.continuation.clone() });
            let theta_t = theta.advance(&t);
            let (gamma_t, delta_t) = match (&opt.payload, &arm.binder) {
                (Sort::Delegate(init, proto), Some(b)) => {
                    // the received endpoint joins Δ at a witness of the
                    // initialization constraint
                    let witness = normalize(init).grid_witness(self.max_const).or_else(|| {
                        let mut nu = Valuation::zero(proto.clocks());
                        for c in init.clocks() {
                            nu.ensure_clock(&c);
                        }
                        init.sat(&nu).then_some(nu)
                    });
                    let Some(nu_b) = witness else {
                        return Err(Failure {
                            premise: format!(
                                "DRecv: initialization {init} of the delegated session is unsatisfiable"
                            ),
                            node: DeriveNode::bad(rule, judgment, children),
                        });
                    };
                    let mut d = delta_t.clone();
                    d.roles
                        .insert(b.clone(), Configuration { nu: nu_b, s: (**proto).clone() });
                    (gamma.clone(), d)
                }
                (Sort::Delegate(..), None) => {
                    return Err(Failure {
                        premise: "DRecv: delegated reception must bind an endpoint".into(),
                        node: DeriveNode::bad(rule, judgment, children),
                    });
                }
                (base, Some(b)) => (gamma.clone().with_value(b, base.clone()), delta_t),
                (_, None) => (gamma.clone(), delta_t),
            };
            match self.check(&gamma_t, &theta_t, &arm.body, &delta_t) {
                Ok(node) => children.push(node),
                Err(fail) => {
                    children.push(fail.node);
                    return Err(Failure {
                        premise: fail.premise,
                        node: DeriveNode::bad(rule, judgment, children),
                    });
                }
            }
        }
        Ok(DeriveNode::ok(rule, judgment, children))
    }

    #[allow(clippy::too_many_arguments)]
    fn check_timeout(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        role: &str,
        deadline: &Deadline,
        branches: &[BranchArm],
        after: &Process,
        delta: &SessionEnv,
    ) -> CheckResult {
        if matches!(deadline, Deadline::Infinite) {
            return Err(Failure {
                premise: "Timeout: deadline must not be infinite".into(),
                node: DeriveNode::bad("Timeout", judgment, vec![]),
            });
        }
        let mut children = Vec::new();
        // first premise: the reception part without the timeout
        let recv = Process::Branch {
            role: role.to_string(),
            deadline: *deadline,
            branches: branches.to_vec(),
        };
        match self.check(gamma, theta, &recv, delta) {
            Ok(node) => children.push(node),
            Err(fail) => {
                children.push(fail.node);
                return Err(Failure {
                    premise: fail.premise,
                    node: DeriveNode::bad("Timeout", judgment, children),
                });
            }
        }
        // second premise: the continuation once the deadline has expired.
        // The earliest expiry instant is the bound itself for a strict
        // deadline and the first representative point past it otherwise.
        let expiry = match deadline {
            Deadline::Bounded { strict: true, bound } => *bound,
            Deadline::Bounded { strict: false, bound } => bound.add(&TimeValue::halves(1)),
            Deadline::NonPositive => TimeValue::halves(1),
            Deadline::Infinite => unreachable!(),
        };
        let theta_n = theta.advance(&expiry);
        let delta_n = delta.advance(&expiry);
        match self.check(gamma, &theta_n, after, &delta_n) {
            Ok(node) => children.push(node),
            Err(fail) => {
                children.push(fail.node);
                return Err(Failure {
                    premise: fail.premise,
                    node: DeriveNode::bad("Timeout", judgment, children),
                });
            }
        }
        Ok(DeriveNode::ok("Timeout", judgment, children))
    }

    #[allow(clippy::too_many_arguments)]
    fn check_par(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        a: &Process,
        b: &Process,
        delta: &SessionEnv,
    ) -> CheckResult {
        let ra = a.roles_needed();
        let rb = b.roles_needed();
        let qa = a.queues_needed();
        let qb = b.queues_needed();
        if let Some(shared) = ra.intersection(&rb).next() {
            return Err(Failure {
                premise: format!("Par: role `{shared}` used by both components"),
                node: DeriveNode::bad("Par", judgment, vec![]),
            });
        }
        if let Some(shared) = qa.intersection(&qb).next() {
            return Err(Failure {
                premise: format!("Par: queue `{shared}` used by both components"),
                node: DeriveNode::bad("Par", judgment, vec![]),
            });
        }
        let mut delta_a = SessionEnv::empty();
        let mut delta_b = SessionEnv::empty();
        let mut children = Vec::new();
        for (name, cfg) in &delta.roles {
            if ra.contains(name) {
                delta_a.roles.insert(name.clone(), cfg.clone());
            } else if rb.contains(name) {
                delta_b.roles.insert(name.clone(), cfg.clone());
            } else if cfg.s.is_end() {
                children.push(DeriveNode::ok(
                    "Weak",
                    format!("drop {name}:({}, end)", cfg.nu),
                    vec![],
                ));
            } else {
                return Err(Failure {
                    premise: format!("Par: role `{name}` claimed by neither component"),
                    node: DeriveNode::bad("Par", judgment, children),
                });
            }
        }
        for (id, q) in &delta.queues {
            if qa.contains(id) {
                delta_a.queues.insert(id.clone(), q.clone());
            } else if qb.contains(id) {
                delta_b.queues.insert(id.clone(), q.clone());
            } else {
                return Err(Failure {
                    premise: format!("Par: queue `{id}` claimed by neither component"),
                    node: DeriveNode::bad("Par", judgment, children),
                });
            }
        }
        let (theta_a, theta_b) = theta.split(&a.timers_used());
        match self.check(gamma, &theta_a, a, &delta_a) {
            Ok(node) => children.push(node),
            Err(fail) => {
                children.push(fail.node);
                return Err(Failure {
                    premise: fail.premise,
                    node: DeriveNode::bad("Par", judgment, children),
                });
            }
        }
        match self.check(gamma, &theta_b, b, &delta_b) {
            Ok(node) => children.push(node),
            Err(fail) => {
                children.push(fail.node);
                return Err(Failure {
                    premise: fail.premise,
                    node: DeriveNode::bad("Par", judgment, children),
                });
            }
        }
        Ok(DeriveNode::ok("Par", judgment, children))
    }

    #[allow(clippy::too_many_arguments)]
    fn check_scope(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        rp: &str,
        rq: &str,
        body: &Process,
        delta: &SessionEnv,
    ) -> CheckResult {
        let Some((cfg_p, cfg_q)) = self.bindings.lookup(rp, rq) else {
            return Err(Failure {
                premise: format!("Res: no session binding for ({rp}, {rq})"),
                node: DeriveNode::bad("Res", judgment, vec![]),
            });
        };
        // synthesize queue typings from the syntactic queues in the body
        let qp = QueueId { from: rq.to_string(), to: rp.to_string() };
        let pq = QueueId { from: rp.to_string(), to: rq.to_string() };
        let mut inner = delta.clone();
        inner.roles.insert(rp.to_string(), cfg_p.clone());
        inner.roles.insert(rq.to_string(), cfg_q.clone());
        let omega_qp = self.classify_queue(gamma, &inner, body, &qp, &judgment)?;
        let omega_pq = self.classify_queue(gamma, &inner, body, &pq, &judgment)?;
        // compatibility of the two scoped configurations
        let qc_p = QueuedConfig::new(cfg_p.clone(), MsgQueue::from_items(omega_qp.clone()));
        let qc_q = QueuedConfig::new(cfg_q.clone(), MsgQueue::from_items(omega_pq.clone()));
        if !compatible(&qc_p, &qc_q) {
            return Err(Failure {
                premise: format!("Res: scoped configurations for ({rp}, {rq}) are not compatible"),
                node: DeriveNode::bad("Res", judgment, vec![]),
            });
        }
        for (name, cfg) in [(rp, &cfg_p), (rq, &cfg_q)] {
            if !wf_config(&cfg.nu, &cfg.s) {
                return Err(Failure {
                    premise: format!("Res: configuration of `{name}` is not well-formed"),
                    node: DeriveNode::bad("Res", judgment, vec![]),
                });
            }
        }
        inner.queues.insert(qp, omega_qp);
        inner.queues.insert(pq, omega_pq);
        let sub = self.check(gamma, theta, body, &inner)?;
        Ok(DeriveNode::ok("Res", judgment, vec![sub]))
    }

    fn classify_queue(
        &self,
        gamma: &VarEnv,
        delta: &SessionEnv,
        body: &Process,
        id: &QueueId,
        judgment: &str,
    ) -> Result<Vec<Message>, Failure> {
        let Some(items) = find_queue(body, id) else {
            return Err(Failure {
                premise: format!("Res: scope is missing queue {id}"),
                node: DeriveNode::bad("Res", judgment.to_string(), vec![]),
            });
        };
        let mut out = Vec::new();
        for (label, v) in items {
            let Some(sort) = classify_value(gamma, delta, &v) else {
                return Err(Failure {
                    premise: format!("Res: cannot classify payload {v} in queue {id}"),
                    node: DeriveNode::bad("Res", judgment.to_string(), vec![]),
                });
            };
            out.push(Message { label, payload: sort });
        }
        Ok(out)
    }

    fn check_def(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        p: &Process,
        delta: &SessionEnv,
    ) -> CheckResult {
        let Process::Def { name, val_params, role_params, body, cont } = p else {
            unreachable!()
        };
        let state = Rc::new(RefCell::new(ProcVarState {
            val_params: val_params.clone(),
            role_params: role_params.clone(),
            body: (**body).clone(),
            val_sorts: None,
            thetas: Vec::new(),
            deltas: Vec::new(),
            checked: BTreeSet::new(),
            pending: VecDeque::new(),
        }));
        let mut gamma2 = gamma.clone();
        gamma2.procvars.insert(name.clone(), Rc::clone(&state));
        let mut children = Vec::new();
        // explore the continuation, collecting call-site environments
        match self.check(&gamma2, theta, cont, delta) {
            Ok(node) => children.push(node),
            Err(fail) => {
                children.push(fail.node);
                return Err(Failure {
                    premise: fail.premise,
                    node: DeriveNode::bad("Rec", judgment, children),
                });
            }
        }
        // fixpoint: check the body against every collected environment,
        // harvesting environments of recursive calls as they appear
        let mut iterations = 0usize;
        loop {
            let next = state.borrow_mut().pending.pop_front();
            let Some((theta_i, cfgs)) = next else {
                break;
            };
            iterations += 1;
            if iterations > self.rec_cap {
                return Err(Failure {
                    premise: format!(
                        "Rec: environment collection for `{name}` exceeded {} iterations",
                        self.rec_cap
                    ),
                    node: DeriveNode::bad("Rec", judgment, children),
                });
            }
            let mut gamma_body = gamma2.clone();
            if let Some(sorts) = state.borrow().val_sorts.clone() {
                for (param, sort) in val_params.iter().zip(sorts) {
                    gamma_body = gamma_body.with_value(param, sort);
                }
            }
            let mut delta_body = SessionEnv::empty();
            for (param, cfg) in role_params.iter().zip(cfgs.iter()) {
                delta_body.roles.insert(param.clone(), cfg.clone());
            }
            let body_snapshot = state.borrow().body.clone();
            match self.check(&gamma_body, &theta_i, &body_snapshot, &delta_body) {
                Ok(node) => children.push(node),
                Err(fail) => {
                    children.push(fail.node);
                    return Err(Failure {
                        premise: fail.premise,
                        node: DeriveNode::bad("Rec", judgment, children),
                    });
                }
            }
        }
        Ok(DeriveNode::ok("Rec", judgment, children))
    }

    #[allow(clippy::too_many_arguments)]
    fn check_call(
        &mut self,
        gamma: &VarEnv,
        theta: &TimerEnv,
        judgment: String,
        name: &str,
        val_args: &[Value],
        role_args: &[String],
        delta: &SessionEnv,
    ) -> CheckResult {
        let Some(state) = gamma.procvars.get(name).cloned() else {
            return Err(Failure {
                premise: format!("Var: process variable `{name}` not in Γ"),
                node: DeriveNode::bad("Var", judgment, vec![]),
            });
        };
        {
            let st = state.borrow();
            if st.val_params.len() != val_args.len() || st.role_params.len() != role_args.len() {
                return Err(Failure {
                    premise: format!("Var: arity mismatch calling `{name}`"),
                    node: DeriveNode::bad("Var", judgment, vec![]),
                });
            }
        }
        // argument sorts: the first call fixes the signature
        let mut sorts = Vec::new();
        for v in val_args {
            let Some(sort) = classify_value(gamma, delta, v) else {
                return Err(Failure {
                    premise: format!("Var: cannot classify argument {v} of `{name}`"),
                    node: DeriveNode::bad("Var", judgment, vec![]),
                });
            };
            sorts.push(sort);
        }
        {
            let mut st = state.borrow_mut();
            match &st.val_sorts {
                None => st.val_sorts = Some(sorts),
                Some(have) => {
                    if *have != sorts {
                        return Err(Failure {
                            premise: format!("Var: argument sorts of `{name}` changed"),
                            node: DeriveNode::bad("Var", judgment, vec![]),
                        });
                    }
                }
            }
        }
        // Δ must be exactly the channel arguments, after weakening end roles
        let mut remaining = delta.clone();
        let mut children = Vec::new();
        let mut cfgs = Vec::new();
        for r in role_args {
            let Some(cfg) = remaining.roles.remove(r) else {
                return Err(Failure {
                    premise: format!("Var: channel argument `{r}` not in Δ"),
                    node: DeriveNode::bad("Var", judgment, children),
                });
            };
            cfgs.push(cfg);
        }
        for (extra, cfg) in remaining.roles.clone() {
            if cfg.s.is_end() {
                children.push(DeriveNode::ok(
                    "Weak",
                    format!("drop {extra}:({}, end)", cfg.nu),
                    vec![],
                ));
                remaining.roles.remove(&extra);
            }
        }
        if !remaining.is_empty() {
            return Err(Failure {
                premise: format!("Var: Δ carries entries beyond the arguments of `{name}`"),
                node: DeriveNode::bad("Var", judgment, children),
            });
        }
        // membership up to region equivalence; unseen environments are
        // scheduled for a body check
        drop(state);
        self.register_call_site(gamma, name, theta, &cfgs);
        self.harvest_log
            .push(Rc::new((name.to_string(), theta.clone(), cfgs.clone())));
        children.push(DeriveNode::ok(
            "Var",
            format!("{name} at {theta} with {} channel(s)", cfgs.len()),
            vec![],
        ));
        Ok(DeriveNode::ok("Var", judgment, children))
    }
}

fn find_queue(p: &Process, id: &QueueId) -> Option<Vec<(String, Value)>> {
    match p {
        Process::Queue { id: have, items } if have == id => Some(items.clone()),
        Process::Par(a, b) => find_queue(a, id).or_else(|| find_queue(b, id)),
        Process::Def { cont, .. } => find_queue(cont, id),
        _ => None,
    }
}

/// Entry used by the CLI and the harness.
pub fn typecheck(
    gamma: &VarEnv,
    theta: &TimerEnv,
    p: &Process,
    delta: &SessionEnv,
    bindings: &ScopeBindings,
) -> TypeReport {
    Checker::new(bindings.clone()).typecheck(gamma, theta, p, delta)
}

// ---------------------------------------------------------------------
// Subject-reduction harness
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SrViolation {
    pub step: String,
    pub state: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SrReport {
    pub states_checked: usize,
    pub violations: Vec<SrViolation>,
    pub fuel_exhausted: bool,
    pub initial_accepted: bool,
}

impl SrReport {
    pub fn passed(&self) -> bool {
        self.initial_accepted && self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SrMode {
    Exhaustive,
    Random { seed: u64 },
}

fn scope_pairs(p: &Process, out: &mut Vec<(String, String)>) {
    match p {
        Process::Scope { p: rp, q: rq, body } => {
            out.push((rp.clone(), rq.clone()));
            scope_pairs(body, out);
        }
        Process::Par(a, b) => {
            scope_pairs(a, out);
            scope_pairs(b, out);
        }
        Process::Def { cont, .. } => scope_pairs(cont, out),
        Process::SetTimer(_, cont)
        | Process::Send { cont, .. }
        | Process::DelaySym { cont, .. }
        | Process::DelayT { cont, .. } => scope_pairs(cont, out),
        Process::Branch { branches, .. } => {
            for b in branches {
                scope_pairs(&b.body, out);
            }
        }
        Process::Timeout { branches, after, .. } => {
            for b in branches {
                scope_pairs(&b.body, out);
            }
            scope_pairs(after, out);
        }
        Process::If { then_p, else_p, .. } => {
            scope_pairs(then_p, out);
            scope_pairs(else_p, out);
        }
        _ => {}
    }
}

/// The combined session environment of all scoped sessions under the
/// current bindings, with queue typings synthesized from the process.
fn bindings_env(p: &Process, bindings: &ScopeBindings) -> Option<SessionEnv> {
    let mut pairs = Vec::new();
    scope_pairs(p, &mut pairs);
    let mut env = SessionEnv::empty();
    for (rp, rq) in pairs {
        let (cfg_p, cfg_q) = bindings.lookup(&rp, &rq)?;
        env.roles.insert(rp.clone(), cfg_p);
        env.roles.insert(rq.clone(), cfg_q);
        let qp = QueueId { from: rq.clone(), to: rp.clone() };
        let pq = QueueId { from: rp.clone(), to: rq.clone() };
        for id in [qp, pq] {
            let items = find_queue_deep(p, &id)?;
            let mut msgs = Vec::new();
            for (label, v) in items {
                let sort = classify_value(&VarEnv::empty(), &env, &v)?;
                msgs.push(Message { label, payload: sort });
            }
            env.queues.insert(id, msgs);
        }
    }
    Some(env)
}

fn find_queue_deep(p: &Process, id: &QueueId) -> Option<Vec<(String, Value)>> {
    match p {
        Process::Queue { id: have, items } if have == id => Some(items.clone()),
        Process::Par(a, b) => find_queue_deep(a, id).or_else(|| find_queue_deep(b, id)),
        Process::Def { cont, .. } => find_queue_deep(cont, id),
        Process::Scope { body, .. } => find_queue_deep(body, id),
        _ => None,
    }
}

fn bindings_from_env(p: &Process, env: &SessionEnv) -> ScopeBindings {
    let mut pairs = Vec::new();
    scope_pairs(p, &mut pairs);
    let mut out = ScopeBindings::default();
    for (rp, rq) in pairs {
        if let (Some(a), Some(b)) = (env.roles.get(&rp), env.roles.get(&rq)) {
            out = out.bind(&rp, &rq, a.clone(), b.clone());
        }
    }
    out
}

/// Queue contents of the residual process, classified, must agree with the
/// candidate environment's queue typings.
fn queues_agree(p: &Process, env: &SessionEnv) -> bool {
    for (id, typed) in &env.queues {
        let Some(items) = find_queue_deep(p, id) else {
            return false;
        };
        if items.len() != typed.len() {
            return false;
        }
        for ((label, v), m) in items.iter().zip(typed) {
            if *label != m.label {
                return false;
            }
            let Some(sort) = classify_value(&VarEnv::empty(), env, v) else {
                return false;
            };
            if sort != m.payload {
                return false;
            }
        }
    }
    true
}

/// Drives the reduction engine and re-typechecks every reachable residual
/// against a session environment reached by at most two environment steps,
/// asserting the time-step side conditions on every delay.
pub fn subject_reduction_harness(
    gamma: &VarEnv,
    theta: &TimerEnv,
    p: &Process,
    bindings: &ScopeBindings,
    fuel: u64,
    mode: SrMode,
) -> SrReport {
    let mut report = SrReport {
        states_checked: 0,
        violations: Vec::new(),
        fuel_exhausted: false,
        initial_accepted: false,
    };
    let p0 = p.normalize();
    let initial = typecheck(gamma, theta, &p0, &SessionEnv::empty(), bindings);
    report.initial_accepted = initial.accepted;
    if !initial.accepted {
        return report;
    }
    let Some(env0) = bindings_env(&p0, bindings) else {
        report.violations.push(SrViolation {
            step: "init".into(),
            state: format!("{p0:?}"),
            reason: "cannot assemble the scoped session environment".into(),
        });
        return report;
    };
    let m = env0.max_constant().max(p0.max_constant());
    let grid = half_grid(m);

    type State = (TimerEnv, Process, SessionEnv);
    let mut visited: BTreeSet<String> = BTreeSet::new();
    let region_key = |th: &TimerEnv, pr: &Process, env: &SessionEnv| -> String {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        pr.hash(&mut h);
        let ph = h.finish();
        let mut h2 = std::collections::hash_map::DefaultHasher::new();
        0x5eedu64.hash(&mut h2);
        pr.hash(&mut h2);
        let ph2 = h2.finish();
        let roles: Vec<String> = env
            .roles
            .iter()
            .map(|(k, c)| format!("{k}:{}", configs_region(std::slice::from_ref(c), m)))
            .collect();
        format!("{}|{ph:x}{ph2:x}|{}|{:?}", theta_region(th, m), roles.join(";"), env.queues)
    };
    // All reachable values sit on the half-integer grid, where a region key
    // determines every premise of the checker, so verdicts can be reused
    // across region-equivalent states and candidate environments.
    let memo = fresh_memo();
    let verdict_cache: RefCell<BTreeMap<String, Option<String>>> = RefCell::new(BTreeMap::new());
    // Ok(()) on acceptance, the failing premise otherwise.
    let cached_check = |th: &TimerEnv, pr: &Process, env: &SessionEnv| -> Option<String> {
        let key = region_key(th, pr, env);
        if let Some(hit) = verdict_cache.borrow().get(&key) {
            return hit.clone();
        }
        let b = bindings_from_env(pr, env);
        let report =
            Checker::with_memo(b, Rc::clone(&memo)).typecheck(gamma, th, pr, &SessionEnv::empty());
        let outcome = if report.accepted {
            None
        } else {
            Some(report.failing_premise.unwrap_or_else(|| "unknown premise".into()))
        };
        verdict_cache.borrow_mut().insert(key, outcome.clone());
        outcome
    };

    let mut frontier: VecDeque<(State, u64)> = VecDeque::new();
    let start: State = (theta.clone(), p0.clone(), env0.clone());
    visited.insert(region_key(&start.0, &start.1, &start.2));
    frontier.push_back((start, 0));
    let mut rng = match mode {
        SrMode::Random { seed } => Some(rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
        SrMode::Exhaustive => None,
    };

    while let Some(((th, pr, env), depth)) = frontier.pop_front() {
        if depth >= fuel {
            report.fuel_exhausted = true;
            continue;
        }
        let mut next_states: Vec<State> = Vec::new();
        // instantaneous steps: search for a matching environment reduction
        // within two steps
        for (th2, pr2raw) in reduce_step(&th, &pr) {
            let pr2 = pr2raw.normalize();
            report.states_checked += 1;
            let mut candidates = vec![env.clone()];
            let one: Vec<SessionEnv> = session_step(&env);
            candidates.extend(one.iter().cloned());
            for e in one {
                candidates.extend(session_step(&e));
            }
            let mut matched = None;
            let mut last_premise = String::new();
            for cand in candidates {
                if !queues_agree(&pr2, &cand) {
                    continue;
                }
                match cached_check(&th2, &pr2, &cand) {
                    None => {
                        matched = Some(cand);
                        break;
                    }
                    Some(premise) => last_premise = premise,
                }
            }
            match matched {
                Some(env2) => next_states.push((th2, pr2, env2)),
                None => {
                    report.violations.push(SrViolation {
                        step: "step".into(),
                        state: format!("theta={th2} residual={} env={env}", crate::surface::pretty_process(&pr2)),
                        reason: format!(
                            "no session-environment reduction re-types the residual (last premise: {last_premise})"
                        ),
                    });
                }
            }
        }
        // delays: the environment advances uniformly; the time-step side
        // conditions must hold
        for t in &grid {
            if t.is_zero() {
                continue;
            }
            if let Some((th2, pr2raw)) = reduce_delay(&th, &pr, t) {
                let pr2 = pr2raw.normalize();
                let env2 = env.advance(t);
                report.states_checked += 1;
                if !wf_session(&env2) {
                    report.violations.push(SrViolation {
                        step: format!("delay({t})"),
                        state: format!("theta={th2} env={env2}"),
                        reason: "Δ+t is not well-formed".into(),
                    });
                    continue;
                }
                if !fully_balanced(&env2) {
                    report.violations.push(SrViolation {
                        step: format!("delay({t})"),
                        state: format!("theta={th2} env={env2}"),
                        reason: "Δ+t is not fully balanced".into(),
                    });
                    continue;
                }
                if let Some(premise) = cached_check(&th2, &pr2, &env2) {
                    report.violations.push(SrViolation {
                        step: format!("delay({t})"),
                        state: format!("theta={th2} residual={} env={env2}", crate::surface::pretty_process(&pr2)),
                        reason: format!("residual no longer typechecks after the delay: {premise}"),
                    });
                    continue;
                }
                next_states.push((th2, pr2, env2));
            }
        }
        match &mut rng {
            None => {
                for st in next_states {
                    let key = region_key(&st.0, &st.1, &st.2);
                    if visited.insert(key) {
                        frontier.push_back((st, depth + 1));
                    }
                }
            }
            Some(rng) => {
                if next_states.is_empty() {
                    continue;
                }
                let pick = rng.gen_range(0..next_states.len());
                let st = next_states.into_iter().nth(pick).expect("in range");
                frontier.push_back((st, depth + 1));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timelogic::Constraint as C;
    use crate::typesys::{opt, Direction::*, SessionType as S};

    fn cfg0(s: S) -> Configuration {
        Configuration::initial(s)
    }

    #[test]
    fn t_reading_pure_receive_window() {
        // role p: {?message(y>3).end}: receivable from 3 on, no sends
        let s3 = S::Choice(vec![opt(Recv, "message", Sort::None, C::gt("y", 3), &[], S::End)]);
        let delta = SessionEnv::empty().with_role("p", cfg0(s3));
        assert!(t_reading(&delta, &TimeValue::from_nat(4)));
        assert!(deadline_reading(&delta, &Deadline::lt(5)));
        // within 3 units nothing is receivable yet
        assert!(!t_reading(&delta, &TimeValue::from_nat(3)));
    }

    #[test]
    fn t_reading_masked_by_earlier_send() {
        // a mixed choice whose send window opens first does not mark the
        // environment reading: the implementation may be on the sending side
        let s = S::Choice(vec![
            opt(Send, "pong", Sort::None, C::le("x", 3), &["x"], S::End),
            opt(Recv, "timeout", Sort::None, C::gt("x", 3), &[], S::End),
        ]);
        let delta = SessionEnv::empty().with_role("p", cfg0(s));
        assert!(!t_reading(&delta, &TimeValue::from_nat(4)));
    }

    #[test]
    fn t_reading_trivial_cases() {
        let delta = SessionEnv::empty();
        assert!(!t_reading(&delta, &TimeValue::from_nat(10)));
        let delta = SessionEnv::empty().with_role("p", cfg0(S::End));
        assert!(!t_reading(&delta, &TimeValue::from_nat(10)));
    }

    #[test]
    fn wf_session_examples() {
        assert!(wf_session(&SessionEnv::empty()));
        let good = S::Choice(vec![opt(Send, "a", Sort::None, C::lt("x", 5), &[], S::End)]);
        assert!(wf_session(&SessionEnv::empty().with_role("p", cfg0(good.clone()))));
        let stale = Configuration {
            nu: Valuation::from_map(
                [(ClockId::new("x"), TimeValue::from_nat(6))].into_iter().collect(),
            ),
            s: good,
        };
        assert!(!wf_session(&SessionEnv::empty().with_role("p", stale)));
    }

    #[test]
    fn session_step_send_and_recv() {
        let s = S::Choice(vec![opt(Send, "a", Sort::None, C::True, &[], S::End)]);
        let delta = SessionEnv::empty()
            .with_role("p", cfg0(s))
            .with_queue(QueueId { from: "p".into(), to: "q".into() }, vec![]);
        let steps = session_step(&delta);
        assert_eq!(steps.len(), 1);
        let next = &steps[0];
        assert!(next.roles["p"].s.is_end());
        assert_eq!(next.queues[&QueueId { from: "p".into(), to: "q".into() }].len(), 1);

        let r = S::Choice(vec![opt(Recv, "a", Sort::None, C::True, &[], S::End)]);
        let delta = SessionEnv::empty().with_role("p", cfg0(r)).with_queue(
            QueueId { from: "q".into(), to: "p".into() },
            vec![Message { label: "a".into(), payload: Sort::None }],
        );
        let steps = session_step(&delta);
        assert_eq!(steps.len(), 1);
        assert!(steps[0].roles["p"].s.is_end());
        assert!(steps[0].queues[&QueueId { from: "q".into(), to: "p".into() }].is_empty());

        assert!(session_step(&SessionEnv::empty()).is_empty());
    }

    #[test]
    fn balanced_examples() {
        let s = S::Choice(vec![
            opt(Send, "data", Sort::None, C::lt("x", 3), &[], S::End),
            opt(Recv, "timeout", Sort::None, C::gt("x", 4), &[], S::End),
        ]);
        let full = SessionEnv::empty()
            .with_role("p", cfg0(s.clone()))
            .with_role("q", cfg0(s.dual()))
            .with_queue(QueueId { from: "p".into(), to: "q".into() }, vec![])
            .with_queue(QueueId { from: "q".into(), to: "p".into() }, vec![]);
        assert!(balanced(&full));
        assert!(fully_balanced(&full));

        let mut missing = full.clone();
        missing.roles.remove("q");
        missing.queues.remove(&QueueId { from: "p".into(), to: "q".into() });
        assert!(!fully_balanced(&missing));

        // unreceivable queued head
        let bad = SessionEnv::empty()
            .with_role("p", cfg0(S::End))
            .with_role("q", cfg0(S::End))
            .with_queue(
                QueueId { from: "q".into(), to: "p".into() },
                vec![Message { label: "a".into(), payload: Sort::None }],
            )
            .with_queue(QueueId { from: "p".into(), to: "q".into() }, vec![]);
        assert!(!balanced(&bad));
    }

    #[test]
    fn delta_and_theta_advance() {
        let s = S::Choice(vec![opt(Send, "a", Sort::None, C::lt("x", 5), &[], S::End)]);
        let delta = SessionEnv::empty().with_role("p", cfg0(s));
        let shifted = delta_advance(&delta, &TimeValue::from_nat(2));
        assert_eq!(
            shifted.roles["p"].nu.get(&ClockId::new("x")),
            Some(&TimeValue::from_nat(2))
        );
        let theta = TimerEnv::from_pairs([("z".to_string(), TimeValue::ZERO)]);
        let t3 = theta_advance(&theta, &TimeValue::from_nat(3));
        assert_eq!(t3.get("z"), Some(&TimeValue::from_nat(3)));
        assert_eq!(theta_advance(&theta, &TimeValue::ZERO), theta);
    }

    #[test]
    fn term_accepts_end_roles_via_weak() {
        let delta = SessionEnv::empty().with_role("p", cfg0(S::rec("a", S::End)));
        let report = typecheck(
            &VarEnv::empty(),
            &TimerEnv::empty(),
            &Process::Term,
            &delta,
            &ScopeBindings::default(),
        );
        assert!(report.accepted);
        let rules = report.derivation.preorder_rules();
        assert!(rules.contains(&"Weak".to_string()));
        assert!(rules.contains(&"End".to_string()));
    }

    #[test]
    fn weakening_is_invisible() {
        // adding an end role never changes the verdict
        let s = S::Choice(vec![opt(Send, "a", Sort::None, C::True, &[], S::End)]);
        let p = Process::send("p", "a", Value::Unit, Process::Term);
        let delta = SessionEnv::empty().with_role("p", cfg0(s));
        let without = typecheck(
            &VarEnv::empty(),
            &TimerEnv::empty(),
            &p,
            &delta,
            &ScopeBindings::default(),
        );
        let with = typecheck(
            &VarEnv::empty(),
            &TimerEnv::empty(),
            &p,
            &delta.clone().with_role("zombie", cfg0(S::End)),
            &ScopeBindings::default(),
        );
        assert_eq!(without.accepted, with.accepted);
        assert!(with.accepted);
    }

    #[test]
    fn send_checks_guard_and_payload() {
        let s = S::Choice(vec![opt(Send, "a", Sort::Nat, C::ge("x", 3), &["x"], S::End)]);
        let delta = SessionEnv::empty().with_role("p", cfg0(s));
        // at nu0 the guard x>=3 fails
        let p = Process::send("p", "a", Value::Nat(1), Process::Term);
        let report = typecheck(
            &VarEnv::empty(),
            &TimerEnv::empty(),
            &p,
            &delta,
            &ScopeBindings::default(),
        );
        assert!(!report.accepted);
        assert!(report.failing_premise.unwrap().starts_with("VSend"));

        // after delay(3) the send is viable
        let p = Process::delay_t(
            TimeValue::from_nat(3),
            Process::send("p", "a", Value::Nat(1), Process::Term),
        );
        let report = typecheck(
            &VarEnv::empty(),
            &TimerEnv::empty(),
            &p,
            &delta,
            &ScopeBindings::default(),
        );
        assert!(report.accepted, "{:?}", report.failing_premise);
        let rules = report.derivation.preorder_rules();
        assert!(rules.contains(&"Del[t]".to_string()));
        assert!(rules.contains(&"VSend".to_string()));
    }
}
