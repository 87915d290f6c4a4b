//! Executable transition semantics for configurations, queued
//! configurations, and systems, plus future-enabledness, compatibility,
//! and a bounded progress explorer.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::timelogic::{delay_projection, half_grid, IntervalSet, TimeValue, Valuation};
use crate::typesys::{Direction, SessionType, Sort};
use crate::wellformed::wf_config;

/// A type-level message: label plus payload sort.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Message {
    pub label: String,
    pub payload: Sort,
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.payload == Sort::None {
            write!(f, "{}", self.label)
        } else {
            write!(f, "{}<{}>", self.label, self.payload)
        }
    }
}

/// FIFO queue of received-but-unprocessed messages.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MsgQueue {
    items: Vec<Message>,
}

impl MsgQueue {
    pub fn empty() -> Self {
        MsgQueue::default()
    }

    pub fn from_items(items: Vec<Message>) -> Self {
        MsgQueue { items }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn head(&self) -> Option<&Message> {
        self.items.first()
    }

    pub fn items(&self) -> &[Message] {
        &self.items
    }

    pub fn enqueued(&self, m: Message) -> MsgQueue {
        let mut items = self.items.clone();
        items.push(m);
        MsgQueue { items }
    }

    pub fn dequeued(&self) -> Option<(Message, MsgQueue)> {
        let mut items = self.items.clone();
        if items.is_empty() {
            return None;
        }
        let head = items.remove(0);
        Some((head, MsgQueue { items }))
    }
}

impl fmt::Display for MsgQueue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, m) in self.items.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub nu: Valuation,
    pub s: SessionType,
}

impl Configuration {
    pub fn new(nu: Valuation, s: SessionType) -> Self {
        Configuration { nu, s }
    }

    pub fn initial(s: SessionType) -> Self {
        let nu = Valuation::zero(s.clocks());
        Configuration { nu, s }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.nu, self.s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueuedConfig {
    pub cfg: Configuration,
    pub queue: MsgQueue,
}

impl QueuedConfig {
    pub fn new(cfg: Configuration, queue: MsgQueue) -> Self {
        QueuedConfig { cfg, queue }
    }

    pub fn initial(s: SessionType) -> Self {
        QueuedConfig { cfg: Configuration::initial(s), queue: MsgQueue::empty() }
    }

    /// Final: the type is `end` up to unfolding and the queue is empty.
    pub fn is_final(&self) -> bool {
        self.queue.is_empty() && self.cfg.s.is_end()
    }
}

impl fmt::Display for QueuedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.cfg.nu, self.cfg.s, self.queue)
    }
}

/// Two queued configurations composed in parallel. The clock namespaces of
/// the two sides are disjoint by construction of the initial system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    pub left: QueuedConfig,
    pub right: QueuedConfig,
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {}", self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransLabel {
    SendM(Message),
    RecvM(Message),
    Tau,
    Delay(TimeValue),
}

impl fmt::Display for TransLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransLabel::SendM(m) => write!(f, "!{m}"),
            TransLabel::RecvM(m) => write!(f, "?{m}"),
            TransLabel::Tau => write!(f, "tau"),
            TransLabel::Delay(t) => write!(f, "delay({t})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Enabled {
    None,
    Send,
    Recv,
    Both,
}

/// All immediate communication transitions of a configuration: recursion is
/// unfolded transparently, then every option whose guard holds fires.
pub fn cfg_actions(c: &Configuration) -> Vec<(TransLabel, Configuration)> {
    let head = c.s.unfold_head();
    let SessionType::Choice(opts) = head else {
        return vec![];
    };
    let mut out = Vec::new();
    for o in &opts {
        if o.guard.sat(&c.nu) {
            let nu = c
                .nu
                .reset(&o.resets)
                .expect("option resets are clocks of the valuation domain");
            let msg = Message { label: o.label.clone(), payload: o.payload.clone() };
            let label = match o.direction {
                Direction::Send => TransLabel::SendM(msg),
                Direction::Recv => TransLabel::RecvM(msg),
            };
            out.push((label, Configuration { nu, s: o.continuation.clone() }));
        }
    }
    out
}

/// Rule tick: clocks advance, the type is unchanged.
pub fn cfg_delay(c: &Configuration, t: &TimeValue) -> Configuration {
    Configuration { nu: c.nu.advance(t), s: c.s.clone() }
}

/// The delay set at which some option of the given direction is enabled.
fn direction_window(c: &Configuration, dir: Direction) -> IntervalSet {
    let head = c.s.unfold_head();
    let SessionType::Choice(opts) = head else {
        return IntervalSet::empty();
    };
    let mut acc = IntervalSet::empty();
    for o in &opts {
        if o.direction == dir {
            acc = acc.union(&delay_projection(&c.nu, &o.guard));
        }
    }
    acc
}

/// Which directions of action become enabled at some (possibly zero)
/// future delay.
pub fn future_enabled(c: &Configuration) -> Enabled {
    let send = !direction_window(c, Direction::Send).is_empty();
    let recv = !direction_window(c, Direction::Recv).is_empty();
    match (send, recv) {
        (true, true) => Enabled::Both,
        (true, false) => Enabled::Send,
        (false, true) => Enabled::Recv,
        (false, false) => Enabled::None,
    }
}

/// Delays at which the queue head is receivable (empty set when the queue
/// is empty or the head matches no receive option).
fn head_receivable_window(q: &QueuedConfig) -> IntervalSet {
    let Some(head) = q.queue.head() else {
        return IntervalSet::empty();
    };
    let s = q.cfg.s.unfold_head();
    let SessionType::Choice(opts) = s else {
        return IntervalSet::empty();
    };
    let mut acc = IntervalSet::empty();
    for o in &opts {
        if o.direction == Direction::Recv && o.label == head.label && o.payload == head.payload {
            acc = acc.union(&delay_projection(&q.cfg.nu, &o.guard));
        }
    }
    acc
}

/// One step of a queued configuration under the given label; `None` when
/// the rule's premises fail.
pub fn qc_step(q: &QueuedConfig, label: &TransLabel) -> Option<QueuedConfig> {
    match label {
        TransLabel::SendM(m) => {
            let (_, cfg) = cfg_actions(&q.cfg).into_iter().find(|(l, _)| {
                matches!(l, TransLabel::SendM(sent) if sent == m)
            })?;
            Some(QueuedConfig { cfg, queue: q.queue.clone() })
        }
        TransLabel::Tau => {
            let (head, rest) = q.queue.dequeued()?;
            let (_, cfg) = cfg_actions(&q.cfg).into_iter().find(|(l, _)| {
                matches!(l, TransLabel::RecvM(m) if *m == head)
            })?;
            Some(QueuedConfig { cfg, queue: rest })
        }
        TransLabel::RecvM(m) => {
            // rule que: the environment appends at the tail
            Some(QueuedConfig { cfg: q.cfg.clone(), queue: q.queue.enqueued(m.clone()) })
        }
        TransLabel::Delay(t) => {
            if t.is_zero() {
                return Some(q.clone());
            }
            // (urgency) no receivable queue head at any earlier instant
            let window = IntervalSet::upto(t, false);
            if !head_receivable_window(q).intersect(&window).is_empty() {
                return None;
            }
            // (persistency) a future-enabled configuration stays future-enabled
            let delayed = cfg_delay(&q.cfg, t);
            if future_enabled(&q.cfg) != Enabled::None && future_enabled(&delayed) == Enabled::None
            {
                return None;
            }
            Some(QueuedConfig { cfg: delayed, queue: q.queue.clone() })
        }
    }
}

/// Which side of a system moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Joint,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
            Side::Joint => write!(f, "joint"),
        }
    }
}

/// All instantaneous (tau) steps of a system: communications in both
/// directions and local dequeues.
pub fn sys_steps(s: &SystemState) -> Vec<(Side, TransLabel, SystemState)> {
    let mut out = Vec::new();
    // com-l: left sends, right enqueues
    for (label, cfg) in cfg_actions(&s.left.cfg) {
        if let TransLabel::SendM(m) = &label {
            let left = QueuedConfig { cfg: cfg.clone(), queue: s.left.queue.clone() };
            let right = qc_step(&s.right, &TransLabel::RecvM(m.clone()))
                .expect("rule que is always defined");
            out.push((Side::Left, label.clone(), SystemState { left, right }));
        }
    }
    // com-r: right sends, left enqueues
    for (label, cfg) in cfg_actions(&s.right.cfg) {
        if let TransLabel::SendM(m) = &label {
            let right = QueuedConfig { cfg: cfg.clone(), queue: s.right.queue.clone() };
            let left = qc_step(&s.left, &TransLabel::RecvM(m.clone()))
                .expect("rule que is always defined");
            out.push((Side::Right, label.clone(), SystemState { left, right }));
        }
    }
    // par-l / par-r: local dequeues
    if let Some(left) = qc_step(&s.left, &TransLabel::Tau) {
        out.push((Side::Left, TransLabel::Tau, SystemState { left, right: s.right.clone() }));
    }
    if let Some(right) = qc_step(&s.right, &TransLabel::Tau) {
        out.push((Side::Right, TransLabel::Tau, SystemState { left: s.left.clone(), right }));
    }
    out
}

/// Rule wait: time passes consistently, defined iff both sides admit it.
pub fn sys_delay(s: &SystemState, t: &TimeValue) -> Option<SystemState> {
    let left = qc_step(&s.left, &TransLabel::Delay(*t))?;
    let right = qc_step(&s.right, &TransLabel::Delay(*t))?;
    Some(SystemState { left, right })
}

/// Coinductive compatibility with memoized visited pairs (the relation is a
/// greatest fixpoint, so revisiting a pair counts as success).
pub fn compatible(q1: &QueuedConfig, q2: &QueuedConfig) -> bool {
    fn go(q1: &QueuedConfig, q2: &QueuedConfig, seen: &mut BTreeSet<(QueuedConfig, QueuedConfig)>) -> bool {
        let key = (q1.clone(), q2.clone());
        if !seen.insert(key) {
            return true;
        }
        // (1) at most one queue non-empty
        if !q1.queue.is_empty() && !q2.queue.is_empty() {
            return false;
        }
        // (2) a queued head must be receivable, and the residual recurses
        if let Some((head, rest)) = q1.queue.dequeued() {
            let Some((_, cfg)) = cfg_actions(&q1.cfg)
                .into_iter()
                .find(|(l, _)| matches!(l, TransLabel::RecvM(m) if *m == head))
            else {
                return false;
            };
            return go(&QueuedConfig { cfg, queue: rest }, q2, seen);
        }
        // (3) symmetric for the other side
        if let Some((head, rest)) = q2.queue.dequeued() {
            let Some((_, cfg)) = cfg_actions(&q2.cfg)
                .into_iter()
                .find(|(l, _)| matches!(l, TransLabel::RecvM(m) if *m == head))
            else {
                return false;
            };
            return go(q1, &QueuedConfig { cfg, queue: rest }, seen);
        }
        // (4) both empty: dual types and equal valuations
        q1.cfg.s.unfold_equiv(&q2.cfg.s.dual()) && q1.cfg.nu == q2.cfg.nu
    }
    go(q1, q2, &mut BTreeSet::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExploreMode {
    Exhaustive,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StuckState {
    pub state: String,
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgressReport {
    pub explored: usize,
    pub horizon: u64,
    pub stuck_states: Vec<StuckState>,
    /// Compatibility or well-formedness failures at visited states; empty
    /// on every run over well-formed inputs if the preservation lemmas hold.
    pub invariant_violations: Vec<String>,
    pub truncated: bool,
}

impl ProgressReport {
    pub fn passed(&self) -> bool {
        self.stuck_states.is_empty() && self.invariant_violations.is_empty()
    }
}

/// Is the state neither final-final nor able to reach a tau after some
/// (possibly zero) representative delay?
pub fn is_stuck(s: &SystemState, grid: &[TimeValue]) -> bool {
    if s.left.is_final() && s.right.is_final() {
        return false;
    }
    if !sys_steps(s).is_empty() {
        return false;
    }
    for t in grid {
        if t.is_zero() {
            continue;
        }
        if let Some(next) = sys_delay(s, t) {
            if !sys_steps(&next).is_empty() {
                return false;
            }
        }
    }
    true
}

/// Explores the system `(nu0, S, []) | (nu0, dual S, [])` to the given
/// horizon, checking compatibility and well-formedness at every visited
/// state and collecting stuck states.
pub fn progress_explore(s: &SessionType, horizon: u64, mode: ExploreMode) -> ProgressReport {
    let initial = SystemState {
        left: QueuedConfig::initial(s.clone()),
        right: QueuedConfig::initial(s.dual()),
    };
    let max_const = s.max_constant();
    let grid = half_grid(max_const);
    let mut report = ProgressReport {
        explored: 0,
        horizon,
        stuck_states: Vec::new(),
        invariant_violations: Vec::new(),
        truncated: false,
    };

    let visit = |state: &SystemState, trace: &[String], report: &mut ProgressReport| {
        report.explored += 1;
        if !compatible(&state.left, &state.right) {
            report
                .invariant_violations
                .push(format!("compatibility lost at {state}"));
        }
        for (side, qc) in [("left", &state.left), ("right", &state.right)] {
            if !wf_config(&qc.cfg.nu, &qc.cfg.s) {
                report
                    .invariant_violations
                    .push(format!("{side} configuration not well-formed at {state}"));
            }
        }
        if is_stuck(state, &grid) {
            report.stuck_states.push(StuckState {
                state: state.to_string(),
                trace: trace.to_vec(),
            });
        }
    };

    let successors = |state: &SystemState| -> Vec<(String, SystemState)> {
        let mut out: Vec<(String, SystemState)> = sys_steps(state)
            .into_iter()
            .map(|(side, label, next)| (format!("{side} {label}"), next))
            .collect();
        for t in &grid {
            if t.is_zero() {
                continue;
            }
            if let Some(next) = sys_delay(state, t) {
                out.push((format!("joint delay({t})"), next));
            }
        }
        out
    };

    match mode {
        ExploreMode::Exhaustive => {
            let mut visited: BTreeSet<SystemState> = BTreeSet::new();
            let mut frontier: VecDeque<(SystemState, Vec<String>, u64)> = VecDeque::new();
            visited.insert(initial.clone());
            frontier.push_back((initial, Vec::new(), 0));
            while let Some((state, trace, depth)) = frontier.pop_front() {
                visit(&state, &trace, &mut report);
                if depth == horizon {
                    report.truncated = true;
                    continue;
                }
                for (desc, next) in successors(&state) {
                    if visited.insert(next.clone()) {
                        let mut t = trace.clone();
                        t.push(format!("STEP {}: {desc}", depth + 1));
                        frontier.push_back((next, t, depth + 1));
                    }
                }
            }
        }
        ExploreMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = initial;
            let mut trace = Vec::new();
            for step in 0..horizon {
                visit(&state, &trace, &mut report);
                let succ = successors(&state);
                if succ.is_empty() {
                    break;
                }
                let pick = rng.gen_range(0..succ.len());
                let (desc, next) = succ.into_iter().nth(pick).expect("index in range");
                trace.push(format!("STEP {}: {desc}", step + 1));
                state = next;
            }
            visit(&state, &trace, &mut report);
        }
    }
    report
}

/// Map-based rendering of a system state used by trace output.
pub fn state_digest(s: &SystemState) -> String {
    s.to_string()
}

/// Exploration entry that also returns the visited states (used by tests
/// asserting preservation of invariants along transitions).
pub fn reachable_states(s: &SessionType, horizon: u64) -> Vec<SystemState> {
    let initial = SystemState {
        left: QueuedConfig::initial(s.clone()),
        right: QueuedConfig::initial(s.dual()),
    };
    let grid = half_grid(s.max_constant());
    let mut visited: BTreeSet<SystemState> = BTreeSet::new();
    let mut order = Vec::new();
    let mut frontier = VecDeque::new();
    visited.insert(initial.clone());
    frontier.push_back((initial, 0u64));
    while let Some((state, depth)) = frontier.pop_front() {
        order.push(state.clone());
        if depth == horizon {
            continue;
        }
        let mut next_states: Vec<SystemState> = sys_steps(&state).into_iter().map(|(_, _, n)| n).collect();
        for t in &grid {
            if !t.is_zero() {
                if let Some(n) = sys_delay(&state, t) {
                    next_states.push(n);
                }
            }
        }
        for n in next_states {
            if visited.insert(n.clone()) {
                frontier.push_back((n, depth + 1));
            }
        }
    }
    order
}

/// Convenience: initial back-to-back system for a type.
pub fn initial_system(s: &SessionType) -> SystemState {
    SystemState {
        left: QueuedConfig::initial(s.clone()),
        right: QueuedConfig::initial(s.dual()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timelogic::{ClockId, Constraint as C};
    use crate::typesys::{opt, Direction::*, SessionType as S};

    fn msg(label: &str) -> Message {
        Message { label: label.into(), payload: Sort::None }
    }

    fn nu(pairs: &[(&str, i64, i64)]) -> Valuation {
        Valuation::from_map(
            pairs
                .iter()
                .map(|(n, a, b)| (ClockId::new(*n), TimeValue::new(*a, *b).unwrap()))
                .collect(),
        )
    }

    /// Ex: `{?a(x<5).end, !b(x=0).end}` and its dual.
    fn unsafe_s1() -> S {
        S::Choice(vec![
            opt(Recv, "a", Sort::None, C::lt("x", 5), &[], S::End),
            opt(Send, "b", Sort::None, C::eq("x", 0), &[], S::End),
        ])
    }

    fn weak_persistency_s() -> S {
        S::Choice(vec![
            opt(Send, "data", Sort::Str, C::lt("x", 3), &[], S::End),
            opt(Recv, "timeout", Sort::None, C::gt("x", 4), &[], S::End),
        ])
    }

    #[test]
    fn cfg_actions_respects_guards() {
        let s = S::Choice(vec![opt(Send, "b", Sort::None, C::eq("x", 0), &[], S::End)]);
        let c0 = Configuration::new(nu(&[("x", 0, 1)]), s.clone());
        let acts = cfg_actions(&c0);
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].0, TransLabel::SendM(msg("b")));

        let c1 = Configuration::new(nu(&[("x", 1, 1)]), s);
        assert!(cfg_actions(&c1).is_empty());
    }

    #[test]
    fn cfg_actions_unfolds_recursion() {
        let s = S::rec(
            "a",
            S::Choice(vec![opt(Recv, "a", Sort::None, C::lt("x", 1), &[], S::var("a"))]),
        );
        let c = Configuration::initial(s.clone());
        let acts = cfg_actions(&c);
        assert_eq!(acts.len(), 1);
        match &acts[0].1.s {
            S::Rec(..) => {}
            other => panic!("continuation should fold back to the recursion, got {other}"),
        }
    }

    #[test]
    fn cfg_delay_composes() {
        let c = Configuration::initial(weak_persistency_s());
        let s1 = cfg_delay(&cfg_delay(&c, &TimeValue::from_nat(1)), &TimeValue::from_nat(2));
        let s2 = cfg_delay(&c, &TimeValue::from_nat(3));
        assert_eq!(s1, s2);
        assert_eq!(cfg_delay(&c, &TimeValue::ZERO), c);
    }

    #[test]
    fn future_enabled_examples() {
        let both = Configuration::initial(weak_persistency_s());
        assert_eq!(future_enabled(&both), Enabled::Both);

        let stale = Configuration::new(
            nu(&[("x", 9, 1)]),
            S::Choice(vec![opt(Send, "a", Sort::None, C::lt("x", 5), &[], S::End)]),
        );
        assert_eq!(future_enabled(&stale), Enabled::None);

        assert_eq!(
            future_enabled(&Configuration::new(nu(&[]), S::End)),
            Enabled::None
        );
    }

    #[test]
    fn urgency_blocks_delay_over_receivable_head() {
        // Ex 2.1 dual at y=0 with data queued: no positive delay allowed
        let d = weak_persistency_s().dual();
        let q = QueuedConfig::new(
            Configuration::initial(d),
            MsgQueue::from_items(vec![Message { label: "data".into(), payload: Sort::Str }]),
        );
        assert!(qc_step(&q, &TransLabel::Delay(TimeValue::new(1, 2).unwrap())).is_none());
        assert!(qc_step(&q, &TransLabel::Delay(TimeValue::from_nat(3))).is_none());
        // the tau (receive) is available instead
        assert!(qc_step(&q, &TransLabel::Tau).is_some());
    }

    #[test]
    fn persistency_allows_delay_past_send_window() {
        // Ex 2.1 S at x=0 with empty queue: delay 5 is allowed because the
        // receive stays future-enabled
        let q = QueuedConfig::initial(weak_persistency_s());
        let out = qc_step(&q, &TransLabel::Delay(TimeValue::from_nat(5)));
        assert!(out.is_some());
    }

    #[test]
    fn que_appends_at_tail() {
        let q = QueuedConfig::initial(weak_persistency_s());
        let q1 = qc_step(&q, &TransLabel::RecvM(msg("m1"))).unwrap();
        let q2 = qc_step(&q1, &TransLabel::RecvM(msg("m2"))).unwrap();
        let labels: Vec<&str> = q2.queue.items().iter().map(|m| m.label.as_str()).collect();
        assert_eq!(labels, vec!["m1", "m2"]);
    }

    #[test]
    fn delay_decomposition() {
        let q = QueuedConfig::initial(weak_persistency_s());
        let grid = half_grid(5);
        for s in &grid {
            for t in &grid {
                let joint = qc_step(&q, &TransLabel::Delay(s.add(t)));
                let split = qc_step(&q, &TransLabel::Delay(*s))
                    .and_then(|mid| qc_step(&mid, &TransLabel::Delay(*t)));
                assert_eq!(joint, split, "delay decomposition at s={s}, t={t}");
            }
        }
    }

    #[test]
    fn unsafe_mixed_choice_reaches_stuck_state() {
        let s1 = unsafe_s1();
        let sys = initial_system(&s1);
        let steps = sys_steps(&sys);
        // both sends can fire from the initial state
        assert!(steps
            .iter()
            .any(|(side, l, _)| *side == Side::Left && matches!(l, TransLabel::SendM(m) if m.label == "b")));
        assert!(steps
            .iter()
            .any(|(side, l, _)| *side == Side::Right && matches!(l, TransLabel::SendM(m) if m.label == "a")));

        // fire both: the crossed state is stuck
        let (_, _, after_left) = steps
            .iter()
            .find(|(side, l, _)| *side == Side::Left && matches!(l, TransLabel::SendM(_)))
            .unwrap()
            .clone();
        let (_, _, crossed) = sys_steps(&after_left)
            .into_iter()
            .find(|(side, l, _)| *side == Side::Right && matches!(l, TransLabel::SendM(_)))
            .unwrap();
        assert!(is_stuck(&crossed, &half_grid(5)));

        let report = progress_explore(&s1, 10, ExploreMode::Exhaustive);
        assert!(!report.stuck_states.is_empty());
    }

    #[test]
    fn final_final_system_has_no_steps_and_is_not_stuck() {
        let sys = initial_system(&S::End);
        assert!(sys_steps(&sys).is_empty());
        assert!(!is_stuck(&sys, &half_grid(1)));
        let report = progress_explore(&S::End, 5, ExploreMode::Exhaustive);
        assert!(report.passed());
    }

    #[test]
    fn compatibility_examples() {
        let s = weak_persistency_s();
        let q1 = QueuedConfig::initial(s.clone());
        let q2 = QueuedConfig::initial(s.dual());
        assert!(compatible(&q1, &q2));

        // both queues non-empty violates condition (1)
        let q1n = QueuedConfig { cfg: q1.cfg.clone(), queue: MsgQueue::from_items(vec![msg("m")]) };
        let q2n = QueuedConfig { cfg: q2.cfg.clone(), queue: MsgQueue::from_items(vec![msg("m")]) };
        assert!(!compatible(&q1n, &q2n));

        // an unreceivable head violates condition (3)
        let sender = QueuedConfig::initial(S::Choice(vec![opt(
            Send,
            "a",
            Sort::None,
            C::lt("x", 5),
            &[],
            S::End,
        )]));
        let stuck_end = QueuedConfig {
            cfg: Configuration::initial(S::End),
            queue: MsgQueue::from_items(vec![msg("a")]),
        };
        assert!(!compatible(&sender, &stuck_end));
    }

    #[test]
    fn weak_persistency_progress_holds() {
        let report = progress_explore(&weak_persistency_s(), 20, ExploreMode::Exhaustive);
        assert!(report.passed(), "{:?}", report);
    }

    #[test]
    fn random_mode_is_seed_deterministic() {
        let s = weak_persistency_s();
        let a = progress_explore(&s, 15, ExploreMode::Random { seed: 7 });
        let b = progress_explore(&s, 15, ExploreMode::Random { seed: 7 });
        assert_eq!(a.explored, b.explored);
        assert_eq!(a.stuck_states.len(), b.stuck_states.len());
    }
}
