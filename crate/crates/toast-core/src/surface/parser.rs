//! Recursive-descent parser for the DSL: constraints, types, processes,
//! and check manifests. Sugar (`x<3`, intervals, `x>=3`, omitted payloads
//! and reset sets, singleton choices without braces) is desugared here.

use std::collections::BTreeSet;

use crate::calculus::{BranchArm, Deadline, Process, QueueId, Value};
use crate::surface::lexer::{lex, Span, Tok, Token};
use crate::surface::{
    CheckItem, Decl, DeltaEntry, Diagnostic, ProcessRef, ScopeDecl, Severity, SortMsg,
    SourceFile, TypeRef,
};
use crate::timelogic::{ClockId, Constraint, TimeValue};
use crate::typesys::{Direction, SessionType, Sort, TypeOption};

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    input_len: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn err<T>(&self, span: Span, message: impl Into<String>) -> PResult<T> {
        Err(Diagnostic { severity: Severity::Error, span, message: message.into() })
    }

    fn here(&self) -> Span {
        self.toks
            .get(self.pos)
            .map(|t| t.span)
            .unwrap_or(Span { start: self.input_len, end: self.input_len })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, expected: &Tok) -> PResult<Span> {
        match self.next() {
            Some(t) if t.tok == *expected => Ok(t.span),
            Some(t) => self.err(t.span, format!("expected `{expected}`, found `{}`", t.tok)),
            None => self.err(self.here(), format!("expected `{expected}`, found end of input")),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> PResult<Span> {
        match self.next() {
            Some(Token { tok: Tok::Ident(s), span }) if s == kw => Ok(span),
            Some(t) => self.err(t.span, format!("expected `{kw}`, found `{}`", t.tok)),
            None => self.err(self.here(), format!("expected `{kw}`, found end of input")),
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.next() {
            Some(Token { tok: Tok::Ident(s), span }) => Ok((s, span)),
            Some(t) => self.err(t.span, format!("expected identifier, found `{}`", t.tok)),
            None => self.err(self.here(), "expected identifier, found end of input"),
        }
    }

    fn nat(&mut self) -> PResult<(u64, Span)> {
        match self.next() {
            Some(Token { tok: Tok::Nat(n), span }) => Ok((n, span)),
            Some(t) => self.err(t.span, format!("expected number, found `{}`", t.tok)),
            None => self.err(self.here(), "expected number, found end of input"),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    // ----- constraints -------------------------------------------------

    pub fn constraint(&mut self) -> PResult<Constraint> {
        let mut acc = self.constraint_atom()?;
        while matches!(self.peek(), Some(Tok::AndAnd)) {
            self.next();
            let rhs = self.constraint_atom()?;
            acc = Constraint::and(acc, rhs);
        }
        Ok(acc)
    }

    fn constraint_atom(&mut self) -> PResult<Constraint> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.next();
                let inner = self.constraint_atom()?;
                Ok(Constraint::not(inner))
            }
            Some(Tok::LParen) => {
                self.next();
                let inner = self.constraint()?;
                self.eat(&Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.next();
                Ok(Constraint::True)
            }
            Some(Tok::Nat(_)) => {
                // interval sugar n1 < x < n2
                let (lo, _) = self.nat()?;
                self.eat(&Tok::Lt)?;
                let (x, _) = self.ident()?;
                self.eat(&Tok::Lt)?;
                let (hi, _) = self.nat()?;
                Ok(Constraint::between(lo, x.as_str(), hi))
            }
            Some(Tok::Ident(_)) => {
                let (x, _) = self.ident()?;
                if matches!(self.peek(), Some(Tok::Minus)) {
                    self.next();
                    let (y, _) = self.ident()?;
                    let op = self.next();
                    let (n, _) = self.nat()?;
                    match op.map(|t| t.tok) {
                        Some(Tok::Gt) => Ok(Constraint::DiffGt(ClockId::new(x), ClockId::new(y), n)),
                        Some(Tok::Eq) => Ok(Constraint::DiffEq(ClockId::new(x), ClockId::new(y), n)),
                        _ => self.err(self.here(), "difference atoms use `>` or `=`"),
                    }
                } else {
                    let op = self.next();
                    let (n, _) = self.nat()?;
                    match op.map(|t| t.tok) {
                        Some(Tok::Gt) => Ok(Constraint::gt(x.as_str(), n)),
                        Some(Tok::Eq) => Ok(Constraint::eq(x.as_str(), n)),
                        Some(Tok::Lt) => Ok(Constraint::lt(x.as_str(), n)),
                        Some(Tok::Le) => Ok(Constraint::le(x.as_str(), n)),
                        Some(Tok::Ge) => Ok(Constraint::ge(x.as_str(), n)),
                        _ => self.err(self.here(), "expected a comparison operator"),
                    }
                }
            }
            _ => self.err(self.here(), "expected a constraint"),
        }
    }

    // ----- types --------------------------------------------------------

    pub fn session_type(&mut self) -> PResult<SessionType> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "end" => {
                self.next();
                Ok(SessionType::End)
            }
            Some(Tok::Ident(s)) if s == "rec" => {
                self.next();
                let (var, _) = self.ident()?;
                self.eat(&Tok::Dot)?;
                let body = self.session_type()?;
                Ok(SessionType::rec(var, body))
            }
            Some(Tok::LBrace) => {
                self.next();
                let mut opts = vec![self.type_option()?];
                while matches!(self.peek(), Some(Tok::Comma)) {
                    self.next();
                    opts.push(self.type_option()?);
                }
                self.eat(&Tok::RBrace)?;
                Ok(SessionType::Choice(opts))
            }
            Some(Tok::Bang) | Some(Tok::Question) => {
                // singleton choice without braces
                let opt = self.type_option()?;
                Ok(SessionType::Choice(vec![opt]))
            }
            Some(Tok::Ident(_)) => {
                let (name, _) = self.ident()?;
                Ok(SessionType::Var(name))
            }
            _ => self.err(self.here(), "expected a session type"),
        }
    }

    fn type_option(&mut self) -> PResult<TypeOption> {
        let direction = match self.next() {
            Some(Token { tok: Tok::Bang, .. }) => Direction::Send,
            Some(Token { tok: Tok::Question, .. }) => Direction::Recv,
            Some(t) => return self.err(t.span, "options start with `!` or `?`"),
            None => return self.err(self.here(), "expected an option"),
        };
        let (label, span) = self.ident()?;
        if label.is_empty() {
            return self.err(span, "labels must be non-empty");
        }
        let payload = if matches!(self.peek(), Some(Tok::Lt)) {
            self.next();
            let s = self.sort()?;
            self.eat(&Tok::Gt)?;
            s
        } else {
            Sort::None
        };
        self.eat(&Tok::LParen)?;
        let guard = self.constraint()?;
        let mut resets = BTreeSet::new();
        if matches!(self.peek(), Some(Tok::Comma)) {
            self.next();
            self.eat(&Tok::LBrace)?;
            if !matches!(self.peek(), Some(Tok::RBrace)) {
                loop {
                    let (clock, _) = self.ident()?;
                    resets.insert(ClockId::new(clock));
                    if matches!(self.peek(), Some(Tok::Comma)) {
                        self.next();
                    } else {
                        break;
                    }
                }
            }
            self.eat(&Tok::RBrace)?;
        }
        self.eat(&Tok::RParen)?;
        self.eat(&Tok::Dot)?;
        let continuation = self.session_type()?;
        Ok(TypeOption { direction, label, payload, guard, resets, continuation })
    }

    fn sort(&mut self) -> PResult<Sort> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "nat" => {
                self.next();
                Ok(Sort::Nat)
            }
            Some(Tok::Ident(s)) if s == "bool" => {
                self.next();
                Ok(Sort::Bool)
            }
            Some(Tok::Ident(s)) if s == "string" => {
                self.next();
                Ok(Sort::Str)
            }
            Some(Tok::Ident(s)) if s == "none" => {
                self.next();
                Ok(Sort::None)
            }
            Some(Tok::LParen) => {
                self.next();
                let init = self.constraint()?;
                self.eat(&Tok::Comma)?;
                let proto = self.session_type()?;
                self.eat(&Tok::RParen)?;
                Ok(Sort::Delegate(init, Box::new(proto)))
            }
            _ => self.err(self.here(), "expected a payload sort"),
        }
    }

    // ----- processes ----------------------------------------------------

    pub fn process(&mut self) -> PResult<Process> {
        let mut acc = self.process_prefix()?;
        while matches!(self.peek(), Some(Tok::Pipe)) {
            self.next();
            let rhs = self.process_prefix()?;
            acc = Process::par(acc, rhs);
        }
        Ok(acc)
    }

    fn process_prefix(&mut self) -> PResult<Process> {
        match self.peek() {
            Some(Tok::Nat(0)) => {
                self.next();
                Ok(Process::Term)
            }
            Some(Tok::LParen) => {
                self.next();
                let inner = self.process()?;
                self.eat(&Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Ident(s)) if s == "set" => {
                self.next();
                self.eat(&Tok::LParen)?;
                let (x, _) = self.ident()?;
                self.eat(&Tok::RParen)?;
                self.eat(&Tok::Dot)?;
                let cont = self.process_prefix()?;
                Ok(Process::SetTimer(x, Box::new(cont)))
            }
            Some(Tok::Ident(s)) if s == "if" => {
                self.next();
                self.eat(&Tok::LParen)?;
                let cond = self.constraint()?;
                self.eat(&Tok::RParen)?;
                let then_p = self.process_prefix()?;
                self.eat_keyword("else")?;
                let else_p = self.process_prefix()?;
                Ok(Process::If {
                    cond,
                    then_p: Box::new(then_p),
                    else_p: Box::new(else_p),
                })
            }
            Some(Tok::Ident(s)) if s == "delay" => {
                self.next();
                self.eat(&Tok::LParen)?;
                // a literal delay is a rational; anything else is a
                // constraint over the delay variable
                let literal = matches!(self.peek(), Some(Tok::Nat(_)))
                    && matches!(self.peek2(), Some(Tok::RParen) | Some(Tok::Slash));
                let p = if literal {
                    let t = self.rational()?;
                    self.eat(&Tok::RParen)?;
                    self.eat(&Tok::Dot)?;
                    let cont = self.process_prefix()?;
                    Process::DelayT { t, cont: Box::new(cont) }
                } else {
                    let delta = self.constraint()?;
                    self.eat(&Tok::RParen)?;
                    self.eat(&Tok::Dot)?;
                    let cont = self.process_prefix()?;
                    Process::DelaySym { delta, cont: Box::new(cont) }
                };
                Ok(p)
            }
            Some(Tok::Ident(s)) if s == "def" => {
                self.next();
                let (name, _) = self.ident()?;
                self.eat(&Tok::LParen)?;
                let (val_params, role_params) = self.param_lists()?;
                self.eat(&Tok::RParen)?;
                self.eat(&Tok::Eq)?;
                let body = self.process()?;
                self.eat_keyword("in")?;
                let cont = self.process()?;
                Ok(Process::Def {
                    name,
                    val_params,
                    role_params,
                    body: Box::new(body),
                    cont: Box::new(cont),
                })
            }
            Some(Tok::Ident(s)) if s == "new" => {
                self.next();
                self.eat(&Tok::LParen)?;
                let (p, _) = self.ident()?;
                let (q, _) = self.ident()?;
                self.eat(&Tok::RParen)?;
                let body = self.process_prefix()?;
                Ok(Process::Scope { p, q, body: Box::new(body) })
            }
            Some(Tok::Ident(_)) => self.process_ident_form(),
            _ => self.err(self.here(), "expected a process"),
        }
    }

    fn process_ident_form(&mut self) -> PResult<Process> {
        let (name, span) = self.ident()?;
        match self.peek() {
            Some(Tok::Bang) => {
                self.next();
                let (label, _) = self.ident()?;
                let value = if matches!(self.peek(), Some(Tok::LParen)) {
                    self.next();
                    let v = self.value()?;
                    self.eat(&Tok::RParen)?;
                    v
                } else {
                    Value::Unit
                };
                self.eat(&Tok::Dot)?;
                let cont = self.process_prefix()?;
                Ok(Process::Send { role: name, label, value, cont: Box::new(cont) })
            }
            Some(Tok::Question) => {
                self.next();
                let angle_deadline = if matches!(self.peek(), Some(Tok::Lt)) {
                    Some(self.angle_deadline()?)
                } else {
                    None
                };
                self.eat(&Tok::LBrace)?;
                let mut branches = vec![self.branch_arm()?];
                while matches!(self.peek(), Some(Tok::Comma)) {
                    self.next();
                    branches.push(self.branch_arm()?);
                }
                self.eat(&Tok::RBrace)?;
                if self.at_keyword("after") {
                    if angle_deadline.is_some() {
                        return self.err(
                            self.here(),
                            "a timeout carries its deadline after `after`, not in angle brackets",
                        );
                    }
                    self.next();
                    let deadline = self.suffix_deadline()?;
                    let after = self.process_prefix()?;
                    Ok(Process::Timeout {
                        role: name,
                        deadline,
                        branches,
                        after: Box::new(after),
                    })
                } else {
                    let Some(deadline) = angle_deadline else {
                        return self.err(
                            span,
                            "a plain reception needs a deadline, e.g. `p?<inf>{...}`",
                        );
                    };
                    Ok(Process::Branch { role: name, deadline, branches })
                }
            }
            Some(Tok::LParen) => {
                self.next();
                let (val_args, role_args) = self.arg_lists()?;
                self.eat(&Tok::RParen)?;
                Ok(Process::Call { name, val_args, role_args })
            }
            Some(Tok::Colon) => {
                self.next();
                let id = self.queue_id(&name, span)?;
                self.eat(&Tok::LBracket)?;
                let mut items = Vec::new();
                if !matches!(self.peek(), Some(Tok::RBracket)) {
                    loop {
                        let (label, _) = self.ident()?;
                        let value = match self.peek() {
                            Some(Tok::Comma) | Some(Tok::RBracket) => Value::Unit,
                            _ => self.value()?,
                        };
                        items.push((label, value));
                        if matches!(self.peek(), Some(Tok::Comma)) {
                            self.next();
                        } else {
                            break;
                        }
                    }
                }
                self.eat(&Tok::RBracket)?;
                Ok(Process::Queue { id, items })
            }
            Some(Tok::Gt) => {
                // general queue endpoint `from>to:[...]`
                self.next();
                let (to, _) = self.ident()?;
                self.eat(&Tok::Colon)?;
                self.eat(&Tok::LBracket)?;
                let mut items = Vec::new();
                if !matches!(self.peek(), Some(Tok::RBracket)) {
                    loop {
                        let (label, _) = self.ident()?;
                        let value = match self.peek() {
                            Some(Tok::Comma) | Some(Tok::RBracket) => Value::Unit,
                            _ => self.value()?,
                        };
                        items.push((label, value));
                        if matches!(self.peek(), Some(Tok::Comma)) {
                            self.next();
                        } else {
                            break;
                        }
                    }
                }
                self.eat(&Tok::RBracket)?;
                Ok(Process::Queue { id: QueueId { from: name, to }, items })
            }
            _ => self.err(
                span,
                format!("`{name}` must continue as a send, reception, call, or queue"),
            ),
        }
    }

    /// Two-character endpoints like `pq` split into `p` to `q`.
    fn queue_id(&self, name: &str, span: Span) -> PResult<QueueId> {
        let chars: Vec<char> = name.chars().collect();
        if chars.len() == 2 {
            Ok(QueueId { from: chars[0].to_string(), to: chars[1].to_string() })
        } else {
            self.err(
                span,
                format!("queue endpoint `{name}` must be two single-letter roles (or use `from>to`)"),
            )
        }
    }

    fn branch_arm(&mut self) -> PResult<BranchArm> {
        let (label, _) = self.ident()?;
        let binder = if matches!(self.peek(), Some(Tok::LParen)) {
            self.next();
            let (b, _) = self.ident()?;
            self.eat(&Tok::RParen)?;
            Some(b)
        } else {
            None
        };
        self.eat(&Tok::Colon)?;
        let body = self.process_prefix()?;
        Ok(BranchArm { label, binder, body })
    }

    /// `<inf>`, `<<3>`, `<<=3>`, `<<=0>`.
    fn angle_deadline(&mut self) -> PResult<Deadline> {
        self.eat(&Tok::Lt)?;
        let d = match self.peek() {
            Some(Tok::Ident(s)) if s == "inf" => {
                self.next();
                Deadline::Infinite
            }
            Some(Tok::Lt) => {
                self.next();
                let (n, _) = self.nat()?;
                Deadline::lt(n)
            }
            Some(Tok::Le) => {
                self.next();
                let (n, _) = self.nat()?;
                Deadline::le(n)
            }
            _ => return self.err(self.here(), "expected `inf`, `<n`, or `<=n`"),
        };
        self.eat(&Tok::Gt)?;
        Ok(d)
    }

    /// The deadline after the `after` keyword: `<3`, `<=3`, or `<=0`.
    fn suffix_deadline(&mut self) -> PResult<Deadline> {
        match self.next() {
            Some(Token { tok: Tok::Lt, .. }) => {
                let (n, _) = self.nat()?;
                Ok(Deadline::lt(n))
            }
            Some(Token { tok: Tok::Le, .. }) => {
                let (n, _) = self.nat()?;
                Ok(Deadline::le(n))
            }
            Some(t) => self.err(t.span, "`after` carries a deadline: `after<3` or `after<=3`"),
            None => self.err(self.here(), "expected a deadline after `after`"),
        }
    }

    fn value(&mut self) -> PResult<Value> {
        match self.next() {
            Some(Token { tok: Tok::Nat(n), .. }) => Ok(Value::Nat(n)),
            Some(Token { tok: Tok::Str(s), .. }) => Ok(Value::Str(s)),
            Some(Token { tok: Tok::Ident(s), .. }) if s == "true" => Ok(Value::Bool(true)),
            Some(Token { tok: Tok::Ident(s), .. }) if s == "false" => Ok(Value::Bool(false)),
            Some(Token { tok: Tok::LParen, .. }) => {
                self.eat(&Tok::RParen)?;
                Ok(Value::Unit)
            }
            Some(Token { tok: Tok::Ident(s), .. }) => Ok(Value::Ref(s)),
            Some(t) => self.err(t.span, format!("expected a value, found `{}`", t.tok)),
            None => self.err(self.here(), "expected a value"),
        }
    }

    fn rational(&mut self) -> PResult<TimeValue> {
        let (n, span) = self.nat()?;
        if matches!(self.peek(), Some(Tok::Slash)) {
            self.next();
            let (d, dspan) = self.nat()?;
            TimeValue::new(n as i64, d as i64).map_err(|e| Diagnostic {
                severity: Severity::Error,
                span: Span { start: span.start, end: dspan.end },
                message: e.to_string(),
            })
        } else {
            Ok(TimeValue::from_nat(n))
        }
    }

    fn param_lists(&mut self) -> PResult<(Vec<String>, Vec<String>)> {
        let mut vals = Vec::new();
        while matches!(self.peek(), Some(Tok::Ident(_))) {
            let (v, _) = self.ident()?;
            vals.push(v);
            if matches!(self.peek(), Some(Tok::Comma)) {
                self.next();
            } else {
                break;
            }
        }
        self.eat(&Tok::Semi)?;
        let mut roles = Vec::new();
        while matches!(self.peek(), Some(Tok::Ident(_))) {
            let (r, _) = self.ident()?;
            roles.push(r);
            if matches!(self.peek(), Some(Tok::Comma)) {
                self.next();
            } else {
                break;
            }
        }
        Ok((vals, roles))
    }

    fn arg_lists(&mut self) -> PResult<(Vec<Value>, Vec<String>)> {
        let mut vals = Vec::new();
        while !matches!(self.peek(), Some(Tok::Semi)) {
            vals.push(self.value()?);
            if matches!(self.peek(), Some(Tok::Comma)) {
                self.next();
            } else {
                break;
            }
        }
        self.eat(&Tok::Semi)?;
        let mut roles = Vec::new();
        while matches!(self.peek(), Some(Tok::Ident(_))) {
            let (r, _) = self.ident()?;
            roles.push(r);
            if matches!(self.peek(), Some(Tok::Comma)) {
                self.next();
            } else {
                break;
            }
        }
        Ok((vals, roles))
    }

    // ----- declarations -------------------------------------------------

    fn type_ref(&mut self) -> PResult<TypeRef> {
        match self.peek() {
            Some(Tok::Ident(s)) if s != "end" && s != "rec" => {
                let (name, _) = self.ident()?;
                Ok(TypeRef::Named(name))
            }
            _ => Ok(TypeRef::Inline(self.session_type()?)),
        }
    }

    fn valuation(&mut self) -> PResult<Vec<(String, TimeValue)>> {
        self.eat(&Tok::LBrace)?;
        let mut out = Vec::new();
        if !matches!(self.peek(), Some(Tok::RBrace)) {
            loop {
                let (name, _) = self.ident()?;
                self.eat(&Tok::Colon)?;
                let v = self.rational()?;
                out.push((name, v));
                if matches!(self.peek(), Some(Tok::Comma)) {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.eat(&Tok::RBrace)?;
        Ok(out)
    }

    fn check_item(&mut self) -> PResult<CheckItem> {
        self.eat(&Tok::LBrace)?;
        let mut item = CheckItem::default();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.next();
                    break;
                }
                Some(Tok::Ident(s)) if s == "timers" => {
                    self.next();
                    item.timers = self.valuation()?;
                }
                Some(Tok::Ident(s)) if s == "scope" => {
                    self.next();
                    self.eat(&Tok::LParen)?;
                    let (p, _) = self.ident()?;
                    let (q, _) = self.ident()?;
                    self.eat(&Tok::RParen)?;
                    self.eat(&Tok::Eq)?;
                    let left = self.type_ref()?;
                    let left_val = if matches!(self.peek(), Some(Tok::At)) {
                        self.next();
                        Some(self.valuation()?)
                    } else {
                        None
                    };
                    let (right, right_val) = if self.at_keyword("vs") {
                        self.next();
                        let r = self.type_ref()?;
                        let rv = if matches!(self.peek(), Some(Tok::At)) {
                            self.next();
                            Some(self.valuation()?)
                        } else {
                            None
                        };
                        (Some(r), rv)
                    } else {
                        (None, None)
                    };
                    item.scopes.push(ScopeDecl { p, q, left, left_val, right, right_val });
                }
                Some(Tok::Ident(s)) if s == "delta" => {
                    self.next();
                    self.eat(&Tok::LBrace)?;
                    if !matches!(self.peek(), Some(Tok::RBrace)) {
                        loop {
                            item.delta.push(self.delta_entry()?);
                            if matches!(self.peek(), Some(Tok::Comma)) {
                                self.next();
                            } else {
                                break;
                            }
                        }
                    }
                    self.eat(&Tok::RBrace)?;
                }
                Some(Tok::Ident(s)) if s == "run" => {
                    self.next();
                    if let Some(Tok::Ident(name)) = self.peek() {
                        let reserved = ["set", "if", "delay", "def", "new"];
                        let next_is_form = matches!(
                            self.peek2(),
                            Some(Tok::Bang)
                                | Some(Tok::Question)
                                | Some(Tok::LParen)
                                | Some(Tok::Colon)
                                | Some(Tok::Gt)
                        );
                        if !reserved.contains(&name.as_str()) && !next_is_form {
                            let (n, _) = self.ident()?;
                            item.run = Some(ProcessRef::Named(n));
                            continue;
                        }
                    }
                    let p = self.process()?;
                    item.run = Some(ProcessRef::Inline(p));
                }
                Some(_) => {
                    let t = self.next().expect("peeked");
                    return self.err(
                        t.span,
                        format!("expected `timers`, `scope`, `delta`, `run`, or `}}`, found `{}`", t.tok),
                    );
                }
                None => return self.err(self.here(), "unclosed block"),
            }
        }
        Ok(item)
    }

    fn delta_entry(&mut self) -> PResult<DeltaEntry> {
        let (name, span) = self.ident()?;
        // queue entry when followed by `>to:` or when the colon leads to `[`
        if matches!(self.peek(), Some(Tok::Gt)) {
            self.next();
            let (to, _) = self.ident()?;
            self.eat(&Tok::Colon)?;
            let msgs = self.sort_queue()?;
            return Ok(DeltaEntry::Queue { id: QueueId { from: name, to }, msgs });
        }
        self.eat(&Tok::Colon)?;
        if matches!(self.peek(), Some(Tok::LBracket)) {
            let id = self.queue_id(&name, span)?;
            let msgs = self.sort_queue()?;
            return Ok(DeltaEntry::Queue { id, msgs });
        }
        let ty = self.type_ref()?;
        let val = if matches!(self.peek(), Some(Tok::At)) {
            self.next();
            Some(self.valuation()?)
        } else {
            None
        };
        Ok(DeltaEntry::Role { name, ty, val })
    }

    fn sort_queue(&mut self) -> PResult<Vec<SortMsg>> {
        self.eat(&Tok::LBracket)?;
        let mut out = Vec::new();
        if !matches!(self.peek(), Some(Tok::RBracket)) {
            loop {
                let (label, _) = self.ident()?;
                let sort = if matches!(self.peek(), Some(Tok::Lt)) {
                    self.next();
                    let s = self.sort()?;
                    self.eat(&Tok::Gt)?;
                    s
                } else {
                    Sort::None
                };
                out.push(SortMsg { label, sort });
                if matches!(self.peek(), Some(Tok::Comma)) {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.eat(&Tok::RBracket)?;
        Ok(out)
    }

    fn decl(&mut self, file_so_far: &SourceFile) -> PResult<Decl> {
        let start = self.here();
        match self.peek() {
            Some(Tok::Ident(s)) if s == "type" => {
                self.next();
                let (name, _) = self.ident()?;
                self.eat(&Tok::Eq)?;
                let mut ty = self.session_type()?;
                let end = self.prev_end();
                // free variables referring to previously declared types are
                // spliced in by name
                for free in ty.free_names() {
                    if let Some(prior) = file_so_far.type_named(&free) {
                        ty = ty.substitute(&free, prior);
                    }
                }
                if let Err(e) = ty.validate_closed() {
                    return self.err(Span { start: start.start, end }, e.to_string());
                }
                Ok(Decl::Type { name, ty, span: Span { start: start.start, end } })
            }
            Some(Tok::Ident(s)) if s == "process" => {
                self.next();
                let (name, _) = self.ident()?;
                self.eat(&Tok::Eq)?;
                let proc = self.process()?;
                let end = self.prev_end();
                Ok(Decl::Process { name, proc, span: Span { start: start.start, end } })
            }
            Some(Tok::Ident(s)) if s == "system" => {
                self.next();
                let (name, _) = self.ident()?;
                let item = self.check_item()?;
                let end = self.prev_end();
                Ok(Decl::System { name, item, span: Span { start: start.start, end } })
            }
            Some(Tok::Ident(s)) if s == "check" => {
                self.next();
                let (name, _) = self.ident()?;
                let item = self.check_item()?;
                let end = self.prev_end();
                Ok(Decl::Check { name, item, span: Span { start: start.start, end } })
            }
            Some(_) => {
                let t = self.next().expect("peeked");
                self.err(
                    t.span,
                    format!("expected `type`, `process`, `system`, or `check`, found `{}`", t.tok),
                )
            }
            None => self.err(self.here(), "expected a declaration"),
        }
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].span.end
        }
    }

    /// Skips to the next plausible declaration start for error recovery.
    fn recover(&mut self) {
        while let Some(tok) = self.peek() {
            if let Tok::Ident(s) = tok {
                if matches!(s.as_str(), "type" | "process" | "system" | "check") {
                    return;
                }
            }
            self.next();
        }
    }
}

/// Parses a whole source file. All diagnostics found are returned together
/// with whatever declarations parsed cleanly; the parse is a failure when
/// any diagnostic is an error.
pub fn parse(input: &str) -> (SourceFile, Vec<Diagnostic>) {
    let mut diagnostics = Vec::new();
    let toks = match lex(input) {
        Ok(t) => t,
        Err(e) => {
            diagnostics.push(Diagnostic {
                severity: Severity::Error,
                span: e.span,
                message: e.message,
            });
            return (SourceFile { decls: vec![] }, diagnostics);
        }
    };
    let mut parser = Parser { toks, pos: 0, input_len: input.len() };
    let mut file = SourceFile { decls: Vec::new() };
    while parser.peek().is_some() {
        match parser.decl(&file) {
            Ok(d) => file.decls.push(d),
            Err(diag) => {
                diagnostics.push(diag);
                parser.recover();
            }
        }
    }
    for diag in file.validate() {
        diagnostics.push(diag);
    }
    (file, diagnostics)
}

/// Parses a single type expression (used by tests and the CLI).
pub fn parse_type(input: &str) -> Result<SessionType, Diagnostic> {
    let toks = lex(input).map_err(|e| Diagnostic {
        severity: Severity::Error,
        span: e.span,
        message: e.message,
    })?;
    let mut parser = Parser { toks, pos: 0, input_len: input.len() };
    let ty = parser.session_type()?;
    if parser.peek().is_some() {
        return Err(Diagnostic {
            severity: Severity::Error,
            span: parser.here(),
            message: "trailing input after type".into(),
        });
    }
    Ok(ty)
}

/// Parses a single process expression.
pub fn parse_process(input: &str) -> Result<Process, Diagnostic> {
    let toks = lex(input).map_err(|e| Diagnostic {
        severity: Severity::Error,
        span: e.span,
        message: e.message,
    })?;
    let mut parser = Parser { toks, pos: 0, input_len: input.len() };
    let p = parser.process()?;
    if parser.peek().is_some() {
        return Err(Diagnostic {
            severity: Severity::Error,
            span: parser.here(),
            message: "trailing input after process".into(),
        });
    }
    Ok(p)
}

/// Parses a single constraint expression.
pub fn parse_constraint(input: &str) -> Result<Constraint, Diagnostic> {
    let toks = lex(input).map_err(|e| Diagnostic {
        severity: Severity::Error,
        span: e.span,
        message: e.message,
    })?;
    let mut parser = Parser { toks, pos: 0, input_len: input.len() };
    let c = parser.constraint()?;
    if parser.peek().is_some() {
        return Err(Diagnostic {
            severity: Severity::Error,
            span: parser.here(),
            message: "trailing input after constraint".into(),
        });
    }
    Ok(c)
}
