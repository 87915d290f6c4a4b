//! Parser and pretty-printer for the textual DSL covering constraints,
//! types, processes, and check manifests. Round-trip stable: parsing the
//! pretty-printed form reproduces the AST structurally.

pub mod lexer;
pub mod parser;
pub mod pretty;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calculus::{Process, QueueId, TimerEnv};
use crate::semantics::{Configuration, Message};
use crate::timelogic::{ClockId, TimeValue, Valuation};
use crate::typecheck::{ScopeBindings, SessionEnv};
use crate::typesys::{SessionType, Sort};

pub use lexer::Span;
pub use parser::{parse, parse_constraint, parse_process, parse_type};
pub use pretty::{pretty_constraint, pretty_decl, pretty_file, pretty_process, pretty_type};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}..{}]: {}", self.span.start, self.span.end, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeRef {
    Named(String),
    Inline(SessionType),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProcessRef {
    Named(String),
    Inline(Process),
}

/// The declared binding for one restricted session: the left endpoint's
/// type (and optional valuation), and optionally the right's (defaulting
/// to the dual at the same valuation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeDecl {
    pub p: String,
    pub q: String,
    pub left: TypeRef,
    pub left_val: Option<Vec<(String, TimeValue)>>,
    pub right: Option<TypeRef>,
    pub right_val: Option<Vec<(String, TimeValue)>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortMsg {
    pub label: String,
    pub sort: Sort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeltaEntry {
    Role { name: String, ty: TypeRef, val: Option<Vec<(String, TimeValue)>> },
    Queue { id: QueueId, msgs: Vec<SortMsg> },
}

/// Body of a `system` or `check` block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckItem {
    pub timers: Vec<(String, TimeValue)>,
    pub scopes: Vec<ScopeDecl>,
    pub delta: Vec<DeltaEntry>,
    pub run: Option<ProcessRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decl {
    Type { name: String, ty: SessionType, span: Span },
    Process { name: String, proc: Process, span: Span },
    System { name: String, item: CheckItem, span: Span },
    Check { name: String, item: CheckItem, span: Span },
}

impl Decl {
    pub fn name(&self) -> &str {
        match self {
            Decl::Type { name, .. }
            | Decl::Process { name, .. }
            | Decl::System { name, .. }
            | Decl::Check { name, .. } => name,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            Decl::Type { span, .. }
            | Decl::Process { span, .. }
            | Decl::System { span, .. }
            | Decl::Check { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceFile {
    pub decls: Vec<Decl>,
}

impl SourceFile {
    pub fn type_named(&self, name: &str) -> Option<&SessionType> {
        self.decls.iter().find_map(|d| match d {
            Decl::Type { name: n, ty, .. } if n == name => Some(ty),
            _ => None,
        })
    }

    pub fn process_named(&self, name: &str) -> Option<&Process> {
        self.decls.iter().find_map(|d| match d {
            Decl::Process { name: n, proc, .. } if n == name => Some(proc),
            _ => None,
        })
    }

    pub fn types(&self) -> impl Iterator<Item = (&str, &SessionType)> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Type { name, ty, .. } => Some((name.as_str(), ty)),
            _ => None,
        })
    }

    pub fn checks(&self) -> impl Iterator<Item = (&str, &CheckItem)> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Check { name, item, .. } => Some((name.as_str(), item)),
            _ => None,
        })
    }

    pub fn systems(&self) -> impl Iterator<Item = (&str, &CheckItem)> {
        self.decls.iter().filter_map(|d| match d {
            Decl::System { name, item, .. } => Some((name.as_str(), item)),
            _ => None,
        })
    }

    pub fn item_named(&self, name: &str) -> Option<&CheckItem> {
        self.decls.iter().find_map(|d| match d {
            Decl::System { name: n, item, .. } | Decl::Check { name: n, item, .. }
                if n == name =>
            {
                Some(item)
            }
            _ => None,
        })
    }

    /// Uniqueness of names and resolution of every reference.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for d in &self.decls {
            if !seen.insert(d.name().to_string()) {
                out.push(Diagnostic {
                    severity: Severity::Error,
                    span: d.span(),
                    message: format!("duplicate declaration `{}`", d.name()),
                });
            }
        }
        let check_type_ref = |r: &TypeRef, span: Span, out: &mut Vec<Diagnostic>| {
            if let TypeRef::Named(n) = r {
                if self.type_named(n).is_none() {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        span,
                        message: format!("unknown type `{n}`"),
                    });
                }
            }
        };
        for d in &self.decls {
            if let Decl::System { item, span, .. } | Decl::Check { item, span, .. } = d {
                for s in &item.scopes {
                    check_type_ref(&s.left, *span, &mut out);
                    if let Some(r) = &s.right {
                        check_type_ref(r, *span, &mut out);
                    }
                }
                for e in &item.delta {
                    if let DeltaEntry::Role { ty, .. } = e {
                        check_type_ref(ty, *span, &mut out);
                    }
                }
                match &item.run {
                    None => out.push(Diagnostic {
                        severity: Severity::Error,
                        span: *span,
                        message: format!("`{}` has no `run` clause", d.name()),
                    }),
                    Some(ProcessRef::Named(n)) => {
                        if self.process_named(n).is_none() {
                            out.push(Diagnostic {
                                severity: Severity::Error,
                                span: *span,
                                message: format!("unknown process `{n}`"),
                            });
                        }
                    }
                    Some(ProcessRef::Inline(_)) => {}
                }
            }
        }
        out
    }

    fn resolve_type(&self, r: &TypeRef) -> Option<SessionType> {
        match r {
            TypeRef::Named(n) => self.type_named(n).cloned(),
            TypeRef::Inline(t) => Some(t.clone()),
        }
    }

    fn valuation_for(
        &self,
        ty: &SessionType,
        val: &Option<Vec<(String, TimeValue)>>,
    ) -> Valuation {
        match val {
            None => Valuation::zero(ty.clocks()),
            Some(pairs) => {
                let mut map = std::collections::BTreeMap::new();
                for c in ty.clocks() {
                    map.insert(c, TimeValue::ZERO);
                }
                for (name, v) in pairs {
                    map.insert(ClockId::new(name.clone()), *v);
                }
                Valuation::from_map(map)
            }
        }
    }

    /// Assembles the executable pieces of a `system`/`check` block.
    pub fn resolve_item(&self, item: &CheckItem) -> Option<ResolvedItem> {
        let process = match item.run.as_ref()? {
            ProcessRef::Named(n) => self.process_named(n)?.clone(),
            ProcessRef::Inline(p) => p.clone(),
        };
        let theta = TimerEnv::from_pairs(item.timers.iter().cloned());
        let mut bindings = ScopeBindings::default();
        for s in &item.scopes {
            let left_ty = self.resolve_type(&s.left)?;
            let left_nu = self.valuation_for(&left_ty, &s.left_val);
            let right_ty = match &s.right {
                Some(r) => self.resolve_type(r)?,
                None => left_ty.dual(),
            };
            let right_nu = self.valuation_for(&right_ty, &s.right_val);
            bindings = bindings.bind(
                &s.p,
                &s.q,
                Configuration { nu: left_nu, s: left_ty },
                Configuration { nu: right_nu, s: right_ty },
            );
        }
        let mut delta = SessionEnv::empty();
        for e in &item.delta {
            match e {
                DeltaEntry::Role { name, ty, val } => {
                    let t = self.resolve_type(ty)?;
                    let nu = self.valuation_for(&t, val);
                    delta = delta.with_role(name, Configuration { nu, s: t });
                }
                DeltaEntry::Queue { id, msgs } => {
                    delta = delta.with_queue(
                        id.clone(),
                        msgs.iter()
                            .map(|m| Message { label: m.label.clone(), payload: m.sort.clone() })
                            .collect(),
                    );
                }
            }
        }
        Some(ResolvedItem { process, theta, delta, bindings })
    }
}

/// A check manifest resolved against its file: the process under test, the
/// initial timers, the session environment, and the scope bindings.
#[derive(Debug, Clone)]
pub struct ResolvedItem {
    pub process: Process,
    pub theta: TimerEnv,
    pub delta: SessionEnv,
    pub bindings: ScopeBindings,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typesys::{Direction, SessionType as S, Sort};

    #[test]
    fn parses_choice_with_reference_to_prior_type() {
        let (file, diags) = parse(
            "type S2 = end\n\
             type S = { !data<string>(x<3).S2, ?timeout(x>4).end }",
        );
        assert!(diags.is_empty(), "{diags:?}");
        let s = file.type_named("S").unwrap();
        match s {
            S::Choice(opts) => {
                assert_eq!(opts.len(), 2);
                assert_eq!(opts[0].direction, Direction::Send);
                assert_eq!(opts[0].label, "data");
                assert_eq!(opts[0].payload, Sort::Str);
                assert_eq!(opts[0].continuation, S::End);
                assert_eq!(opts[1].direction, Direction::Recv);
                assert_eq!(opts[1].label, "timeout");
            }
            other => panic!("expected a choice, got {other}"),
        }
    }

    #[test]
    fn parses_end() {
        assert_eq!(parse_type("end").unwrap(), S::End);
    }

    #[test]
    fn unclosed_brace_reports_span_inside_input() {
        let text = "type S = { !a(true).end";
        let (_, diags) = parse(text);
        assert!(!diags.is_empty());
        let d = &diags[0];
        assert!(d.span.start <= text.len() && d.span.end <= text.len());
    }

    #[test]
    fn diagnostics_survive_recovery() {
        let text = "type Bad = { !a(true).end\n\
                    type Good = end";
        let (file, diags) = parse(text);
        assert_eq!(diags.len(), 1);
        assert!(file.type_named("Good").is_some());
    }

    #[test]
    fn duplicate_names_rejected() {
        let (_, diags) = parse("type S = end\ntype S = end");
        assert!(diags.iter().any(|d| d.message.contains("duplicate")));
    }

    #[test]
    fn corpus_files_round_trip() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus");
        let mut seen = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().and_then(|e| e.to_str()) != Some("toast") {
                continue;
            }
            seen += 1;
            let text = std::fs::read_to_string(&path).unwrap();
            let (file, diags) = parse(&text);
            assert!(diags.is_empty(), "{}: {diags:?}", path.display());
            let printed = pretty_file(&file);
            let (reparsed, rediags) = parse(&printed);
            assert!(rediags.is_empty(), "{}: {rediags:?}\n{printed}", path.display());
            assert_eq!(file, reparsed, "{} does not round-trip", path.display());
        }
        assert!(seen >= 6, "corpus files missing");
    }

    #[test]
    fn process_forms_round_trip() {
        let cases = [
            "0",
            "set(x).0",
            "p!l(5).0",
            "p!l.0",
            "p?<inf>{ m(v): q!echo(v).0 }",
            "p?<<3>{ m: 0 }",
            "p?<<=0>{ m: 0 }",
            "p?{ a: 0, b(x): 0 } after<=3 p!t.0",
            "p?{ a: 0 } after<3 (p!t.0 | qp:[])",
            "if (x<=3) p!a.0 else p!b.0",
            "delay(3/2).0",
            "delay(w<6).0",
            "def X(v; r) = r!m(v).X(v; r) in X(5; p)",
            "new (p q) (p!a.0 | q?<inf>{ a: 0 } | pq:[] | qp:[])",
            "pq:[a 5, b, c \"hi\", d true]",
            "a>bc:[m ()]",
        ];
        for case in cases {
            let p = parse_process(case).unwrap_or_else(|e| panic!("{case}: {e}"));
            let printed = pretty_process(&p);
            let again = parse_process(&printed)
                .unwrap_or_else(|e| panic!("reparse of `{printed}`: {e}"));
            assert_eq!(p, again, "`{case}` printed as `{printed}`");
        }
    }

    #[test]
    fn constraint_sugar_round_trips() {
        for case in ["true", "x>3", "x=3", "x<3", "x<=3", "x>=3", "3<x<5", "x-y>2", "x-y=2",
                     "!x>2 && y=1", "!(x>2 && y=1)"] {
            let c = parse_constraint(case).unwrap();
            let printed = pretty_constraint(&c);
            let again = parse_constraint(&printed).unwrap();
            assert_eq!(c, again, "`{case}` printed as `{printed}`");
        }
    }
}
