//! Canonical text for every AST form. Parsing the output reproduces the
//! input structurally; whitespace is normalized deterministically.

use crate::calculus::{Deadline, Process, Value};
use crate::surface::{CheckItem, Decl, DeltaEntry, ProcessRef, SourceFile, TypeRef};
use crate::timelogic::Constraint;
use crate::typesys::SessionType;

pub fn pretty_constraint(c: &Constraint) -> String {
    c.to_string()
}

pub fn pretty_type(t: &SessionType) -> String {
    t.to_string()
}

fn deadline_angle(d: &Deadline) -> String {
    match d {
        Deadline::Infinite => "<inf>".into(),
        Deadline::NonPositive => "<<=0>".into(),
        Deadline::Bounded { strict: true, bound } => format!("<<{bound}>"),
        Deadline::Bounded { strict: false, bound } => format!("<<={bound}>"),
    }
}

fn deadline_suffix(d: &Deadline) -> String {
    match d {
        Deadline::Infinite => "<inf".into(),
        Deadline::NonPositive => "<=0".into(),
        Deadline::Bounded { strict: true, bound } => format!("<{bound}"),
        Deadline::Bounded { strict: false, bound } => format!("<={bound}"),
    }
}

fn pretty_value(v: &Value) -> String {
    match v {
        Value::Nat(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Str(s) => format!("{s:?}"),
        Value::Unit => "()".into(),
        Value::Ref(x) => x.clone(),
    }
}

/// A continuation position accepts only a prefix process, so parallel
/// compositions are parenthesized there.
fn prefix_pos(p: &Process) -> String {
    match p {
        Process::Par(..) => format!("({})", pretty_process(p)),
        _ => pretty_process(p),
    }
}

pub fn pretty_process(p: &Process) -> String {
    match p {
        Process::Term => "0".into(),
        Process::SetTimer(x, cont) => format!("set({x}).{}", prefix_pos(cont)),
        Process::Send { role, label, value, cont } => {
            let payload = match value {
                Value::Unit => String::new(),
                v => format!("({})", pretty_value(v)),
            };
            format!("{role}!{label}{payload}.{}", prefix_pos(cont))
        }
        Process::Branch { role, deadline, branches } => {
            let arms: Vec<String> = branches
                .iter()
                .map(|b| {
                    let binder = match &b.binder {
                        Some(x) => format!("({x})"),
                        None => String::new(),
                    };
                    format!("{}{binder}: {}", b.label, prefix_pos(&b.body))
                })
                .collect();
            format!("{role}?{}{{ {} }}", deadline_angle(deadline), arms.join(", "))
        }
        Process::Timeout { role, deadline, branches, after } => {
            let arms: Vec<String> = branches
                .iter()
                .map(|b| {
                    let binder = match &b.binder {
                        Some(x) => format!("({x})"),
                        None => String::new(),
                    };
                    format!("{}{binder}: {}", b.label, prefix_pos(&b.body))
                })
                .collect();
            format!(
                "{role}?{{ {} }} after{} {}",
                arms.join(", "),
                deadline_suffix(deadline),
                prefix_pos(after)
            )
        }
        Process::If { cond, then_p, else_p } => format!(
            "if ({}) {} else {}",
            pretty_constraint(cond),
            prefix_pos(then_p),
            prefix_pos(else_p)
        ),
        Process::DelaySym { delta, cont } => {
            format!("delay({}).{}", pretty_constraint(delta), prefix_pos(cont))
        }
        Process::DelayT { t, cont } => format!("delay({t}).{}", prefix_pos(cont)),
        Process::Def { name, val_params, role_params, body, cont } => format!(
            "def {name}({}; {}) = {} in {}",
            val_params.join(", "),
            role_params.join(", "),
            pretty_process(body),
            pretty_process(cont)
        ),
        Process::Call { name, val_args, role_args } => {
            let vals: Vec<String> = val_args.iter().map(pretty_value).collect();
            format!("{name}({}; {})", vals.join(", "), role_args.join(", "))
        }
        Process::Scope { p: rp, q, body } => {
            format!("new ({rp} {q}) {}", prefix_pos(body))
        }
        Process::Par(..) => {
            let mut parts = Vec::new();
            fn flatten(p: &Process, out: &mut Vec<String>) {
                match p {
                    Process::Par(a, b) => {
                        flatten(a, out);
                        flatten(b, out);
                    }
                    other => out.push(prefix_pos(other)),
                }
            }
            flatten(p, &mut parts);
            parts.join(" | ")
        }
        Process::Queue { id, items } => {
            let entries: Vec<String> = items
                .iter()
                .map(|(l, v)| match v {
                    Value::Unit => l.clone(),
                    v => format!("{l} {}", pretty_value(v)),
                })
                .collect();
            format!("{id}:[{}]", entries.join(", "))
        }
    }
}

fn pretty_item(item: &CheckItem) -> String {
    let mut lines = Vec::new();
    if !item.timers.is_empty() {
        let entries: Vec<String> =
            item.timers.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        lines.push(format!("  timers {{ {} }}", entries.join(", ")));
    }
    for s in &item.scopes {
        let mut line = format!("  scope ({} {}) = {}", s.p, s.q, pretty_type_ref(&s.left));
        if let Some(val) = &s.left_val {
            line.push_str(&format!(" @ {}", pretty_valuation(val)));
        }
        if let Some(r) = &s.right {
            line.push_str(&format!(" vs {}", pretty_type_ref(r)));
            if let Some(val) = &s.right_val {
                line.push_str(&format!(" @ {}", pretty_valuation(val)));
            }
        }
        lines.push(line);
    }
    if !item.delta.is_empty() {
        let entries: Vec<String> = item
            .delta
            .iter()
            .map(|e| match e {
                DeltaEntry::Role { name, ty, val } => {
                    let mut s = format!("{name}: {}", pretty_type_ref(ty));
                    if let Some(v) = val {
                        s.push_str(&format!(" @ {}", pretty_valuation(v)));
                    }
                    s
                }
                DeltaEntry::Queue { id, msgs } => {
                    let items: Vec<String> = msgs
                        .iter()
                        .map(|m| {
                            if m.sort == crate::typesys::Sort::None {
                                m.label.clone()
                            } else {
                                format!("{}<{}>", m.label, m.sort)
                            }
                        })
                        .collect();
                    format!("{id}:[{}]", items.join(", "))
                }
            })
            .collect();
        lines.push(format!("  delta {{ {} }}", entries.join(", ")));
    }
    match &item.run {
        Some(ProcessRef::Named(n)) => lines.push(format!("  run {n}")),
        Some(ProcessRef::Inline(p)) => lines.push(format!("  run {}", pretty_process(p))),
        None => {}
    }
    lines.join("\n")
}

fn pretty_valuation(val: &[(String, crate::timelogic::TimeValue)]) -> String {
    let entries: Vec<String> = val.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    format!("{{ {} }}", entries.join(", "))
}

fn pretty_type_ref(r: &TypeRef) -> String {
    match r {
        TypeRef::Named(n) => n.clone(),
        TypeRef::Inline(t) => pretty_type(t),
    }
}

pub fn pretty_decl(d: &Decl) -> String {
    match d {
        Decl::Type { name, ty, .. } => format!("type {name} = {}", pretty_type(ty)),
        Decl::Process { name, proc, .. } => {
            format!("process {name} = {}", pretty_process(proc))
        }
        Decl::System { name, item, .. } => {
            format!("system {name} {{\n{}\n}}", pretty_item(item))
        }
        Decl::Check { name, item, .. } => {
            format!("check {name} {{\n{}\n}}", pretty_item(item))
        }
    }
}

pub fn pretty_file(f: &SourceFile) -> String {
    let decls: Vec<String> = f.decls.iter().map(pretty_decl).collect();
    let mut out = decls.join("\n\n");
    out.push('\n');
    out
}
