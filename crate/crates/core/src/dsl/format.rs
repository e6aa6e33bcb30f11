//! Canonical source printer. `parse` then `validate` of the output yields a
//! program structurally equal to the input, and printing is idempotent.

use std::fmt::Write;

use crate::expr::{BinOp, Expr, ExprKind, Place, Stmt, StmtKind, UnOp};
use crate::ir::{Factor, FactoredPomdp, StateVariable};
use crate::value::Value;

const INDENT: &str = "  ";

/// Quotes a string literal.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn format_program(p: &FactoredPomdp) -> String {
    let mut out = String::new();
    if !p.metadata.name.is_empty() || !p.metadata.description.is_empty() {
        out.push_str(&format!("simulation {}", quote(&p.metadata.name)));
        if !p.metadata.description.is_empty() {
            out.push_str(&format!(" {}", quote(&p.metadata.description)));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "actions {}", p.actions.join(" "));
    let _ = writeln!(out, "max_steps {}", p.max_steps);
    let _ = writeln!(out, "score {}", p.score_id);
    out.push('\n');
    for v in &p.variables {
        out.push_str(&format_variable(v));
        out.push('\n');
    }
    let mut factors: Vec<&Factor> = p.factors.iter().collect();
    factors.sort_by(|a, b| (a.kind, a.order_index, &a.id).cmp(&(b.kind, b.order_index, &b.id)));
    for f in factors {
        out.push('\n');
        out.push_str(&format_factor(f));
    }
    out
}

pub fn format_variable(v: &StateVariable) -> String {
    let label = if v.name != v.id { format!(" {}", quote(&v.name)) } else { String::new() };
    format!("var {}{label}: {} {}", v.id, v.domain, v.init)
}

/// One factor block, ending in a newline.
pub fn format_factor(f: &Factor) -> String {
    let mut out = format!("{} {}[{}]", f.kind, f.id, f.order_index);
    if !f.scope.is_empty() {
        let _ = write!(out, " reads({})", f.scope.ids().join(", "));
    }
    if !f.targets.is_empty() {
        let _ = write!(out, " writes({})", f.targets.ids().join(", "));
    }
    out.push_str(" {\n");
    out.push_str(&format_body(&f.body, 1));
    out.push_str("}\n");
    out
}

/// Statements one per line at the given indent depth.
pub fn format_body(body: &[Stmt], depth: usize) -> String {
    let mut out = String::new();
    for s in body {
        stmt(&mut out, s, depth);
    }
    out
}

fn place(p: &Place) -> String {
    match p.index {
        Some(i) => format!("{}[{i}]", p.var),
        None => p.var.clone(),
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = INDENT.repeat(depth);
    match &s.kind {
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{pad}{} := {}", place(target), format_expr(value));
        }
        StmtKind::Increment { target, value } => {
            let _ = writeln!(out, "{pad}{} += {}", place(target), format_expr(value));
        }
        StmtKind::Let { name, value } => {
            let _ = writeln!(out, "{pad}let {name} = {}", format_expr(value));
        }
        StmtKind::If { .. } => {
            out.push_str(&pad);
            if_chain(out, s, depth);
            out.push('\n');
        }
        StmtKind::Emit { shape, args, color, text } => {
            let mut parts: Vec<String> = args.iter().map(format_expr).collect();
            parts.push(color.name().to_string());
            if let Some(t) = text {
                parts.push(quote(t));
            }
            let _ = writeln!(out, "{pad}{}({})", shape.name(), parts.join(", "));
        }
    }
}

fn if_chain(out: &mut String, s: &Stmt, depth: usize) {
    let StmtKind::If { cond, then_body, else_body } = &s.kind else { return };
    let pad = INDENT.repeat(depth);
    let _ = writeln!(out, "if {} {{", format_expr(cond));
    out.push_str(&format_body(then_body, depth + 1));
    out.push_str(&pad);
    out.push('}');
    match else_body.as_slice() {
        [] => {}
        [only @ Stmt { kind: StmtKind::If { .. }, .. }] => {
            out.push_str(" else ");
            if_chain(out, only, depth);
        }
        _ => {
            out.push_str(" else {\n");
            out.push_str(&format_body(else_body, depth + 1));
            out.push_str(&pad);
            out.push('}');
        }
    }
}

fn is_open_ended(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::If(..) | ExprKind::Let(..))
}

fn is_number_lit(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::Lit(Value::Int(_) | Value::Real(_)))
}

fn is_negative_lit(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Lit(Value::Int(i)) => *i < 0,
        ExprKind::Lit(Value::Real(r)) => r.is_sign_negative(),
        _ => false,
    }
}

fn paren(e: &Expr, wrap: bool) -> String {
    if wrap {
        format!("({})", format_expr(e))
    } else {
        format_expr(e)
    }
}

fn operand(op: BinOp, child: &Expr, right: bool) -> String {
    let p = op.precedence();
    let wrap = match &child.kind {
        ExprKind::If(..) | ExprKind::Let(..) => true,
        ExprKind::Binary(op2, ..) => {
            let q = op2.precedence();
            if p == 4 {
                q <= 4
            } else if right {
                q <= p
            } else {
                q < p
            }
        }
        _ => false,
    };
    paren(child, wrap)
}

pub fn format_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Lit(v) => v.to_string(),
        ExprKind::Var(n) => n.clone(),
        ExprKind::Action => "action".into(),
        ExprKind::VecLit(items) => format!("[{}]", items.iter().map(format_expr).collect::<Vec<_>>().join(", ")),
        ExprKind::Index(base, idx) => {
            let wrap = matches!(base.kind, ExprKind::Binary(..) | ExprKind::Unary(..) | ExprKind::If(..) | ExprKind::Let(..))
                || is_negative_lit(base);
            format!("{}[{}]", paren(base, wrap), format_expr(idx))
        }
        ExprKind::Unary(op, a) => {
            let wrap = matches!(a.kind, ExprKind::Binary(..)) || is_open_ended(a) || (*op == UnOp::Neg && is_number_lit(a));
            match op {
                UnOp::Neg => format!("-{}", paren(a, wrap)),
                UnOp::Not => format!("not {}", paren(a, wrap)),
            }
        }
        ExprKind::Binary(op, a, b) => format!("{} {} {}", operand(*op, a, false), op.symbol(), operand(*op, b, true)),
        ExprKind::If(c, t, f) => {
            format!("if {} then {} else {}", paren(c, is_open_ended(c)), paren(t, is_open_ended(t)), format_expr(f))
        }
        ExprKind::Let(n, v, b) => format!("let {n} = {} in {}", paren(v, is_open_ended(v)), format_expr(b)),
        ExprKind::Call(f, args) => format!("{}({})", f.name(), args.iter().map(format_expr).collect::<Vec<_>>().join(", ")),
    }
}
