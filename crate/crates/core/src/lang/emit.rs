//! Deterministic pretty-printer. One statement per line, LF endings.

use std::fmt::Write;

use super::ast::*;
use super::ops::OpKind;

/// Formats a literal: integers without a decimal point, `-0` as `0`,
/// otherwise the shortest representation that parses back to the same value.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    format!("{v}")
}

pub fn emit_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, 0);
    out
}

fn write_expr(out: &mut String, e: &Expr, parent_prec: u8) {
    match e {
        Expr::Num(v) => {
            let s = fmt_num(*v);
            // keep `a - -3` readable and unambiguous
            if *v < 0.0 && parent_prec > 0 {
                let _ = write!(out, "({s})");
            } else {
                out.push_str(&s);
            }
        }
        Expr::Str(s) => {
            let _ = write!(out, "\"{s}\"");
        }
        Expr::Var(v) => out.push_str(v),
        Expr::Neg(a) => {
            out.push('-');
            write_expr(out, a, 6);
        }
        Expr::Not(a) => {
            out.push_str("not ");
            write_expr(out, a, 6);
        }
        Expr::Bin(op, a, b) => {
            let prec = op.precedence();
            let paren = prec < parent_prec;
            if paren {
                out.push('(');
            }
            write_expr(out, a, prec);
            let _ = write!(out, " {} ", op.symbol());
            // left-associative: the right operand binds tighter
            write_expr(out, b, prec + 1);
            if paren {
                out.push(')');
            }
        }
        Expr::Call(f, args) => {
            out.push_str(f.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
    }
}

pub fn emit_statement(s: &Statement) -> String {
    let mut args: &[Arg] = &s.args;
    if s.op == OpKind::Workplane
        && args.len() == 4
        && args[1..].iter().all(|a| a.value.as_num() == Some(0.0))
    {
        args = &args[..1];
    }
    let mut out = format!("{} = {}(", s.target, s.op.name());
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(&mut out, &a.value, 0);
    }
    out.push(')');
    out
}

pub fn emit(s: &Script) -> String {
    let mut out = String::new();
    for st in &s.statements {
        out.push_str(&emit_statement(st));
        out.push('\n');
    }
    let _ = writeln!(out, "result = {}", s.result_binding);
    out
}

/// Emitted text together with its length in characters.
pub fn emit_with_len(s: &Script) -> (String, usize) {
    let text = emit(s);
    let n = text.chars().count();
    (text, n)
}

pub fn emit_generator(g: &Generator) -> String {
    let mut out = String::new();
    for p in &g.params {
        let _ = writeln!(
            out,
            "param {}: {} = {}",
            p.name,
            p.unit_tag,
            fmt_num(p.default)
        );
    }
    write_items(&mut out, &g.body, 0);
    let _ = writeln!(out, "result = {}", g.result_binding);
    out
}

fn write_items(out: &mut String, items: &[Item], depth: usize) {
    let pad = "    ".repeat(depth);
    for item in items {
        match item {
            Item::Stmt { stmt, .. } => {
                let _ = writeln!(out, "{pad}{}", emit_statement(stmt));
            }
            Item::Let { name, value, .. } => {
                let _ = writeln!(out, "{pad}{name} = {}", emit_expr(value));
            }
            Item::For {
                var,
                start,
                end,
                body,
                ..
            } => {
                let _ = writeln!(
                    out,
                    "{pad}for {var} in {}..{} {{",
                    emit_expr(start),
                    emit_expr(end)
                );
                write_items(out, body, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
            Item::If {
                cond,
                then_body,
                else_body,
                ..
            } => {
                let _ = writeln!(out, "{pad}if {} {{", emit_expr(cond));
                write_items(out, then_body, depth + 1);
                if else_body.is_empty() {
                    let _ = writeln!(out, "{pad}}}");
                } else {
                    let _ = writeln!(out, "{pad}}} else {{");
                    write_items(out, else_body, depth + 1);
                    let _ = writeln!(out, "{pad}}}");
                }
            }
        }
    }
}

pub fn emit_program(p: &Program) -> String {
    match p {
        Program::Script(s) => emit(s),
        Program::Generator(g) => emit_generator(g),
    }
}
