//! MiniCQ: a small, typed, CadQuery-flavoured program language.
//!
//! Programs are sequences of function-call statements over temporaries:
//!
//! ```text
//! param w: length = 40
//! wp1 = workplane("XY")
//! wp2 = rect(wp1, w, 20)
//! wp3 = extrude(wp2, 5)
//! result = wp3
//! ```
//!
//! A program with only numeric literals and single assignments is a
//! [`Script`]; anything using parameters, numeric bindings, expressions,
//! loops or conditionals is a [`Generator`].

pub mod ast;
pub mod emit;
mod lexer;
pub mod ops;
mod parser;
pub mod plane;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ast::{
    Arg, BinOp, Expr, Func, Generator, Item, ParamDecl, Program, Script, Span, Statement,
};
pub use emit::{emit, emit_generator, emit_program, emit_statement, emit_with_len, fmt_num};
pub use ops::{FrameClass, OpKind, UnitTag, ValueKind, VectorArg};
pub use plane::{PlaneCode, SignedAxis};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LangError {
    #[error("parse error at {span}: {message}")]
    Parse { span: Span, message: String },
    #[error("type error at {span}: {message}")]
    Type { span: Span, message: String },
    #[error("`{name}` used before definition at {span}")]
    UseBeforeDef { name: String, span: Span },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("expected a flat script, found a generator")]
    NotAScript,
}

impl LangError {
    pub(crate) fn parse(span: Span, message: impl Into<String>) -> Self {
        LangError::Parse {
            span,
            message: message.into(),
        }
    }

    pub(crate) fn type_err(span: Span, message: impl Into<String>) -> Self {
        LangError::Type {
            span,
            message: message.into(),
        }
    }
}

/// Parses MiniCQ source. Comments (`#` to end of line) are dropped.
pub fn parse(src: &str) -> Result<Program, LangError> {
    parser::parse(src)
}

pub fn parse_script(src: &str) -> Result<Script, LangError> {
    match parse(src)? {
        Program::Script(s) => Ok(s),
        Program::Generator(_) => Err(LangError::NotAScript),
    }
}

/// Parses either form and returns it as a generator.
pub fn parse_generator(src: &str) -> Result<Generator, LangError> {
    Ok(parse(src)?.into_generator())
}

/// Parameter assignment keyed by name.
pub type ParamMap = BTreeMap<String, f64>;

/// Materializes parameter values as leading numeric bindings.
///
/// The returned generator has no parameters; its body starts with one
/// `name = value` binding per declared parameter, in declaration order.
/// Names missing from `z` take their defaults.
pub fn bind(g: &Generator, z: &ParamMap) -> Result<Generator, LangError> {
    if let Some(extra) = z.keys().find(|k| g.param(k).is_none()) {
        return Err(LangError::UnknownParam(extra.clone()));
    }
    let mut body: Vec<Item> = g
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| Item::Let {
            name: p.name.clone(),
            value: Expr::Num(z.get(&p.name).copied().unwrap_or(p.default)),
            span: Span {
                line: i as u32 + 1,
                col: 1,
            },
        })
        .collect();
    body.extend(g.body.iter().cloned());
    Ok(Generator {
        params: Vec::new(),
        body,
        result_binding: g.result_binding.clone(),
    })
}

/// Builds a parameter map from a vector ordered like `g.params`.
pub fn param_map(g: &Generator, values: &[f64]) -> ParamMap {
    g.params
        .iter()
        .zip(values)
        .map(|(p, v)| (p.name.clone(), *v))
        .collect()
}

#[cfg(test)]
mod tests;
