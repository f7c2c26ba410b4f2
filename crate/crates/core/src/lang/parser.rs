//! Recursive-descent parser with inline type and def-before-use checking.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::ops::{OpKind, UnitTag, ValueKind};
use super::plane::PlaneCode;
use super::LangError;

type Env = HashMap<String, ValueKind>;

const KEYWORDS: &[&str] = &[
    "param", "for", "in", "if", "else", "and", "or", "not", "result",
];

pub fn parse(src: &str) -> Result<Program, LangError> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        generator_only: false,
        assigned: HashSet::new(),
    };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Set once a construct that flat scripts cannot contain is seen.
    generator_only: bool,
    assigned: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, LangError> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(LangError::parse(
                self.span(),
                format!("expected {what}, found {}", describe(self.peek())),
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), LangError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            other => Err(LangError::parse(
                self.span(),
                format!("expected identifier, found {}", describe(&other)),
            )),
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    fn end_of_item(&mut self) -> Result<(), LangError> {
        match self.peek() {
            Tok::Newline | Tok::Semi => {
                self.skip_separators();
                Ok(())
            }
            Tok::Eof | Tok::RBrace => Ok(()),
            other => Err(LangError::parse(
                self.span(),
                format!("expected end of statement, found {}", describe(other)),
            )),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn program(&mut self) -> Result<Program, LangError> {
        let mut env = Env::new();
        let mut params: Vec<ParamDecl> = Vec::new();
        let mut body = Vec::new();
        let mut result: Option<String> = None;

        self.skip_separators();
        while *self.peek() != Tok::Eof {
            if result.is_some() {
                return Err(LangError::parse(
                    self.span(),
                    "statements after the `result` line",
                ));
            }
            if self.is_keyword("param") {
                if !body.is_empty() {
                    return Err(LangError::parse(
                        self.span(),
                        "parameter declarations must precede the body",
                    ));
                }
                let decl = self.param_decl(&env)?;
                env.insert(decl.name.clone(), ValueKind::Number);
                params.push(decl);
                self.generator_only = true;
                self.end_of_item()?;
                continue;
            }
            if self.is_keyword("result") && *self.peek_at(1) == Tok::Assign {
                let span = self.bump().span;
                self.bump();
                let (name, nspan) = self.ident()?;
                match env.get(&name) {
                    None => return Err(LangError::UseBeforeDef { name, span: nspan }),
                    Some(ValueKind::Solid) => {}
                    Some(k) => {
                        return Err(LangError::type_err(
                            span,
                            format!("`result` must bind a solid, `{name}` is a {k}"),
                        ))
                    }
                }
                result = Some(name);
                self.end_of_item()?;
                continue;
            }
            let item = self.item(&mut env)?;
            body.push(item);
        }

        let Some(result_binding) = result else {
            return Err(LangError::parse(
                self.span(),
                "missing terminal `result = <temporary>` line",
            ));
        };

        if !self.generator_only {
            let statements = body
                .into_iter()
                .map(|item| match item {
                    Item::Stmt { stmt, .. } => stmt,
                    _ => unreachable!("non-statement items mark the program as a generator"),
                })
                .collect();
            return Ok(Program::Script(Script {
                statements,
                result_binding,
            }));
        }
        Ok(Program::Generator(Generator {
            params,
            body,
            result_binding,
        }))
    }

    fn param_decl(&mut self, env: &Env) -> Result<ParamDecl, LangError> {
        self.bump();
        let (name, span) = self.ident()?;
        check_name(&name, span)?;
        if env.contains_key(&name) {
            return Err(LangError::parse(
                span,
                format!("duplicate parameter `{name}`"),
            ));
        }
        let mut unit_tag = UnitTag::Length;
        if self.eat(&Tok::Colon) {
            let (tag, tspan) = self.ident()?;
            unit_tag = tag
                .parse()
                .map_err(|e: String| LangError::type_err(tspan, e))?;
        }
        self.expect(Tok::Assign, "`=` and a default value")?;
        let dspan = self.span();
        let neg = self.eat(&Tok::Minus);
        let default = match self.bump().tok {
            Tok::Num(v) => {
                if neg {
                    -v
                } else {
                    v
                }
            }
            other => {
                return Err(LangError::parse(
                    dspan,
                    format!(
                        "parameter default must be a number, found {}",
                        describe(&other)
                    ),
                ))
            }
        };
        Ok(ParamDecl {
            name,
            default,
            unit_tag,
        })
    }

    fn block(&mut self, env: &mut Env) -> Result<Vec<Item>, LangError> {
        self.expect(Tok::LBrace, "`{`")?;
        self.skip_separators();
        let mut items = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(LangError::parse(self.span(), "unclosed block"));
            }
            items.push(self.item(env)?);
        }
        self.bump();
        Ok(items)
    }

    fn item(&mut self, env: &mut Env) -> Result<Item, LangError> {
        let span = self.span();
        if self.is_keyword("for") {
            self.bump();
            self.generator_only = true;
            let (var, vspan) = self.ident()?;
            check_name(&var, vspan)?;
            if !self.is_keyword("in") {
                return Err(LangError::parse(self.span(), "expected `in`"));
            }
            self.bump();
            let start = self.expr()?;
            self.check_numeric(&start, env, span)?;
            self.expect(Tok::DotDot, "`..`")?;
            let end = self.expr()?;
            self.check_numeric(&end, env, span)?;
            let mut inner = env.clone();
            inner.insert(var.clone(), ValueKind::Number);
            let body = self.block(&mut inner)?;
            self.end_of_item()?;
            return Ok(Item::For {
                var,
                start,
                end,
                body,
                span,
            });
        }
        if self.is_keyword("if") {
            self.bump();
            return self.if_rest(env, span);
        }

        let (target, tspan) = self.ident()?;
        check_name(&target, tspan)?;
        self.expect(Tok::Assign, "`=`")?;

        if let (Tok::Ident(name), Tok::LParen) = (self.peek().clone(), self.peek_at(1).clone()) {
            if let Some(op) = OpKind::from_name(&name) {
                self.bump();
                self.bump();
                let stmt = self.op_call(target.clone(), op, env, span)?;
                self.define(env, &target, op.output(), tspan)?;
                self.end_of_item()?;
                return Ok(Item::Stmt { stmt, span });
            }
        }

        let value = self.expr()?;
        if let Expr::Var(v) = &value {
            if matches!(env.get(v), Some(ValueKind::Sketch | ValueKind::Solid)) {
                return Err(LangError::type_err(
                    span,
                    "geometric aliases are only allowed as the `result` line",
                ));
            }
        }
        self.check_numeric(&value, env, span)?;
        self.generator_only = true;
        self.define(env, &target, ValueKind::Number, tspan)?;
        self.end_of_item()?;
        Ok(Item::Let {
            name: target,
            value,
            span,
        })
    }

    fn if_rest(&mut self, env: &mut Env, span: Span) -> Result<Item, LangError> {
        self.generator_only = true;
        let cond = self.expr()?;
        self.check_expr(&cond, env, span, true)?;
        let mut then_env = env.clone();
        let then_body = self.block(&mut then_env)?;
        let mut else_env = env.clone();
        let mut else_body = Vec::new();
        // `else` may follow on the same line as `}`
        let save = self.pos;
        while *self.peek() == Tok::Newline {
            self.bump();
        }
        if self.is_keyword("else") {
            self.bump();
            if self.is_keyword("if") {
                let espan = self.span();
                self.bump();
                else_body.push(self.if_rest(&mut else_env, espan)?);
                // the nested if consumed its own terminator
                merge_branches(env, &then_env, &else_env);
                return Ok(Item::If {
                    cond,
                    then_body,
                    else_body,
                    span,
                });
            }
            else_body = self.block(&mut else_env)?;
        } else {
            self.pos = save;
        }
        merge_branches(env, &then_env, &else_env);
        self.end_of_item()?;
        Ok(Item::If {
            cond,
            then_body,
            else_body,
            span,
        })
    }

    fn define(
        &mut self,
        env: &mut Env,
        name: &str,
        kind: ValueKind,
        span: Span,
    ) -> Result<(), LangError> {
        if let Some(&prev) = env.get(name) {
            if prev != kind {
                return Err(LangError::type_err(
                    span,
                    format!("`{name}` rebound from {prev} to {kind}"),
                ));
            }
            self.generator_only = true;
        }
        if !self.assigned.insert(name.to_string()) {
            self.generator_only = true;
        }
        env.insert(name.to_string(), kind);
        Ok(())
    }

    fn op_call(
        &mut self,
        target: String,
        op: OpKind,
        env: &Env,
        span: Span,
    ) -> Result<Statement, LangError> {
        let mut raw: Vec<(Expr, Span)> = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let aspan = self.span();
                raw.push((self.expr()?, aspan));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;

        let sig = op.signature();
        // `workplane("XY")` is shorthand for an origin at (0, 0, 0)
        if op == OpKind::Workplane && raw.len() == 1 {
            for _ in 0..3 {
                raw.push((Expr::Num(0.0), span));
            }
        }
        if raw.len() != sig.args.len() {
            return Err(LangError::type_err(
                span,
                format!(
                    "`{op}` takes {} arguments, got {}",
                    sig.args.len(),
                    raw.len()
                ),
            ));
        }

        let mut args = Vec::with_capacity(raw.len());
        for ((value, aspan), &tag) in raw.into_iter().zip(sig.args) {
            match tag {
                UnitTag::Sketch | UnitTag::Solid => {
                    let Expr::Var(name) = &value else {
                        return Err(LangError::type_err(
                            aspan,
                            format!("`{op}` expects a {tag} temporary here"),
                        ));
                    };
                    let want = if tag == UnitTag::Sketch {
                        ValueKind::Sketch
                    } else {
                        ValueKind::Solid
                    };
                    match env.get(name) {
                        None => {
                            return Err(LangError::UseBeforeDef {
                                name: name.clone(),
                                span: aspan,
                            })
                        }
                        Some(&k) if k != want => {
                            return Err(LangError::type_err(
                                aspan,
                                format!("`{name}` is a {k}, `{op}` expects a {want}"),
                            ))
                        }
                        _ => {}
                    }
                }
                UnitTag::Plane => {
                    let Expr::Str(code) = &value else {
                        return Err(LangError::type_err(
                            aspan,
                            "plane argument must be a string literal",
                        ));
                    };
                    code.parse::<PlaneCode>()
                        .map_err(|e| LangError::type_err(aspan, e))?;
                }
                _ => {
                    self.check_numeric(&value, env, aspan)?;
                    if !matches!(value, Expr::Num(_)) {
                        self.generator_only = true;
                    }
                }
            }
            args.push(Arg {
                value,
                unit_tag: tag,
            });
        }
        Ok(Statement { target, op, args })
    }

    fn check_numeric(&self, e: &Expr, env: &Env, span: Span) -> Result<(), LangError> {
        self.check_expr(e, env, span, false)
    }

    fn check_expr(&self, e: &Expr, env: &Env, span: Span, boolean: bool) -> Result<(), LangError> {
        let is_bool = expr_is_boolean(e);
        if is_bool != boolean {
            let want = if boolean {
                "a condition"
            } else {
                "a numeric expression"
            };
            return Err(LangError::type_err(span, format!("expected {want}")));
        }
        let mut err = None;
        check_operands(e, &mut err);
        if let Some(msg) = err {
            return Err(LangError::type_err(span, msg));
        }
        let mut missing = None;
        e.visit_vars(&mut |v| {
            if missing.is_some() {
                return;
            }
            match env.get(v) {
                None => {
                    missing = Some(LangError::UseBeforeDef {
                        name: v.to_string(),
                        span,
                    })
                }
                Some(ValueKind::Number) => {}
                Some(k) => {
                    missing = Some(LangError::type_err(
                        span,
                        format!("`{v}` is a {k}, not a number"),
                    ))
                }
            }
        });
        missing.map_or(Ok(()), Err)
    }

    // expression grammar, lowest precedence first
    fn expr(&mut self) -> Result<Expr, LangError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, LangError> {
        let mut lhs = self.unary()?;
        loop {
            let Some(op) = self.peek_binop() else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Mod,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Ident(s) if s == "and" => BinOp::And,
            Tok::Ident(s) if s == "or" => BinOp::Or,
            _ => return None,
        })
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        if self.eat(&Tok::Minus) {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::Neg(Box::new(other)),
            });
        }
        if self.is_keyword("not") {
            self.bump();
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, LangError> {
        let span = self.span();
        match self.bump().tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    if OpKind::from_name(&name).is_some() {
                        return Err(LangError::parse(
                            span,
                            format!("`{name}` can only appear as a statement"),
                        ));
                    }
                    let Some(func) = Func::from_name(&name) else {
                        return Err(LangError::parse(span, format!("unknown function `{name}`")));
                    };
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    if args.len() != func.arity() {
                        return Err(LangError::type_err(
                            span,
                            format!("`{}` takes {} arguments", func.name(), func.arity()),
                        ));
                    }
                    return Ok(Expr::Call(func, args));
                }
                if KEYWORDS.contains(&name.as_str()) {
                    return Err(LangError::parse(
                        span,
                        format!("unexpected keyword `{name}`"),
                    ));
                }
                Ok(Expr::Var(name))
            }
            other => Err(LangError::parse(
                span,
                format!("expected expression, found {}", describe(&other)),
            )),
        }
    }
}

fn merge_branches(env: &mut Env, then_env: &Env, else_env: &Env) {
    for (name, kind) in then_env {
        if else_env.get(name) == Some(kind) {
            env.insert(name.clone(), *kind);
        }
    }
}

fn expr_is_boolean(e: &Expr) -> bool {
    match e {
        Expr::Not(_) => true,
        Expr::Bin(op, _, _) => op.is_boolean(),
        _ => false,
    }
}

fn check_operands(e: &Expr, err: &mut Option<String>) {
    match e {
        Expr::Str(_) => *err = Some("string literal in a numeric context".into()),
        Expr::Num(_) | Expr::Var(_) => {}
        Expr::Neg(a) => {
            if expr_is_boolean(a) {
                *err = Some("cannot negate a condition".into());
            }
            check_operands(a, err);
        }
        Expr::Not(a) => {
            if !expr_is_boolean(a) {
                *err = Some("`not` expects a condition".into());
            }
            check_operands(a, err);
        }
        Expr::Bin(op, a, b) => {
            let want_bool = matches!(op, BinOp::And | BinOp::Or);
            for side in [a, b] {
                if expr_is_boolean(side) != want_bool {
                    *err = Some(format!("bad operand for `{}`", op.symbol()));
                }
                check_operands(side, err);
            }
        }
        Expr::Call(_, args) => {
            for a in args {
                if expr_is_boolean(a) {
                    *err = Some("condition passed to a math function".into());
                }
                check_operands(a, err);
            }
        }
    }
}

fn check_name(name: &str, span: Span) -> Result<(), LangError> {
    if KEYWORDS.contains(&name)
        || OpKind::from_name(name).is_some()
        || Func::from_name(name).is_some()
    {
        return Err(LangError::parse(span, format!("`{name}` is reserved")));
    }
    Ok(())
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(v) => format!("number {v}"),
        Tok::Str(s) => format!("string \"{s}\""),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}
