//! Generator specialization: tracing at a parameter vector and slicing the
//! trace down to the statements that shape the result.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::kernel::{self, Aabb, EvalError};
use crate::lang::{
    Arg, BinOp, Expr, Func, Generator, Item, LangError, OpKind, ParamMap, Script, Span, Statement,
    UnitTag,
};

/// Maximum number of statements a trace may unroll to.
pub const MAX_TRACE_STATEMENTS: usize = 10_000;
const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TraceError {
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error("evaluation error at {span}: {message}")]
    Eval { span: Span, message: String },
    #[error("trace exceeds {0} statements")]
    LoopBound(usize),
}

/// One executed constructive statement with literal arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedStatement {
    pub stmt: Statement,
    /// Location of the generator statement that produced it.
    pub origin: Span,
    /// Per argument, the source expression when it depends on parameters only.
    pub symbolic: Vec<Option<Expr>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub executed: Vec<TracedStatement>,
    pub result_binding: String,
    /// Parameter values the trace was taken at, in declaration order.
    pub binds: Vec<(String, f64)>,
}

impl Trace {
    pub fn to_script(&self) -> Script {
        Script {
            statements: self.executed.iter().map(|t| t.stmt.clone()).collect(),
            result_binding: self.result_binding.clone(),
        }
    }
}

struct Tracer<'a> {
    params: HashSet<&'a str>,
    nums: HashMap<String, f64>,
    /// Generator name -> current SSA name.
    ssa: HashMap<String, String>,
    taken: HashSet<String>,
    out: Vec<TracedStatement>,
    iterations: usize,
}

fn collect_targets<'a>(items: &'a [Item], out: &mut HashSet<&'a str>) {
    for it in items {
        match it {
            Item::Stmt { stmt, .. } => {
                out.insert(&stmt.target);
            }
            Item::Let { name, .. } => {
                out.insert(name);
            }
            Item::For { var, body, .. } => {
                out.insert(var);
                collect_targets(body, out);
            }
            Item::If {
                then_body,
                else_body,
                ..
            } => {
                collect_targets(then_body, out);
                collect_targets(else_body, out);
            }
        }
    }
}

/// Executes `g` at `z` (missing names take defaults), unrolling loops,
/// resolving branches and folding every argument to a literal. Reassigned
/// temporaries are renamed `x`, `x_2`, `x_3`, ...
pub fn trace(g: &Generator, z: &ParamMap) -> Result<Trace, TraceError> {
    if let Some(extra) = z.keys().find(|k| g.param(k).is_none()) {
        return Err(LangError::UnknownParam(extra.clone()).into());
    }
    let mut reserved = HashSet::new();
    collect_targets(&g.body, &mut reserved);
    let mut t = Tracer {
        params: g.params.iter().map(|p| p.name.as_str()).collect(),
        nums: HashMap::new(),
        ssa: HashMap::new(),
        taken: reserved.iter().map(|s| s.to_string()).collect(),
        out: Vec::new(),
        iterations: 0,
    };
    let mut binds = Vec::new();
    for p in &g.params {
        let v = z.get(&p.name).copied().unwrap_or(p.default);
        t.nums.insert(p.name.clone(), v);
        binds.push((p.name.clone(), v));
    }
    t.items(&g.body)?;
    let result_binding = t
        .ssa
        .get(&g.result_binding)
        .cloned()
        .ok_or_else(|| TraceError::Eval {
            span: Span::default(),
            message: format!("result `{}` was never assigned", g.result_binding),
        })?;
    Ok(Trace {
        executed: t.out,
        result_binding,
        binds,
    })
}

impl<'a> Tracer<'a> {
    fn items(&mut self, items: &'a [Item]) -> Result<(), TraceError> {
        for it in items {
            self.iterations += 1;
            if self.iterations > MAX_ITERATIONS {
                return Err(TraceError::LoopBound(MAX_TRACE_STATEMENTS));
            }
            match it {
                Item::Let { name, value, span } => {
                    let v = self.eval(value, *span)?;
                    // a reassigned parameter no longer names the parameter
                    self.params.remove(name.as_str());
                    self.nums.insert(name.clone(), v);
                }
                Item::Stmt { stmt, span } => self.stmt(stmt, *span)?,
                Item::For {
                    var,
                    start,
                    end,
                    body,
                    span,
                } => {
                    let (a, b) = (self.eval(start, *span)?, self.eval(end, *span)?);
                    self.params.remove(var.as_str());
                    let mut i = a;
                    while i < b {
                        self.nums.insert(var.clone(), i);
                        self.items(body)?;
                        i += 1.0;
                    }
                }
                Item::If {
                    cond,
                    then_body,
                    else_body,
                    span,
                } => {
                    if self.eval(cond, *span)? != 0.0 {
                        self.items(then_body)?;
                    } else {
                        self.items(else_body)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn fresh(&mut self, base: &str) -> String {
        if !self.ssa.contains_key(base) {
            return base.to_string();
        }
        let mut n = 2;
        loop {
            let cand = format!("{base}_{n}");
            if !self.taken.contains(&cand) {
                self.taken.insert(cand.clone());
                return cand;
            }
            n += 1;
        }
    }

    fn stmt(&mut self, stmt: &Statement, span: Span) -> Result<(), TraceError> {
        let mut args = Vec::with_capacity(stmt.args.len());
        let mut symbolic = Vec::with_capacity(stmt.args.len());
        for a in &stmt.args {
            let value = match a.unit_tag {
                UnitTag::Sketch | UnitTag::Solid => {
                    let name = a.value.as_var().unwrap_or_default();
                    let cur = self.ssa.get(name).ok_or_else(|| TraceError::Eval {
                        span,
                        message: format!("`{name}` is not defined on this path"),
                    })?;
                    Expr::Var(cur.clone())
                }
                UnitTag::Plane => a.value.clone(),
                _ => Expr::Num(self.eval(&a.value, span)?),
            };
            symbolic.push(self.param_only(&a.value).then(|| a.value.clone()));
            args.push(Arg {
                value,
                unit_tag: a.unit_tag,
            });
        }
        let target = self.fresh(&stmt.target);
        self.ssa.insert(stmt.target.clone(), target.clone());
        self.out.push(TracedStatement {
            stmt: Statement {
                target,
                op: stmt.op,
                args,
            },
            origin: span,
            symbolic,
        });
        if self.out.len() > MAX_TRACE_STATEMENTS {
            return Err(TraceError::LoopBound(MAX_TRACE_STATEMENTS));
        }
        Ok(())
    }

    fn param_only(&self, e: &Expr) -> bool {
        if e.is_literal() {
            return false;
        }
        let mut ok = true;
        e.visit_vars(&mut |v| ok &= self.params.contains(v));
        ok
    }

    fn eval(&self, e: &Expr, span: Span) -> Result<f64, TraceError> {
        let err = |m: String| TraceError::Eval { span, message: m };
        let v = match e {
            Expr::Num(v) => *v,
            Expr::Str(_) => return Err(err("string in numeric context".into())),
            Expr::Var(n) => *self
                .nums
                .get(n)
                .ok_or_else(|| err(format!("`{n}` is not a number on this path")))?,
            Expr::Neg(a) => -self.eval(a, span)?,
            Expr::Not(a) => (self.eval(a, span)? == 0.0) as u8 as f64,
            Expr::Bin(op, a, b) => {
                let x = self.eval(a, span)?;
                // short-circuit boolean operators
                match op {
                    BinOp::And if x == 0.0 => return Ok(0.0),
                    BinOp::Or if x != 0.0 => return Ok(1.0),
                    _ => {}
                }
                let y = self.eval(b, span)?;
                let truth = |c: bool| c as u8 as f64;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(err("division by zero".into()));
                        }
                        x / y
                    }
                    BinOp::Mod => {
                        if y == 0.0 {
                            return Err(err("modulo by zero".into()));
                        }
                        x.rem_euclid(y)
                    }
                    BinOp::Lt => truth(x < y),
                    BinOp::Le => truth(x <= y),
                    BinOp::Gt => truth(x > y),
                    BinOp::Ge => truth(x >= y),
                    BinOp::Eq => truth(x == y),
                    BinOp::Ne => truth(x != y),
                    BinOp::And | BinOp::Or => truth(y != 0.0),
                }
            }
            Expr::Call(f, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, span))
                    .collect::<Result<Vec<_>, _>>()?;
                let x = vals[0];
                match f {
                    Func::Sin => x.to_radians().sin(),
                    Func::Cos => x.to_radians().cos(),
                    Func::Tan => x.to_radians().tan(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(err("sqrt of a negative number".into()));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Min => x.min(vals[1]),
                    Func::Max => x.max(vals[1]),
                    Func::Floor => x.floor(),
                    Func::Ceil => x.ceil(),
                    Func::Round => x.round(),
                }
            }
        };
        if !v.is_finite() {
            return Err(err("non-finite value".into()));
        }
        Ok(v)
    }
}

/// Statements of `s` on the def-use chain of the result, in order.
pub fn reachable(s: &Script) -> Script {
    let mut live: HashSet<&str> = HashSet::from([s.result_binding.as_str()]);
    let mut keep = vec![false; s.statements.len()];
    for (i, st) in s.statements.iter().enumerate().rev() {
        if live.contains(st.target.as_str()) {
            keep[i] = true;
            live.remove(st.target.as_str());
            live.extend(st.refs());
        }
    }
    Script {
        statements: s
            .statements
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(st, _)| st.clone())
            .collect(),
        result_binding: s.result_binding.clone(),
    }
}

/// First reference argument of the same kind as the statement's output.
fn bypass_input(st: &Statement) -> Option<&str> {
    let want = match st.op.output() {
        crate::lang::ValueKind::Sketch => UnitTag::Sketch,
        crate::lang::ValueKind::Solid => UnitTag::Solid,
        crate::lang::ValueKind::Number => return None,
    };
    st.args
        .iter()
        .find(|a| a.unit_tag == want)
        .and_then(|a| a.value.as_var())
}

/// `s` with statement `i` removed and its uses rewired to its bypass input.
pub fn bypass(s: &Script, i: usize) -> Option<Script> {
    let st = &s.statements[i];
    let input = bypass_input(st)?.to_string();
    let old = st.target.clone();
    let mut out = s.clone();
    out.statements.remove(i);
    for later in &mut out.statements[i..] {
        for a in &mut later.args {
            if a.unit_tag.is_ref() && a.value.as_var() == Some(old.as_str()) {
                a.value = Expr::Var(input.clone());
            }
        }
    }
    if out.result_binding == old {
        out.result_binding = input;
    }
    Some(reachable(&out))
}

fn protected(st: &Statement) -> bool {
    matches!(st.op, OpKind::Fillet | OpKind::Chamfer) && st.num(1).is_none_or(|r| r.abs() > 1e-9)
}

/// Removes dead statements, then every statement whose bypass leaves the
/// occupancy at resolution 128 on `domain` unchanged. Fillets and chamfers
/// are kept (the kernel cannot see them) unless their size is zero.
pub fn slice_script(s: &Script, domain: &Aabb) -> Result<Script, EvalError> {
    let grid = kernel::checked_grid(kernel::DEFAULT_RESOLUTION, domain)?;
    let mut cur = reachable(s);
    let reference = kernel::build(&cur)?.rasterize(&grid).occupancy;
    let same = |cand: &Script| {
        kernel::build(cand).is_ok_and(|m| {
            m.unsupported_ops.is_empty() && m.rasterize(&grid).occupancy == reference
        })
    };
    loop {
        let mut changed = false;
        let mut i = cur.statements.len();
        while i > 0 {
            i -= 1;
            if i >= cur.statements.len() || protected(&cur.statements[i]) {
                continue;
            }
            if let Some(cand) = bypass(&cur, i) {
                if same(&cand) {
                    cur = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(cur);
        }
    }
}

/// Slices a trace on the default domain.
pub fn slice(t: &Trace) -> Result<Script, EvalError> {
    slice_script(&t.to_script(), &kernel::default_domain())
}

/// Bind-preserving form: one `name = value` binding per parameter followed
/// by the sliced statements, with parameter-only arguments kept symbolic.
pub fn slice_with_binds(t: &Trace) -> Result<Generator, EvalError> {
    let sliced = slice(t)?;
    let by_target: HashMap<&str, &TracedStatement> = t
        .executed
        .iter()
        .map(|e| (e.stmt.target.as_str(), e))
        .collect();
    let mut body: Vec<Item> = t
        .binds
        .iter()
        .enumerate()
        .map(|(i, (name, v))| Item::Let {
            name: name.clone(),
            value: Expr::Num(*v),
            span: Span {
                line: i as u32 + 1,
                col: 1,
            },
        })
        .collect();
    for st in &sliced.statements {
        let mut st = st.clone();
        if let Some(tr) = by_target.get(st.target.as_str()) {
            // only statements the slicer left untouched keep their symbolic form
            if tr.stmt.args.len() == st.args.len() {
                for (a, sym) in st.args.iter_mut().zip(&tr.symbolic) {
                    if let (Some(e), false) = (sym, a.unit_tag.is_ref()) {
                        a.value = e.clone();
                    }
                }
            }
        }
        body.push(Item::Stmt {
            stmt: st,
            span: Span::default(),
        });
    }
    Ok(Generator {
        params: Vec::new(),
        body,
        result_binding: sliced.result_binding,
    })
}

#[cfg(test)]
mod tests;
