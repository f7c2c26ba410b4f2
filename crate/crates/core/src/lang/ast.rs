use std::fmt;

use super::ops::{OpKind, UnitTag};

/// Source location (1-based line and column).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 5,
        }
    }

    pub fn is_boolean(self) -> bool {
        self.precedence() <= 3
    }
}

/// Math functions usable inside generator expressions. Trigonometry is in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sqrt,
    Abs,
    Min,
    Max,
    Floor,
    Ceil,
    Round,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "floor" => Func::Floor,
            "ceil" => Func::Ceil,
            "round" => Func::Round,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Floor => "floor",
            Func::Ceil => "ceil",
            Func::Round => "round",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Var(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Expr::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Expr::Num(_) | Expr::Str(_))
    }

    /// Calls `f` on every variable referenced by the expression.
    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Num(_) | Expr::Str(_) => {}
            Expr::Var(v) => f(v),
            Expr::Neg(e) | Expr::Not(e) => e.visit_vars(f),
            Expr::Bin(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub value: Expr,
    pub unit_tag: UnitTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub target: String,
    pub op: OpKind,
    pub args: Vec<Arg>,
}

impl Statement {
    /// Temporaries this statement reads.
    pub fn refs(&self) -> impl Iterator<Item = &str> {
        self.args
            .iter()
            .filter(|a| a.unit_tag.is_ref())
            .filter_map(|a| a.value.as_var())
    }

    /// Numeric literal at argument position `i`, if it is one.
    pub fn num(&self, i: usize) -> Option<f64> {
        self.args.get(i).and_then(|a| a.value.as_num())
    }
}

/// A flat, literal-only program.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub statements: Vec<Statement>,
    pub result_binding: String,
}

impl Script {
    pub fn find(&self, name: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.target == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.statements.iter().position(|s| s.target == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub default: f64,
    pub unit_tag: UnitTag,
}

/// Statement-level items of a generator body.
#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Stmt {
        stmt: Statement,
        span: Span,
    },
    /// Numeric binding `name = expr`.
    Let {
        name: String,
        value: Expr,
        span: Span,
    },
    For {
        var: String,
        start: Expr,
        end: Expr,
        body: Vec<Item>,
        span: Span,
    },
    If {
        cond: Expr,
        then_body: Vec<Item>,
        else_body: Vec<Item>,
        span: Span,
    },
}

impl Item {
    pub fn span(&self) -> Span {
        match self {
            Item::Stmt { span, .. }
            | Item::Let { span, .. }
            | Item::For { span, .. }
            | Item::If { span, .. } => *span,
        }
    }
}

/// A parametric program: parameter declarations plus a body that may use
/// expressions, loops and conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub params: Vec<ParamDecl>,
    pub body: Vec<Item>,
    pub result_binding: String,
}

impl Generator {
    pub fn param(&self, name: &str) -> Option<&ParamDecl> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn defaults(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.default).collect()
    }

    /// Views a flat script as a zero-parameter generator.
    pub fn from_script(script: &Script) -> Generator {
        Generator {
            params: Vec::new(),
            body: script
                .statements
                .iter()
                .enumerate()
                .map(|(i, s)| Item::Stmt {
                    stmt: s.clone(),
                    span: Span {
                        line: i as u32 + 1,
                        col: 1,
                    },
                })
                .collect(),
            result_binding: script.result_binding.clone(),
        }
    }
}

/// Parse result: a flat script or a generator.
#[derive(Debug, Clone, PartialEq)]
pub enum Program {
    Script(Script),
    Generator(Generator),
}

impl Program {
    pub fn into_generator(self) -> Generator {
        match self {
            Program::Script(s) => Generator::from_script(&s),
            Program::Generator(g) => g,
        }
    }
}
