use serde::{Deserialize, Serialize};

/// Source position of a node. Positions never take part in structural
/// comparison, so a re-parsed canonical rendering compares equal to the
/// original tree.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

/// A tunable constant exposed to the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub default: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Where a scalar identifier lives at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    Param(usize),
    Input(usize),
    Local(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    /// Binding strength; larger binds tighter. `not` sits at 3.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Min,
    Max,
    Abs,
    Floor,
    Clamp,
    Ln,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            "abs" => Builtin::Abs,
            "floor" => Builtin::Floor,
            "clamp" => Builtin::Clamp,
            "ln" => Builtin::Ln,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Abs => "abs",
            Builtin::Floor => "floor",
            Builtin::Clamp => "clamp",
            Builtin::Ln => "ln",
        }
    }

    /// Accepted argument counts as (min, max).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Builtin::Min | Builtin::Max => (2, usize::MAX),
            Builtin::Abs | Builtin::Floor | Builtin::Ln => (1, 1),
            Builtin::Clamp => (3, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var {
        name: String,
        slot: VarRef,
        span: Span,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
        span: Span,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    Call {
        func: Builtin,
        args: Vec<Expr>,
        span: Span,
    },
    Len {
        array: String,
        slot: usize,
        span: Span,
    },
    Index {
        array: String,
        slot: usize,
        index: Box<Expr>,
        span: Span,
    },
}

impl Expr {
    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Num(_) | Expr::Var { .. } | Expr::Len { .. } => 0,
            Expr::Unary { operand, .. } => operand.node_count(),
            Expr::Binary { lhs, rhs, .. } => lhs.node_count() + rhs.node_count(),
            Expr::Call { args, .. } => args.iter().map(Expr::node_count).sum(),
            Expr::Index { index, .. } => index.node_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub cond: Expr,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let {
        name: String,
        slot: usize,
        value: Expr,
        span: Span,
    },
    If {
        branches: Vec<Branch>,
        otherwise: Option<Vec<Stmt>>,
        span: Span,
    },
    For {
        var: String,
        slot: usize,
        array: String,
        array_slot: usize,
        body: Vec<Stmt>,
        span: Span,
    },
    Break {
        span: Span,
    },
    Return {
        value: Expr,
        span: Span,
    },
}

impl Stmt {
    pub fn node_count(&self) -> usize {
        1 + match self {
            Stmt::Let { value, .. } | Stmt::Return { value, .. } => value.node_count(),
            Stmt::If {
                branches,
                otherwise,
                ..
            } => {
                branches
                    .iter()
                    .map(|b| b.cond.node_count() + block_nodes(&b.body))
                    .sum::<usize>()
                    + otherwise.as_deref().map_or(0, block_nodes)
            }
            Stmt::For { body, .. } => block_nodes(body),
            Stmt::Break { .. } => 0,
        }
    }
}

pub(crate) fn block_nodes(block: &[Stmt]) -> usize {
    block.iter().map(Stmt::node_count).sum()
}
