use super::ast::{BinOp, Builtin, Expr, Span, Stmt, UnaryOp, VarRef};
use super::binding::EvalContext;
use super::error::{DslError, ErrorKind};

enum Flow {
    Next,
    Break,
    Return(f64),
}

pub(crate) struct Machine<'a> {
    params: &'a [f64],
    ctx: &'a EvalContext,
    locals: Vec<Option<f64>>,
    pub steps: u64,
}

fn err(kind: ErrorKind, span: Span, message: impl Into<String>) -> DslError {
    DslError::new(kind, span.line, span.column, message)
}

fn truth(v: f64) -> bool {
    v != 0.0
}

fn boolean(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn finite(v: f64, span: Span, what: &str) -> Result<f64, DslError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(
            ErrorKind::NonFiniteResult,
            span,
            format!("{what} produced a non-finite value"),
        ))
    }
}

impl<'a> Machine<'a> {
    pub fn new(params: &'a [f64], ctx: &'a EvalContext, n_locals: usize) -> Self {
        Self {
            params,
            ctx,
            locals: vec![None; n_locals],
            steps: 0,
        }
    }

    pub fn run(&mut self, body: &[Stmt]) -> Result<f64, DslError> {
        match self.block(body)? {
            Flow::Return(v) => Ok(v),
            // Unreachable for parsed programs: the parser proves every path returns.
            Flow::Next | Flow::Break => Err(DslError::new(
                ErrorKind::Syntax,
                1,
                1,
                "program finished without returning",
            )),
        }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, DslError> {
        for s in stmts {
            match self.stmt(s)? {
                Flow::Next => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, DslError> {
        self.steps += 1;
        match s {
            Stmt::Let { slot, value, .. } => {
                let v = self.expr(value)?;
                self.locals[*slot] = Some(v);
                Ok(Flow::Next)
            }
            Stmt::Return { value, .. } => Ok(Flow::Return(self.expr(value)?)),
            Stmt::Break { .. } => Ok(Flow::Break),
            Stmt::If {
                branches,
                otherwise,
                ..
            } => {
                for b in branches {
                    if truth(self.expr(&b.cond)?) {
                        return self.block(&b.body);
                    }
                }
                match otherwise {
                    Some(other) => self.block(other),
                    None => Ok(Flow::Next),
                }
            }
            Stmt::For {
                slot,
                array_slot,
                body,
                ..
            } => {
                let len = self.ctx.arrays()[*array_slot].len();
                for i in 0..len {
                    self.locals[*slot] = Some(i as f64);
                    match self.block(body)? {
                        Flow::Next => {}
                        Flow::Break => break,
                        ret @ Flow::Return(_) => return Ok(ret),
                    }
                }
                Ok(Flow::Next)
            }
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<f64, DslError> {
        self.steps += 1;
        match e {
            Expr::Num(v) => Ok(*v),
            Expr::Var { name, slot, span } => match slot {
                VarRef::Param(i) => Ok(self.params[*i]),
                VarRef::Input(i) => Ok(self.ctx.scalars()[*i]),
                VarRef::Local(i) => self.locals[*i].ok_or_else(|| {
                    err(
                        ErrorKind::UnknownIdentifier,
                        *span,
                        format!("`{name}` is read before it is assigned on this path"),
                    )
                }),
            },
            Expr::Len { slot, .. } => Ok(self.ctx.arrays()[*slot].len() as f64),
            Expr::Index {
                array,
                slot,
                index,
                span,
            } => {
                let raw = self.expr(index)?;
                let values = &self.ctx.arrays()[*slot];
                let idx = raw.trunc();
                if idx < 0.0 || idx >= values.len() as f64 {
                    return Err(err(
                        ErrorKind::IndexOutOfRange,
                        *span,
                        format!("index {raw} out of range for `{array}` of length {}", values.len()),
                    ));
                }
                Ok(values[idx as usize])
            }
            Expr::Unary { op, operand, span } => {
                let v = self.expr(operand)?;
                match op {
                    UnaryOp::Neg => finite(-v, *span, "negation"),
                    UnaryOp::Not => Ok(boolean(!truth(v))),
                }
            }
            Expr::Binary { op, lhs, rhs, span } => {
                let a = self.expr(lhs)?;
                match op {
                    BinOp::And if !truth(a) => return Ok(0.0),
                    BinOp::Or if truth(a) => return Ok(1.0),
                    _ => {}
                }
                let b = self.expr(rhs)?;
                let v = match op {
                    BinOp::Or | BinOp::And => boolean(truth(b)),
                    BinOp::Eq => boolean(a == b),
                    BinOp::Ne => boolean(a != b),
                    BinOp::Lt => boolean(a < b),
                    BinOp::Le => boolean(a <= b),
                    BinOp::Gt => boolean(a > b),
                    BinOp::Ge => boolean(a >= b),
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(err(ErrorKind::DivisionByZero, *span, "division by zero"));
                        }
                        a / b
                    }
                };
                finite(v, *span, op.symbol())
            }
            Expr::Call { func, args, span } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.expr(a)?);
                }
                let v = match func {
                    Builtin::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                    Builtin::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Builtin::Abs => vals[0].abs(),
                    Builtin::Floor => vals[0].floor(),
                    Builtin::Clamp => vals[0].max(vals[1]).min(vals[2]),
                    Builtin::Ln => vals[0].ln(),
                };
                finite(v, *span, func.name())
            }
        }
    }
}
