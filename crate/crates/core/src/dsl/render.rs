use std::fmt::Write;

use super::ast::{Expr, ParamDecl, Stmt, UnaryOp};

const INDENT: &str = "  ";

pub(crate) fn render_program(params: &[ParamDecl], body: &[Stmt]) -> String {
    let mut out = String::new();
    for p in params {
        let _ = writeln!(
            out,
            "param {} = {} in [{}, {}]",
            p.name,
            number(p.default),
            number(p.lo),
            number(p.hi)
        );
    }
    if !params.is_empty() && !body.is_empty() {
        out.push('\n');
    }
    block(&mut out, body, 0);
    out
}

/// Shortest decimal that round-trips; never uses exponent notation.
pub(crate) fn number(v: f64) -> String {
    if v == 0.0 {
        // Collapse -0 so rendering is canonical.
        return "0".to_string();
    }
    format!("{v}")
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        stmt(out, s, depth);
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match s {
        Stmt::Let { name, value, .. } => {
            let _ = writeln!(out, "let {name} = {}", expr(value));
        }
        Stmt::Return { value, .. } => {
            let _ = writeln!(out, "return {}", expr(value));
        }
        Stmt::Break { .. } => out.push_str("break\n"),
        Stmt::For {
            var, array, body, ..
        } => {
            let _ = writeln!(out, "for {var} in 0..len({array}) {{");
            block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        Stmt::If {
            branches,
            otherwise,
            ..
        } => {
            for (i, b) in branches.iter().enumerate() {
                if i == 0 {
                    let _ = writeln!(out, "if {} {{", expr(&b.cond));
                } else {
                    let _ = writeln!(out, "}} elif {} {{", expr(&b.cond));
                }
                block(out, &b.body, depth + 1);
                indent(out, depth);
            }
            if let Some(other) = otherwise {
                out.push_str("} else {\n");
                block(out, other, depth + 1);
                indent(out, depth);
            }
            out.push_str("}\n");
        }
    }
}

const NOT_PREC: u8 = 3;
const UNARY_PREC: u8 = 7;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary {
            op: UnaryOp::Not, ..
        } => NOT_PREC,
        Expr::Unary {
            op: UnaryOp::Neg, ..
        } => UNARY_PREC,
        _ => u8::MAX,
    }
}

fn wrapped(e: &Expr, needs: bool) -> String {
    if needs {
        format!("({})", expr(e))
    } else {
        expr(e)
    }
}

pub(crate) fn expr(e: &Expr) -> String {
    match e {
        Expr::Num(v) => number(*v),
        Expr::Var { name, .. } => name.clone(),
        Expr::Len { array, .. } => format!("len({array})"),
        Expr::Index { array, index, .. } => format!("{array}[{}]", expr(index)),
        Expr::Call { func, args, .. } => {
            let parts: Vec<String> = args.iter().map(expr).collect();
            format!("{}({})", func.name(), parts.join(", "))
        }
        Expr::Unary { op, operand, .. } => match op {
            UnaryOp::Neg => format!("-{}", wrapped(operand, prec(operand) < UNARY_PREC)),
            UnaryOp::Not => format!("not {}", wrapped(operand, prec(operand) < NOT_PREC)),
        },
        Expr::Binary { op, lhs, rhs, .. } => {
            let p = op.precedence();
            let left = wrapped(lhs, prec(lhs) < p);
            let right = wrapped(rhs, prec(rhs) <= p);
            format!("{left} {} {right}", op.symbol())
        }
    }
}
