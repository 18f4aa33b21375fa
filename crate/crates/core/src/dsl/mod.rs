//! Controller language: a small, always-terminating expression language
//! for the editable part of a controller.
//!
//! A program is a list of `param` declarations followed by statements
//! (`let`, `if`/`elif`/`else`, `for i in 0..len(array)` with `break`,
//! `return`). Every value is an `f64`; comparisons yield `0.0`/`1.0`.
//! The grammar lives in `docs/grammar.ebnf` and is embedded as
//! [`GRAMMAR`].

mod ast;
mod binding;
mod error;
mod eval;
mod lexer;
mod parser;
mod render;

use std::collections::BTreeMap;

pub use ast::{BinOp, Branch, Builtin, Expr, ParamDecl, Span, Stmt, UnaryOp, VarRef};
pub use binding::{Binding, EvalContext, InputValue};
pub use error::{DslError, ErrorKind, EvalError, ParamError, ParseError};

/// EBNF grammar of the controller language.
pub const GRAMMAR: &str = include_str!("../../../../docs/grammar.ebnf");

/// A parsed, name-resolved controller bound to one environment schema.
///
/// Immutable: [`ControllerProgram::set_params`] returns a new program.
#[derive(Debug, Clone)]
pub struct ControllerProgram {
    source: String,
    binding: Binding,
    params: Vec<ParamDecl>,
    body: Vec<Stmt>,
    locals: Vec<String>,
}

/// Structural equality: binding, parameter declarations and statement tree.
/// Source text and positions are ignored.
impl PartialEq for ControllerProgram {
    fn eq(&self, other: &Self) -> bool {
        self.binding == other.binding && self.params == other.params && self.body == other.body
    }
}

impl ControllerProgram {
    pub fn parse(source: &str, binding: Binding) -> Result<Self, ParseError> {
        let parsed = parser::parse_source(source, binding)?;
        Ok(Self {
            source: source.to_string(),
            binding,
            params: parsed.params,
            body: parsed.body,
            locals: parsed.locals,
        })
    }

    /// Original source text (canonical text after [`Self::set_params`]).
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn binding(&self) -> Binding {
        self.binding
    }

    pub fn body(&self) -> &[Stmt] {
        &self.body
    }

    /// Canonical text: two-space indentation, single spaces around binary
    /// operators, minimal parentheses, LF line endings.
    pub fn render(&self) -> String {
        render::render_program(&self.params, &self.body)
    }

    /// Declared parameters in declaration order.
    pub fn param_manifest(&self) -> &[ParamDecl] {
        &self.params
    }

    pub fn set_params(&self, assignments: &BTreeMap<String, f64>) -> Result<Self, ParamError> {
        let mut params = self.params.clone();
        for (name, &value) in assignments {
            let decl = params
                .iter_mut()
                .find(|p| p.name == *name)
                .ok_or_else(|| ParamError::Unknown(name.clone()))?;
            if !(value >= decl.lo && value <= decl.hi) {
                return Err(ParamError::OutOfRange {
                    name: name.clone(),
                    value,
                    lo: decl.lo,
                    hi: decl.hi,
                });
            }
            decl.default = value;
        }
        if assignments.is_empty() {
            return Ok(self.clone());
        }
        let source = render::render_program(&params, &self.body);
        Ok(Self {
            source,
            binding: self.binding,
            params,
            body: self.body.clone(),
            locals: self.locals.clone(),
        })
    }

    /// Runs the program once against `ctx`.
    pub fn evaluate(&self, ctx: &EvalContext) -> Result<f64, EvalError> {
        self.evaluate_counted(ctx).0
    }

    /// Like [`Self::evaluate`], also returning the number of AST nodes visited.
    pub fn evaluate_counted(&self, ctx: &EvalContext) -> (Result<f64, EvalError>, u64) {
        if ctx.binding() != self.binding {
            let e = DslError::new(
                ErrorKind::UnknownIdentifier,
                1,
                1,
                format!(
                    "context for binding {} given to a {} program",
                    ctx.binding(),
                    self.binding
                ),
            );
            return (Err(e), 0);
        }
        let values: Vec<f64> = self.params.iter().map(|p| p.default).collect();
        let mut machine = eval::Machine::new(&values, ctx, self.locals.len());
        let result = machine.run(&self.body);
        (result, machine.steps)
    }

    /// Total number of statement and expression nodes.
    pub fn node_count(&self) -> usize {
        ast::block_nodes(&self.body)
    }
}
