//! Recursive-descent parser with name resolution and the static checks that
//! make every accepted program terminate and return exactly once.

use std::collections::{HashMap, HashSet};

use super::ast::{BinOp, Branch, Builtin, Expr, ParamDecl, Span, Stmt, UnaryOp, VarRef};
use super::binding::Binding;
use super::error::{DslError, ErrorKind};
use super::lexer::{tokenize, Spanned, Token};

pub(crate) struct Parsed {
    pub params: Vec<ParamDecl>,
    pub body: Vec<Stmt>,
    pub locals: Vec<String>,
}

pub(crate) fn parse_source(source: &str, binding: Binding) -> Result<Parsed, DslError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        binding,
        params: Vec::new(),
        locals: Vec::new(),
        local_slots: HashMap::new(),
        assigned: HashSet::new(),
        loop_var: None,
        loop_names: HashSet::new(),
    };
    let body = parser.program()?;
    Ok(Parsed {
        params: parser.params,
        body,
        locals: parser.locals,
    })
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    binding: Binding,
    params: Vec<ParamDecl>,
    locals: Vec<String>,
    local_slots: HashMap<String, usize>,
    assigned: HashSet<usize>,
    loop_var: Option<(String, usize)>,
    loop_names: HashSet<String>,
}

fn is_reserved(name: &str) -> bool {
    name == "len" || Builtin::from_name(name).is_some()
}

/// Whether control never falls through the end of this statement.
fn exits(stmt: &Stmt) -> bool {
    match stmt {
        Stmt::Return { .. } | Stmt::Break { .. } => true,
        Stmt::If {
            branches,
            otherwise: Some(other),
            ..
        } => branches.iter().all(|b| block_exits(&b.body)) && block_exits(other),
        _ => false,
    }
}

fn block_exits(block: &[Stmt]) -> bool {
    block.last().is_some_and(exits)
}

/// Whether every path through the block ends in `return`.
fn block_returns(block: &[Stmt]) -> bool {
    match block.last() {
        Some(Stmt::Return { .. }) => true,
        Some(Stmt::If {
            branches,
            otherwise: Some(other),
            ..
        }) => branches.iter().all(|b| block_returns(&b.body)) && block_returns(other),
        _ => false,
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn span(&self) -> Span {
        let t = &self.tokens[self.pos];
        Span::new(t.line, t.column)
    }

    fn advance(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, kind: ErrorKind, message: impl Into<String>) -> DslError {
        let s = self.span();
        DslError::new(kind, s.line, s.column, message)
    }

    fn error_at(&self, span: Span, kind: ErrorKind, message: impl Into<String>) -> DslError {
        DslError::new(kind, span.line, span.column, message)
    }

    fn unexpected(&self, wanted: &str) -> DslError {
        self.error_here(
            ErrorKind::Syntax,
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, token: Token, wanted: &str) -> Result<Spanned, DslError> {
        if *self.peek() == token {
            Ok(self.advance())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn ident(&mut self, wanted: &str) -> Result<(String, Span), DslError> {
        let span = self.span();
        match self.peek().clone() {
            Token::Ident(name) => {
                self.advance();
                Ok((name, span))
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Token::Newline {
            self.advance();
        }
    }

    fn program(&mut self) -> Result<Vec<Stmt>, DslError> {
        self.skip_newlines();
        while *self.peek() == Token::Param {
            self.param_decl()?;
            self.end_of_statement(&Token::Eof)?;
            self.skip_newlines();
        }
        let body = self.statements(&Token::Eof)?;
        if !block_returns(&body) {
            return Err(self.error_here(
                ErrorKind::Syntax,
                "program does not return a value on every path",
            ));
        }
        Ok(body)
    }

    fn signed_number(&mut self) -> Result<f64, DslError> {
        let negative = if *self.peek() == Token::Minus {
            self.advance();
            true
        } else {
            false
        };
        match *self.peek() {
            Token::Num(v) => {
                self.advance();
                Ok(if negative { -v } else { v })
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn param_decl(&mut self) -> Result<(), DslError> {
        self.expect(Token::Param, "`param`")?;
        let (name, span) = self.ident("a parameter name")?;
        if is_reserved(&name) || self.binding.is_input(&name) {
            return Err(self.error_at(
                span,
                ErrorKind::Syntax,
                format!("`{name}` is reserved and cannot name a parameter"),
            ));
        }
        if self.params.iter().any(|p| p.name == name) {
            return Err(self.error_at(
                span,
                ErrorKind::Syntax,
                format!("duplicate parameter `{name}`"),
            ));
        }
        self.expect(Token::Assign, "`=`")?;
        let default = self.signed_number()?;
        self.expect(Token::In, "`in`")?;
        self.expect(Token::LBracket, "`[`")?;
        let lo = self.signed_number()?;
        self.expect(Token::Comma, "`,`")?;
        let hi = self.signed_number()?;
        self.expect(Token::RBracket, "`]`")?;
        if !(lo <= default && default <= hi) {
            return Err(self.error_at(
                span,
                ErrorKind::Syntax,
                format!("default {default} of `{name}` is outside [{lo}, {hi}]"),
            ));
        }
        self.params.push(ParamDecl {
            name,
            default,
            lo,
            hi,
        });
        Ok(())
    }

    fn end_of_statement(&mut self, terminator: &Token) -> Result<(), DslError> {
        match self.peek() {
            Token::Newline => {
                self.advance();
                Ok(())
            }
            t if t == terminator => Ok(()),
            _ => Err(self.unexpected("end of line")),
        }
    }

    fn statements(&mut self, terminator: &Token) -> Result<Vec<Stmt>, DslError> {
        let mut out: Vec<Stmt> = Vec::new();
        loop {
            self.skip_newlines();
            if self.peek() == terminator {
                break;
            }
            if *self.peek() == Token::Eof {
                return Err(self.unexpected("`}`"));
            }
            if *self.peek() == Token::Param {
                return Err(self.error_here(
                    ErrorKind::Syntax,
                    "parameter declarations must precede all statements",
                ));
            }
            if out.last().is_some_and(exits) {
                return Err(self.error_here(ErrorKind::Syntax, "unreachable statement"));
            }
            let stmt = self.statement()?;
            out.push(stmt);
            self.end_of_statement(terminator)?;
        }
        Ok(out)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, DslError> {
        self.expect(Token::LBrace, "`{`")?;
        let body = self.statements(&Token::RBrace)?;
        self.expect(Token::RBrace, "`}`")?;
        Ok(body)
    }

    fn statement(&mut self) -> Result<Stmt, DslError> {
        let span = self.span();
        match self.peek() {
            Token::Let => self.let_stmt(),
            Token::If => self.if_stmt(),
            Token::For => self.for_stmt(),
            Token::Break => {
                self.advance();
                if self.loop_var.is_none() {
                    return Err(self.error_at(span, ErrorKind::Syntax, "`break` outside a loop"));
                }
                Ok(Stmt::Break { span })
            }
            Token::Return => {
                self.advance();
                let value = self.expr()?;
                Ok(Stmt::Return { value, span })
            }
            _ => Err(self.unexpected("a statement")),
        }
    }

    fn let_stmt(&mut self) -> Result<Stmt, DslError> {
        let span = self.span();
        self.expect(Token::Let, "`let`")?;
        let (name, name_span) = self.ident("a variable name")?;
        let forbidden = if self.params.iter().any(|p| p.name == name) {
            Some("a parameter")
        } else if self.binding.is_input(&name) {
            Some("an input")
        } else if self.loop_names.contains(&name) {
            Some("a loop variable")
        } else if is_reserved(&name) {
            Some("a built-in")
        } else {
            None
        };
        if let Some(what) = forbidden {
            return Err(self.error_at(
                name_span,
                ErrorKind::Syntax,
                format!("cannot assign to `{name}`: it is {what}"),
            ));
        }
        self.expect(Token::Assign, "`=`")?;
        let value = self.expr()?;
        let slot = self.local_slot(&name);
        self.assigned.insert(slot);
        Ok(Stmt::Let {
            name,
            slot,
            value,
            span,
        })
    }

    fn local_slot(&mut self, name: &str) -> usize {
        if let Some(&slot) = self.local_slots.get(name) {
            return slot;
        }
        let slot = self.locals.len();
        self.locals.push(name.to_string());
        self.local_slots.insert(name.to_string(), slot);
        slot
    }

    fn if_stmt(&mut self) -> Result<Stmt, DslError> {
        let span = self.span();
        self.expect(Token::If, "`if`")?;
        let mut branches = Vec::new();
        let cond = self.expr()?;
        let body = self.block()?;
        branches.push(Branch { cond, body });
        let mut otherwise = None;
        loop {
            let save = self.pos;
            self.skip_newlines();
            match self.peek() {
                Token::Elif => {
                    self.advance();
                    let cond = self.expr()?;
                    let body = self.block()?;
                    branches.push(Branch { cond, body });
                }
                Token::Else => {
                    self.advance();
                    otherwise = Some(self.block()?);
                    break;
                }
                _ => {
                    self.pos = save;
                    break;
                }
            }
        }
        Ok(Stmt::If {
            branches,
            otherwise,
            span,
        })
    }

    fn for_stmt(&mut self) -> Result<Stmt, DslError> {
        let span = self.span();
        self.expect(Token::For, "`for`")?;
        if self.loop_var.is_some() {
            return Err(self.error_at(span, ErrorKind::Syntax, "nested loops are not supported"));
        }
        let (var, var_span) = self.ident("a loop variable")?;
        if is_reserved(&var)
            || self.binding.is_input(&var)
            || self.params.iter().any(|p| p.name == var)
            || self.local_slots.contains_key(&var)
        {
            return Err(self.error_at(
                var_span,
                ErrorKind::Syntax,
                format!("loop variable `{var}` shadows an existing name"),
            ));
        }
        self.expect(Token::In, "`in`")?;
        match *self.peek() {
            Token::Num(0.0) => {
                self.advance();
            }
            _ => return Err(self.unexpected("`0` (loops start at zero)")),
        }
        self.expect(Token::DotDot, "`..`")?;
        let (len_kw, _) = self.ident("`len`")?;
        if len_kw != "len" {
            return Err(self.error_at(
                var_span,
                ErrorKind::Syntax,
                "loops must range over `len(<array>)`",
            ));
        }
        self.expect(Token::LParen, "`(`")?;
        let (array, array_span) = self.ident("an array input")?;
        let array_slot = self.binding.array_index(&array).ok_or_else(|| {
            self.error_at(
                array_span,
                ErrorKind::UnknownIdentifier,
                format!("`{array}` is not an array input of the {} binding", self.binding),
            )
        })?;
        self.expect(Token::RParen, "`)`")?;

        let slot = self.locals.len();
        self.locals.push(var.clone());
        self.loop_names.insert(var.clone());
        self.loop_var = Some((var.clone(), slot));
        let body = self.block();
        self.loop_var = None;
        let body = body?;
        Ok(Stmt::For {
            var,
            slot,
            array,
            array_slot,
            body,
            span,
        })
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        self.or_expr()
    }

    fn binary_op(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Token::Or => BinOp::Or,
            Token::And => BinOp::And,
            Token::EqEq => BinOp::Eq,
            Token::NotEq => BinOp::Ne,
            Token::Lt => BinOp::Lt,
            Token::Le => BinOp::Le,
            Token::Gt => BinOp::Gt,
            Token::Ge => BinOp::Ge,
            Token::Plus => BinOp::Add,
            Token::Minus => BinOp::Sub,
            Token::Star => BinOp::Mul,
            Token::Slash => BinOp::Div,
            _ => return None,
        })
    }

    /// Folds a left-associative chain of operators at one precedence level.
    fn left_assoc(
        &mut self,
        prec: u8,
        operand: fn(&mut Self) -> Result<Expr, DslError>,
    ) -> Result<Expr, DslError> {
        let mut lhs = operand(self)?;
        while let Some(op) = self.binary_op().filter(|op| op.precedence() == prec) {
            let span = self.span();
            self.advance();
            let rhs = operand(self)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> Result<Expr, DslError> {
        self.left_assoc(1, Self::and_expr)
    }

    fn and_expr(&mut self) -> Result<Expr, DslError> {
        self.left_assoc(2, Self::not_expr)
    }

    fn not_expr(&mut self) -> Result<Expr, DslError> {
        if *self.peek() == Token::Not {
            let span = self.span();
            self.advance();
            let operand = self.not_expr()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                operand: Box::new(operand),
                span,
            });
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, DslError> {
        self.left_assoc(4, Self::add_expr)
    }

    fn add_expr(&mut self) -> Result<Expr, DslError> {
        self.left_assoc(5, Self::mul_expr)
    }

    fn mul_expr(&mut self) -> Result<Expr, DslError> {
        self.left_assoc(6, Self::unary)
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if *self.peek() == Token::Minus {
            let span = self.span();
            self.advance();
            let operand = self.unary()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Neg,
                operand: Box::new(operand),
                span,
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let span = self.span();
        match self.peek().clone() {
            Token::Num(v) => {
                self.advance();
                Ok(Expr::Num(v))
            }
            Token::LParen => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Token::Ident(name) => {
                self.advance();
                match self.peek() {
                    Token::LParen => self.call(name, span),
                    Token::LBracket => self.index(name, span),
                    _ => self.variable(name, span),
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn call(&mut self, name: String, span: Span) -> Result<Expr, DslError> {
        self.expect(Token::LParen, "`(`")?;
        if name == "len" {
            let (array, array_span) = self.ident("an array input")?;
            let slot = self.binding.array_index(&array).ok_or_else(|| {
                self.error_at(
                    array_span,
                    ErrorKind::UnknownIdentifier,
                    format!("`{array}` is not an array input of the {} binding", self.binding),
                )
            })?;
            if *self.peek() != Token::RParen {
                return Err(self.error_at(span, ErrorKind::Arity, "`len` takes exactly one array"));
            }
            self.advance();
            return Ok(Expr::Len { array, slot, span });
        }
        let func = Builtin::from_name(&name).ok_or_else(|| {
            self.error_at(
                span,
                ErrorKind::UnknownIdentifier,
                format!("unknown function `{name}`"),
            )
        })?;
        let mut args = Vec::new();
        if *self.peek() != Token::RParen {
            loop {
                args.push(self.expr()?);
                if *self.peek() == Token::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Token::RParen, "`)`")?;
        let (lo, hi) = func.arity();
        if args.len() < lo || args.len() > hi {
            let expected = if lo == hi {
                format!("{lo}")
            } else {
                format!("at least {lo}")
            };
            return Err(self.error_at(
                span,
                ErrorKind::Arity,
                format!("`{name}` expects {expected} arguments, got {}", args.len()),
            ));
        }
        Ok(Expr::Call { func, args, span })
    }

    fn index(&mut self, array: String, span: Span) -> Result<Expr, DslError> {
        let slot = self.binding.array_index(&array).ok_or_else(|| {
            self.error_at(
                span,
                ErrorKind::UnknownIdentifier,
                format!("`{array}` is not an array input of the {} binding", self.binding),
            )
        })?;
        self.expect(Token::LBracket, "`[`")?;
        let index = self.expr()?;
        self.expect(Token::RBracket, "`]`")?;
        Ok(Expr::Index {
            array,
            slot,
            index: Box::new(index),
            span,
        })
    }

    fn variable(&mut self, name: String, span: Span) -> Result<Expr, DslError> {
        let slot = if let Some(i) = self.params.iter().position(|p| p.name == name) {
            VarRef::Param(i)
        } else if let Some(i) = self.binding.scalar_index(&name) {
            VarRef::Input(i)
        } else if let Some((_, slot)) = self.loop_var.as_ref().filter(|(v, _)| *v == name) {
            VarRef::Local(*slot)
        } else if let Some(&slot) = self
            .local_slots
            .get(&name)
            .filter(|s| self.assigned.contains(s))
        {
            VarRef::Local(slot)
        } else if self.binding.array_index(&name).is_some() {
            return Err(self.error_at(
                span,
                ErrorKind::Syntax,
                format!("array `{name}` must be indexed or passed to `len`"),
            ));
        } else {
            return Err(self.error_at(
                span,
                ErrorKind::UnknownIdentifier,
                format!("unknown identifier `{name}`"),
            ));
        };
        Ok(Expr::Var { name, slot, span })
    }
}
