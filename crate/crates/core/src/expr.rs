//! Scalar-field expressions on a coordinate chart.
//!
//! Metric, para-structure and forcing-tensor components are written as small
//! infix expressions over the chart coordinates `x1..xn` (with `x`, `y` as
//! aliases in dimension two), or over the curve parameter `t` for the
//! F-planar coefficient functions. Derivatives are never taken symbolically;
//! downstream code differentiates fields numerically.
//!
//! Grammar, from loosest to tightest binding:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' exponent)*
//! exponent:= ['-'] INT | '(' ['-'] INT ')'
//! primary := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Elementary functions accepted in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Parsed expression tree. Variables are zero-based indices into the
/// evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Const(f64),
    Var(usize),
    Neg(Box<ExprAst>),
    /// Integer power `base ^ exponent`.
    Pow(Box<ExprAst>, i32),
    Binary(BinOp, Box<ExprAst>, Box<ExprAst>),
    Call(Func, Box<ExprAst>),
}

/// Which identifiers an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variables {
    /// Chart coordinates `x1..xn`; `x`, `y` are accepted when `n == 2`.
    Chart(usize),
    /// The single curve parameter `t`.
    Time,
}

impl Variables {
    pub fn arity(self) -> usize {
        match self {
            Variables::Chart(n) => n,
            Variables::Time => 1,
        }
    }

    fn resolve(self, name: &str, offset: usize) -> Result<usize, ParseError> {
        match self {
            Variables::Time => {
                if name == "t" {
                    Ok(0)
                } else {
                    Err(ParseError::UnknownIdentifier { name: name.to_string(), offset })
                }
            }
            Variables::Chart(dim) => {
                if dim == 2 {
                    match name {
                        "x" => return Ok(0),
                        "y" => return Ok(1),
                        _ => {}
                    }
                }
                let digits = name.strip_prefix('x').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
                match digits {
                    Some(d) => {
                        let index: usize = d.parse().map_err(|_| ParseError::VariableOutOfRange {
                            name: name.to_string(),
                            offset,
                            dim,
                        })?;
                        if index == 0 || index > dim {
                            Err(ParseError::VariableOutOfRange { name: name.to_string(), offset, dim })
                        } else {
                            Ok(index - 1)
                        }
                    }
                    None => Err(ParseError::UnknownIdentifier { name: name.to_string(), offset }),
                }
            }
        }
    }

    fn name(self, index: usize) -> String {
        match self {
            Variables::Time => "t".to_string(),
            Variables::Chart(_) => format!("x{}", index + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{name}` at byte {offset} is outside chart dimension {dim}")]
    VariableOutOfRange { name: String, offset: usize, dim: usize },
}

impl ParseError {
    /// Byte offset of the offending token, when there is one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::VariableOutOfRange { offset, .. } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ln of non-positive value {0}")]
    LnDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("point has {got} coordinates, expected {expected}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integer: bool },
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, off) = lexer.next_token()?;
            let end = tok == Tok::End;
            out.push((tok, off));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<(Tok, usize), ParseError> {
        while matches!(self.peek_byte(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(b) = self.peek_byte() else {
            return Ok((Tok::End, start));
        };
        match b {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Ok((Tok::Op(b as char), start))
            }
            b'(' => {
                self.pos += 1;
                Ok((Tok::LParen, start))
            }
            b')' => {
                self.pos += 1;
                Ok((Tok::RParen, start))
            }
            b'0'..=b'9' | b'.' => self.number(start),
            b if b.is_ascii_alphabetic() || b == b'_' => {
                while matches!(self.peek_byte(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                Ok((Tok::Ident(self.src[start..self.pos].to_string()), start))
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                Err(ParseError::Syntax { offset: start, message: format!("unexpected character `{ch}`") })
            }
        }
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let mut integer = true;
        let digits = |lex: &mut Self| {
            let s = lex.pos;
            while matches!(lex.peek_byte(), Some(c) if c.is_ascii_digit()) {
                lex.pos += 1;
            }
            lex.pos - s
        };
        let mut count = digits(self);
        if self.peek_byte() == Some(b'.') {
            integer = false;
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            return Err(ParseError::Syntax { offset: start, message: "malformed number".into() });
        }
        if matches!(self.peek_byte(), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek_byte(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `2e` is a number followed by an identifier; let the parser reject it.
                self.pos = save;
            } else {
                integer = false;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text
            .parse()
            .map_err(|_| ParseError::Syntax { offset: start, message: format!("malformed number `{text}`") })?;
        if !value.is_finite() {
            return Err(ParseError::Syntax { offset: start, message: format!("number `{text}` overflows") });
        }
        Ok((Tok::Num { value, integer }, start))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    vars: Variables,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].0
    }

    fn offset(&self) -> usize {
        self.toks[self.idx].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset: self.offset(), message: message.into() })
    }

    fn expr(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<ExprAst, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(ExprAst::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprAst, ParseError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Op('^') {
            self.bump();
            let n = self.exponent()?;
            base = ExprAst::Pow(Box::new(base), n);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let parens = *self.peek() == Tok::LParen;
        if parens {
            self.bump();
        }
        let negative = *self.peek() == Tok::Op('-');
        if negative {
            self.bump();
        }
        let off = self.offset();
        let n = match self.bump().0 {
            Tok::Num { value, integer: true } if value <= i32::MAX as f64 => value as i32,
            Tok::Num { .. } => {
                return Err(ParseError::Syntax { offset: off, message: "exponent must be an integer".into() })
            }
            _ => return Err(ParseError::Syntax { offset: off, message: "expected integer exponent".into() }),
        };
        if parens {
            if *self.peek() != Tok::RParen {
                return self.syntax("expected `)`");
            }
            self.bump();
        }
        Ok(if negative { -n } else { n })
    }

    fn primary(&mut self) -> Result<ExprAst, ParseError> {
        let (tok, off) = self.bump();
        match tok {
            Tok::Num { value, .. } => Ok(ExprAst::Const(value)),
            Tok::LParen => {
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.syntax("expected `)`");
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return self.syntax(format!("expected `(` after `{name}`"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return self.syntax("expected `)`");
                    }
                    self.bump();
                    return Ok(ExprAst::Call(func, Box::new(arg)));
                }
                Ok(ExprAst::Var(self.vars.resolve(&name, off)?))
            }
            Tok::End => Err(ParseError::Syntax { offset: off, message: "unexpected end of input".into() }),
            Tok::Op(c) => Err(ParseError::Syntax { offset: off, message: format!("unexpected `{c}`") }),
            Tok::RParen => Err(ParseError::Syntax { offset: off, message: "unexpected `)`".into() }),
        }
    }
}

/// Parse an expression over the chart coordinates of a `dim`-dimensional chart.
pub fn parse(source: &str, dim: usize) -> Result<ExprAst, ParseError> {
    parse_with(source, Variables::Chart(dim))
}

pub fn parse_with(source: &str, vars: Variables) -> Result<ExprAst, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = Lexer::tokenize(source)?;
    let mut parser = Parser { toks, idx: 0, vars };
    let ast = parser.expr()?;
    if *parser.peek() != Tok::End {
        return parser.syntax("trailing input");
    }
    Ok(ast)
}

#[inline]
fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl ExprAst {
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        match self {
            ExprAst::Const(c) => Ok(*c),
            ExprAst::Var(i) => point.get(*i).copied().ok_or(EvalError::Arity { expected: i + 1, got: point.len() }),
            ExprAst::Neg(e) => Ok(-e.eval(point)?),
            ExprAst::Pow(b, n) => {
                let base = b.eval(point)?;
                if base == 0.0 && *n < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                finite(base.powi(*n))
            }
            ExprAst::Binary(op, l, r) => {
                let a = l.eval(point)?;
                let b = r.eval(point)?;
                finite(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                })
            }
            ExprAst::Call(f, arg) => {
                let v = arg.eval(point)?;
                finite(match f {
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if v <= 0.0 {
                            return Err(EvalError::LnDomain(v));
                        }
                        v.ln()
                    }
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::SqrtDomain(v));
                        }
                        v.sqrt()
                    }
                })
            }
        }
    }

    /// True when the tree references no variable.
    pub fn is_constant(&self) -> bool {
        match self {
            ExprAst::Const(_) => true,
            ExprAst::Var(_) => false,
            ExprAst::Neg(e) | ExprAst::Pow(e, _) | ExprAst::Call(_, e) => e.is_constant(),
            ExprAst::Binary(_, l, r) => l.is_constant() && r.is_constant(),
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            ExprAst::Const(_) => None,
            ExprAst::Var(i) => Some(*i),
            ExprAst::Neg(e) | ExprAst::Pow(e, _) | ExprAst::Call(_, e) => e.max_var(),
            ExprAst::Binary(_, l, r) => l.max_var().max(r.max_var()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprAst::Binary(op, _, _) => op.precedence(),
            ExprAst::Neg(_) => 3,
            ExprAst::Const(c) if c.is_sign_negative() => 3,
            ExprAst::Pow(_, _) => 4,
            _ => 5,
        }
    }

    /// Render with the given variable naming. The output re-parses to the same tree.
    pub fn display_with(&self, vars: Variables) -> String {
        let mut out = String::new();
        self.write(&mut out, vars);
        out
    }

    fn write(&self, out: &mut String, vars: Variables) {
        let child = |out: &mut String, e: &ExprAst, parens: bool| {
            if parens {
                out.push('(');
            }
            e.write(out, vars);
            if parens {
                out.push(')');
            }
        };
        match self {
            ExprAst::Const(c) => out.push_str(&format!("{c}")),
            ExprAst::Var(i) => out.push_str(&vars.name(*i)),
            ExprAst::Neg(e) => {
                out.push('-');
                child(out, e, e.precedence() < 3);
            }
            ExprAst::Pow(b, n) => {
                child(out, b, b.precedence() < 5);
                out.push_str(&format!("^{n}"));
            }
            ExprAst::Binary(op, l, r) => {
                let p = op.precedence();
                child(out, l, l.precedence() < p);
                out.push(op.symbol());
                child(out, r, r.precedence() <= p);
            }
            ExprAst::Call(f, arg) => {
                out.push_str(f.name());
                child(out, arg, true);
            }
        }
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.max_var().map_or(0, |i| i + 1);
        f.write_str(&self.display_with(Variables::Chart(n)))
    }
}

/// A point-evaluable real function on a chart (or of the curve parameter).
///
/// Cheap to clone; the tree is shared and immutable.
#[derive(Debug, Clone)]
pub struct ScalarField {
    ast: Arc<ExprAst>,
    vars: Variables,
}

impl ScalarField {
    pub fn parse(source: &str, dim: usize) -> Result<Self, ParseError> {
        Self::parse_with(source, Variables::Chart(dim))
    }

    /// Parse a function of the curve parameter `t`.
    pub fn parse_time(source: &str) -> Result<Self, ParseError> {
        Self::parse_with(source, Variables::Time)
    }

    pub fn parse_with(source: &str, vars: Variables) -> Result<Self, ParseError> {
        Ok(Self { ast: Arc::new(parse_with(source, vars)?), vars })
    }

    pub fn constant(value: f64, vars: Variables) -> Self {
        Self { ast: Arc::new(ExprAst::Const(value)), vars }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let expected = self.vars.arity();
        if point.len() != expected {
            return Err(EvalError::Arity { expected, got: point.len() });
        }
        self.ast.eval(point)
    }

    /// Convenience for functions of `t`.
    pub fn eval_at(&self, t: f64) -> Result<f64, EvalError> {
        self.eval(&[t])
    }

    pub fn is_constant(&self) -> bool {
        self.ast.is_constant()
    }

    pub fn ast(&self) -> &ExprAst {
        &self.ast
    }

    pub fn variables(&self) -> Variables {
        self.vars
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.ast.display_with(self.vars))
    }
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.ast == other.ast
    }
}
