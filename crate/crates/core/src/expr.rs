//! Closed-form scalar expressions of time.
//!
//! This is the small DSL used for matrix entries and perturbation envelopes
//! in system definitions. The grammar is fixed and closed: real literals,
//! the time variable `t` (plus state symbols `x1..xn` where a caller opts
//! in), unary minus, `+ - * /`, powers by integer literal, and the function
//! set `sin cos exp abs sqrt`. Keeping the grammar closed means the symbolic
//! derivative is total over everything a config file can express.
//!
//! Expressions are immutable after parsing and evaluation is pure, so shared
//! concurrent reads are safe.

use std::fmt;

use thiserror::Error;

/// Errors from parsing or evaluating an expression.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    /// Lexical or syntactic error, pinpointing the byte offset and what was
    /// expected there.
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    /// An identifier other than `t`, an allowed state symbol, or a function
    /// name from the closed set.
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    /// Division by zero, square root of a negative number, or a zero base
    /// raised to a negative power.
    #[error("domain error in {op} at t = {t}")]
    Domain { op: &'static str, t: f64 },
    /// A state symbol was evaluated without a state vector.
    #[error("state symbol x{} evaluated without a state vector", index + 1)]
    MissingState { index: usize },
}

/// Abstract syntax tree of a scalar expression of time.
///
/// `State(i)` is the i-th state symbol `x{i+1}`; it only appears when the
/// expression was parsed with [`parse_with_state`] and is treated as a
/// constant by [`Expr::differentiate`] (state symbols never occur in matrix
/// entries, which are validated to be time-only).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    State(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
}

/// Parse an expression over `t` only.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    Parser::new(source, 0)?.parse_full()
}

/// Parse an expression over `t` and the state symbols `x1..x{dim}`.
pub fn parse_with_state(source: &str, dim: usize) -> Result<Expr, ExprError> {
    Parser::new(source, dim)?.parse_full()
}

impl Expr {
    /// Evaluate at time `t`. Errors if the tree contains state symbols.
    pub fn eval(&self, t: f64) -> Result<f64, ExprError> {
        self.eval_impl(t, None)
    }

    /// Evaluate at time `t` with the state vector bound to `x1..xn`.
    pub fn eval_with_state(&self, t: f64, state: &[f64]) -> Result<f64, ExprError> {
        self.eval_impl(t, Some(state))
    }

    fn eval_impl(&self, t: f64, state: Option<&[f64]>) -> Result<f64, ExprError> {
        use Expr::*;
        Ok(match self {
            Const(c) => *c,
            Time => t,
            State(i) => match state {
                Some(x) if *i < x.len() => x[*i],
                _ => return Err(ExprError::MissingState { index: *i }),
            },
            Neg(a) => -a.eval_impl(t, state)?,
            Add(a, b) => a.eval_impl(t, state)? + b.eval_impl(t, state)?,
            Sub(a, b) => a.eval_impl(t, state)? - b.eval_impl(t, state)?,
            Mul(a, b) => a.eval_impl(t, state)? * b.eval_impl(t, state)?,
            Div(a, b) => {
                let den = b.eval_impl(t, state)?;
                if den == 0.0 {
                    return Err(ExprError::Domain { op: "division", t });
                }
                a.eval_impl(t, state)? / den
            }
            Pow(a, k) => {
                let base = a.eval_impl(t, state)?;
                if base == 0.0 && *k < 0 {
                    return Err(ExprError::Domain { op: "negative power of zero", t });
                }
                base.powi(*k)
            }
            Sin(a) => a.eval_impl(t, state)?.sin(),
            Cos(a) => a.eval_impl(t, state)?.cos(),
            Exp(a) => a.eval_impl(t, state)?.exp(),
            Abs(a) => a.eval_impl(t, state)?.abs(),
            Sqrt(a) => {
                let v = a.eval_impl(t, state)?;
                if v < 0.0 {
                    return Err(ExprError::Domain { op: "sqrt of negative", t });
                }
                v.sqrt()
            }
        })
    }

    /// Exact symbolic derivative with respect to `t`.
    ///
    /// `abs` differentiates to `(u / abs(u)) * u'`, which is the sign factor
    /// and stays inside the closed grammar; it is valid away from zeros of
    /// the argument, and callers must declare sign changes of `abs` arguments
    /// as segment boundaries. State symbols differentiate to zero.
    pub fn differentiate(&self) -> Expr {
        use Expr::*;
        let d = match self {
            Const(_) | State(_) => Const(0.0),
            Time => Const(1.0),
            Neg(a) => Neg(Box::new(a.differentiate())),
            Add(a, b) => Add(Box::new(a.differentiate()), Box::new(b.differentiate())),
            Sub(a, b) => Sub(Box::new(a.differentiate()), Box::new(b.differentiate())),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.differentiate()), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.differentiate()))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.differentiate()), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.differentiate()))),
                )),
                Box::new(Pow(b.clone(), 2)),
            ),
            Pow(a, k) => Mul(
                Box::new(Mul(Box::new(Const(f64::from(*k))), Box::new(Pow(a.clone(), k - 1)))),
                Box::new(a.differentiate()),
            ),
            Sin(a) => Mul(Box::new(Cos(a.clone())), Box::new(a.differentiate())),
            Cos(a) => Neg(Box::new(Mul(Box::new(Sin(a.clone())), Box::new(a.differentiate())))),
            Exp(a) => Mul(Box::new(Exp(a.clone())), Box::new(a.differentiate())),
            Abs(a) => Mul(
                Box::new(Div(a.clone(), Box::new(Abs(a.clone())))),
                Box::new(a.differentiate()),
            ),
            Sqrt(a) => Div(
                Box::new(a.differentiate()),
                Box::new(Mul(Box::new(Const(2.0)), Box::new(Sqrt(a.clone())))),
            ),
        };
        d.fold()
    }

    /// Constant folding and identity elimination.
    ///
    /// Folds only adjacent operations, never reassociating across `+`/`-`,
    /// so the floating-point evaluation order of the surviving tree is
    /// unchanged.
    pub fn fold(&self) -> Expr {
        use Expr::*;
        let folded = match self {
            Const(_) | Time | State(_) => return self.clone(),
            Neg(a) => Neg(Box::new(a.fold())),
            Add(a, b) => Add(Box::new(a.fold()), Box::new(b.fold())),
            Sub(a, b) => Sub(Box::new(a.fold()), Box::new(b.fold())),
            Mul(a, b) => Mul(Box::new(a.fold()), Box::new(b.fold())),
            Div(a, b) => Div(Box::new(a.fold()), Box::new(b.fold())),
            Pow(a, k) => Pow(Box::new(a.fold()), *k),
            Sin(a) => Sin(Box::new(a.fold())),
            Cos(a) => Cos(Box::new(a.fold())),
            Exp(a) => Exp(Box::new(a.fold())),
            Abs(a) => Abs(Box::new(a.fold())),
            Sqrt(a) => Sqrt(Box::new(a.fold())),
        };
        match folded {
            Neg(a) => match *a {
                Const(c) => Const(-c),
                other => Neg(Box::new(other)),
            },
            Add(a, b) => match (*a, *b) {
                (Const(x), Const(y)) => Const(x + y),
                (Const(z), e) | (e, Const(z)) if z == 0.0 => e,
                (a, b) => Add(Box::new(a), Box::new(b)),
            },
            Sub(a, b) => match (*a, *b) {
                (Const(x), Const(y)) => Const(x - y),
                (e, Const(z)) if z == 0.0 => e,
                (Const(z), e) if z == 0.0 => Neg(Box::new(e)),
                (a, b) => Sub(Box::new(a), Box::new(b)),
            },
            Mul(a, b) => match (*a, *b) {
                (Const(x), Const(y)) => Const(x * y),
                (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
                (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
                (a, b) => Mul(Box::new(a), Box::new(b)),
            },
            Div(a, b) => match (*a, *b) {
                (Const(x), Const(y)) if y != 0.0 => Const(x / y),
                (e, Const(o)) if o == 1.0 => e,
                (a, b) => Div(Box::new(a), Box::new(b)),
            },
            Pow(a, k) => match (*a, k) {
                (Const(x), k) if !(x == 0.0 && k < 0) => Const(x.powi(k)),
                (_, 0) => Const(1.0),
                (e, 1) => e,
                (a, k) => Pow(Box::new(a), k),
            },
            other => other,
        }
    }

    /// True if the tree mentions any state symbol.
    pub fn contains_state(&self) -> bool {
        use Expr::*;
        match self {
            Const(_) | Time => false,
            State(_) => true,
            Neg(a) | Pow(a, _) | Sin(a) | Cos(a) | Exp(a) | Abs(a) | Sqrt(a) => a.contains_state(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                a.contains_state() || b.contains_state()
            }
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized printing; `parse(print(e))` evaluates like `e`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Const(c) => write!(f, "{c}"),
            Time => write!(f, "t"),
            State(i) => write!(f, "x{}", i + 1),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, k) => write!(f, "({a})^{k}"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Abs(a) => write!(f, "abs({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("number `{v}`"),
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::Slash => "`/`".into(),
            Token::Caret => "`^`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
        }
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end_offset: usize,
    state_dim: usize,
}

impl Parser {
    fn new(source: &str, state_dim: usize) -> Result<Self, ExprError> {
        if source.trim().is_empty() {
            return Err(ExprError::Parse { offset: 0, message: "empty expression".into() });
        }
        let tokens = tokenize(source)?;
        Ok(Parser { tokens, pos: 0, end_offset: source.len(), state_dim })
    }

    fn parse_full(mut self) -> Result<Expr, ExprError> {
        let e = self.parse_sum()?;
        if let Some((off, tok)) = self.tokens.get(self.pos) {
            return Err(ExprError::Parse {
                offset: *off,
                message: format!("expected end of input, found {}", tok.describe()),
            });
        }
        Ok(e)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end_offset, |(o, _)| *o)
    }

    fn advance(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Token, what: &str) -> Result<(), ExprError> {
        match self.advance() {
            Some((_, ref tok)) if tok == want => Ok(()),
            Some((off, tok)) => Err(ExprError::Parse {
                offset: off,
                message: format!("expected {what}, found {}", tok.describe()),
            }),
            None => Err(ExprError::Parse {
                offset: self.end_offset,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn parse_sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ExprError> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            let negate = if matches!(self.peek(), Some(Token::Minus)) {
                self.pos += 1;
                true
            } else {
                false
            };
            let off = self.offset();
            match self.advance() {
                Some((_, Token::Num(v))) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let mut k = v as i32;
                    if negate {
                        k = -k;
                    }
                    return Ok(Expr::Pow(Box::new(base), k));
                }
                Some((_, tok)) => {
                    return Err(ExprError::Parse {
                        offset: off,
                        message: format!("expected integer exponent, found {}", tok.describe()),
                    })
                }
                None => {
                    return Err(ExprError::Parse {
                        offset: self.end_offset,
                        message: "expected integer exponent, found end of input".into(),
                    })
                }
            }
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr, ExprError> {
        let off = self.offset();
        match self.advance() {
            Some((_, Token::Num(v))) => Ok(Expr::Const(v)),
            Some((_, Token::LParen)) => {
                let inner = self.parse_sum()?;
                self.expect(&Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some((id_off, Token::Ident(name))) => self.resolve_ident(&name, id_off),
            Some((o, tok)) => Err(ExprError::Parse {
                offset: o,
                message: format!(
                    "expected a number, `t`, a function call or `(`, found {}",
                    tok.describe()
                ),
            }),
            None => Err(ExprError::Parse {
                offset: off,
                message: "expected a number, `t`, a function call or `(`, found end of input"
                    .into(),
            }),
        }
    }

    fn resolve_ident(&mut self, name: &str, off: usize) -> Result<Expr, ExprError> {
        let func: Option<fn(Box<Expr>) -> Expr> = match name {
            "sin" => Some(Expr::Sin),
            "cos" => Some(Expr::Cos),
            "exp" => Some(Expr::Exp),
            "abs" => Some(Expr::Abs),
            "sqrt" => Some(Expr::Sqrt),
            _ => None,
        };
        if let Some(ctor) = func {
            self.expect(&Token::LParen, "`(` after function name")?;
            let arg = self.parse_sum()?;
            self.expect(&Token::RParen, "`)`")?;
            return Ok(ctor(Box::new(arg)));
        }
        if name == "t" {
            return Ok(Expr::Time);
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= 1 && k <= self.state_dim {
                    return Ok(Expr::State(k - 1));
                }
            }
        }
        Err(ExprError::UnknownIdentifier { name: name.to_string(), offset: off })
    }
}

fn tokenize(source: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((i, Token::Plus));
                i += 1;
            }
            '-' => {
                out.push((i, Token::Minus));
                i += 1;
            }
            '*' => {
                out.push((i, Token::Star));
                i += 1;
            }
            '/' => {
                out.push((i, Token::Slash));
                i += 1;
            }
            '^' => {
                out.push((i, Token::Caret));
                i += 1;
            }
            '(' => {
                out.push((i, Token::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Token::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // optional exponent part
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &source[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Parse {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((start, Token::Num(value)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push((start, Token::Ident(source[start..i].to_string())));
            }
            other => {
                return Err(ExprError::Parse {
                    offset: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}
