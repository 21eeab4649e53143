//! Scalar expression language for time-dependent coefficients.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term  (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          // right-associative; binds tighter than unary '-'
//! atom   := number | 't' | 'pi' | 'e' | name '(' expr ')' | '(' expr ')'
//! name   := sin cos tan exp log sqrt abs sinh cosh
//! number := digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
//! ```
//!
//! So `-2^2` evaluates to `-4` and `2^3^2` to `512`. Evaluation is eager
//! `f64` arithmetic; any non-finite intermediate (division by zero, `log` of a
//! non-positive value, overflow) is reported as a [`DomainError`].

use std::fmt;

/// Parse failure: byte offset into the source, what was found, what was legal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub found: String,
    pub expected: Vec<&'static str>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at byte {}: found {}, expected {}",
            self.offset,
            self.found,
            self.expected.join(" or ")
        )
    }
}

impl std::error::Error for ParseError {}

/// Evaluation produced a non-finite value at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainError {
    pub t: f64,
    pub what: String,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "domain error at t = {}: {}", self.t, self.what)
    }
}

impl std::error::Error for DomainError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sinh,
    Cosh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tan" => Some(Func::Tan),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            "sinh" => Some(Func::Sinh),
            "cosh" => Some(Func::Cosh),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Num(f64),
    Time,
    Pi,
    Euler,
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

impl Ast {
    /// Printing precedence: higher binds tighter.
    fn prec(&self) -> u8 {
        match self {
            Ast::Add(..) | Ast::Sub(..) => 1,
            Ast::Mul(..) | Ast::Div(..) => 2,
            Ast::Neg(..) => 3,
            Ast::Pow(..) => 4,
            _ => 5,
        }
    }

    fn eval(&self, t: f64) -> Result<f64, DomainError> {
        let bad = |what: String| DomainError { t, what };
        let v = match self {
            Ast::Num(v) => *v,
            Ast::Time => t,
            Ast::Pi => std::f64::consts::PI,
            Ast::Euler => std::f64::consts::E,
            Ast::Neg(a) => -a.eval(t)?,
            Ast::Add(a, b) => a.eval(t)? + b.eval(t)?,
            Ast::Sub(a, b) => a.eval(t)? - b.eval(t)?,
            Ast::Mul(a, b) => a.eval(t)? * b.eval(t)?,
            Ast::Div(a, b) => {
                let d = b.eval(t)?;
                if d == 0.0 {
                    return Err(bad("division by zero".into()));
                }
                a.eval(t)? / d
            }
            Ast::Pow(a, b) => a.eval(t)?.powf(b.eval(t)?),
            Ast::Call(f, a) => {
                let x = a.eval(t)?;
                match f {
                    Func::Log if x <= 0.0 => {
                        return Err(bad(format!("log of non-positive value {x}")))
                    }
                    Func::Sqrt if x < 0.0 => {
                        return Err(bad(format!("sqrt of negative value {x}")))
                    }
                    _ => {}
                }
                f.apply(x)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad(format!("non-finite result in {self}")))
        }
    }
}

/// Precedence-aware printer. Left children of left-associative operators keep
/// their own precedence; right children need strictly higher precedence. `^`
/// is right-associative and only accepts bare atoms on the left. `-x` prints
/// parentheses around sums and products so the output reparses to the same tree.
impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, a: &Ast, min: u8) -> fmt::Result {
            if a.prec() < min {
                write!(f, "({a})")
            } else {
                write!(f, "{a}")
            }
        }
        match self {
            Ast::Num(v) => write!(f, "{v}"),
            Ast::Time => write!(f, "t"),
            Ast::Pi => write!(f, "pi"),
            Ast::Euler => write!(f, "e"),
            Ast::Neg(a) => {
                write!(f, "-")?;
                child(f, a, 3)
            }
            Ast::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                child(f, b, 2)
            }
            Ast::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            Ast::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 3)
            }
            Ast::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 3)
            }
            Ast::Pow(a, b) => {
                child(f, a, 5)?;
                write!(f, "^")?;
                child(f, b, 3)
            }
            Ast::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn describe_here(&self) -> String {
        match self.src.get(self.pos) {
            None => "end of input".to_string(),
            Some(&b) => format!("'{}'", b as char),
        }
    }

    fn err(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError {
            offset: self.pos,
            found: self.describe_here(),
            expected,
        }
    }

    fn expr(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Ast::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    Err(self.err(vec!["')'"]))
                }
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            _ => Err(self.err(vec!["number", "'t'", "'pi'", "'e'", "function", "'('", "'-'"])),
        }
    }

    fn number(&mut self) -> Result<Ast, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            if self.pos + 1 >= self.src.len() || !self.src[self.pos + 1].is_ascii_digit() {
                self.pos += 1;
                return Err(self.err(vec!["digit after decimal point"]));
            }
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        // Exponent part: only consumed when a digit actually follows, so that
        // "2e" stays "2" followed by the identifier "e".
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let mut probe = self.pos + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Ast::Num(v)),
            _ => Err(ParseError {
                offset: start,
                found: format!("'{text}'"),
                expected: vec!["finite number literal"],
            }),
        }
    }

    fn name(&mut self) -> Result<Ast, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match word {
            "t" => Ok(Ast::Time),
            "pi" => Ok(Ast::Pi),
            "e" => Ok(Ast::Euler),
            _ => {
                if let Some(func) = Func::from_name(word) {
                    if self.peek() == Some(b'(') {
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() == Some(b')') {
                            self.pos += 1;
                            Ok(Ast::Call(func, Box::new(arg)))
                        } else {
                            Err(self.err(vec!["')'"]))
                        }
                    } else {
                        Err(self.err(vec!["'(' after function name"]))
                    }
                } else {
                    Err(ParseError {
                        offset: start,
                        found: format!("'{word}'"),
                        expected: vec!["'t'", "'pi'", "'e'", "known function name"],
                    })
                }
            }
        }
    }
}

/// A parsed, immutable scalar function of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    ast: Ast,
}

impl ScalarExpr {
    /// Parse an expression; errors carry the byte offset of the offending token.
    pub fn parse(text: &str) -> Result<ScalarExpr, ParseError> {
        let mut p = Parser::new(text);
        let ast = p.expr()?;
        if p.peek().is_some() {
            return Err(p.err(vec!["operator", "end of input"]));
        }
        Ok(ScalarExpr { ast })
    }

    /// A constant expression.
    pub fn constant(v: f64) -> ScalarExpr {
        assert!(v.is_finite(), "constants must be finite");
        ScalarExpr { ast: Ast::Num(v) }
    }

    /// Evaluate at time `t`.
    pub fn eval(&self, t: f64) -> Result<f64, DomainError> {
        if !t.is_finite() {
            return Err(DomainError {
                t,
                what: "evaluation time is not finite".into(),
            });
        }
        self.ast.eval(t)
    }

    /// Central finite-difference derivative with step `1e-6·max(1, |t|)`.
    pub fn derivative_fd(&self, t: f64) -> Result<f64, DomainError> {
        let h = 1e-6 * t.abs().max(1.0);
        let hi = self.eval(t + h)?;
        let lo = self.eval(t - h)?;
        Ok((hi - lo) / (2.0 * h))
    }

    /// True when the expression is the literal constant `v`.
    pub fn is_constant(&self, v: f64) -> bool {
        matches!(self.ast, Ast::Num(c) if c == v)
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ast)
    }
}

/// Convenience entry point mirroring [`ScalarExpr::parse`].
pub fn parse_expr(text: &str) -> Result<ScalarExpr, ParseError> {
    ScalarExpr::parse(text)
}
