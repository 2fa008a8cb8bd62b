//! Small arithmetic expression language for drift and diffusion components.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | x<k> | func '(' expr ')' | 'norm' '(' 'x' ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x1^2`
//! is `-(x1^2)`. There are no conditionals.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Literals are always non-negative; a leading minus is a
/// [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index, written `x1`, `x2`, ...
    Var(usize),
    /// Euclidean norm of the whole state vector, written `norm(x)`.
    Norm,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    ArityMismatch {
        offset: usize,
        name: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("{func} is undefined at {arg}")]
    Domain { func: &'static str, arg: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("coordinate x{} is out of range for a {dim}-dimensional point", index + 1)]
    MissingCoordinate { index: usize, dim: usize },
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// Evaluates at `x`. Never returns a non-finite value.
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => *x.get(*i).ok_or(EvalError::MissingCoordinate {
                index: *i,
                dim: x.len(),
            })?,
            Expr::Norm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(x)?;
                let b = r.eval(x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(EvalError::Domain { func: "^", arg: a });
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call(f, e) => {
                let a = e.eval(x)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(EvalError::Domain { func: "log", arg: a });
                        }
                        a.ln()
                    }
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::Domain { func: "sqrt", arg: a });
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Largest coordinate index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Norm => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.arity(),
            Expr::Bin(_, l, r) => l.arity().max(r.arity()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }

    fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({e})")
        } else {
            write!(f, "{e}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Display for f64 is the shortest string that reparses exactly.
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Norm => f.write_str("norm(x)"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                Expr::write_child(f, e, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                let (lp, rp) = if *op == BinOp::Pow {
                    (l.precedence() < 5, r.precedence() < 3)
                } else {
                    (l.precedence() < p, r.precedence() <= p)
                };
                Expr::write_child(f, l, lp)?;
                if *op == BinOp::Pow {
                    f.write_str("^")?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                Expr::write_child(f, r, rp)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                expected: vec!["number"],
                found: format!("`{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if b"+-*/^(),".contains(&c) {
            out.push((i, Tok::Sym(c as char)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                offset: i,
                expected: vec!["expression"],
                found: format!("`{ch}`"),
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            expected,
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, c: char, name: &'static str) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(vec![name]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect('(', "`(`")?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Sym(',') {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(')', "`)`")?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (offset, tok) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')', "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(offset, name),
            _ => {
                self.pos -= 1;
                Err(self.error(vec!["number", "identifier", "`(`", "`-`"]))
            }
        }
    }

    fn ident(&mut self, offset: usize, name: String) -> Result<Expr, ParseError> {
        if name == "pi" {
            return Ok(Expr::Num(std::f64::consts::PI));
        }
        if name == "norm" {
            if *self.peek() != Tok::Sym('(') {
                return Err(self.error(vec!["`(`"]));
            }
            // norm takes the whole state vector `x`, nothing else.
            self.bump();
            let mut count = 0;
            loop {
                match self.bump() {
                    (_, Tok::Ident(v)) if v == "x" => count += 1,
                    (o, Tok::Ident(v)) => {
                        return Err(ParseError::UnknownIdentifier { offset: o, name: v })
                    }
                    (_, Tok::Sym(')')) if count == 0 => {
                        return Err(ParseError::ArityMismatch {
                            offset,
                            name,
                            expected: 1,
                            found: 0,
                        })
                    }
                    _ => {
                        self.pos -= 1;
                        return Err(self.error(vec!["`x`"]));
                    }
                }
                match self.bump() {
                    (_, Tok::Sym(')')) => break,
                    (_, Tok::Sym(',')) => continue,
                    _ => {
                        self.pos -= 1;
                        return Err(self.error(vec!["`)`", "`,`"]));
                    }
                }
            }
            if count != 1 {
                return Err(ParseError::ArityMismatch {
                    offset,
                    name,
                    expected: 1,
                    found: count,
                });
            }
            return Ok(Expr::Norm);
        }
        if let Some(func) = Func::from_name(&name) {
            let args = self.args()?;
            if args.len() != 1 {
                return Err(ParseError::ArityMismatch {
                    offset,
                    name,
                    expected: 1,
                    found: args.len(),
                });
            }
            let arg = args.into_iter().next().expect("one argument");
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(k) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if k >= 1 && k <= self.dim && !name[1..].starts_with('0') {
                return Ok(Expr::Var(k - 1));
            }
        }
        Err(ParseError::UnknownIdentifier { offset, name })
    }
}

fn parser(src: &str, dim: usize) -> Result<Parser, ParseError> {
    Ok(Parser {
        toks: lex(src)?,
        pos: 0,
        dim,
    })
}

/// Parses a single expression over `x1..x{dim}`.
pub fn parse_expr(src: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = parser(src, dim)?;
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(vec!["operator", "end of input"]));
    }
    Ok(e)
}

/// Parses comma-separated component expressions, e.g. `"-x1, -x2"`.
/// Offsets in errors refer to `src`.
pub fn parse_components(src: &str, dim: usize) -> Result<Vec<Expr>, ParseError> {
    let mut p = parser(src, dim)?;
    let mut out = vec![p.expr()?];
    loop {
        match p.peek() {
            Tok::End => return Ok(out),
            Tok::Sym(',') => {
                p.bump();
                out.push(p.expr()?);
            }
            _ => return Err(p.error(vec!["operator", "`,`", "end of input"])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_basics() {
        let e = parse_expr("x1 - x1^3", 1).unwrap();
        assert_eq!(e.eval(&[1.5]).unwrap(), -1.875);
        let e = parse_expr("-x1", 1).unwrap();
        assert_eq!(e.eval(&[2.0]).unwrap(), -2.0);
        let e = parse_expr("-x1^2", 1).unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0);
        let e = parse_expr("2^3^2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 512.0);
        let e = parse_expr("8 / 4 / 2 - 1 - 1", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), -1.0);
        let e = parse_expr("2^-1", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 0.5);
        let e = parse_expr("1.5e2 + .5", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 150.5);
    }

    #[test]
    fn norm_components() {
        let c = parse_components("-(norm(x)^0.5)*x1, -(norm(x)^0.5)*x2", 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].eval(&[1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(c[1].eval(&[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors_are_reported() {
        let e = parse_expr("log(x1)", 1).unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(EvalError::Domain { func: "log", .. })));
        let e = parse_expr("sqrt(x1)", 1).unwrap();
        assert!(e.eval(&[-1.0]).is_err());
        let e = parse_expr("1/x1", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), Err(EvalError::DivisionByZero));
        let e = parse_expr("x1^0.5", 1).unwrap();
        assert!(e.eval(&[-4.0]).is_err());
        let e = parse_expr("exp(x1)", 1).unwrap();
        assert_eq!(e.eval(&[1000.0]), Err(EvalError::NonFinite));
    }

    #[test]
    fn error_offsets() {
        match parse_expr("x1 + * 2", 1) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match parse_expr("x1 + y", 1) {
            Err(ParseError::UnknownIdentifier { offset, name }) => {
                assert_eq!((offset, name.as_str()), (5, "y"))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_expr("x3", 2),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expr("x0", 2),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        match parse_expr("exp(x1, 2)", 1) {
            Err(ParseError::ArityMismatch { expected, found, .. }) => {
                assert_eq!((expected, found), (1, 2))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_expr("norm(x, x)", 1),
            Err(ParseError::ArityMismatch { .. })
        ));
        match parse_expr("(x1", 1) {
            Err(ParseError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 3);
                assert!(expected.contains(&"`)`"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("x1 $ 2", 1), Err(ParseError::Syntax { offset: 3, .. })));
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        for src in ["x1 - (x2 - 1)", "-(x1 + 1)", "(-x1)^2", "x1^x2^2", "(x1^x2)^2", "-x1^2"] {
            let e = parse_expr(src, 2).unwrap();
            assert_eq!(e.to_string(), src);
        }
    }
}
