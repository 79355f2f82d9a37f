//! Small analytic-expression language for problem data.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | variable | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-x1^2`
//! is `-(x1^2)` and `2^3^2` is `2^9`. Variables are `x1`, `x2` and, for cost
//! integrands, `y` and `yd`.

use std::fmt;

use thiserror::Error;

use crate::mesh::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    /// `pos` is the 1-based byte position of the offending character.
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier '{name}' at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("{func} is undefined at (x1, x2) = ({x1}, {x2})")]
    Domain { func: &'static str, x1: f64, x2: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X1,
    X2,
    Y,
    Yd,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::Y => "y",
            Var::Yd => "yd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn binary(self) -> bool {
        matches!(self, Func::Min | Func::Max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values bound to the expression variables.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Env {
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
    pub yd: f64,
}

impl Env {
    pub fn at(p: Point) -> Self {
        Self { x1: p[0], x2: p[1], ..Self::default() }
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        p.skip_ws();
        if p.pos == p.src.len() {
            return Err(ExprError::Syntax { pos: 1, msg: "empty expression".into() });
        }
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Evaluates at a point with `y = yd = 0`.
    pub fn eval(&self, p: Point) -> Result<f64, ExprError> {
        self.eval_env(&Env::at(p))
    }

    pub fn eval_env(&self, env: &Env) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => match v {
                Var::X1 => env.x1,
                Var::X2 => env.x2,
                Var::Y => env.y,
                Var::Yd => env.yd,
            },
            Expr::Neg(e) => -e.eval_env(env)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_env(env)?, b.eval_env(env)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b).ok_or(ExprError::Domain { func: "^", x1: env.x1, x2: env.x2 })?,
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_env(env)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::Domain { func: "sqrt", x1: env.x1, x2: env.x2 });
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].eval_env(env)?),
                    Func::Max => a.max(args[1].eval_env(env)?),
                }
            }
        })
    }

    /// Variables occurring in the expression, sorted.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }
}

fn pow(a: f64, b: f64) -> Option<f64> {
    if b.fract() == 0.0 && b.abs() <= 16.0 {
        return Some(a.powi(b as i32));
    }
    let v = a.powf(b);
    (!v.is_nan() || a.is_nan() || b.is_nan()).then_some(v)
}

impl std::str::FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

/// Fully parenthesized output that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ExprError {
        ExprError::Syntax { pos: self.pos + 1, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ExprError::Syntax { pos: start + 1, msg: format!("invalid number '{text}'") })
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let var = match name {
            "x1" => Some(Var::X1),
            "x2" => Some(Var::X2),
            "y" => Some(Var::Y),
            "yd" => Some(Var::Yd),
            _ => None,
        };
        if let Some(v) = var {
            return Ok(Expr::Var(v));
        }
        if name == "pi" {
            return Ok(Expr::Num(std::f64::consts::PI));
        }
        let Some(func) = Func::lookup(name) else {
            return Err(ExprError::UnknownIdentifier { name: name.to_string(), pos: start + 1 });
        };
        if !self.eat(b'(') {
            return Err(self.error("expected '(' after function name"));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.error("expected ')' or ','"));
        }
        let want = if func.binary() { 2 } else { 1 };
        if args.len() != want {
            return Err(ExprError::Syntax {
                pos: start + 1,
                msg: format!("{} takes {want} argument(s), got {}", func.name(), args.len()),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x1: f64, x2: f64) -> f64 {
        Expr::parse(s).unwrap().eval([x1, x2]).unwrap()
    }

    #[test]
    fn closed_form_data() {
        assert_eq!(ev("-(x1-0.5)^2 - (x2-0.5)^2 + 1/16", 0.5, 0.5), 0.0625);
        assert_eq!(ev("x1", 3.0, 7.0), 3.0);
        assert_eq!(ev("-x1^2-x2^2+1", 0.0, 0.0), 1.0);
        assert_eq!(ev("4", 1.2, -0.3), 4.0);
        assert_eq!(ev("x1^2+x2^2-1", 1.0, 0.0), 0.0);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("-x1^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("1-2-3", 0.0, 0.0), -4.0);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev("2*3^2", 0.0, 0.0), 18.0);
        assert_eq!(ev("max(x1, x2) + min(1, 2e-1)", 1.0, 4.0), 4.2);
        assert!((ev("cos(pi)", 0.0, 0.0) + 1.0).abs() < 1e-15);
        assert_eq!(ev("1.5e1 + .5", 0.0, 0.0), 15.5);
    }

    #[test]
    fn errors() {
        assert_eq!(Expr::parse("min(x1,)").unwrap_err(), ExprError::Syntax { pos: 8, msg: "unexpected character".into() });
        assert!(matches!(Expr::parse("foo + 1"), Err(ExprError::UnknownIdentifier { pos: 1, .. })));
        assert!(matches!(Expr::parse(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("(x1"), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("sin(1, 2)"), Err(ExprError::Syntax { .. })));
        let e = Expr::parse("sqrt(x1)").unwrap();
        assert_eq!(e.eval([-1.0, 2.0]).unwrap_err(), ExprError::Domain { func: "sqrt", x1: -1.0, x2: 2.0 });
    }

    #[test]
    fn variables_and_env() {
        let j = Expr::parse("(y-yd)^2").unwrap();
        assert_eq!(j.variables(), vec![Var::Y, Var::Yd]);
        let env = Env { x1: 0.0, x2: 0.0, y: 3.0, yd: 1.0 };
        assert_eq!(j.eval_env(&env).unwrap(), 4.0);
    }

    #[test]
    fn print_parse_round_trip() {
        for s in ["-(x1-0.5)^2 - (x2-0.5)^2 + 1/16", "max(sqrt(x1^2+x2^2)-2.5, 0.5-sqrt((x1+1)^2+(x2+1)^2))", "2^-x1^2"] {
            let e = Expr::parse(s).unwrap();
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
        }
    }
}
