//! Expression DSL for embedding coordinates.
//!
//! Parses infix formulas over parameters `t1..tm` and evaluates them as
//! second-order jets (value, gradient, Hessian), so embedding Hessians are
//! exact to machine precision.

use nalgebra::{DMatrix, DVector};
use std::fmt;
use thiserror::Error;

/// Positive root of x^2 - 3x - 1 (the bronze ratio).
pub fn sigma() -> f64 {
    (3.0 + 13.0_f64.sqrt()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree over parameters `t1..tm`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Num(f64),
    Pi,
    Sigma,
    /// 0-based parameter index.
    Param(usize),
    Unary(UnaryOp, Box<ExprAst>),
    Binary(BinOp, Box<ExprAst>, Box<ExprAst>),
    /// Integer power, binds tighter than unary minus.
    Pow(Box<ExprAst>, i32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("parameter t{index} out of range (declared count {count})")]
    ParamOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite result")]
    NonFinite,
}

/// Value with exact first and second directional derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Jet2 {
    pub fn constant(v: f64, m: usize) -> Self {
        Jet2 {
            value: v,
            grad: DVector::zeros(m),
            hess: DMatrix::zeros(m, m),
        }
    }

    pub fn param(i: usize, v: f64, m: usize) -> Self {
        let mut grad = DVector::zeros(m);
        grad[i] = 1.0;
        Jet2 {
            value: v,
            grad,
            hess: DMatrix::zeros(m, m),
        }
    }

    fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Chain rule for a scalar function with derivatives d1, d2 at self.value.
    fn chain(&self, v: f64, d1: f64, d2: f64) -> Jet2 {
        let outer = &self.grad * self.grad.transpose();
        Jet2 {
            value: v,
            grad: &self.grad * d1,
            hess: &self.hess * d1 + outer * d2,
        }
    }

    fn add(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: &self.grad + &o.grad,
            hess: &self.hess + &o.hess,
        }
    }

    fn sub(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - o.value,
            grad: &self.grad - &o.grad,
            hess: &self.hess - &o.hess,
        }
    }

    fn mul(&self, o: &Jet2) -> Jet2 {
        let cross = &self.grad * o.grad.transpose();
        Jet2 {
            value: self.value * o.value,
            grad: &self.grad * o.value + &o.grad * self.value,
            hess: &self.hess * o.value + &o.hess * self.value + &cross + cross.transpose(),
        }
    }

    fn div(&self, o: &Jet2) -> Result<Jet2, EvalError> {
        if o.value == 0.0 {
            return Err(EvalError::Domain("division by zero".into()));
        }
        // self * o^{-1}
        let inv = o.chain(1.0 / o.value, -1.0 / (o.value * o.value), 2.0 / (o.value.powi(3)));
        Ok(self.mul(&inv))
    }

    fn neg(&self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: -&self.grad,
            hess: -&self.hess,
        }
    }

    fn powi(&self, k: i32) -> Result<Jet2, EvalError> {
        match k {
            0 => Ok(Jet2::constant(1.0, self.dim())),
            1 => Ok(self.clone()),
            _ => {
                if k < 0 && self.value == 0.0 {
                    return Err(EvalError::Domain("zero raised to negative power".into()));
                }
                let v = self.value.powi(k);
                let kf = f64::from(k);
                let d1 = kf * self.value.powi(k - 1);
                let d2 = kf * (kf - 1.0) * self.value.powi(k - 2);
                Ok(self.chain(v, d1, d2))
            }
        }
    }

    fn sqrt(&self) -> Result<Jet2, EvalError> {
        if self.value < 0.0 {
            return Err(EvalError::Domain("sqrt of negative value".into()));
        }
        let s = self.value.sqrt();
        Ok(self.chain(s, 0.5 / s, -0.25 / (s * self.value)))
    }
}

/// Evaluate an expression as a second-order jet at parameter point `t`.
pub fn eval_jet2(ast: &ExprAst, t: &[f64]) -> Result<Jet2, EvalError> {
    let m = t.len();
    let jet = eval_rec(ast, t, m)?;
    if !jet.value.is_finite()
        || jet.grad.iter().any(|x| !x.is_finite())
        || jet.hess.iter().any(|x| !x.is_finite())
    {
        return Err(EvalError::NonFinite);
    }
    Ok(jet)
}

fn eval_rec(ast: &ExprAst, t: &[f64], m: usize) -> Result<Jet2, EvalError> {
    match ast {
        ExprAst::Num(v) => Ok(Jet2::constant(*v, m)),
        ExprAst::Pi => Ok(Jet2::constant(std::f64::consts::PI, m)),
        ExprAst::Sigma => Ok(Jet2::constant(sigma(), m)),
        ExprAst::Param(i) => Ok(Jet2::param(*i, t[*i], m)),
        ExprAst::Unary(op, a) => {
            let j = eval_rec(a, t, m)?;
            match op {
                UnaryOp::Neg => Ok(j.neg()),
                UnaryOp::Sin => Ok(j.chain(j.value.sin(), j.value.cos(), -j.value.sin())),
                UnaryOp::Cos => Ok(j.chain(j.value.cos(), -j.value.sin(), -j.value.cos())),
                UnaryOp::Sinh => Ok(j.chain(j.value.sinh(), j.value.cosh(), j.value.sinh())),
                UnaryOp::Cosh => Ok(j.chain(j.value.cosh(), j.value.sinh(), j.value.cosh())),
                UnaryOp::Sqrt => j.sqrt(),
            }
        }
        ExprAst::Binary(op, a, b) => {
            let ja = eval_rec(a, t, m)?;
            let jb = eval_rec(b, t, m)?;
            match op {
                BinOp::Add => Ok(ja.add(&jb)),
                BinOp::Sub => Ok(ja.sub(&jb)),
                BinOp::Mul => Ok(ja.mul(&jb)),
                BinOp::Div => ja.div(&jb),
            }
        }
        ExprAst::Pow(a, k) => eval_rec(a, t, m)?.powi(*k),
    }
}

/// Plain value evaluation (no derivatives).
pub fn eval_value(ast: &ExprAst, t: &[f64]) -> Result<f64, EvalError> {
    Ok(eval_jet2(ast, t)?.value)
}

// ---------------------------------------------------------------------------
// Parsing: standard infix precedence (pow > unary minus > *,/ > +,-), left
// associative, parentheses; function application requires parentheses.
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    param_count: usize,
}

/// Parse a formula over `t1..t{param_count}`.
pub fn parse_expression(text: &str, param_count: usize) -> Result<ExprAst, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        param_count,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ExprError::Syntax {
            pos: p.pos,
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<ExprAst, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ExprAst::Binary(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ExprAst::Binary(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExprAst, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ExprAst::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ExprAst::Binary(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ExprAst, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(ExprAst::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprAst, ExprError> {
        let mut base = self.atom()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            base = ExprAst::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse().map_err(|_| ExprError::Syntax {
            pos: start,
            msg: "expected integer exponent".into(),
        })
    }

    fn atom(&mut self) -> Result<ExprAst, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            None => Err(ExprError::Syntax {
                pos: start,
                msg: "unexpected end of input".into(),
            }),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ExprError::Syntax {
                        pos: self.pos,
                        msg: "expected `)`".into(),
                    });
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || *c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(ExprError::Syntax {
                pos: start,
                msg: format!("unexpected character `{}`", *c as char),
            }),
        }
    }

    fn number(&mut self) -> Result<ExprAst, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || self.src[self.pos] == b'.'
                || self.src[self.pos] == b'e'
                || self.src[self.pos] == b'E'
                || ((self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
                    && self.pos > start
                    && (self.src[self.pos - 1] == b'e' || self.src[self.pos - 1] == b'E')))
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(ExprAst::Num)
            .map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("invalid number `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<ExprAst, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        match name.as_str() {
            "pi" => Ok(ExprAst::Pi),
            "sigma" => Ok(ExprAst::Sigma),
            "sin" | "cos" | "sinh" | "cosh" | "sqrt" => {
                let op = match name.as_str() {
                    "sin" => UnaryOp::Sin,
                    "cos" => UnaryOp::Cos,
                    "sinh" => UnaryOp::Sinh,
                    "cosh" => UnaryOp::Cosh,
                    _ => UnaryOp::Sqrt,
                };
                if self.peek() != Some(b'(') {
                    return Err(ExprError::Syntax {
                        pos: self.pos,
                        msg: format!("function `{name}` requires parentheses"),
                    });
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ExprError::Syntax {
                        pos: self.pos,
                        msg: "expected `)`".into(),
                    });
                }
                self.pos += 1;
                Ok(ExprAst::Unary(op, Box::new(arg)))
            }
            _ => {
                if let Some(rest) = name.strip_prefix('t') {
                    if let Ok(idx) = rest.parse::<usize>() {
                        if idx == 0 || idx > self.param_count {
                            return Err(ExprError::ParamOutOfRange {
                                index: idx,
                                count: self.param_count,
                            });
                        }
                        return Ok(ExprAst::Param(idx - 1));
                    }
                }
                Err(ExprError::UnknownIdentifier { name, pos: start })
            }
        }
    }
}

impl fmt::Display for ExprAst {
    /// Fully parenthesized form.  For trees produced by the parser,
    /// `parse(format(ast))` yields an identical tree; a hand-built negative
    /// `Num` literal reparses as an explicit negation instead.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Num(v) => write!(f, "{v:?}"),
            ExprAst::Pi => write!(f, "pi"),
            ExprAst::Sigma => write!(f, "sigma"),
            ExprAst::Param(i) => write!(f, "t{}", i + 1),
            ExprAst::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            ExprAst::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Sinh => "sinh",
                    UnaryOp::Cosh => "cosh",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            ExprAst::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
            ExprAst::Pow(a, k) => write!(f, "({a})^{k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(text: &str, t: &[f64]) -> Jet2 {
        let ast = parse_expression(text, t.len()).unwrap();
        eval_jet2(&ast, t).unwrap()
    }

    #[test]
    fn parses_product_root() {
        let ast = parse_expression("sin(t1)*cosh(t2)", 2).unwrap();
        assert!(matches!(ast, ExprAst::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn sigma_is_positive_root() {
        let v = eval_value(&parse_expression("sigma*t1", 1).unwrap(), &[1.0]).unwrap();
        assert!((v - 3.302775637731995).abs() < 1e-12);
        // root of x^2 - 3x - 1
        assert!((v * v - 3.0 * v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_out_of_range() {
        let err = parse_expression("t3", 2).unwrap_err();
        assert!(matches!(err, ExprError::ParamOutOfRange { index: 3, count: 2 }));
    }

    #[test]
    fn jet_sin_cosh_at_origin() {
        let j = jet("sin(t1)*cosh(t2)", &[0.0, 0.0]);
        assert!(j.value.abs() < 1e-15);
        assert!((j.grad[0] - 1.0).abs() < 1e-15);
        assert!(j.grad[1].abs() < 1e-15);
        assert!(j.hess.amax() < 1e-15);
    }

    #[test]
    fn jet_constant() {
        let j = jet("3", &[0.7, -2.1]);
        assert_eq!(j.value, 3.0);
        assert_eq!(j.grad.amax(), 0.0);
        assert_eq!(j.hess.amax(), 0.0);
    }

    #[test]
    fn jet_square() {
        let j = jet("t1*t1", &[2.0]);
        assert_eq!(j.value, 4.0);
        assert_eq!(j.grad[0], 4.0);
        assert_eq!(j.hess[(0, 0)], 2.0);
    }

    #[test]
    fn pow_matches_product() {
        let a = jet("t1^3", &[1.3]);
        let b = jet("t1*t1*t1", &[1.3]);
        assert!((a.value - b.value).abs() < 1e-12);
        assert!((a.grad[0] - b.grad[0]).abs() < 1e-12);
        assert!((a.hess[(0, 0)] - b.hess[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn sqrt_negative_is_domain_error() {
        let ast = parse_expression("sqrt(t1)", 1).unwrap();
        assert!(matches!(eval_jet2(&ast, &[-1.0]), Err(EvalError::Domain(_))));
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            parse_expression("foo(t1)", 1),
            Err(ExprError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn precedence_neg_vs_pow() {
        // pow binds tighter than unary minus: -t1^2 == -(t1^2)
        let j = jet("-t1^2", &[3.0]);
        assert_eq!(j.value, -9.0);
    }
}
