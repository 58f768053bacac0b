//! Analytic expressions over chart coordinates `t1..tn`.
//!
//! Expressions are immutable trees with shared subtrees. The arithmetic
//! operators on [`Expr`] fold constants and drop additive and
//! multiplicative identities; the parser keeps the literal structure so
//! that printing and reparsing give back the same tree.

mod parse;
mod tape;

use std::cell::RefCell;
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

pub use parse::{parse, parse_with_dim, ParseError};
pub use tape::Tape;

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Runs `f` with this thread's tape register file.
pub(crate) fn with_scratch<R>(f: impl FnOnce(&mut Vec<f64>) -> R) -> R {
    SCRATCH.with(|s| f(&mut s.borrow_mut()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Exp => Ok(x.exp()),
            Func::Sqrt if x < 0.0 => Err(EvalError::SqrtOfNegative(x)),
            Func::Sqrt => Ok(x.sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based coordinate index; printed as `t{i+1}`.
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Call(Func, Expr),
}

#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtOfNegative(f64),
    #[error("variable t{0} is not bound (only {1} coordinates given)")]
    UnboundVariable(usize, usize),
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    fn raw(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn constant(c: f64) -> Expr {
        Expr::raw(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    /// Coordinate `t{i+1}`.
    pub fn var(i: usize) -> Expr {
        Expr::raw(Node::Var(i))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn powi(&self, k: i32) -> Expr {
        match k {
            0 => return Expr::one(),
            1 => return self.clone(),
            _ => {}
        }
        if let Some(c) = self.as_const() {
            let v = c.powi(k);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr::raw(Node::Pow(self.clone(), k))
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        if let Some(c) = arg.as_const() {
            if let Ok(v) = f.apply(c) {
                if v.is_finite() {
                    return Expr::constant(v);
                }
            }
        }
        Expr::raw(Node::Call(f, arg))
    }

    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self.clone())
    }

    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self.clone())
    }

    pub fn exp(&self) -> Expr {
        Expr::call(Func::Exp, self.clone())
    }

    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self.clone())
    }

    /// Largest variable index used plus one.
    pub fn arity(&self) -> usize {
        match self.node() {
            Node::Const(_) => 0,
            Node::Var(i) => i + 1,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.arity(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    pub fn eval(&self, t: &[f64]) -> Result<f64, EvalError> {
        Ok(match self.node() {
            Node::Const(c) => *c,
            Node::Var(i) => *t.get(*i).ok_or(EvalError::UnboundVariable(i + 1, t.len()))?,
            Node::Neg(a) => -a.eval(t)?,
            Node::Add(a, b) => a.eval(t)? + b.eval(t)?,
            Node::Sub(a, b) => a.eval(t)? - b.eval(t)?,
            Node::Mul(a, b) => a.eval(t)? * b.eval(t)?,
            Node::Div(a, b) => {
                let d = b.eval(t)?;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(t)? / d
            }
            Node::Pow(a, k) => {
                let base = a.eval(t)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                base.powi(*k)
            }
            Node::Call(f, a) => f.apply(a.eval(t)?)?,
        })
    }

    /// Symbolic partial derivative with respect to coordinate `i` (zero-based).
    pub fn derivative(&self, i: usize) -> Expr {
        match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(j) if *j == i => Expr::one(),
            Node::Var(_) => Expr::zero(),
            Node::Neg(a) => -a.derivative(i),
            Node::Add(a, b) => a.derivative(i) + b.derivative(i),
            Node::Sub(a, b) => a.derivative(i) - b.derivative(i),
            Node::Mul(a, b) => a.derivative(i) * b.clone() + a.clone() * b.derivative(i),
            Node::Div(a, b) => {
                let da = a.derivative(i);
                let db = b.derivative(i);
                if db.is_zero() {
                    da / b.clone()
                } else {
                    (da * b.clone() - a.clone() * db) / b.powi(2)
                }
            }
            Node::Pow(a, k) => Expr::constant(*k as f64) * a.powi(k - 1) * a.derivative(i),
            Node::Call(f, a) => {
                let da = a.derivative(i);
                if da.is_zero() {
                    return Expr::zero();
                }
                let outer = match f {
                    Func::Sin => a.cos(),
                    Func::Cos => -a.sin(),
                    Func::Exp => self.clone(),
                    Func::Sqrt => Expr::constant(0.5) / self.clone(),
                };
                outer * da
            }
        }
    }

    pub fn gradient(&self, n: usize) -> Vec<Expr> {
        (0..n).map(|i| self.derivative(i)).collect()
    }

    /// Substitutes expressions for the coordinates.
    pub fn substitute(&self, vars: &[Expr]) -> Expr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(i) => vars[*i].clone(),
            Node::Neg(a) => -a.substitute(vars),
            Node::Add(a, b) => a.substitute(vars) + b.substitute(vars),
            Node::Sub(a, b) => a.substitute(vars) - b.substitute(vars),
            Node::Mul(a, b) => a.substitute(vars) * b.substitute(vars),
            Node::Div(a, b) => a.substitute(vars) / b.substitute(vars),
            Node::Pow(a, k) => a.substitute(vars).powi(*k),
            Node::Call(f, a) => Expr::call(*f, a.substitute(vars)),
        }
    }

    /// Replaces every subtree by its simplified form using the smart
    /// constructors. Idempotent.
    pub fn simplify(&self) -> Expr {
        let vars: Vec<Expr> = (0..self.arity()).map(Expr::var).collect();
        self.substitute(&vars)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(a) => a.clone(),
            _ => Expr::raw(Node::Neg(self)),
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Expr::constant(a + b);
        }
        if let Node::Neg(b) = rhs.node() {
            return Expr::raw(Node::Sub(self, b.clone()));
        }
        Expr::raw(Node::Add(self, rhs))
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        if rhs.is_zero() {
            return self;
        }
        if self.is_zero() {
            return -rhs;
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Expr::constant(a - b);
        }
        if let Node::Neg(b) = rhs.node() {
            return Expr::raw(Node::Add(self, b.clone()));
        }
        Expr::raw(Node::Sub(self, rhs))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        if self.is_zero() || rhs.is_zero() {
            return Expr::zero();
        }
        if self.is_one() {
            return rhs;
        }
        if rhs.is_one() {
            return self;
        }
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => return Expr::constant(a * b),
            (Some(-1.0), None) => return -rhs,
            (None, Some(-1.0)) => return -self,
            _ => {}
        }
        Expr::raw(Node::Mul(self, rhs))
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        if rhs.is_one() {
            return self;
        }
        if self.is_zero() && !rhs.is_zero() {
            return Expr::zero();
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            if b != 0.0 {
                return Expr::constant(a / b);
            }
        }
        Expr::raw(Node::Div(self, rhs))
    }
}

impl ops::Mul<f64> for Expr {
    type Output = Expr;
    fn mul(self, rhs: f64) -> Expr {
        Expr::constant(rhs) * self
    }
}

impl ops::Add<f64> for Expr {
    type Output = Expr;
    fn add(self, rhs: f64) -> Expr {
        self + Expr::constant(rhs)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::constant(c)
    }
}

// Binding strength used by the printer; higher binds tighter.
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 5;

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.is_sign_negative() {
        write!(f, "(-{:?})", -c)
    } else {
        write!(f, "{c:?}")
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    let (prec, node) = match e.node() {
        Node::Const(_) | Node::Var(_) | Node::Call(..) => (PREC_ATOM, e.node()),
        Node::Pow(..) => (PREC_ATOM - 1, e.node()),
        Node::Neg(_) => (PREC_UNARY, e.node()),
        Node::Mul(..) | Node::Div(..) => (PREC_PRODUCT, e.node()),
        Node::Add(..) | Node::Sub(..) => (PREC_SUM, e.node()),
    };
    let paren = prec < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match node {
        Node::Const(c) => write_const(f, *c)?,
        Node::Var(i) => write!(f, "t{}", i + 1)?,
        Node::Neg(a) => {
            f.write_str("-")?;
            write_expr(f, a, PREC_UNARY)?;
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            write_expr(f, a, PREC_SUM)?;
            f.write_str(if matches!(node, Node::Add(..)) { " + " } else { " - " })?;
            write_expr(f, b, PREC_PRODUCT)?;
        }
        Node::Mul(a, b) | Node::Div(a, b) => {
            write_expr(f, a, PREC_PRODUCT)?;
            f.write_str(if matches!(node, Node::Mul(..)) { "*" } else { "/" })?;
            write_expr(f, b, PREC_UNARY)?;
        }
        Node::Pow(a, k) => {
            write_expr(f, a, PREC_ATOM)?;
            if *k < 0 {
                write!(f, "^({k})")?;
            } else {
                write!(f, "^{k}")?;
            }
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a, 0)?;
            f.write_str(")")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(p("cos(2*pi*t1)+cos(2*pi*t2)").eval(&[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(p("t1^2 - t2").eval(&[3.0, 4.0]).unwrap(), 5.0);
        assert!(matches!(p("sqrt(t1)").eval(&[-1.0]), Err(EvalError::SqrtOfNegative(_))));
        assert_eq!(p("1/t1").eval(&[0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(p("t1^(-2)").eval(&[0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn precedence() {
        assert_eq!(p("-t1^2").eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(p("2*3+4").eval(&[]).unwrap(), 10.0);
        assert_eq!(p("8/2/2").eval(&[]).unwrap(), 2.0);
        assert_eq!(p("8-2-2").eval(&[]).unwrap(), 4.0);
        assert_eq!(p("2^-1").eval(&[]).unwrap(), 0.5);
    }

    #[test]
    fn derivative_rules() {
        let e = p("sin(t1)*t2^3 + exp(t1)/t2 - sqrt(t1*t2)");
        let (a, b) = (0.7, 1.3);
        let d1 = e.derivative(0).eval(&[a, b]).unwrap();
        let expect = a.cos() * b.powi(3) + a.exp() / b - 0.5 * b / (a * b).sqrt();
        assert!((d1 - expect).abs() < 1e-12);
        assert!(p("t2").derivative(0).is_zero());
    }

    #[test]
    fn print_roundtrip() {
        for s in [
            "-(t1 - t2)",
            "t1 - (t2 - t1)",
            "(t1*t2)^3",
            "t1/(t2*t1)",
            "-2",
            "--t1",
            "3*-t1",
            "t1^(-2)",
            "cos(2*pi*t1) + 1e-300*t2",
            "(-1.5)^2",
        ] {
            let e = p(s);
            let printed = e.to_string();
            assert_eq!(p(&printed), e, "{s} -> {printed}");
        }
    }

    #[test]
    fn smart_constructors_fold() {
        let x = Expr::var(0);
        assert!((x.clone() * Expr::zero()).is_zero());
        assert_eq!((x.clone() + Expr::zero()), x);
        assert_eq!((Expr::constant(2.0) * Expr::constant(3.0)).as_const(), Some(6.0));
        assert_eq!(-(-x.clone()), x);
    }
}
