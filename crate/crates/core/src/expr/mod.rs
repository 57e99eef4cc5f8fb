//! Scalar expressions over state variables `x1..xn` and control variables
//! `u1..um`.
//!
//! Expressions are parsed from text, evaluated in IEEE double precision and
//! differentiated symbolically. Every solver in the crate obtains its
//! Jacobians and Hessians from here.
//!
//! ```
//! use turnpike::expr::{Expression, Var};
//!
//! let e = Expression::parse("x1^3 + u1", 1, 1).unwrap();
//! let d = e.differentiate(Var::State(0));
//! assert_eq!(d.to_string(), "3*x1^2");
//! assert_eq!(d.eval(&[2.0], &[0.0]).unwrap(), 12.0);
//! ```

mod diff;
mod parse;
mod print;

use std::fmt;

use thiserror::Error;

pub use parse::ParseError;

/// A variable reference. Indices are zero-based; `State(0)` prints as `x1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    State(usize),
    Control(usize),
}

impl Var {
    /// Position of the variable in the stacked `(x, u)` vector.
    pub fn stacked_index(self, n: usize) -> usize {
        match self {
            Var::State(i) => i,
            Var::Control(j) => n + j,
        }
    }

    /// Inverse of [`Var::stacked_index`].
    pub fn from_stacked(k: usize, n: usize) -> Var {
        if k < n {
            Var::State(k)
        } else {
            Var::Control(k - n)
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::State(i) => write!(f, "x{}", i + 1),
            Var::Control(j) => write!(f, "u{}", j + 1),
        }
    }
}

/// Built-in functions. `Smoothstep(k)` is the `k`-th derivative of the
/// cutoff `smoothstep`, with `k <= 5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Smoothstep(u8),
}

/// Highest derivative order of `smoothstep` that is represented explicitly.
pub const SMOOTHSTEP_MAX_ORDER: u8 = 5;

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Smoothstep(0) => "smoothstep",
            Func::Smoothstep(1) => "smoothstep_d1",
            Func::Smoothstep(2) => "smoothstep_d2",
            Func::Smoothstep(3) => "smoothstep_d3",
            Func::Smoothstep(4) => "smoothstep_d4",
            Func::Smoothstep(_) => "smoothstep_d5",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "smoothstep" => Func::Smoothstep(0),
            "smoothstep_d1" => Func::Smoothstep(1),
            "smoothstep_d2" => Func::Smoothstep(2),
            "smoothstep_d3" => Func::Smoothstep(3),
            "smoothstep_d4" => Func::Smoothstep(4),
            "smoothstep_d5" => Func::Smoothstep(5),
            _ => return None,
        })
    }

    fn apply(self, a: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(a.sin()),
            Func::Cos => Ok(a.cos()),
            Func::Exp => Ok(a.exp()),
            Func::Tanh => Ok(a.tanh()),
            Func::Log => {
                if a > 0.0 {
                    Ok(a.ln())
                } else {
                    Err(EvalError::LogDomain(a))
                }
            }
            Func::Sqrt => {
                if a >= 0.0 {
                    Ok(a.sqrt())
                } else {
                    Err(EvalError::SqrtDomain(a))
                }
            }
            Func::Smoothstep(k) => Ok(smoothstep(k, a)),
        }
    }
}

/// The C² cutoff: 1 on `s <= 1`, 0 on `s >= 4`, and `1 - p((s-1)/3)` in
/// between with `p(t) = 10t³ - 15t⁴ + 6t⁵`. `order` selects a derivative.
pub fn smoothstep(order: u8, s: f64) -> f64 {
    if order == 0 {
        if s <= 1.0 {
            return 1.0;
        }
        if s >= 4.0 {
            return 0.0;
        }
    } else if s <= 1.0 || s >= 4.0 {
        return 0.0;
    }
    let t = (s - 1.0) / 3.0;
    let p = match order {
        0 => return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t)),
        1 => 30.0 * t * t * (1.0 + t * (-2.0 + t)),
        2 => 60.0 * t * (1.0 + t * (-3.0 + 2.0 * t)),
        3 => 60.0 + t * (-360.0 + 360.0 * t),
        4 => -360.0 + 720.0 * t,
        5 => 720.0,
        _ => 0.0,
    };
    -p / 3f64.powi(order as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree node. Exponents of `Pow` are always constants.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),
    #[error("square root of negative value {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{base}^{exponent} is undefined")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite result")]
    NonFinite,
    #[error("expected {n} states and {m} controls, got {got_x} and {got_u}")]
    Dimension {
        n: usize,
        m: usize,
        got_x: usize,
        got_u: usize,
    },
}

pub(crate) fn pow_value(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        Ok(base.powi(exponent as i32))
    } else if base < 0.0 {
        Err(EvalError::PowDomain { base, exponent })
    } else {
        Ok(base.powf(exponent))
    }
}

impl Node {
    /// Evaluates the tree; `x` and `u` are not length-checked here.
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Node::Const(c) => *c,
            Node::Var(Var::State(i)) => x[*i],
            Node::Var(Var::Control(j)) => u[*j],
            Node::Neg(a) => -a.eval(x, u)?,
            Node::Binary(op, a, b) => {
                let a = a.eval(x, u)?;
                let b = b.eval(x, u)?;
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
                }
            }
            Node::Pow(a, c) => pow_value(a.eval(x, u)?, *c)?,
            Node::Call(func, a) => func.apply(a.eval(x, u)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn is_const(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Node::Const(c) if *c == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Node::Const(c) if *c == 1.0)
    }

    /// Largest variable reference per kind, as `(max state index + 1, max control index + 1)`.
    pub fn var_extent(&self) -> (usize, usize) {
        match self {
            Node::Const(_) => (0, 0),
            Node::Var(Var::State(i)) => (i + 1, 0),
            Node::Var(Var::Control(j)) => (0, j + 1),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.var_extent(),
            Node::Binary(_, a, b) => {
                let (na, ma) = a.var_extent();
                let (nb, mb) = b.var_extent();
                (na.max(nb), ma.max(mb))
            }
        }
    }

    /// Rebuilds the tree through the folding constructors.
    pub fn simplify(&self) -> Node {
        match self {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Neg(a) => neg(a.simplify()),
            Node::Binary(op, a, b) => binary(*op, a.simplify(), b.simplify()),
            Node::Pow(a, c) => pow(a.simplify(), *c),
            Node::Call(func, a) => call(*func, a.simplify()),
        }
    }
}

fn fold(node: Node) -> Node {
    match node.eval(&[], &[]) {
        Ok(v) => Node::Const(v),
        Err(_) => node,
    }
}

pub(crate) fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

pub(crate) fn binary(op: BinOp, a: Node, b: Node) -> Node {
    if a.is_const().is_some() && b.is_const().is_some() {
        return fold(Node::Binary(op, Box::new(a), Box::new(b)));
    }
    match op {
        BinOp::Add if a.is_zero() => b,
        BinOp::Add | BinOp::Sub if b.is_zero() => a,
        BinOp::Sub if a.is_zero() => neg(b),
        BinOp::Mul if a.is_zero() || b.is_zero() => Node::Const(0.0),
        BinOp::Mul if a.is_one() => b,
        BinOp::Mul | BinOp::Div if b.is_one() => a,
        BinOp::Div if a.is_zero() => Node::Const(0.0),
        _ => Node::Binary(op, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn add(a: Node, b: Node) -> Node {
    binary(BinOp::Add, a, b)
}

pub(crate) fn sub(a: Node, b: Node) -> Node {
    binary(BinOp::Sub, a, b)
}

pub(crate) fn mul(a: Node, b: Node) -> Node {
    binary(BinOp::Mul, a, b)
}

pub(crate) fn div(a: Node, b: Node) -> Node {
    binary(BinOp::Div, a, b)
}

pub(crate) fn pow(a: Node, c: f64) -> Node {
    if c == 1.0 {
        return a;
    }
    if c == 0.0 {
        return Node::Const(1.0);
    }
    if a.is_const().is_some() {
        return fold(Node::Pow(Box::new(a), c));
    }
    Node::Pow(Box::new(a), c)
}

pub(crate) fn call(func: Func, a: Node) -> Node {
    if a.is_const().is_some() {
        return fold(Node::Call(func, Box::new(a)));
    }
    Node::Call(func, Box::new(a))
}

/// A parsed expression bound to declared dimensions `(n, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    node: Node,
    n: usize,
    m: usize,
}

impl Expression {
    pub fn parse(text: &str, n: usize, m: usize) -> Result<Self, ParseError> {
        let node = parse::parse_node(text, n, m)?;
        Ok(Expression { node, n, m })
    }

    /// Wraps a node, checking that its variables fit `(n, m)`.
    pub fn from_node(node: Node, n: usize, m: usize) -> Option<Self> {
        let (nn, mm) = node.var_extent();
        (nn <= n && mm <= m).then_some(Expression { node, n, m })
    }

    pub fn constant(c: f64, n: usize, m: usize) -> Self {
        Expression {
            node: Node::Const(c),
            n,
            m,
        }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        if x.len() != self.n || u.len() != self.m {
            return Err(EvalError::Dimension {
                n: self.n,
                m: self.m,
                got_x: x.len(),
                got_u: u.len(),
            });
        }
        self.node.eval(x, u)
    }

    /// Symbolic partial derivative, constant-folded.
    pub fn differentiate(&self, var: Var) -> Expression {
        Expression {
            node: diff::derivative(&self.node, var),
            n: self.n,
            m: self.m,
        }
    }

    pub fn simplify(&self) -> Expression {
        Expression {
            node: self.node.simplify(),
            n: self.n,
            m: self.m,
        }
    }

    /// True when the expression does not reference any variable.
    pub fn is_constant(&self) -> bool {
        self.node.var_extent() == (0, 0)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_node(f, &self.node)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_node(f, self)
    }
}

/// An ordered list of expressions sharing the same `(n, m)`: the dynamics
/// `f`, a terminal constraint `g`, or a single running cost.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<Expression>,
    n: usize,
    m: usize,
}

impl VectorField {
    pub fn parse<S: AsRef<str>>(texts: &[S], n: usize, m: usize) -> Result<Self, ParseError> {
        let components = texts
            .iter()
            .map(|t| Expression::parse(t.as_ref(), n, m))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorField { components, n, m })
    }

    pub fn from_expressions(components: Vec<Expression>, n: usize, m: usize) -> Self {
        debug_assert!(components.iter().all(|c| c.dims() == (n, m)));
        VectorField { components, n, m }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(x, u)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str, n: usize, m: usize) -> Expression {
        Expression::parse(s, n, m).unwrap()
    }

    #[test]
    fn eval_product() {
        assert_eq!(e("x1*u1", 1, 1).eval(&[2.0], &[3.0]).unwrap(), 6.0);
    }

    #[test]
    fn eval_exa_cost() {
        let c = e("(x1-1)^2 + (x2-2)^2 + u1^2", 2, 1);
        let v = c.eval(&[1.98432, 1.98432], &[0.123985]).unwrap();
        let hand = 0.98432f64.powi(2) + 0.01568f64.powi(2) + 0.123985f64.powi(2);
        assert!((v - hand).abs() < 1e-14);
        assert!((v - 0.98451).abs() < 1e-4);
    }

    #[test]
    fn smoothstep_plateaus() {
        let s = e("smoothstep(x1)", 1, 0);
        assert_eq!(s.eval(&[0.5], &[]).unwrap(), 1.0);
        assert_eq!(s.eval(&[1.0], &[]).unwrap(), 1.0);
        assert_eq!(s.eval(&[4.0], &[]).unwrap(), 0.0);
        assert_eq!(s.eval(&[7.0], &[]).unwrap(), 0.0);
        assert!((s.eval(&[2.5], &[]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn smoothstep_is_decreasing_and_c2() {
        let mut prev = 1.0;
        for k in 0..=300 {
            let s = 1.0 + 3.0 * k as f64 / 300.0;
            let v = smoothstep(0, s);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        for join in [1.0, 4.0] {
            for order in 0..=2u8 {
                let left = smoothstep(order, join - 1e-9);
                let right = smoothstep(order, join + 1e-9);
                assert!((left - right).abs() < 1e-6, "order {order} at {join}");
            }
        }
    }

    #[test]
    fn domain_errors_are_reported() {
        assert_eq!(
            e("log(x1)", 1, 0).eval(&[-1.0], &[]),
            Err(EvalError::LogDomain(-1.0))
        );
        assert_eq!(
            e("sqrt(x1)", 1, 0).eval(&[-4.0], &[]),
            Err(EvalError::SqrtDomain(-4.0))
        );
        assert_eq!(
            e("1/x1", 1, 0).eval(&[0.0], &[]),
            Err(EvalError::DivisionByZero)
        );
        assert!(matches!(
            e("x1^0.5", 1, 0).eval(&[-1.0], &[]),
            Err(EvalError::PowDomain { .. })
        ));
        assert_eq!(
            e("exp(x1)", 1, 0).eval(&[1e6], &[]),
            Err(EvalError::NonFinite)
        );
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            e("x1", 2, 1).eval(&[1.0], &[0.0]),
            Err(EvalError::Dimension { .. })
        ));
    }

    #[test]
    fn integer_powers_of_negative_base() {
        assert_eq!(e("x1^3", 1, 0).eval(&[-2.0], &[]).unwrap(), -8.0);
        assert_eq!(e("x1^-2", 1, 0).eval(&[-2.0], &[]).unwrap(), 0.25);
    }

    #[test]
    fn simplify_folds_constants_exactly() {
        let raw = e("(2*3 - 1)/4 + sin(0.3)*x1", 1, 0);
        let s = raw.simplify();
        for x in [-1.0, 0.0, 0.7, 3.0] {
            assert_eq!(raw.eval(&[x], &[]).unwrap(), s.eval(&[x], &[]).unwrap());
        }
        assert_eq!(s.to_string(), format!("1.25 + {}*x1", 0.3f64.sin()));
    }

    #[test]
    fn vector_field_dims() {
        let f = VectorField::parse(&["x1 - x2", "-4*x1 + x2^3 + u1"], 2, 1).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.eval(&[1.0, 2.0], &[0.5]).unwrap(), vec![-1.0, 4.5]);
    }
}
