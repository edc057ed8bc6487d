//! Scalar expressions over the spatial coordinates `x1..xn` and time `t`.
//!
//! Every coefficient function of a diffusion (σ, b), every observable
//! (g, h, ψ), domain predicate and test function is an [`Expr`]. Trees are
//! immutable once built and can be shared freely between threads.
//!
//! The smart constructors ([`Expr::add`], [`Expr::mul`], ...) perform only
//! local rewrites: constant folding and the usual `0`/`1` identities. The
//! parser deliberately builds raw nodes so that printed output mirrors the
//! source.

mod diff;
mod eval;
mod parse;
mod predicate;

use std::fmt;

pub use diff::Wrt;
pub use eval::{Compiled, EvalError, EvalErrorKind, Scratch};
pub use parse::{parse, ParseError};
pub use predicate::{CmpOp, CompiledPredicate, HalfSpace, Predicate};

/// Unary operators. `Flat(k)` is the k-th derivative of the C∞ profile
/// `u ↦ exp(-1/u)` for `u > 0`, extended by zero; it is the building block
/// for compactly supported bumps and cutoff functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Cosh,
    Sinh,
    Tanh,
    Abs,
    Flat(u8),
}

impl UnaryOp {
    pub fn name(self) -> String {
        match self {
            UnaryOp::Neg => "-".into(),
            UnaryOp::Sin => "sin".into(),
            UnaryOp::Cos => "cos".into(),
            UnaryOp::Exp => "exp".into(),
            UnaryOp::Log => "log".into(),
            UnaryOp::Sqrt => "sqrt".into(),
            UnaryOp::Cosh => "cosh".into(),
            UnaryOp::Sinh => "sinh".into(),
            UnaryOp::Tanh => "tanh".into(),
            UnaryOp::Abs => "abs".into(),
            UnaryOp::Flat(0) => "flat".into(),
            UnaryOp::Flat(k) => format!("flat{k}"),
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "cosh" => UnaryOp::Cosh,
            "sinh" => UnaryOp::Sinh,
            "tanh" => UnaryOp::Tanh,
            "abs" => UnaryOp::Abs,
            "flat" => UnaryOp::Flat(0),
            _ => {
                let order = name.strip_prefix("flat")?.parse::<u8>().ok()?;
                UnaryOp::Flat(order)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// Expression tree. Variables are stored zero-based (`Var(0)` prints as `x1`).
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Time,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    /// Zero-based coordinate `x_{i+1}`.
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn time() -> Expr {
        Expr::Time
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// Largest zero-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) | Expr::Time => None,
            Expr::Unary(_, a) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Unary(_, a) => a.depends_on_time(),
            Expr::Binary(_, a, b) => a.depends_on_time() || b.depends_on_time(),
        }
    }

    pub fn depends_on_var(&self, i: usize) -> bool {
        match self {
            Expr::Var(j) => *j == i,
            Expr::Const(_) | Expr::Time => false,
            Expr::Unary(_, a) => a.depends_on_var(i),
            Expr::Binary(_, a, b) => a.depends_on_var(i) || b.depends_on_var(i),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Time => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if op == UnaryOp::Neg {
            return a.neg();
        }
        if let Some(c) = a.as_const() {
            if let Ok(v) = eval::apply_unary(op, c) {
                return Expr::Const(v);
            }
        }
        Expr::Unary(op, Box::new(a))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Unary(UnaryOp::Neg, a) => *a,
            Expr::Binary(BinaryOp::Sub, a, b) => Expr::Binary(BinaryOp::Sub, b, a),
            Expr::Binary(op @ (BinaryOp::Mul | BinaryOp::Div), a, b) if a.as_const().is_some() => {
                Expr::Binary(op, Box::new(Expr::Const(-a.as_const().unwrap_or(0.0))), b)
            }
            other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => return Expr::Const(a + b),
            (Some(a), _) if a == 0.0 => return rhs,
            (_, Some(b)) if b == 0.0 => return self,
            _ => {}
        }
        if let Expr::Unary(UnaryOp::Neg, b) = rhs {
            return self.sub(*b);
        }
        if let Expr::Unary(UnaryOp::Neg, a) = self {
            return rhs.sub(*a);
        }
        if self == rhs {
            return Expr::Const(2.0).mul(self);
        }
        Expr::Binary(BinaryOp::Add, Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => return Expr::Const(a - b),
            (Some(a), _) if a == 0.0 => return rhs.neg(),
            (_, Some(b)) if b == 0.0 => return self,
            _ => {}
        }
        if self == rhs {
            return Expr::zero();
        }
        if let Expr::Unary(UnaryOp::Neg, b) = rhs {
            return self.add(*b);
        }
        Expr::Binary(BinaryOp::Sub, Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => return Expr::Const(a * b),
            (Some(a), _) if a == 0.0 => return Expr::zero(),
            (_, Some(b)) if b == 0.0 => return Expr::zero(),
            (Some(a), _) if a == 1.0 => return rhs,
            (_, Some(b)) if b == 1.0 => return self,
            (Some(a), _) if a == -1.0 => return rhs.neg(),
            (_, Some(b)) if b == -1.0 => return self.neg(),
            // constants go to the left
            (None, Some(_)) => return rhs.mul(self),
            _ => {}
        }
        match (self, rhs) {
            (Expr::Unary(UnaryOp::Neg, a), Expr::Unary(UnaryOp::Neg, b)) => a.mul(*b),
            (Expr::Unary(UnaryOp::Neg, a), b) => a.mul(b).neg(),
            (a, Expr::Unary(UnaryOp::Neg, b)) => a.mul(*b).neg(),
            (Expr::Const(c), Expr::Binary(BinaryOp::Mul, l, r)) if l.as_const().is_some() => {
                Expr::Const(c * l.as_const().unwrap_or(1.0)).mul(*r)
            }
            (a, b) => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) if b != 0.0 && (a / b).is_finite() => return Expr::Const(a / b),
            (Some(a), _) if a == 0.0 && rhs.as_const() != Some(0.0) => return Expr::zero(),
            (_, Some(b)) if b == 1.0 => return self,
            (_, Some(b)) if b == -1.0 => return self.neg(),
            _ => {}
        }
        match (self, rhs) {
            (Expr::Unary(UnaryOp::Neg, a), b) => a.div(b).neg(),
            (a, b) => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (_, Some(e)) if e == 0.0 => return Expr::one(),
            (_, Some(e)) if e == 1.0 => return self,
            (Some(b), Some(e)) => {
                if let Ok(v) = eval::apply_binary(BinaryOp::Pow, b, e) {
                    return Expr::Const(v);
                }
            }
            _ => {}
        }
        Expr::Binary(BinaryOp::Pow, Box::new(self), Box::new(rhs))
    }

    pub fn square(self) -> Expr {
        self.clone().mul(self)
    }

    /// Sum of an iterator of expressions with local simplification.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), Expr::add)
    }

    /// Replace every occurrence of `Var(i)` by `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Var(i) => subs.get(*i).cloned().unwrap_or(Expr::Var(*i)),
            Expr::Const(_) | Expr::Time => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(subs)),
            Expr::Binary(op, a, b) => rebuild(*op, a.substitute(subs), b.substitute(subs)),
        }
    }

    /// Rebuild the tree bottom-up through the simplifying constructors.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Time => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.simplify()),
            Expr::Binary(op, a, b) => rebuild(*op, a.simplify(), b.simplify()),
        }
    }
}

pub(crate) fn rebuild(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    match op {
        BinaryOp::Add => a.add(b),
        BinaryOp::Sub => a.sub(b),
        BinaryOp::Mul => a.mul(b),
        BinaryOp::Div => a.div(b),
        BinaryOp::Pow => a.pow(b),
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        write!(f, "(-{})", -c)
    } else {
        write!(f, "{c}")
    }
}

/// Fully parenthesized output that re-parses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_const(f, *c),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Time => write!(f, "t"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
        }
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
