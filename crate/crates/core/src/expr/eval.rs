use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    InvalidPower,
    NonFinite,
    VariableOutOfRange,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::LogOfNonPositive => "log of non-positive argument",
            EvalErrorKind::SqrtOfNegative => "sqrt of negative argument",
            EvalErrorKind::InvalidPower => "non-integer power of non-positive base",
            EvalErrorKind::NonFinite => "non-finite result",
            EvalErrorKind::VariableOutOfRange => "variable index out of range",
        };
        f.write_str(s)
    }
}

/// Evaluation failure, naming the offending sub-expression.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub node: String,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in `{}`", self.kind, self.node)
    }
}

impl std::error::Error for EvalError {}

/// k-th derivative of `u ↦ exp(-1/u)` on `u > 0`, zero elsewhere.
///
/// With `y = 1/u` the derivative is `P_k(y) exp(-y)` where `P_0 = 1` and
/// `P_{k+1}(y) = y² (P_k(y) - P_k'(y))`.
pub(crate) fn flat(order: u8, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let y = 1.0 / u;
    let e = (-y).exp();
    if order == 0 || e == 0.0 {
        return e;
    }
    // coefficients of P_k in ascending powers of y
    let mut coeffs = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; coeffs.len() + 2];
        for (j, &c) in coeffs.iter().enumerate() {
            next[j + 2] += c;
            if j > 0 {
                next[j + 1] -= c * j as f64;
            }
        }
        coeffs = next;
    }
    let poly = coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c);
    poly * e
}

pub(crate) fn apply_unary(op: UnaryOp, a: f64) -> Result<f64, EvalErrorKind> {
    let v = match op {
        UnaryOp::Neg => -a,
        UnaryOp::Sin => a.sin(),
        UnaryOp::Cos => a.cos(),
        UnaryOp::Exp => a.exp(),
        UnaryOp::Log => {
            if a <= 0.0 {
                return Err(EvalErrorKind::LogOfNonPositive);
            }
            a.ln()
        }
        UnaryOp::Sqrt => {
            if a < 0.0 {
                return Err(EvalErrorKind::SqrtOfNegative);
            }
            a.sqrt()
        }
        UnaryOp::Cosh => a.cosh(),
        UnaryOp::Sinh => a.sinh(),
        UnaryOp::Tanh => a.tanh(),
        UnaryOp::Abs => a.abs(),
        UnaryOp::Flat(k) => flat(k, a),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalErrorKind::NonFinite)
    }
}

pub(crate) fn apply_binary(op: BinaryOp, a: f64, b: f64) -> Result<f64, EvalErrorKind> {
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                return Err(EvalErrorKind::DivisionByZero);
            }
            a / b
        }
        BinaryOp::Pow => {
            if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                if a == 0.0 && b < 0.0 {
                    return Err(EvalErrorKind::DivisionByZero);
                }
                a.powi(b as i32)
            } else if a > 0.0 || (a == 0.0 && b > 0.0) {
                a.powf(b)
            } else {
                return Err(EvalErrorKind::InvalidPower);
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalErrorKind::NonFinite)
    }
}

impl Expr {
    /// Evaluate at spatial point `x` and time `t`.
    ///
    /// A product whose left factor is exactly zero evaluates to zero without
    /// touching the right factor; cutoff-weighted coefficients rely on this
    /// outside the region where the unweighted coefficient is defined.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        let fail = |kind| EvalError {
            kind,
            node: self.to_string(),
        };
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => x
                .get(*i)
                .copied()
                .ok_or_else(|| fail(EvalErrorKind::VariableOutOfRange)),
            Expr::Time => Ok(t),
            Expr::Unary(op, a) => {
                let va = a.eval(x, t)?;
                apply_unary(*op, va).map_err(fail)
            }
            Expr::Binary(op, a, b) => {
                let va = a.eval(x, t)?;
                if *op == BinaryOp::Mul && va == 0.0 {
                    return Ok(0.0);
                }
                let vb = b.eval(x, t)?;
                apply_binary(*op, va, vb).map_err(fail)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Instr {
    Const(f64),
    Var(usize),
    Time,
    Unary(UnaryOp),
    Binary(BinaryOp),
    /// Skip the next `n` instructions when the top of stack is exactly zero.
    SkipIfZero(usize),
}

/// Reusable evaluation stack.
#[derive(Default, Debug, Clone)]
pub struct Scratch {
    stack: Vec<f64>,
}

impl Scratch {
    pub fn new() -> Self {
        Scratch {
            stack: Vec::with_capacity(32),
        }
    }
}

/// Expression lowered for fast repeated evaluation in path loops.
#[derive(Clone, Debug)]
pub struct Compiled(Lowered);

#[derive(Clone, Debug)]
enum Lowered {
    Const(f64),
    Var(usize),
    Program { code: Vec<Instr>, source: Expr },
}

impl Compiled {
    pub fn new(e: &Expr) -> Compiled {
        Compiled(match e {
            Expr::Const(c) => Lowered::Const(*c),
            Expr::Var(i) => Lowered::Var(*i),
            _ => {
                let mut code = Vec::new();
                emit(e, &mut code);
                Lowered::Program {
                    code,
                    source: e.clone(),
                }
            }
        })
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.0 {
            Lowered::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], t: f64, scratch: &mut Scratch) -> Result<f64, EvalError> {
        match &self.0 {
            Lowered::Const(c) => Ok(*c),
            Lowered::Var(i) => Ok(x[*i]),
            Lowered::Program { code, source } => match run(code, x, t, &mut scratch.stack) {
                Some(v) => Ok(v),
                // slow path recovers the offending node
                None => Err(source.eval(x, t).err().unwrap_or(EvalError {
                    kind: EvalErrorKind::NonFinite,
                    node: source.to_string(),
                })),
            },
        }
    }
}

fn emit(e: &Expr, code: &mut Vec<Instr>) {
    match e {
        Expr::Const(c) => code.push(Instr::Const(*c)),
        Expr::Var(i) => code.push(Instr::Var(*i)),
        Expr::Time => code.push(Instr::Time),
        Expr::Unary(op, a) => {
            emit(a, code);
            code.push(Instr::Unary(*op));
        }
        Expr::Binary(BinaryOp::Mul, a, b) => {
            emit(a, code);
            let guard = code.len();
            code.push(Instr::SkipIfZero(0));
            emit(b, code);
            code.push(Instr::Binary(BinaryOp::Mul));
            let skip = code.len() - guard - 1;
            code[guard] = Instr::SkipIfZero(skip);
        }
        Expr::Binary(op, a, b) => {
            emit(a, code);
            emit(b, code);
            code.push(Instr::Binary(*op));
        }
    }
}

#[inline]
fn run(code: &[Instr], x: &[f64], t: f64, stack: &mut Vec<f64>) -> Option<f64> {
    stack.clear();
    let mut pc = 0;
    while pc < code.len() {
        match code[pc] {
            Instr::Const(c) => stack.push(c),
            Instr::Var(i) => stack.push(*x.get(i)?),
            Instr::Time => stack.push(t),
            Instr::Unary(op) => {
                let a = stack.pop()?;
                stack.push(apply_unary(op, a).ok()?);
            }
            Instr::Binary(op) => {
                let b = stack.pop()?;
                let a = stack.pop()?;
                stack.push(apply_binary(op, a, b).ok()?);
            }
            Instr::SkipIfZero(n) => {
                if *stack.last()? == 0.0 {
                    pc += n;
                }
            }
        }
        pc += 1;
    }
    stack.pop()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn ev(s: &str, x: &[f64]) -> Result<f64, EvalError> {
        parse(s, x.len()).unwrap().eval(x, 0.0)
    }

    #[test]
    fn basic_values() {
        assert_eq!(ev("x1*x1", &[3.0]).unwrap(), 9.0);
        assert_eq!(ev("cosh(x1)", &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn division_by_zero_names_node() {
        let err = ev("1/(x2-x1)", &[1.0, 1.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
        assert_eq!(err.node, "(1/(x2-x1))");
    }

    #[test]
    fn partial_functions() {
        assert_eq!(
            ev("log(x1)", &[0.0]).unwrap_err().kind,
            EvalErrorKind::LogOfNonPositive
        );
        assert_eq!(
            ev("sqrt(x1)", &[-1.0]).unwrap_err().kind,
            EvalErrorKind::SqrtOfNegative
        );
        assert_eq!(
            ev("x1^0.5", &[-1.0]).unwrap_err().kind,
            EvalErrorKind::InvalidPower
        );
        assert_eq!(ev("x1^12", &[-2.0]).unwrap(), 4096.0);
    }

    #[test]
    fn zero_left_factor_short_circuits() {
        assert_eq!(ev("0*log(x1)", &[-1.0]).unwrap(), 0.0);
        let c = Compiled::new(&parse("(x1-x1)*log(x1)", 1).unwrap());
        assert_eq!(c.eval(&[-1.0], 0.0, &mut Scratch::new()).unwrap(), 0.0);
    }

    #[test]
    fn compiled_matches_tree() {
        let mut s = Scratch::new();
        for src in [
            "x1*x2 + sin(x1)/cosh(x2) - t",
            "exp(-x1*x1)*(x2^3)",
            "flat(1 - x1*x1)",
        ] {
            let e = parse(src, 2).unwrap();
            let c = Compiled::new(&e);
            for &(a, b) in &[(0.1, 0.2), (-0.7, 1.3), (0.5, -2.0)] {
                let x = [a, b];
                assert_eq!(c.eval(&x, 0.3, &mut s).unwrap(), e.eval(&x, 0.3).unwrap());
            }
        }
        let c = Compiled::new(&parse("1/(x2-x1)", 2).unwrap());
        let err = c.eval(&[1.0, 1.0], 0.0, &mut s).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
    }

    #[test]
    fn flat_derivatives_match_finite_differences() {
        for order in 0..4u8 {
            for &u in &[0.2, 0.5, 1.0, 3.0] {
                let h = 1e-6;
                let fd = (flat(order, u + h) - flat(order, u - h)) / (2.0 * h);
                let exact = flat(order + 1, u);
                assert!(
                    (fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()),
                    "order {order} u {u}: {fd} vs {exact}"
                );
            }
            assert_eq!(flat(order, -0.5), 0.0);
            assert_eq!(flat(order, 0.0), 0.0);
        }
    }
}
