use super::{BinaryOp, Expr, UnaryOp};

/// Differentiation variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    /// Zero-based spatial coordinate.
    Var(usize),
    Time,
}

impl Expr {
    /// Exact symbolic derivative with local simplification.
    pub fn diff(&self, wrt: Wrt) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(i) => Expr::Const(if wrt == Wrt::Var(*i) { 1.0 } else { 0.0 }),
            Expr::Time => Expr::Const(if wrt == Wrt::Time { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                let da = a.diff(wrt);
                if da.is_zero() {
                    return Expr::zero();
                }
                let a = (**a).clone();
                let outer = match op {
                    UnaryOp::Neg => return da.neg(),
                    UnaryOp::Sin => Expr::unary(UnaryOp::Cos, a),
                    UnaryOp::Cos => Expr::unary(UnaryOp::Sin, a).neg(),
                    UnaryOp::Exp => Expr::unary(UnaryOp::Exp, a),
                    UnaryOp::Log => return da.div(a),
                    UnaryOp::Sqrt => {
                        return da.div(Expr::Const(2.0).mul(Expr::unary(UnaryOp::Sqrt, a)))
                    }
                    UnaryOp::Cosh => Expr::unary(UnaryOp::Sinh, a),
                    UnaryOp::Sinh => Expr::unary(UnaryOp::Cosh, a),
                    UnaryOp::Tanh => {
                        let th = Expr::unary(UnaryOp::Tanh, a);
                        Expr::one().sub(th.square())
                    }
                    UnaryOp::Abs => a.clone().div(Expr::unary(UnaryOp::Abs, a)),
                    UnaryOp::Flat(k) => Expr::unary(UnaryOp::Flat(k + 1), a),
                };
                outer.mul(da)
            }
            Expr::Binary(op, a, b) => {
                let da = a.diff(wrt);
                let db = b.diff(wrt);
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => da.add(db),
                    BinaryOp::Sub => da.sub(db),
                    BinaryOp::Mul => a.mul(db).add(da.mul(b)),
                    BinaryOp::Div => {
                        if db.is_zero() {
                            da.div(b)
                        } else if da.is_zero() {
                            a.mul(db).div(b.clone().mul(b)).neg()
                        } else {
                            da.mul(b.clone()).sub(a.mul(db)).div(b.clone().mul(b))
                        }
                    }
                    BinaryOp::Pow => {
                        if let Some(c) = b.as_const() {
                            // d(u^c) = c u^(c-1) u'
                            return Expr::Const(c).mul(a.pow(Expr::Const(c - 1.0))).mul(da);
                        }
                        // d(u^v) = u^v (v' log u + v u'/u)
                        let pow = a.clone().pow(b.clone());
                        let log_term = db.mul(Expr::unary(UnaryOp::Log, a.clone()));
                        let ratio = b.mul(da).div(a);
                        pow.mul(log_term.add(ratio))
                    }
                }
            }
        }
    }

    pub fn diff_var(&self, i: usize) -> Expr {
        self.diff(Wrt::Var(i))
    }

    pub fn diff_time(&self) -> Expr {
        self.diff(Wrt::Time)
    }

    /// Symbolic gradient over the first `n` coordinates.
    pub fn gradient(&self, n: usize) -> Vec<Expr> {
        (0..n).map(|i| self.diff_var(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str, n: usize) -> Expr {
        parse(s, n).unwrap()
    }

    #[test]
    fn square_derivative() {
        assert_eq!(p("x1*x1", 1).diff_var(0), p("2*x1", 1));
    }

    #[test]
    fn quotient_derivative() {
        let d = p("2/(x2-x1)", 2).diff_var(0);
        let want = p("2/((x2-x1)*(x2-x1))", 2);
        assert_eq!(d, want);
    }

    #[test]
    fn cosh_second_derivative() {
        let d = p("cosh(x1)", 1).diff_var(0).diff_var(0);
        assert_eq!(d, p("cosh(x1)", 1));
    }

    #[test]
    fn polynomial_vanishes_after_degree_plus_one() {
        let e = p("3*x1^4 - 2*x1^2*x2 + x2^3 + 7", 2);
        let mut d = e.clone();
        for _ in 0..5 {
            d = d.diff_var(0);
        }
        assert!(d.is_zero(), "{d}");
        let mut d = e;
        for _ in 0..4 {
            d = d.diff_var(1);
        }
        assert!(d.is_zero(), "{d}");
    }

    #[test]
    fn time_derivative() {
        let e = p("x1*x1 + 3*t", 1);
        assert_eq!(e.diff_time(), Expr::Const(3.0));
        assert!(p("sin(x1)", 1).diff_time().is_zero());
    }

    #[test]
    fn general_power() {
        let e = p("x1^x2", 2);
        let d = e.diff_var(1);
        let x = [1.7, 0.6];
        let want = 1.7f64.powf(0.6) * 1.7f64.ln();
        assert!((d.eval(&x, 0.0).unwrap() - want).abs() < 1e-12);
    }
}
