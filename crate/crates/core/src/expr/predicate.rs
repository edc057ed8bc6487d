use std::fmt;

use super::parse::{ParseError, Parser};
use super::{Compiled, Expr, Scratch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }
}

/// Domain Λ as a boolean combination of comparisons.
#[derive(Clone, Debug, PartialEq)]
pub enum Predicate {
    /// All of ℝⁿ.
    True,
    Cmp(Expr, CmpOp, Expr),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

/// Axis-aligned half-space `x_axis < bound` (upper) or `x_axis > bound`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub axis: usize,
    pub bound: f64,
    pub upper: bool,
}

impl Predicate {
    /// Parse `pred := conj ('||' conj)*`, `conj := atom ('&&' atom)*`,
    /// `atom := 'true' | '(' pred ')' | expr (cmp expr)+`. Chained
    /// comparisons `a < b < c` mean `a < b && b < c`.
    pub fn parse(source: &str, n: usize) -> Result<Predicate, ParseError> {
        let mut p = Parser::new(source, n);
        let pred = disjunction(&mut p)?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(pred)
    }

    pub fn and(self, other: Predicate) -> Predicate {
        match (self, other) {
            (Predicate::True, q) | (q, Predicate::True) => q,
            (a, b) => Predicate::And(Box::new(a), Box::new(b)),
        }
    }

    /// Evaluate at a point. Sub-expressions that fail to evaluate make the
    /// comparison false, so points where the coefficients are undefined lie
    /// outside the domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Cmp(a, op, b) => match (a.eval(x, 0.0), b.eval(x, 0.0)) {
                (Ok(va), Ok(vb)) => op.holds(va, vb),
                _ => false,
            },
            Predicate::And(a, b) => a.contains(x) && b.contains(x),
            Predicate::Or(a, b) => a.contains(x) || b.contains(x),
        }
    }

    /// True when only strict comparisons are used (the set is open).
    pub fn is_open(&self) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Cmp(_, op, _) => matches!(op, CmpOp::Lt | CmpOp::Gt),
            Predicate::And(a, b) | Predicate::Or(a, b) => a.is_open() && b.is_open(),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Predicate::True => None,
            Predicate::Cmp(a, _, b) => a.max_var().max(b.max_var()),
            Predicate::And(a, b) | Predicate::Or(a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// Axis-aligned half-spaces among the top-level conjuncts.
    pub fn half_spaces(&self) -> Vec<HalfSpace> {
        let mut out = Vec::new();
        self.collect_half_spaces(&mut out);
        out
    }

    fn collect_half_spaces(&self, out: &mut Vec<HalfSpace>) {
        match self {
            Predicate::And(a, b) => {
                a.collect_half_spaces(out);
                b.collect_half_spaces(out);
            }
            Predicate::Cmp(a, op, b) => {
                let (axis, op, bound) = match (a, b.as_const(), b, a.as_const()) {
                    (Expr::Var(i), Some(c), _, _) => (*i, *op, c),
                    (_, _, Expr::Var(i), Some(c)) => (*i, op.flipped(), c),
                    _ => return,
                };
                let upper = matches!(op, CmpOp::Lt | CmpOp::Le);
                out.push(HalfSpace { axis, bound, upper });
            }
            _ => {}
        }
    }

    /// Bounding box implied by the axis-aligned conjuncts; unbounded sides
    /// are infinite.
    pub fn bounding_box(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for h in self.half_spaces() {
            if h.axis >= n {
                continue;
            }
            if h.upper {
                hi[h.axis] = hi[h.axis].min(h.bound);
            } else {
                lo[h.axis] = lo[h.axis].max(h.bound);
            }
        }
        (lo, hi)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::True => write!(f, "true"),
            Predicate::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            Predicate::And(a, b) => write!(f, "({a} && {b})"),
            Predicate::Or(a, b) => write!(f, "({a} || {b})"),
        }
    }
}

fn disjunction(p: &mut Parser<'_>) -> Result<Predicate, ParseError> {
    let mut lhs = conjunction(p)?;
    while p.peek_str("||") {
        p.pos += 2;
        let rhs = conjunction(p)?;
        lhs = Predicate::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn conjunction(p: &mut Parser<'_>) -> Result<Predicate, ParseError> {
    let mut lhs = atom(p)?;
    while p.peek_str("&&") {
        p.pos += 2;
        let rhs = atom(p)?;
        lhs = Predicate::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn atom(p: &mut Parser<'_>) -> Result<Predicate, ParseError> {
    if p.peek_str("true") {
        let after = p.src.get(p.pos + 4).copied();
        if !after.is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
            p.pos += 4;
            return Ok(Predicate::True);
        }
    }
    if p.peek() == Some(b'(') {
        let save = p.pos;
        p.pos += 1;
        if let Ok(inner) = disjunction(p) {
            if p.peek() == Some(b')') {
                p.pos += 1;
                return Ok(inner);
            }
        }
        p.pos = save;
    }
    comparison_chain(p)
}

fn cmp_op(p: &mut Parser<'_>) -> Option<CmpOp> {
    let op = if p.peek_str("<=") {
        p.pos += 2;
        CmpOp::Le
    } else if p.peek_str(">=") {
        p.pos += 2;
        CmpOp::Ge
    } else if p.peek_str("<") {
        p.pos += 1;
        CmpOp::Lt
    } else if p.peek_str(">") {
        p.pos += 1;
        CmpOp::Gt
    } else {
        return None;
    };
    Some(op)
}

fn comparison_chain(p: &mut Parser<'_>) -> Result<Predicate, ParseError> {
    let mut lhs = p.expr()?;
    let Some(op) = cmp_op(p) else {
        return Err(p.error("expected comparison operator"));
    };
    let rhs = p.expr()?;
    let mut pred = Predicate::Cmp(lhs, op, rhs.clone());
    lhs = rhs;
    while let Some(op) = cmp_op(p) {
        let rhs = p.expr()?;
        pred = Predicate::And(
            Box::new(pred),
            Box::new(Predicate::Cmp(lhs, op, rhs.clone())),
        );
        lhs = rhs;
    }
    Ok(pred)
}

#[derive(Clone, Debug)]
enum Node {
    True,
    /// `x_axis op bound`, the common case for box domains.
    AxisBound {
        axis: usize,
        op: CmpOp,
        bound: f64,
    },
    Cmp(Compiled, CmpOp, Compiled),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
}

/// Predicate lowered for the path loop.
#[derive(Clone, Debug)]
pub struct CompiledPredicate {
    root: Node,
    /// Flat list when the predicate is a conjunction of axis bounds.
    bounds: Option<Vec<(usize, CmpOp, f64)>>,
}

impl CompiledPredicate {
    pub fn new(p: &Predicate) -> Self {
        let root = lower(p);
        let mut bounds = Some(Vec::new());
        flatten_bounds(&root, &mut bounds);
        CompiledPredicate { root, bounds }
    }

    #[inline]
    pub fn contains(&self, x: &[f64], scratch: &mut Scratch) -> bool {
        match &self.bounds {
            Some(b) => b.iter().all(|&(axis, op, bound)| op.holds(x[axis], bound)),
            None => eval_node(&self.root, x, scratch),
        }
    }
}

fn flatten_bounds(node: &Node, out: &mut Option<Vec<(usize, CmpOp, f64)>>) {
    match node {
        Node::True => {}
        Node::AxisBound { axis, op, bound } => {
            if let Some(v) = out {
                v.push((*axis, *op, *bound));
            }
        }
        Node::And(a, b) => {
            flatten_bounds(a, out);
            flatten_bounds(b, out);
        }
        _ => *out = None,
    }
}

fn lower(p: &Predicate) -> Node {
    match p {
        Predicate::True => Node::True,
        Predicate::Cmp(a, op, b) => {
            let (a, b) = (a.simplify(), b.simplify());
            match (&a, b.as_const(), &b, a.as_const()) {
                (Expr::Var(i), Some(c), _, _) => Node::AxisBound {
                    axis: *i,
                    op: *op,
                    bound: c,
                },
                (_, _, Expr::Var(i), Some(c)) => Node::AxisBound {
                    axis: *i,
                    op: op.flipped(),
                    bound: c,
                },
                _ => Node::Cmp(Compiled::new(&a), *op, Compiled::new(&b)),
            }
        }
        Predicate::And(a, b) => Node::And(Box::new(lower(a)), Box::new(lower(b))),
        Predicate::Or(a, b) => Node::Or(Box::new(lower(a)), Box::new(lower(b))),
    }
}

#[inline]
fn eval_node(node: &Node, x: &[f64], scratch: &mut Scratch) -> bool {
    match node {
        Node::True => true,
        Node::AxisBound { axis, op, bound } => op.holds(x[*axis], *bound),
        Node::Cmp(a, op, b) => match (a.eval(x, 0.0, scratch), b.eval(x, 0.0, scratch)) {
            (Ok(va), Ok(vb)) => op.holds(va, vb),
            _ => false,
        },
        Node::And(a, b) => eval_node(a, x, scratch) && eval_node(b, x, scratch),
        Node::Or(a, b) => eval_node(a, x, scratch) || eval_node(b, x, scratch),
    }
}

impl serde::Serialize for Predicate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
