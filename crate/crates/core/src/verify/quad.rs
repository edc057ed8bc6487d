use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr, Scratch, UnaryOp};
use crate::fields::DiffusionSpec;

/// Uniform tensor grid for composite Simpson quadrature. Every axis needs
/// an even number of intervals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub intervals: Vec<usize>,
}

impl QuadGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, intervals: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != intervals.len() || lo.is_empty() {
            return Err(Error::Config(
                "quadrature grid axes must have equal, positive length".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l)) {
            return Err(Error::Config(
                "quadrature grid needs hi > lo on every axis".into(),
            ));
        }
        if intervals.iter().any(|&m| m == 0 || m % 2 == 1) {
            return Err(Error::Config(
                "Simpson quadrature needs an even, positive interval count per axis".into(),
            ));
        }
        Ok(QuadGrid { lo, hi, intervals })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.intervals.iter().map(|m| m + 1).product()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.intervals[axis] as f64
    }

    /// Multi-index of flat node `k`, first axis slowest.
    pub fn index(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            let m = self.intervals[i] + 1;
            out[i] = k % m;
            k /= m;
        }
        out
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.intervals)
            .fold(0, |acc, (&j, &m)| acc * (m + 1) + j)
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        self.index(k)
            .iter()
            .enumerate()
            .map(|(i, &j)| self.lo[i] + j as f64 * self.step(i))
            .collect()
    }

    pub fn on_boundary(&self, k: usize) -> bool {
        self.index(k)
            .iter()
            .zip(&self.intervals)
            .any(|(&j, &m)| j == 0 || j == m)
    }

    /// Simpson weight of node `k`. With `coarse`, the rule on every other
    /// node (zero weight for odd multi-indices); needs intervals divisible
    /// by four.
    pub fn weight(&self, k: usize, coarse: bool) -> f64 {
        let mut w = 1.0;
        for (i, &j) in self.index(k).iter().enumerate() {
            let (j, m, h) = if coarse {
                if j % 2 == 1 {
                    return 0.0;
                }
                (j / 2, self.intervals[i] / 2, 2.0 * self.step(i))
            } else {
                (j, self.intervals[i], self.step(i))
            };
            w *= simpson_weight(j, m) * h / 3.0;
        }
        w
    }

    pub fn supports_richardson(&self) -> bool {
        self.intervals.iter().all(|m| m % 4 == 0)
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| self.weight(k, false) * v)
            .sum()
    }
}

fn simpson_weight(j: usize, m: usize) -> f64 {
    if j == 0 || j == m {
        1.0
    } else if j % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// `exp(-1/(1-u²))` for `|u| < 1`, zero outside.
pub fn bump_profile(u: Expr) -> Expr {
    Expr::unary(UnaryOp::Flat(0), Expr::one().sub(u.square()))
}

/// Tensor product of bump profiles with the given centers and half-widths.
/// The last factor may be in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
    /// Center and half-width in time, for space-time test functions.
    pub time: Option<(f64, f64)>,
}

impl Bump {
    pub fn to_expr(&self) -> Expr {
        let mut e = Expr::one();
        for (i, (&c, &r)) in self.center.iter().zip(&self.radius).enumerate() {
            e = e.mul(bump_profile(
                Expr::var(i).sub(Expr::constant(c)).div(Expr::constant(r)),
            ));
        }
        if let Some((c, r)) = self.time {
            e = e.mul(bump_profile(
                Expr::time().sub(Expr::constant(c)).div(Expr::constant(r)),
            ));
        }
        e
    }
}

/// `|∫(Gφ)ψ − ∫φ(G*ψ)|` by Simpson quadrature on a spatial box containing
/// both supports.
pub fn duality_gap(spec: &DiffusionSpec, phi: &Expr, psi: &Expr, grid: &QuadGrid) -> Result<f64> {
    if grid.dim() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: grid.dim(),
        });
    }
    let lhs = Compiled::new(&spec.apply_g(phi).mul(psi.clone()).simplify());
    let rhs = Compiled::new(&phi.clone().mul(spec.apply_g_dual(psi)).simplify());
    let mut s = Scratch::new();
    let mut diff = Vec::with_capacity(grid.n_nodes());
    for k in 0..grid.n_nodes() {
        let x = grid.node(k);
        diff.push(lhs.eval(&x, 0.0, &mut s)? - rhs.eval(&x, 0.0, &mut s)?);
    }
    Ok(grid.integrate(&diff).abs())
}
