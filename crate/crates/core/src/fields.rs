//! Diffusion specifications and the operators they induce: the diffusion
//! matrix `a = σσᵀ`, the vector fields `U_q`, the generator `G` and its
//! formal adjoint `G*`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{parse_expr, Error, Result};
use crate::expr::{Expr, Predicate};

/// Time-homogeneous SDE `dX = σ(X) dB + b(X) dt` on a domain `Λ ⊂ ℝⁿ`
/// driven by a `d`-dimensional Brownian motion.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSpec {
    pub n: usize,
    pub d: usize,
    /// Row-major `n × d`.
    pub sigma: Vec<Vec<Expr>>,
    pub drift: Vec<Expr>,
    pub domain: Predicate,
    /// Closed set the discrete scheme is never allowed to leave. Steps that
    /// would land outside are rejected and the state is held. Only the
    /// slowed-down construction sets this.
    pub confinement: Option<Predicate>,
}

impl DiffusionSpec {
    pub fn new(sigma: Vec<Vec<Expr>>, drift: Vec<Expr>, domain: Predicate) -> Result<Self> {
        let n = drift.len();
        if n == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if sigma.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: sigma.len(),
            });
        }
        let d = sigma[0].len();
        if d == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        for row in &sigma {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
        }
        let all = sigma.iter().flatten().chain(drift.iter());
        for e in all {
            if e.depends_on_time() {
                return Err(Error::Config(format!("coefficient `{e}` depends on t")));
            }
            if let Some(i) = e.max_var().filter(|&i| i >= n) {
                return Err(Error::IndexOutOfRange {
                    index: i + 1,
                    max: n,
                });
            }
        }
        if let Some(i) = domain.max_var().filter(|&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                index: i + 1,
                max: n,
            });
        }
        Ok(DiffusionSpec {
            n,
            d,
            sigma,
            drift,
            domain,
            confinement: None,
        })
    }

    /// Build from expression strings; `sigma` is given row by row.
    pub fn parse<S: AsRef<str>>(sigma: &[Vec<S>], drift: &[S], domain: &str) -> Result<Self> {
        let n = drift.len();
        let sigma = sigma
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, s)| {
                        parse_expr(s.as_ref(), n, &format!("sigma[{}][{}]", i + 1, j + 1))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let drift = drift
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expr(s.as_ref(), n, &format!("drift[{}]", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        let domain = Predicate::parse(domain, n).map_err(|source| Error::Parse {
            what: "domain".into(),
            source,
        })?;
        DiffusionSpec::new(sigma, drift, domain)
    }

    /// Symbolic `a_ij = Σ_q σ_iq σ_jq`; symmetric by construction.
    pub fn diffusion_matrix(&self) -> Vec<Vec<Expr>> {
        let mut a = vec![vec![Expr::zero(); self.n]; self.n];
        for i in 0..self.n {
            for j in i..self.n {
                let aij = Expr::sum(
                    (0..self.d).map(|q| self.sigma[i][q].clone().mul(self.sigma[j][q].clone())),
                );
                a[j][i] = aij.clone();
                a[i][j] = aij;
            }
        }
        a
    }

    /// `U_q = Σ_i σ_iq ∂_i` for `q ≥ 1`, and the Stratonovich-corrected drift
    /// field `U_0 = Σ_i (b_i − ½ Σ_q U_q σ_iq) ∂_i` for `q = 0`.
    pub fn make_u(&self, q: usize) -> Result<VectorField> {
        if q > self.d {
            return Err(Error::IndexOutOfRange {
                index: q,
                max: self.d,
            });
        }
        if q > 0 {
            return Ok(VectorField::new(
                (0..self.n).map(|i| self.sigma[i][q - 1].clone()).collect(),
            ));
        }
        let noise: Vec<VectorField> = (1..=self.d)
            .map(|q| self.make_u(q))
            .collect::<Result<_>>()?;
        let coeffs = (0..self.n)
            .map(|i| {
                let correction = Expr::sum(
                    noise
                        .iter()
                        .enumerate()
                        .map(|(q, u)| u.apply(&self.sigma[i][q])),
                );
                self.drift[i]
                    .clone()
                    .sub(Expr::constant(0.5).mul(correction))
            })
            .collect();
        Ok(VectorField::new(coeffs))
    }

    /// `G f = ½ Σ a_ij ∂_ij f + Σ b_i ∂_i f` (spatial part only).
    pub fn apply_g(&self, f: &Expr) -> Expr {
        let a = self.diffusion_matrix();
        let grad = f.gradient(self.n);
        let mut second = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if a[i][j].is_zero() {
                    continue;
                }
                second.push(a[i][j].clone().mul(grad[i].diff_var(j)));
            }
        }
        let first = (0..self.n).map(|i| self.drift[i].clone().mul(grad[i].clone()));
        Expr::constant(0.5)
            .mul(Expr::sum(second))
            .add(Expr::sum(first))
    }

    /// `G* f = ½ Σ ∂_ij (a_ij f) − Σ ∂_i (b_i f)`.
    pub fn apply_g_dual(&self, f: &Expr) -> Expr {
        let a = self.diffusion_matrix();
        let mut second = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if a[i][j].is_zero() {
                    continue;
                }
                second.push(a[i][j].clone().mul(f.clone()).diff_var(i).diff_var(j));
            }
        }
        let first = (0..self.n).map(|i| self.drift[i].clone().mul(f.clone()).diff_var(i));
        Expr::constant(0.5)
            .mul(Expr::sum(second))
            .sub(Expr::sum(first))
    }

    /// Max over `points` of `|G f − (½ Σ_q U_q U_q f + U_0 f)|`.
    pub fn check_generator_identity(&self, f: &Expr, points: &[Vec<f64>]) -> Result<f64> {
        let lhs = self.apply_g(f);
        let u0 = self.make_u(0)?;
        let mut terms = vec![u0.apply(f)];
        for q in 1..=self.d {
            let u = self.make_u(q)?;
            terms.push(Expr::constant(0.5).mul(u.apply(&u.apply(f))));
        }
        let rhs = Expr::sum(terms);
        let mut worst: f64 = 0.0;
        for x in points {
            let dev = (lhs.eval(x, 0.0)? - rhs.eval(x, 0.0)?).abs();
            worst = worst.max(dev);
        }
        Ok(worst)
    }

    /// Numeric `a(x)`.
    pub fn eval_diffusion_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut s = DMatrix::zeros(self.n, self.d);
        for i in 0..self.n {
            for q in 0..self.d {
                s[(i, q)] = self.sigma[i][q].eval(x, 0.0)?;
            }
        }
        Ok(&s * s.transpose())
    }

    /// Smallest eigenvalue of `a(x)` over the sample points. Values below
    /// `-1e-10` indicate a malformed σ and are surfaced as warnings only.
    pub fn min_eigenvalue(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for x in points {
            let a = self.eval_diffusion_matrix(x)?;
            let eig = a.symmetric_eigenvalues();
            worst = worst.min(eig.min());
        }
        Ok(worst)
    }

    /// Evaluate `σ(x)` and `b(x)`; used by tests and diagnostics.
    pub fn eval_drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.drift
            .iter()
            .map(|b| b.eval(x, 0.0).map_err(Error::from))
            .collect()
    }
}

/// First-order operator `Σ_i c_i(x) ∂_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub coeffs: Vec<Expr>,
}

impl VectorField {
    pub fn new(coeffs: Vec<Expr>) -> Self {
        VectorField { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn zero(n: usize) -> Self {
        VectorField {
            coeffs: vec![Expr::zero(); n],
        }
    }

    /// Total number of expression nodes over all components.
    pub fn size(&self) -> usize {
        self.coeffs.iter().map(Expr::size).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Expr::is_zero)
    }

    /// `Σ_i c_i ∂_i f`.
    pub fn apply(&self, f: &Expr) -> Expr {
        Expr::sum(
            self.coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, c)| c.clone().mul(f.diff_var(i))),
        )
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|c| c.eval(x, 0.0).map_err(Error::from))
            .collect()
    }

    pub fn neg(&self) -> VectorField {
        VectorField::new(self.coeffs.iter().cloned().map(Expr::neg).collect())
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField::new(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.clone().add(b.clone()))
                .collect(),
        )
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}*d{}", i + 1)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}
