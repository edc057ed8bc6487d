//! Marked points of a chordal Loewner evolution driven by `√κ B`, as a
//! degenerate diffusion, with conformal-weight factors and the BPZ
//! operator.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{CmpOp, Expr, Predicate};
use crate::fields::DiffusionSpec;
use crate::hormander::RankReport;
use crate::observable::ObservableSpec;
use crate::paths::PathConfig;
use crate::verify::{ResidualMode, ResidualReport};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SleConfig {
    pub kappa: f64,
    /// Launch values; the first is the driving point.
    pub launch: Vec<f64>,
    /// Conformal weights of the marked points 2..n.
    pub weights: Vec<f64>,
    /// Extra drift of the driving point.
    pub drift: Expr,
    pub collision_guard: f64,
}

impl SleConfig {
    pub fn new(kappa: f64, launch: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let cfg = SleConfig {
            kappa,
            launch,
            weights,
            drift: Expr::zero(),
            collision_guard: 1e-3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n(&self) -> usize {
        self.launch.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!(
                "kappa must be finite and >= 0, got {}",
                self.kappa
            )));
        }
        if self.launch.is_empty() {
            return Err(Error::Config("at least the driving point is needed".into()));
        }
        if self.weights.len() + 1 != self.launch.len() {
            return Err(Error::DimensionMismatch {
                expected: self.launch.len() - 1,
                got: self.weights.len(),
            });
        }
        if !(self.collision_guard > 0.0) {
            return Err(Error::Config(format!(
                "collision guard must be positive, got {}",
                self.collision_guard
            )));
        }
        if self.drift.depends_on_time() || self.drift.max_var().is_some_and(|v| v >= self.n()) {
            return Err(Error::Config(
                "driving drift must be time-independent and use only x1..xn".into(),
            ));
        }
        check_distinct(&self.launch)?;
        if min_gap(&self.launch) <= self.collision_guard {
            return Err(Error::Config(format!(
                "launch points {:?} are within the collision guard {}",
                self.launch, self.collision_guard
            )));
        }
        Ok(())
    }

    /// Path settings with the collision guard switched on.
    pub fn path_config(&self, base: &PathConfig) -> PathConfig {
        PathConfig {
            collision_guard: Some(self.collision_guard),
            ..base.clone()
        }
    }
}

fn min_gap(x: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            m = m.min((x[i] - x[j]).abs());
        }
    }
    m
}

fn check_distinct(x: &[f64]) -> Result<()> {
    if min_gap(x) == 0.0 || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Collision(x.to_vec()));
    }
    Ok(())
}

fn gap(i: usize) -> Expr {
    Expr::var(i).sub(Expr::var(0))
}

/// `dX¹ = √κ dB + b₁ dt`, `dXⁱ = 2/(Xⁱ − X¹) dt`, on `{|xᵢ − xⱼ| > δ_c}`.
pub fn sle_spec(cfg: &SleConfig) -> Result<DiffusionSpec> {
    cfg.validate()?;
    let n = cfg.n();
    let mut sigma = vec![vec![Expr::zero()]; n];
    sigma[0][0] = Expr::constant(cfg.kappa.sqrt());
    let mut drift = vec![cfg.drift.clone()];
    drift.extend((1..n).map(|i| Expr::constant(2.0).div(gap(i))));
    let mut domain = Predicate::True;
    for i in 0..n {
        for j in i + 1..n {
            let d = Expr::unary(crate::expr::UnaryOp::Abs, Expr::var(j).sub(Expr::var(i)));
            domain = domain.and(Predicate::Cmp(
                d,
                CmpOp::Gt,
                Expr::constant(cfg.collision_guard),
            ));
        }
    }
    DiffusionSpec::new(sigma, drift, domain)
}

/// `g = −Σ 2Δᵢ/(xᵢ − x₁)²`, `h = 0`, `ψ = f`, so that
/// `γ_t = ∏ g_t′(xᵢ)^{Δᵢ}` and `γ_t f(X_t)` is the covariant observable.
pub fn covariant_observable(cfg: &SleConfig, f: &Expr) -> Result<ObservableSpec> {
    let g = Expr::sum(
        cfg.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(k, &w)| Expr::constant(-2.0 * w).div(gap(k + 1).square())),
    );
    ObservableSpec::new(g.simplify(), Expr::zero(), f.clone())
}

/// `(κ/2)∂₁₁f + Σ 2/(xᵢ−x₁) ∂ᵢf + b₁∂₁f − Σ 2Δᵢ/(xᵢ−x₁)² f`.
pub fn bpz_operator(cfg: &SleConfig, f: &Expr) -> Expr {
    let mut terms = vec![
        Expr::constant(0.5 * cfg.kappa).mul(f.diff_var(0).diff_var(0)),
        cfg.drift.clone().mul(f.diff_var(0)),
    ];
    for (k, &w) in cfg.weights.iter().enumerate() {
        let i = k + 1;
        terms.push(Expr::constant(2.0).div(gap(i)).mul(f.diff_var(i)));
        terms.push(Expr::constant(-2.0 * w).div(gap(i).square()).mul(f.clone()));
    }
    Expr::sum(terms).simplify()
}

/// Max of `|BPZ f|` over points; every point must be collision-free.
pub fn bpz_residual(
    cfg: &SleConfig,
    f: &Expr,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ResidualReport> {
    let op = crate::expr::Compiled::new(&bpz_operator(cfg, f));
    let mut s = crate::expr::Scratch::new();
    let mut values = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != cfg.n() {
            return Err(Error::DimensionMismatch {
                expected: cfg.n(),
                got: p.len(),
            });
        }
        check_distinct(p)?;
        values.push(op.eval(p, 0.0, &mut s)?);
    }
    let residual = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pass = values.iter().all(|v| v.is_finite()) && residual <= tol;
    Ok(ResidualReport {
        mode: ResidualMode::StrongSymbolic,
        residual,
        values,
        tolerance: tol,
        budget: None,
        pass,
    })
}

/// Bracket rank of the marked-point diffusion at collision-free points.
pub fn sle_hormander_report(
    cfg: &SleConfig,
    points: &[Vec<f64>],
    depth: usize,
    tol: f64,
) -> Result<Vec<RankReport>> {
    let spec = sle_spec(cfg)?;
    for p in points {
        if p.len() != cfg.n() {
            return Err(Error::DimensionMismatch {
                expected: cfg.n(),
                got: p.len(),
            });
        }
        check_distinct(p)?;
    }
    crate::hormander::check(&spec, points, depth, tol)
}
