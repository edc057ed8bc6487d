//! Residual checks of the PDEs behind the estimators, martingale drift
//! tests, distribution tests and closed-form oracles.

mod drift;
mod ks;
mod oracle;
mod quad;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{FieldRow, ObservableSpec};
use crate::expr::{Compiled, Expr, Scratch};
use crate::fields::DiffusionSpec;

pub use drift::{martingale_drift_test, DriftTestReport, LaunchLaw, MIN_SURVIVORS};
pub use ks::{kolmogorov_sf, ks_per_coordinate, ks_two_sample, KsResult, P_FLOOR};
pub use oracle::{
    exp_moment, f_s, laplace, moment, oracle_interval_bm, survival, OracleQuery, OracleValue,
    EXP_MOMENT_THRESHOLD,
};
pub use quad::{bump_profile, duality_gap, Bump, QuadGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualMode {
    StrongSymbolic,
    StrongGrid,
    Weak,
}

/// Error budget of a weak residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeakBudget {
    /// Standard deviation of the integral propagated from per-node
    /// standard errors.
    pub mc_error: f64,
    /// `|Q_h − Q_{2h}|` from the same nodes.
    pub quadrature_error: f64,
    pub factor: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub mode: ResidualMode,
    /// Max absolute pointwise residual, or the weak integral.
    pub residual: f64,
    /// Pointwise residuals (strong modes only).
    pub values: Vec<f64>,
    pub tolerance: f64,
    pub budget: Option<WeakBudget>,
    pub pass: bool,
}

impl ResidualReport {
    fn strong(mode: ResidualMode, values: Vec<f64>, tolerance: f64) -> Self {
        let residual = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pass = values.iter().all(|v| v.is_finite()) && residual <= tolerance;
        ResidualReport {
            mode,
            residual,
            values,
            tolerance,
            budget: None,
            pass,
        }
    }
}

/// `G f + ∂_t f + g f + h` as an expression.
pub fn pde_operator(spec: &DiffusionSpec, obs: &ObservableSpec, f: &Expr) -> Expr {
    spec.apply_g(f)
        .add(f.diff_time())
        .add(obs.g.clone().mul(f.clone()))
        .add(obs.h.clone())
        .simplify()
}

/// `max |G f + ∂_t f + g f + h|` over space-time points.
pub fn strong_residual(
    spec: &DiffusionSpec,
    obs: &ObservableSpec,
    f: &Expr,
    points: &[(Vec<f64>, f64)],
    tol: f64,
) -> Result<ResidualReport> {
    let op = Compiled::new(&pde_operator(spec, obs, f));
    let mut s = Scratch::new();
    let values = points
        .iter()
        .map(|(x, t)| op.eval(x, *t, &mut s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ResidualReport::strong(
        ResidualMode::StrongSymbolic,
        values,
        tol,
    ))
}

/// Node values of a field on a space-time quadrature grid (time is the
/// last axis), with optional per-node standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct GridField {
    pub grid: QuadGrid,
    pub values: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
}

impl GridField {
    pub fn from_fn<F>(grid: QuadGrid, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64], f64) -> Result<f64>,
    {
        let n = grid.dim() - 1;
        let values = (0..grid.n_nodes())
            .map(|k| {
                let p = grid.node(k);
                f(&p[..n], p[n])
            })
            .collect::<Result<_>>()?;
        Ok(GridField {
            grid,
            values,
            std_errors: None,
        })
    }

    /// Nodes of the grid in storage order, as `(x, t)` launch points.
    pub fn launch_points(grid: &QuadGrid) -> Vec<(Vec<f64>, f64)> {
        let n = grid.dim() - 1;
        (0..grid.n_nodes())
            .map(|k| {
                let mut p = grid.node(k);
                let t = p.pop().unwrap();
                debug_assert_eq!(p.len(), n);
                (p, t)
            })
            .collect()
    }

    /// Field from solver rows produced on [`launch_points`](Self::launch_points).
    pub fn from_rows(grid: QuadGrid, rows: &[FieldRow]) -> Result<Self> {
        if rows.len() != grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_nodes(),
                got: rows.len(),
            });
        }
        let values = rows.iter().map(|r| r.estimate.mean).collect();
        let std_errors = Some(rows.iter().map(|r| r.estimate.std_error).collect());
        Ok(GridField {
            grid,
            values,
            std_errors,
        })
    }
}

/// Central-difference residual `G f + ∂_t f + g f + h` at interior nodes
/// of a gridded field.
pub fn strong_residual_grid(
    spec: &DiffusionSpec,
    obs: &ObservableSpec,
    field: &GridField,
    tol: f64,
) -> Result<ResidualReport> {
    let grid = &field.grid;
    let n = spec.n;
    if grid.dim() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: grid.dim(),
        });
    }
    let a = spec.diffusion_matrix();
    let ac: Vec<Vec<Compiled>> = a
        .iter()
        .map(|r| r.iter().map(Compiled::new).collect())
        .collect();
    let bc: Vec<Compiled> = spec.drift.iter().map(Compiled::new).collect();
    let gc = Compiled::new(&obs.g);
    let hc = Compiled::new(&obs.h);
    let mut s = Scratch::new();
    let h: Vec<f64> = (0..=n).map(|i| grid.step(i)).collect();
    let val = |idx: &[usize]| field.values[grid.flat(idx)];
    let mut values = Vec::new();
    for k in 0..grid.n_nodes() {
        if grid.on_boundary(k) {
            continue;
        }
        let idx = grid.index(k);
        let p = grid.node(k);
        let (x, t) = (&p[..n], p[n]);
        let shifted = |moves: &[(usize, isize)]| {
            let mut j = idx.clone();
            for &(axis, d) in moves {
                j[axis] = (j[axis] as isize + d) as usize;
            }
            val(&j)
        };
        let f0 = val(&idx);
        let mut r = (shifted(&[(n, 1)]) - shifted(&[(n, -1)])) / (2.0 * h[n]);
        for i in 0..n {
            let bi = bc[i].eval(x, t, &mut s)?;
            r += bi * (shifted(&[(i, 1)]) - shifted(&[(i, -1)])) / (2.0 * h[i]);
            for j in 0..n {
                let aij = ac[i][j].eval(x, t, &mut s)?;
                if aij == 0.0 {
                    continue;
                }
                let dij = if i == j {
                    (shifted(&[(i, 1)]) - 2.0 * f0 + shifted(&[(i, -1)])) / (h[i] * h[i])
                } else {
                    (shifted(&[(i, 1), (j, 1)])
                        - shifted(&[(i, 1), (j, -1)])
                        - shifted(&[(i, -1), (j, 1)])
                        + shifted(&[(i, -1), (j, -1)]))
                        / (4.0 * h[i] * h[j])
                };
                r += 0.5 * aij * dij;
            }
        }
        r += gc.eval(x, t, &mut s)? * f0 + hc.eval(x, t, &mut s)?;
        values.push(r);
    }
    Ok(ResidualReport::strong(
        ResidualMode::StrongGrid,
        values,
        tol,
    ))
}

/// Options for [`weak_residual`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeakOptions {
    /// Multiplier on `mc_error + quadrature_error`.
    pub factor: f64,
    /// Absolute tolerance added to the budget.
    pub floor: f64,
}

impl Default for WeakOptions {
    fn default() -> Self {
        WeakOptions {
            factor: 3.0,
            floor: 0.0,
        }
    }
}

/// `∫∫ f (G*φ − ∂_t φ + g φ) + h φ dx dt` by Simpson quadrature on the
/// field's grid. The test function must vanish on the grid boundary and
/// outside the domain.
pub fn weak_residual(
    spec: &DiffusionSpec,
    obs: &ObservableSpec,
    field: &GridField,
    phi: &Expr,
    opts: &WeakOptions,
) -> Result<ResidualReport> {
    let grid = &field.grid;
    let n = spec.n;
    if grid.dim() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: grid.dim(),
        });
    }
    if field.values.len() != grid.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_nodes(),
            got: field.values.len(),
        });
    }
    if !grid.supports_richardson() {
        return Err(Error::Config(
            "weak residual needs interval counts divisible by 4 for its error estimate".into(),
        ));
    }
    let adj = spec
        .apply_g_dual(phi)
        .sub(phi.diff_time())
        .add(obs.g.clone().mul(phi.clone()))
        .simplify();
    let adj = Compiled::new(&adj);
    let phic = Compiled::new(phi);
    let hc = Compiled::new(&obs.h);
    let mut s = Scratch::new();

    let mut peak: f64 = 0.0;
    let mut leak: Option<(Vec<f64>, f64)> = None;
    let mut integrand = Vec::with_capacity(grid.n_nodes());
    let mut sensitivity = Vec::with_capacity(grid.n_nodes());
    for k in 0..grid.n_nodes() {
        let p = grid.node(k);
        let (x, t) = (&p[..n], p[n]);
        let ph = phic.eval(x, t, &mut s)?;
        peak = peak.max(ph.abs());
        let outside = grid.on_boundary(k) || !spec.domain.contains(x);
        if outside && ph != 0.0 && leak.as_ref().is_none_or(|(_, v)| ph.abs() > *v) {
            leak = Some((p.clone(), ph.abs()));
        }
        let l = adj.eval(x, t, &mut s)?;
        let hv = if ph == 0.0 {
            0.0
        } else {
            hc.eval(x, t, &mut s)? * ph
        };
        integrand.push(field.values[k] * l + hv);
        sensitivity.push(l);
    }
    if let Some((p, v)) = leak {
        if v > 1e-14 * peak {
            return Err(Error::SupportLeak(format!(
                "test function is {v:e} at {p:?}, on the grid boundary or outside the domain"
            )));
        }
    }
    let fine = grid.integrate(&integrand);
    let coarse: f64 = integrand
        .iter()
        .enumerate()
        .map(|(k, v)| grid.weight(k, true) * v)
        .sum();
    let mc_error = match &field.std_errors {
        Some(se) => sensitivity
            .iter()
            .zip(se)
            .enumerate()
            .map(|(k, (l, e))| (grid.weight(k, false) * l * e).powi(2))
            .sum::<f64>()
            .sqrt(),
        None => 0.0,
    };
    let budget = WeakBudget {
        mc_error,
        quadrature_error: (fine - coarse).abs(),
        factor: opts.factor,
        floor: opts.floor,
    };
    let tolerance = opts.floor + opts.factor * (budget.mc_error + budget.quadrature_error);
    Ok(ResidualReport {
        mode: ResidualMode::Weak,
        residual: fine,
        values: Vec::new(),
        tolerance,
        budget: Some(budget),
        pass: fine.is_finite() && fine.abs() <= tolerance,
    })
}
