//! Monte Carlo estimators for Feynman–Kac representations, survival
//! probabilities and killed transition densities.

mod density;
mod harmonic;

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::DiffusionSpec;
use crate::paths::{PathConfig, PathSample, Simulator, StopCause};
use crate::rng::derive_seed;
use crate::stats::{mean_se, par_map};

pub use crate::observable::ObservableSpec;
pub use density::{transition_density, DensityEstimate, Grid};
pub use harmonic::{
    estimate_sup_g, solve_harmonic, stabilization_test, Criterion, HarmonicEstimate,
    HarmonicOptions, StabilizationReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_censored_by_cap: usize,
    pub seed: u64,
}

impl MCEstimate {
    /// Build from per-path values. With antithetic pairing the error is
    /// computed from pair averages.
    pub fn from_values(
        values: &[f64],
        n_censored_by_cap: usize,
        seed: u64,
        antithetic: bool,
    ) -> MCEstimate {
        let m = mean_se(values);
        let std_error = if antithetic && values.len() >= 4 {
            let pairs: Vec<f64> = values
                .chunks_exact(2)
                .map(|p| 0.5 * (p[0] + p[1]))
                .collect();
            mean_se(&pairs).std_error
        } else {
            m.std_error
        };
        MCEstimate {
            mean: m.mean,
            std_error,
            n_paths: values.len(),
            n_censored_by_cap,
            seed,
        }
    }

    /// `|mean − target| ≤ max(k·std_error, rel·|target|)`.
    pub fn agrees_with(&self, target: f64, k: f64, rel: f64) -> bool {
        (self.mean - target).abs() <= (k * self.std_error).max(rel * target.abs())
    }
}

pub(crate) fn check_paths(cfg: &PathConfig, n_paths: u64) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    if cfg.antithetic && n_paths % 2 == 1 {
        return Err(Error::Config(
            "antithetic sampling needs an even path count".into(),
        ));
    }
    Ok(())
}

pub(crate) fn run_paths(
    sim: &Simulator,
    x: &[f64],
    t: f64,
    n_paths: u64,
) -> Result<Vec<PathSample>> {
    par_map(n_paths, |i| sim.simulate(x, t, i))
        .into_iter()
        .collect()
}

/// Per-path contributions `γ_τ ψ(X_τ, τ) + H_τ`, failing on the first
/// non-finite one.
pub(crate) fn contributions(sim: &Simulator, samples: &[PathSample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| match sim.contribution(s) {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::NonFiniteSample { path: i as u64 }),
        })
        .collect()
}

fn capped(samples: &[PathSample]) -> usize {
    samples
        .iter()
        .filter(|s| s.cause == StopCause::StepCap)
        .count()
}

/// `E_{x,t}[γ_{t,τ} ψ(X_τ, τ) + H_{t,τ}]` with `τ = τ_∂Λ ∧ T`, where `T` is
/// `cfg.horizon`.
pub fn solve_parabolic(
    spec: &DiffusionSpec,
    obs: &ObservableSpec,
    x: &[f64],
    t: f64,
    cfg: &PathConfig,
    n_paths: u64,
) -> Result<MCEstimate> {
    check_paths(cfg, n_paths)?;
    if !cfg.horizon.is_finite() {
        return Err(Error::Config(
            "parabolic problems need a finite horizon".into(),
        ));
    }
    if !(t >= 0.0 && t < cfg.horizon) {
        return Err(Error::Config(format!(
            "launch time {t} outside [0, {})",
            cfg.horizon
        )));
    }
    let sim = Simulator::new(spec, obs, cfg)?;
    let samples = run_paths(&sim, x, t, n_paths)?;
    let n_cap = capped(&samples);
    if n_cap == samples.len() {
        return Err(Error::AllCensoredByCap(n_cap));
    }
    let values = contributions(&sim, &samples)?;
    Ok(MCEstimate::from_values(
        &values,
        n_cap,
        cfg.seed,
        cfg.antithetic,
    ))
}

/// `P_{x,t}[τ_∂Λ > T]`.
pub fn survival_probability(
    spec: &DiffusionSpec,
    x: &[f64],
    t: f64,
    horizon: f64,
    cfg: &PathConfig,
    n_paths: u64,
) -> Result<MCEstimate> {
    check_paths(cfg, n_paths)?;
    if !spec.domain.contains(x) {
        return Err(Error::Config(format!(
            "launch point {x:?} is outside the domain"
        )));
    }
    if horizon <= t {
        return Ok(MCEstimate::from_values(
            &vec![1.0; n_paths as usize],
            0,
            cfg.seed,
            cfg.antithetic,
        ));
    }
    let cfg = cfg.clone().with_horizon(horizon);
    let sim = Simulator::new(spec, &ObservableSpec::plain(), &cfg)?;
    let samples = run_paths(&sim, x, t, n_paths)?;
    let values: Vec<f64> = samples
        .iter()
        .map(|s| {
            if s.cause == StopCause::Horizon {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(MCEstimate::from_values(
        &values,
        capped(&samples),
        cfg.seed,
        cfg.antithetic,
    ))
}

/// Drift `a ∇f / f + b` of the Doob h-transform by a positive space-time
/// harmonic `f`.
pub fn h_transform_drift(
    spec: &DiffusionSpec,
    f: &Expr,
    point: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let fv = f.eval(point, t)?;
    if fv == 0.0 {
        return Err(Error::ZeroAtPoint(point.to_vec()));
    }
    let grad: Vec<f64> = f
        .gradient(spec.n)
        .iter()
        .map(|e| e.eval(point, t))
        .collect::<Result<_, _>>()?;
    let a = spec.eval_diffusion_matrix(point)?;
    let b = spec.eval_drift(point)?;
    Ok((0..spec.n)
        .map(|i| (0..spec.n).map(|j| a[(i, j)] * grad[j]).sum::<f64>() / fv + b[i])
        .collect())
}

/// One launch point of a field solve.
#[derive(Clone, Debug, Serialize)]
pub struct FieldRow {
    pub x: Vec<f64>,
    pub t: f64,
    pub estimate: MCEstimate,
}

/// Solve at every launch point with an independent seed per node, so that
/// node errors are independent.
pub fn solve_field<F>(
    points: &[(Vec<f64>, f64)],
    cfg: &PathConfig,
    mut solve: F,
) -> Result<Vec<FieldRow>>
where
    F: FnMut(&[f64], f64, &PathConfig) -> Result<MCEstimate>,
{
    points
        .iter()
        .enumerate()
        .map(|(k, (x, t))| {
            let node_cfg = cfg.clone().with_seed(derive_seed(cfg.seed, k as u64));
            Ok(FieldRow {
                x: x.clone(),
                t: *t,
                estimate: solve(x, *t, &node_cfg)?,
            })
        })
        .collect()
}

/// CSV with columns `x1..xn,t,mean,std_error`.
pub fn write_field_csv<W: Write>(rows: &[FieldRow], n: usize, mut w: W) -> Result<()> {
    let xs: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},t,mean,std_error", xs.join(","))?;
    for r in rows {
        for v in &r.x {
            write!(w, "{v},")?;
        }
        writeln!(w, "{},{},{}", r.t, r.estimate.mean, r.estimate.std_error)?;
    }
    Ok(())
}
