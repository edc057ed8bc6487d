use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::DiffusionSpec;
use crate::paths::{PathConfig, Simulator, StopCause};
use crate::rng::path_rng;
use crate::stats::mean_se;

use super::{check_paths, contributions, run_paths, MCEstimate, ObservableSpec};

/// Fraction of step-capped paths above which an estimate is unreliable.
const CAP_TOLERANCE: f64 = 0.01;
/// Half-width used for unbounded sides when sampling `g`.
const UNBOUNDED_REACH: f64 = 10.0;

/// Integrability assumption asserted by the user for a harmonic solve,
/// with `C = sup g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// `C < 0`.
    NegativeRate,
    /// `C = 0` and `h = 0`.
    Conservative,
    /// `E_w[τ^α e^{Cτ}] < ∞` for all `w` and `E_w[e^{Cτ}] → 1` at the
    /// boundary. Never verified.
    Moment { alpha: f64 },
}

#[derive(Clone, Debug)]
pub struct HarmonicOptions {
    pub criterion: Option<Criterion>,
    /// Points used to estimate `sup g`.
    pub sup_g_samples: usize,
    /// Threshold for the running-mean check, in standard errors.
    pub stabilization_z: f64,
}

impl Default for HarmonicOptions {
    fn default() -> Self {
        HarmonicOptions {
            criterion: None,
            sup_g_samples: 4096,
            stabilization_z: 4.0,
        }
    }
}

/// Divergence diagnostics for a sample mean of heavy-tailed contributions.
#[derive(Clone, Debug, Serialize)]
pub struct StabilizationReport {
    /// Sample sizes `N/2^j` at which the running mean was compared to the
    /// full mean.
    pub checkpoints: Vec<usize>,
    pub running_means: Vec<f64>,
    /// Largest `|m_N − m_n| / (se_N √(N/n − 1))`.
    pub max_scaled_jump: f64,
    /// Hill estimate of the tail index of `|contribution|`; a value below 1
    /// means the mean itself does not exist.
    pub tail_index: Option<f64>,
    pub divergent: bool,
}

/// Running means at dyadic checkpoints must agree with the full mean to
/// within `z` standard errors (scaled for the overlap), and the Hill tail
/// index of the contributions must exceed one. Either failure flags the
/// estimator as divergent.
pub fn stabilization_test(values: &[f64], z: f64) -> StabilizationReport {
    let n = values.len();
    let full = mean_se(values);
    let mut checkpoints = Vec::new();
    let mut running_means = Vec::new();
    let mut worst: f64 = 0.0;
    let mut m = n / 2;
    while m >= 1000.min(n / 4).max(16) && m > 0 {
        let part = mean_se(&values[..m]);
        let scale = full.std_error * ((n as f64 / m as f64) - 1.0).sqrt();
        let jump = (full.mean - part.mean).abs();
        let scaled = if scale > 0.0 {
            jump / scale
        } else if jump > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst = worst.max(scaled);
        checkpoints.push(m);
        running_means.push(part.mean);
        m /= 2;
    }
    let tail_index = hill_tail_index(values);
    let divergent = worst > z || tail_index.is_some_and(|a| a < 1.0);
    StabilizationReport {
        checkpoints,
        running_means,
        max_scaled_jump: worst,
        tail_index,
        divergent,
    }
}

/// Hill estimator on the top 5% of `|x|`.
fn hill_tail_index(values: &[f64]) -> Option<f64> {
    let mut abs: Vec<f64> = values
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .collect();
    if abs.len() < 200 {
        return None;
    }
    abs.sort_by(|a, b| b.total_cmp(a));
    let k = (abs.len() / 20).max(10);
    let threshold = abs[k];
    if threshold <= 0.0 {
        return None;
    }
    let s: f64 = abs[..k].iter().map(|v| (v / threshold).ln()).sum();
    if s <= 0.0 {
        // all top values equal: no tail at all
        return Some(f64::INFINITY);
    }
    Some(k as f64 / s)
}

/// `sup g` over sampled points of `Λ`, inflated by a 10% margin. Unbounded
/// sides of the domain are sampled up to a fixed reach around `x`.
pub fn estimate_sup_g(
    spec: &DiffusionSpec,
    g: &Expr,
    x: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if let Some(c) = g.as_const() {
        return Ok(c + 0.1 * c.abs());
    }
    let (lo, hi) = spec.domain.bounding_box(spec.n);
    let lo: Vec<f64> = lo
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l.is_finite() {
                l
            } else {
                x[i] - UNBOUNDED_REACH
            }
        })
        .collect();
    let hi: Vec<f64> = hi
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if h.is_finite() {
                h
            } else {
                x[i] + UNBOUNDED_REACH
            }
        })
        .collect();
    let mut rng = path_rng(seed, u64::MAX);
    let mut best = g.eval(x, 0.0)?;
    let mut p = vec![0.0; spec.n];
    for _ in 0..samples {
        for i in 0..spec.n {
            p[i] = lo[i] + rng.random::<f64>() * (hi[i] - lo[i]);
        }
        if !spec.domain.contains(&p) {
            continue;
        }
        if let Ok(v) = g.eval(&p, 0.0) {
            best = best.max(v);
        }
    }
    Ok(best + 0.1 * best.abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicEstimate {
    /// Mean over paths that exited; capped paths are excluded and counted.
    pub estimate: MCEstimate,
    pub cap_fraction: f64,
    pub unreliable: bool,
    pub divergent: bool,
    pub stabilization: StabilizationReport,
    /// Sampled `sup g` with margin.
    pub sup_g: f64,
    pub criterion: Option<Criterion>,
    /// Criterion (c)'s exponent is taken on trust.
    pub alpha_verified: bool,
    pub warnings: Vec<String>,
}

/// `E_x[γ_τ ψ(X_τ) + H_τ]` without a horizon; the step cap stands in for
/// localization.
pub fn solve_harmonic(
    spec: &DiffusionSpec,
    obs: &ObservableSpec,
    x: &[f64],
    cfg: &PathConfig,
    n_paths: u64,
    opts: &HarmonicOptions,
) -> Result<HarmonicEstimate> {
    check_paths(cfg, n_paths)?;
    let cfg = cfg.clone().with_horizon(f64::INFINITY);
    let sim = Simulator::new(spec, obs, &cfg)?;
    if !sim.in_domain(x) {
        return Err(Error::Config(format!(
            "launch point {x:?} is outside the domain"
        )));
    }
    let sup_g = estimate_sup_g(spec, &obs.g, x, opts.sup_g_samples, cfg.seed)?;
    let mut warnings = Vec::new();
    let conservative = obs.g.is_zero() && obs.h.is_zero();
    match opts.criterion {
        None if sup_g >= 0.0 && !conservative => warnings.push(format!(
            "sup g is about {sup_g:.4} >= 0 and no integrability criterion was asserted; the estimate may not exist"
        )),
        Some(Criterion::NegativeRate) if sup_g >= 0.0 => {
            warnings.push(format!("criterion (a) asserted but sampled sup g is {sup_g:.4}"))
        }
        Some(Criterion::Conservative) if !conservative => {
            warnings.push("criterion (b) asserted but g or h is not identically zero".into())
        }
        Some(Criterion::Moment { alpha }) => {
            warnings.push(format!("criterion (c) with alpha = {alpha} is assumed, not verified"))
        }
        _ => {}
    }

    let samples = run_paths(&sim, x, 0.0, n_paths)?;
    let n_cap = samples
        .iter()
        .filter(|s| s.cause == StopCause::StepCap)
        .count();
    if n_cap == samples.len() {
        return Err(Error::AllCensoredByCap(n_cap));
    }
    let exited: Vec<_> = samples
        .into_iter()
        .filter(|s| s.cause != StopCause::StepCap)
        .collect();
    let values = contributions(&sim, &exited)?;
    let cap_fraction = n_cap as f64 / n_paths as f64;
    let unreliable = cap_fraction > CAP_TOLERANCE;
    if unreliable {
        warnings.push(format!(
            "{n_cap} of {n_paths} paths hit the step cap of {}",
            cfg.max_steps
        ));
    }
    let stabilization = stabilization_test(&values, opts.stabilization_z);
    if stabilization.divergent {
        warnings
            .push("running mean does not stabilize: the expectation appears to be infinite".into());
    }
    let antithetic = cfg.antithetic && n_cap == 0;
    Ok(HarmonicEstimate {
        estimate: MCEstimate::from_values(&values, n_cap, cfg.seed, antithetic),
        cap_fraction,
        unreliable,
        divergent: stabilization.divergent,
        stabilization,
        sup_g,
        criterion: opts.criterion,
        alpha_verified: false,
        warnings,
    })
}
