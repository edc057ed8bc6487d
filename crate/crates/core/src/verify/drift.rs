use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr, Scratch};
use crate::fields::DiffusionSpec;
use crate::observable::ObservableSpec;
use crate::paths::{PathConfig, Simulator};
use crate::rng::{derive_seed, path_rng};
use crate::stats::{mean_se, par_map, two_sided_quantile};

/// Minimum number of paths alive at the start of a probe pair.
pub const MIN_SURVIVORS: usize = 100;
const LAUNCH_STREAM: u64 = 0x6c61_756e_6368;

/// Law of the launch point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaunchLaw {
    Point {
        x: Vec<f64>,
    },
    /// Uniform on a box, rejected until inside the domain.
    Uniform {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl LaunchLaw {
    fn draw(&self, sim: &Simulator, seed: u64, path: u64) -> Result<Vec<f64>> {
        match self {
            LaunchLaw::Point { x } => Ok(x.clone()),
            LaunchLaw::Uniform { lo, hi } => {
                let mut rng = path_rng(derive_seed(seed, LAUNCH_STREAM), path);
                for _ in 0..10_000 {
                    let x: Vec<f64> = lo
                        .iter()
                        .zip(hi)
                        .map(|(l, h)| l + rng.random::<f64>() * (h - l))
                        .collect();
                    if sim.in_domain(&x) {
                        return Ok(x);
                    }
                }
                Err(Error::Config(
                    "launch box barely intersects the domain".into(),
                ))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftTestReport {
    pub pairs: Vec<(f64, f64)>,
    pub survivors: Vec<usize>,
    pub mean_increments: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub confidence: f64,
    pub critical_value: f64,
    pub pass: bool,
}

/// For each pair `(t, t')`, average `M_{t'∧τ} − M_t` over paths with
/// `τ > t`, where `M_s = γ_s f(X_s, s) + H_s`, and compare with zero. Probe
/// times are snapped to the first step time at or after them. This checks
/// the first-moment consequence of the martingale property only.
#[allow(clippy::too_many_arguments)]
pub fn martingale_drift_test(
    spec: &DiffusionSpec,
    obs: &ObservableSpec,
    f: &Expr,
    launch: &LaunchLaw,
    pairs: &[(f64, f64)],
    cfg: &PathConfig,
    n_paths: u64,
    confidence: f64,
) -> Result<DriftTestReport> {
    if pairs.is_empty() || pairs.iter().any(|&(a, b)| !(a >= 0.0 && b > a)) {
        return Err(Error::Config("probe pairs must satisfy 0 <= t < t'".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let mut times: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let horizon = *times.last().unwrap();
    let cfg = cfg.clone().with_horizon(horizon);
    let sim = Simulator::new(spec, obs, &cfg)?;
    let fc = Compiled::new(f);
    let tol = 1e-9 * cfg.dt;

    // per path: M at each probe time if alive there, and the final M
    let per_path: Vec<Result<(Vec<Option<f64>>, f64)>> = par_map(n_paths, |p| {
        let x0 = launch.draw(&sim, cfg.seed, p)?;
        let mut scratch = Scratch::new();
        let mut at: Vec<Option<f64>> = vec![None; times.len()];
        let mut last = f64::NAN;
        let mut next = 0;
        let mut err = None;
        sim.simulate_observed(&x0, 0.0, p, |v| {
            let m = match fc.eval(v.x, v.t, &mut scratch) {
                Ok(fv) => v.log_gamma.exp() * fv + v.h,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            };
            last = m;
            let alive = sim.in_domain(v.x);
            while next < times.len() && v.t >= times[next] - tol {
                if alive {
                    at[next] = Some(m);
                }
                next += 1;
            }
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
        Ok((at, last))
    });
    let per_path: Vec<(Vec<Option<f64>>, f64)> = per_path.into_iter().collect::<Result<_>>()?;

    let critical_value = two_sided_quantile(confidence);
    let mut report = DriftTestReport {
        pairs: pairs.to_vec(),
        survivors: Vec::new(),
        mean_increments: Vec::new(),
        std_errors: Vec::new(),
        z_scores: Vec::new(),
        confidence,
        critical_value,
        pass: true,
    };
    for &(a, b) in pairs {
        let ia = times.iter().position(|&t| t == a).unwrap();
        let ib = times.iter().position(|&t| t == b).unwrap();
        let incs: Vec<f64> = per_path
            .iter()
            .filter_map(|(at, last)| at[ia].map(|ma| at[ib].unwrap_or(*last) - ma))
            .collect();
        if incs.len() < MIN_SURVIVORS {
            return Err(Error::TooFewSurvivors {
                time: a,
                survivors: incs.len(),
                needed: MIN_SURVIVORS,
            });
        }
        if let Some(k) = incs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { path: k as u64 });
        }
        let m = mean_se(&incs);
        let z = if m.std_error > 0.0 {
            m.mean / m.std_error
        } else if m.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(m.mean)
        };
        report.pass &= z.abs() < critical_value;
        report.survivors.push(incs.len());
        report.mean_increments.push(m.mean);
        report.std_errors.push(m.std_error);
        report.z_scores.push(z);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn bm() -> DiffusionSpec {
        DiffusionSpec::parse(&[vec!["1"]], &["0"], "-1 < x1 < 1").unwrap()
    }

    #[test]
    fn heat_solution_has_no_drift() {
        let f = parse("exp(pi*pi*t/8)*cos(pi*x1/2)", 1).unwrap();
        let cfg = PathConfig {
            dt: 1e-3,
            seed: 21,
            ..Default::default()
        };
        let launch = LaunchLaw::Point { x: vec![0.2] };
        let r = martingale_drift_test(
            &bm(),
            &ObservableSpec::plain(),
            &f,
            &launch,
            &[(0.0, 0.1), (0.1, 0.3)],
            &cfg,
            20_000,
            0.99,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn wrong_function_is_caught() {
        let f = parse("x1*x1", 1).unwrap();
        let cfg = PathConfig {
            dt: 1e-3,
            seed: 22,
            ..Default::default()
        };
        let launch = LaunchLaw::Uniform {
            lo: vec![-0.5],
            hi: vec![0.5],
        };
        let r = martingale_drift_test(
            &bm(),
            &ObservableSpec::plain(),
            &f,
            &launch,
            &[(0.0, 0.1)],
            &cfg,
            5000,
            0.99,
        )
        .unwrap();
        assert!(!r.pass);
        assert!(r.mean_increments[0] > 0.0);
    }

    #[test]
    fn too_few_survivors() {
        let f = parse("x1", 1).unwrap();
        let cfg = PathConfig {
            dt: 1e-3,
            ..Default::default()
        };
        let launch = LaunchLaw::Point { x: vec![0.0] };
        let r = martingale_drift_test(
            &bm(),
            &ObservableSpec::plain(),
            &f,
            &launch,
            &[(0.0, 0.1)],
            &cfg,
            50,
            0.99,
        );
        assert!(matches!(r, Err(Error::TooFewSurvivors { .. })));
    }
}
