use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::MCEstimate;
use crate::fields::DiffusionSpec;
use crate::observable::ObservableSpec;
use crate::stats::par_map;

use super::engine::{PathConfig, Simulator, StopCause};

#[derive(Clone, Debug, Serialize)]
pub struct RegularityProbe {
    pub boundary_point: Vec<f64>,
    pub delta: f64,
    pub approach: Vec<Vec<f64>>,
    pub estimates: Vec<MCEstimate>,
    /// Estimates are non-decreasing along the approach sequence. Reported,
    /// not required.
    pub monotone: bool,
}

/// Estimate `P_w[|X_τ − x| < δ, τ < δ]` for each approach point `w`.
pub fn x_regularity_probe(
    spec: &DiffusionSpec,
    x: &[f64],
    delta: f64,
    approach: &[Vec<f64>],
    cfg: &PathConfig,
    n_paths: u64,
) -> Result<RegularityProbe> {
    if !(delta > 0.0) {
        return Err(Error::Config("probe scale must be positive".into()));
    }
    let cfg = cfg.clone().with_horizon(delta);
    let sim = Simulator::new(spec, &ObservableSpec::plain(), &cfg)?;
    let mut estimates = Vec::with_capacity(approach.len());
    for w in approach {
        let hits: Vec<Result<f64>> = par_map(n_paths, |p| {
            let s = sim.simulate(w, 0.0, p)?;
            let dist = s
                .exit_state
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            Ok(
                if s.cause == StopCause::Exited && s.exit_time < delta && dist < delta {
                    1.0
                } else {
                    0.0
                },
            )
        });
        let hits: Vec<f64> = hits.into_iter().collect::<Result<_>>()?;
        estimates.push(MCEstimate::from_values(&hits, 0, cfg.seed, cfg.antithetic));
    }
    let monotone = estimates.windows(2).all(|p| p[1].mean >= p[0].mean);
    Ok(RegularityProbe {
        boundary_point: x.to_vec(),
        delta,
        approach: approach.to_vec(),
        estimates,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_endpoint_is_regular() {
        let spec = DiffusionSpec::parse(&[vec!["1"]], &["0"], "-1 < x1 < 1").unwrap();
        let cfg = PathConfig {
            dt: 1e-4,
            seed: 9,
            ..Default::default()
        };
        let r =
            x_regularity_probe(&spec, &[1.0], 0.5, &[vec![0.9], vec![0.99]], &cfg, 2000).unwrap();
        assert!(r.estimates[1].mean > 0.9);
        assert!(r.monotone);
    }

    #[test]
    fn frozen_process_never_exits() {
        let spec = DiffusionSpec::parse(&[vec!["0"]], &["0"], "-1 < x1 < 1").unwrap();
        let cfg = PathConfig {
            dt: 1e-3,
            ..Default::default()
        };
        let r =
            x_regularity_probe(&spec, &[1.0], 0.5, &[vec![0.9], vec![0.999]], &cfg, 50).unwrap();
        assert!(r.estimates.iter().all(|e| e.mean == 0.0));
    }
}
