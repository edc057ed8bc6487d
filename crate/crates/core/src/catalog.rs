//! Specifications shipped with the library, used by tests, benches and the
//! command-line front end.

use crate::error::Result;
use crate::fields::DiffusionSpec;
use crate::paths::{CutoffSpec, Region};
use crate::sle::{sle_spec, SleConfig};

/// Brownian motion on `(−1, 1)`.
pub fn bm_interval() -> DiffusionSpec {
    DiffusionSpec::parse(&[vec!["1"]], &["0"], "-1 < x1 < 1").expect("static spec")
}

/// One-dimensional Brownian motion embedded in the plane: `dX¹ = dB`,
/// `dX² = 0`. Fails the bracket condition everywhere.
pub fn embedded_bm() -> DiffusionSpec {
    DiffusionSpec::parse(
        &[vec!["1"], vec!["0"]],
        &["0", "0"],
        "-1 < x1 < 1 && -1 < x2 < 1",
    )
    .expect("static spec")
}

/// Kinetic (Langevin) pair: `dX¹ = X² dt`, `dX² = dB`.
pub fn langevin() -> DiffusionSpec {
    DiffusionSpec::parse(
        &[vec!["0"], vec!["1"]],
        &["x2", "0"],
        "-1 < x1 < 1 && -1 < x2 < 1",
    )
    .expect("static spec")
}

/// Cutoff used with [`bm_interval`]: `Θ = (−0.8, 0.8)`, margin `0.3`, so
/// `ϑ = 1` on `[−0.5, 0.5]`.
pub fn bm_cutoff() -> CutoffSpec {
    CutoffSpec::new(
        Region::Box {
            lo: vec![-0.8],
            hi: vec![0.8],
        },
        0.3,
    )
    .expect("static cutoff")
}

/// Marked-point diffusion with `n` points at `0, 1, …, n−1` and zero weights.
pub fn sle_points(kappa: f64, n: usize) -> Result<DiffusionSpec> {
    sle_spec(&SleConfig::new(
        kappa,
        (0..n).map(|i| i as f64).collect(),
        vec![0.0; n.saturating_sub(1)],
    )?)
}

/// Every shipped spec with a short name.
pub fn all() -> Vec<(&'static str, DiffusionSpec)> {
    vec![
        ("bm-interval", bm_interval()),
        ("embedded-bm", embedded_bm()),
        ("langevin", langevin()),
        ("sle-2", sle_points(2.0, 2).expect("static spec")),
        ("sle-3", sle_points(8.0 / 3.0, 3).expect("static spec")),
    ]
}

/// Look up a shipped spec by name.
pub fn by_name(name: &str) -> Option<DiffusionSpec> {
    all().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}
