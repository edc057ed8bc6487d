use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use hypofk::estimators::Criterion;
use hypofk::paths::{CutoffSpec, Region};
use hypofk::sle::{sle_spec, SleConfig};
use hypofk::verify::{Bump, LaunchLaw, OracleQuery};
use hypofk::{catalog, parse, DiffusionSpec, Expr, ObservableSpec, PathConfig};

use crate::error::CliError;

/// One experiment. Every field has a default so that the echoed config is
/// always complete.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: Problem,
    pub numerics: Numerics,
    pub task: Task,
    pub output: Output,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Problem {
    pub spec: Option<SpecBlock>,
    pub observable: ObservableBlock,
    pub sle: Option<SleBlock>,
    /// Replaces the spec by its slowed-down version.
    pub cutoff: Option<CutoffBlock>,
}

/// Either a shipped spec by name or explicit expressions.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecBlock {
    pub catalog: Option<String>,
    /// Row by row, `n × d`.
    pub sigma: Option<Vec<Vec<String>>>,
    pub drift: Option<Vec<String>>,
    pub domain: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservableBlock {
    pub g: String,
    pub h: String,
    pub psi: String,
}

impl Default for ObservableBlock {
    fn default() -> Self {
        ObservableBlock {
            g: "0".into(),
            h: "0".into(),
            psi: "0".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SleBlock {
    pub kappa: f64,
    pub launch: Vec<f64>,
    /// `Δ_2..Δ_n`.
    pub weights: Vec<f64>,
    pub drift: String,
}

impl Default for SleBlock {
    fn default() -> Self {
        SleBlock {
            kappa: 2.0,
            launch: vec![0.0, 1.0],
            weights: vec![0.0],
            drift: "0".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffBlock {
    pub region: Region,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub dt: f64,
    /// Time horizon; `null` means none (harmonic problems).
    pub horizon: Option<f64>,
    pub n_paths: u64,
    pub seed: u64,
    /// Defaults to 1e-3 for SLE problems, off otherwise.
    pub collision_guard: Option<f64>,
    pub max_steps: u64,
    pub bridge_correction: bool,
    pub antithetic: bool,
    /// Bracket depth; `null` means `n + 2`.
    pub depth: Option<usize>,
    pub rank_tol: f64,
    /// Worker threads; `null` means all available cores.
    pub threads: Option<usize>,
}

impl Default for Numerics {
    fn default() -> Self {
        let p = PathConfig::default();
        Numerics {
            dt: p.dt,
            horizon: None,
            n_paths: 10_000,
            seed: 0,
            collision_guard: None,
            max_steps: p.max_steps,
            bridge_correction: true,
            antithetic: false,
            depth: None,
            rank_tol: hypofk::hormander::DEFAULT_TOL,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceTimeGrid {
    /// Space bounds followed by time bounds.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Even interval counts per axis.
    pub intervals: Vec<usize>,
}

impl Default for SpaceTimeGrid {
    fn default() -> Self {
        SpaceTimeGrid {
            lo: vec![-0.9, 0.0],
            hi: vec![0.9, 0.5],
            intervals: vec![16, 8],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl Default for HistogramGrid {
    fn default() -> Self {
        HistogramGrid {
            lo: vec![-1.0],
            hi: vec![1.0],
            bins: vec![40],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchPoint {
    pub x: Vec<f64>,
    #[serde(default)]
    pub t: f64,
}

/// What to run. The command decides which kinds it accepts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    /// Bracket rank at each point.
    Hormander {
        points: Vec<Vec<f64>>,
    },
    /// Parabolic Feynman–Kac estimates at explicit points or at every node
    /// of a space-time grid.
    Parabolic {
        #[serde(default)]
        points: Vec<LaunchPoint>,
        #[serde(default)]
        grid: Option<SpaceTimeGrid>,
    },
    Harmonic {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        criterion: Option<Criterion>,
    },
    /// `P[τ > horizon]` from each launch point.
    Survival {
        points: Vec<LaunchPoint>,
    },
    Density {
        x: Vec<f64>,
        times: Vec<f64>,
        #[serde(default)]
        grid: HistogramGrid,
    },
    /// Strong residual of a closed-form `f` at points.
    Strong {
        f: String,
        points: Vec<LaunchPoint>,
        #[serde(default = "default_strong_tol")]
        tol: f64,
    },
    /// Weak residual of a field against bump test functions. The field is
    /// either a closed-form `f` or a CSV written by a grid `solve`.
    Weak {
        #[serde(default)]
        f: Option<String>,
        #[serde(default)]
        field_csv: Option<PathBuf>,
        grid: SpaceTimeGrid,
        bumps: Vec<Bump>,
        #[serde(default = "default_factor")]
        factor: f64,
        #[serde(default)]
        floor: f64,
    },
    /// Martingale drift test of `γ f(X, t) + H`.
    Drift {
        f: String,
        launch: LaunchLaw,
        pairs: Vec<(f64, f64)>,
        #[serde(default = "default_confidence")]
        confidence: f64,
    },
    /// Simulate the marked-point diffusion of the `sle` block.
    SleSim {
        #[serde(default = "default_record")]
        record: u64,
    },
    /// BPZ residual of `f` for the `sle` block.
    Bpz {
        f: String,
        points: Vec<Vec<f64>>,
        #[serde(default = "default_bpz_tol")]
        tol: f64,
    },
    Oracle {
        queries: Vec<OracleQuery>,
    },
}

impl Default for Task {
    fn default() -> Self {
        Task::Hormander { points: Vec::new() }
    }
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Hormander { .. } => "hormander",
            Task::Parabolic { .. } => "parabolic",
            Task::Harmonic { .. } => "harmonic",
            Task::Survival { .. } => "survival",
            Task::Density { .. } => "density",
            Task::Strong { .. } => "strong",
            Task::Weak { .. } => "weak",
            Task::Drift { .. } => "drift",
            Task::SleSim { .. } => "sle-sim",
            Task::Bpz { .. } => "bpz",
            Task::Oracle { .. } => "oracle",
        }
    }
}

fn default_strong_tol() -> f64 {
    1e-10
}

fn default_factor() -> f64 {
    3.0
}

fn default_confidence() -> f64 {
    0.99
}

fn default_record() -> u64 {
    0
}

fn default_bpz_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    /// Directory for `result.json` and CSV files; stdout only when unset.
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        // serde_json appends "at line L column C"
        serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Fill derived defaults so the echo shows what actually ran.
    pub fn resolve(&mut self) {
        if self.problem.sle.is_some() && self.numerics.collision_guard.is_none() {
            self.numerics.collision_guard = Some(1e-3);
        }
    }

    pub fn sle(&self) -> Result<Option<SleConfig>, CliError> {
        let Some(b) = &self.problem.sle else {
            return Ok(None);
        };
        let n = b.launch.len();
        let mut cfg = SleConfig {
            kappa: b.kappa,
            launch: b.launch.clone(),
            weights: b.weights.clone(),
            drift: parse_field(&b.drift, n, "problem.sle.drift")?,
            collision_guard: self.numerics.collision_guard.unwrap_or(1e-3),
        };
        cfg.validate()?;
        cfg.drift = cfg.drift.simplify();
        Ok(Some(cfg))
    }

    /// The diffusion: the `sle` block when present, otherwise `spec`,
    /// slowed down when a cutoff is configured.
    pub fn spec(&self) -> Result<DiffusionSpec, CliError> {
        let base = if let Some(sle) = self.sle()? {
            sle_spec(&sle)?
        } else {
            let block = self
                .problem
                .spec
                .as_ref()
                .ok_or_else(|| CliError::config("problem.spec or problem.sle is required"))?;
            if let Some(name) = &block.catalog {
                if block.sigma.is_some() || block.drift.is_some() || block.domain.is_some() {
                    return Err(CliError::config(
                        "problem.spec.catalog excludes sigma, drift and domain",
                    ));
                }
                catalog::by_name(name).ok_or_else(|| {
                    let names: Vec<&str> = catalog::all().iter().map(|(n, _)| *n).collect();
                    CliError::config(format!(
                        "unknown catalog spec `{name}` (known: {})",
                        names.join(", ")
                    ))
                })?
            } else {
                let (Some(sigma), Some(drift)) = (&block.sigma, &block.drift) else {
                    return Err(CliError::config(
                        "problem.spec needs either catalog or both sigma and drift",
                    ));
                };
                DiffusionSpec::parse(sigma, drift, block.domain.as_deref().unwrap_or("true"))?
            }
        };
        match &self.problem.cutoff {
            None => Ok(base),
            Some(c) => {
                let cut = CutoffSpec::new(c.region.clone(), c.margin)?;
                Ok(hypofk::paths::make_slowed_spec(&base, &cut)?)
            }
        }
    }

    pub fn observable(&self, n: usize) -> Result<ObservableSpec, CliError> {
        let o = &self.problem.observable;
        Ok(ObservableSpec::new(
            parse_field(&o.g, n, "problem.observable.g")?,
            parse_field(&o.h, n, "problem.observable.h")?,
            parse_field(&o.psi, n, "problem.observable.psi")?,
        )?)
    }

    pub fn path_config(&self) -> PathConfig {
        let m = &self.numerics;
        PathConfig {
            dt: m.dt,
            horizon: m.horizon.unwrap_or(f64::INFINITY),
            seed: m.seed,
            collision_guard: m.collision_guard,
            max_steps: m.max_steps,
            bridge_correction: m.bridge_correction,
            antithetic: m.antithetic,
        }
    }
}

pub fn parse_field(src: &str, n: usize, what: &str) -> Result<Expr, CliError> {
    parse(src, n).map_err(|e| CliError::config(format!("{what}: {e}")))
}
