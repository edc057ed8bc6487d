use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Compiled, CompiledPredicate, HalfSpace, Scratch};
use crate::fields::DiffusionSpec;
use crate::observable::ObservableSpec;
use crate::rng::path_rng;

/// Crossing probabilities below `exp(-40)` are treated as zero.
const BRIDGE_CUTOFF: f64 = 40.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathConfig {
    pub dt: f64,
    /// Time horizon `T`; infinite for harmonic problems.
    pub horizon: f64,
    pub seed: u64,
    /// Stop a path when some `|x_i − x_1|` drops below this value.
    pub collision_guard: Option<f64>,
    pub max_steps: u64,
    /// Brownian-bridge crossing test on axis-aligned faces of the domain.
    pub bridge_correction: bool,
    /// Pair path `2k+1` with path `2k` using negated increments.
    pub antithetic: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            dt: 1e-3,
            horizon: f64::INFINITY,
            seed: 0,
            collision_guard: None,
            max_steps: 10_000_000,
            bridge_correction: false,
            antithetic: false,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.horizon.is_finite()
            && (self.max_steps as f64) * self.dt < self.horizon * (1.0 - 1e-12)
        {
            return Err(Error::Config(format!(
                "max_steps * dt = {} does not reach the horizon {}",
                self.max_steps as f64 * self.dt,
                self.horizon
            )));
        }
        if let Some(g) = self.collision_guard {
            if !(g > 0.0) {
                return Err(Error::Config(format!(
                    "collision guard must be positive, got {g}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    /// Left the domain.
    Exited,
    /// Reached the time horizon inside the domain.
    Horizon,
    /// Exhausted `max_steps`.
    StepCap,
    /// Tripped the collision guard.
    Collision,
}

/// Exit data of one path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSample {
    /// Absolute stopping time `τ` (launch time included).
    pub exit_time: f64,
    pub exit_state: Vec<f64>,
    pub log_gamma: f64,
    pub gamma: f64,
    /// `H_τ`.
    pub h: f64,
    /// Stopped by something other than leaving the domain.
    pub censored: bool,
    pub cause: StopCause,
    pub steps: u64,
}

/// State handed to observers at launch and after every step.
pub struct StepView<'a> {
    pub step: u64,
    pub t: f64,
    pub x: &'a [f64],
    pub log_gamma: f64,
    pub h: f64,
    /// `g(X_t)` and `h(X_t, t)` as used by the quadrature.
    pub g_value: f64,
    pub h_value: f64,
}

pub(crate) struct CompiledSpec {
    pub n: usize,
    pub d: usize,
    sigma: Vec<Compiled>,
    /// All of σ when it is constant.
    sigma_const: Option<Vec<f64>>,
    drift: Vec<Compiled>,
    domain: CompiledPredicate,
    confinement: Option<CompiledPredicate>,
    faces: Vec<HalfSpace>,
}

impl CompiledSpec {
    pub fn new(spec: &DiffusionSpec) -> Self {
        let sigma: Vec<Compiled> = spec.sigma.iter().flatten().map(Compiled::new).collect();
        CompiledSpec {
            n: spec.n,
            d: spec.d,
            sigma_const: sigma.iter().map(Compiled::as_const).collect(),
            sigma,
            drift: spec.drift.iter().map(Compiled::new).collect(),
            domain: CompiledPredicate::new(&spec.domain),
            confinement: spec.confinement.as_ref().map(CompiledPredicate::new),
            faces: spec.domain.half_spaces(),
        }
    }

    pub fn contains(&self, x: &[f64], scratch: &mut Scratch) -> bool {
        self.domain.contains(x, scratch)
    }
}

/// Euler–Maruyama simulator with exit detection and Feynman–Kac weights.
pub struct Simulator {
    spec: CompiledSpec,
    g: Compiled,
    h: Compiled,
    psi: Compiled,
    pub cfg: PathConfig,
}

impl Simulator {
    pub fn new(spec: &DiffusionSpec, obs: &ObservableSpec, cfg: &PathConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Simulator {
            spec: CompiledSpec::new(spec),
            g: Compiled::new(&obs.g),
            h: Compiled::new(&obs.h),
            psi: Compiled::new(&obs.psi),
            cfg: cfg.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.n
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.spec.contains(x, &mut Scratch::new())
    }

    /// `ψ(X_τ, τ)`.
    pub fn psi(&self, sample: &PathSample) -> Result<f64> {
        Ok(self
            .psi
            .eval(&sample.exit_state, sample.exit_time, &mut Scratch::new())?)
    }

    /// `γ_τ ψ(X_τ, τ) + H_τ`.
    pub fn contribution(&self, sample: &PathSample) -> Result<f64> {
        let psi = if self.psi.is_zero() {
            0.0
        } else {
            self.psi(sample)?
        };
        Ok(sample.gamma * psi + sample.h)
    }

    pub fn simulate(&self, x0: &[f64], t0: f64, path_index: u64) -> Result<PathSample> {
        self.simulate_observed(x0, t0, path_index, |_| {})
    }

    /// Simulate one path, calling `observe` at launch and after each step.
    pub fn simulate_observed<F>(
        &self,
        x0: &[f64],
        t0: f64,
        path_index: u64,
        mut observe: F,
    ) -> Result<PathSample>
    where
        F: FnMut(&StepView<'_>),
    {
        let spec = &self.spec;
        let cfg = &self.cfg;
        let (n, d) = (spec.n, spec.d);
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
        let mut scratch = Scratch::new();
        if !spec.contains(x0, &mut scratch) {
            return Err(Error::Config(format!(
                "launch point {x0:?} is outside the domain"
            )));
        }
        let (stream, flip) = if cfg.antithetic {
            (path_index / 2, path_index % 2 == 1)
        } else {
            (path_index, false)
        };
        let mut rng = path_rng(cfg.seed, stream);
        let sign = if flip { -1.0 } else { 1.0 };

        let mut x = x0.to_vec();
        let mut x_new = vec![0.0; n];
        let mut sig = vec![0.0; n * d];
        let mut dw = vec![0.0; d];
        let mut t = t0;
        let mut k: u64 = 0;
        let mut log_gamma = 0.0;
        let mut gamma = 1.0;
        let mut big_h = 0.0;
        let (g_const, h_const) = (self.g.as_const(), self.h.as_const());
        let g_zero = g_const == Some(0.0);
        let h_zero = h_const == Some(0.0);
        let mut g_prev = if g_zero {
            0.0
        } else {
            self.g.eval(&x, t, &mut scratch)?
        };
        let mut h_prev = if h_zero {
            0.0
        } else {
            self.h.eval(&x, t, &mut scratch)?
        };
        observe(&StepView {
            step: 0,
            t,
            x: &x,
            log_gamma,
            h: big_h,
            g_value: g_prev,
            h_value: h_prev,
        });

        let horizon = cfg.horizon;
        let sqrt_dt = cfg.dt.sqrt();
        let g_step_factor = self.g.as_const().map(|g| (g * cfg.dt).exp());
        if let Some(c) = &spec.sigma_const {
            sig.copy_from_slice(c);
        }
        let cause = loop {
            if t >= horizon {
                break StopCause::Horizon;
            }
            if k >= cfg.max_steps {
                break StopCause::StepCap;
            }
            let t_lin = t0 + (k + 1) as f64 * cfg.dt;
            // full steps have length dt up to rounding
            let (t_next, step, full) = if t_lin >= horizon - 1e-9 * cfg.dt {
                (horizon, horizon - t, false)
            } else {
                (t_lin, t_lin - t, true)
            };
            let sq = if full { sqrt_dt } else { step.sqrt() };
            for w in dw.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *w = sign * z * sq;
            }
            for (i, xi) in x_new.iter_mut().enumerate() {
                let mut v = x[i];
                for q in 0..d {
                    if spec.sigma_const.is_none() {
                        sig[i * d + q] = spec.sigma[i * d + q].eval(&x, t, &mut scratch)?;
                    }
                    v += sig[i * d + q] * dw[q];
                }
                let b = &spec.drift[i];
                if !b.is_zero() {
                    v += b.eval(&x, t, &mut scratch)? * step;
                }
                *xi = v;
            }
            if let Some(c) = &spec.confinement {
                if !c.contains(&x_new, &mut scratch) {
                    x_new.copy_from_slice(&x);
                }
            }
            let collided = cfg
                .collision_guard
                .is_some_and(|delta| (1..n).any(|i| (x_new[i] - x_new[0]).abs() < delta));
            let mut inside = !collided && spec.contains(&x_new, &mut scratch);
            if inside && cfg.bridge_correction {
                for face in &spec.faces {
                    let i = face.axis;
                    let (d0, d1) = if face.upper {
                        (face.bound - x[i], face.bound - x_new[i])
                    } else {
                        (x[i] - face.bound, x_new[i] - face.bound)
                    };
                    let aii: f64 = (0..d).map(|q| sig[i * d + q] * sig[i * d + q]).sum();
                    if aii <= 0.0 || d0 <= 0.0 || d1 <= 0.0 {
                        continue;
                    }
                    let exponent = 2.0 * d0 * d1 / (aii * step);
                    if exponent > BRIDGE_CUTOFF {
                        continue;
                    }
                    let u: f64 = rng.random();
                    if u < (-exponent).exp() {
                        x_new[i] = face.bound;
                        inside = false;
                        break;
                    }
                }
            }

            // Rate and source at the new state; a stopped path may sit where
            // they are undefined, in which case the left value is reused.
            let stopping = !inside;
            let g_new = if let Some(c) = g_const {
                c
            } else {
                match self.g.eval(&x_new, t_next, &mut scratch) {
                    Ok(v) => v,
                    Err(_) if stopping => g_prev,
                    Err(e) => return Err(e.into()),
                }
            };
            log_gamma += 0.5 * (g_prev + g_new) * step;
            let h_new = if h_zero {
                0.0
            } else {
                let h_new = if let Some(c) = h_const {
                    c
                } else {
                    match self.h.eval(&x_new, t_next, &mut scratch) {
                        Ok(v) => v,
                        Err(_) if stopping => h_prev,
                        Err(e) => return Err(e.into()),
                    }
                };
                let gamma_new = match g_step_factor {
                    Some(f) if full => gamma * f,
                    _ => log_gamma.exp(),
                };
                big_h += 0.5 * (gamma * h_prev + gamma_new * h_new) * step;
                gamma = gamma_new;
                h_new
            };
            g_prev = g_new;
            h_prev = h_new;
            std::mem::swap(&mut x, &mut x_new);
            t = t_next;
            k += 1;
            observe(&StepView {
                step: k,
                t,
                x: &x,
                log_gamma,
                h: big_h,
                g_value: g_prev,
                h_value: h_prev,
            });
            if collided {
                break StopCause::Collision;
            }
            if !inside {
                break StopCause::Exited;
            }
        };
        Ok(PathSample {
            exit_time: t,
            exit_state: x,
            log_gamma,
            gamma: log_gamma.exp(),
            h: big_h,
            censored: cause != StopCause::Exited,
            cause,
            steps: k,
        })
    }
}

/// One-shot convenience wrapper around [`Simulator`].
pub fn simulate_path(
    spec: &DiffusionSpec,
    obs: &ObservableSpec,
    x0: &[f64],
    t0: f64,
    cfg: &PathConfig,
    path_index: u64,
) -> Result<PathSample> {
    Simulator::new(spec, obs, cfg)?.simulate(x0, t0, path_index)
}
