use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{CmpOp, Compiled, Expr, Predicate, Scratch, UnaryOp};
use crate::fields::DiffusionSpec;

use super::record::Trajectory;

/// Bounded open set Θ on which the slowed-down process lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { lo, .. } => lo.len(),
            Region::Ball { center, .. } => center.len(),
        }
    }

    /// Θ̄ as a predicate.
    pub fn closure(&self) -> Predicate {
        match self {
            Region::Box { lo, hi } => {
                let mut p = Predicate::True;
                for i in 0..lo.len() {
                    p = p
                        .and(Predicate::Cmp(
                            Expr::var(i),
                            CmpOp::Ge,
                            Expr::constant(lo[i]),
                        ))
                        .and(Predicate::Cmp(
                            Expr::var(i),
                            CmpOp::Le,
                            Expr::constant(hi[i]),
                        ));
                }
                p
            }
            Region::Ball { center, radius } => Predicate::Cmp(
                squared_distance(center),
                CmpOp::Le,
                Expr::constant(radius * radius),
            ),
        }
    }

    /// Deterministic sample of Θ̄ including its boundary.
    fn sample_closure(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let per_axis = ((4096f64).powf(1.0 / n as f64).floor() as usize).clamp(3, 65);
        let mut unit = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::with_capacity(unit.len() * per_axis);
            for p in &unit {
                for k in 0..per_axis {
                    let mut q: Vec<f64> = p.clone();
                    q.push(-1.0 + 2.0 * k as f64 / (per_axis - 1) as f64);
                    next.push(q);
                }
            }
            unit = next;
        }
        match self {
            Region::Box { lo, hi } => unit
                .into_iter()
                .map(|u| {
                    (0..n)
                        .map(|i| lo[i] + 0.5 * (u[i] + 1.0) * (hi[i] - lo[i]))
                        .collect()
                })
                .collect(),
            Region::Ball { center, radius } => {
                let mut pts = vec![center.clone()];
                for u in unit {
                    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    pts.push((0..n).map(|i| center[i] + radius * u[i] / norm).collect());
                    if norm <= 1.0 {
                        pts.push((0..n).map(|i| center[i] + radius * u[i]).collect());
                    }
                }
                pts
            }
        }
    }
}

fn squared_distance(center: &[f64]) -> Expr {
    Expr::sum(
        center
            .iter()
            .enumerate()
            .map(|(i, &c)| Expr::var(i).sub(Expr::constant(c)).square()),
    )
}

/// Smooth step: 0 for `r ≤ 0`, 1 for `r ≥ 1`, built from `exp(-1/u)`.
fn smooth_step(r: Expr) -> Expr {
    let left = Expr::unary(UnaryOp::Flat(0), r.clone());
    let right = Expr::unary(UnaryOp::Flat(0), Expr::one().sub(r));
    left.clone().div(left.add(right))
}

/// Cutoff ϑ: smooth, in `[0, 1]`, zero outside Θ, one on the ε-interior.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutoffSpec {
    pub region: Region,
    pub margin: f64,
}

impl CutoffSpec {
    pub fn new(region: Region, margin: f64) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(Error::Config(format!(
                "cutoff margin must be positive, got {margin}"
            )));
        }
        match &region {
            Region::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(Error::Config(
                        "cutoff box bounds must have equal, positive length".into(),
                    ));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(h - l > 2.0 * margin)) {
                    return Err(Error::Config(
                        "cutoff box is thinner than twice the margin".into(),
                    ));
                }
            }
            Region::Ball { center, radius } => {
                if center.is_empty() || !(*radius > margin) {
                    return Err(Error::Config(
                        "cutoff ball radius must exceed the margin".into(),
                    ));
                }
            }
        }
        Ok(CutoffSpec { region, margin })
    }

    pub fn theta(&self) -> Expr {
        let eps = self.margin;
        match &self.region {
            Region::Box { lo, hi } => {
                let mut factors = Vec::new();
                for i in 0..lo.len() {
                    let x = Expr::var(i);
                    factors.push(smooth_step(
                        x.clone()
                            .sub(Expr::constant(lo[i]))
                            .div(Expr::constant(eps)),
                    ));
                    factors.push(smooth_step(
                        Expr::constant(hi[i]).sub(x).div(Expr::constant(eps)),
                    ));
                }
                factors.into_iter().reduce(Expr::mul).unwrap_or(Expr::one())
            }
            Region::Ball { center, radius } => {
                let r = *radius;
                let u = Expr::constant(r * r)
                    .sub(squared_distance(center))
                    .div(Expr::constant(2.0 * r * eps - eps * eps));
                smooth_step(u)
            }
        }
    }

    /// Interior where ϑ = 1.
    pub fn plateau(&self) -> Predicate {
        let eps = self.margin;
        match &self.region {
            Region::Box { lo, hi } => {
                let shrunk = Region::Box {
                    lo: lo.iter().map(|l| l + eps).collect(),
                    hi: hi.iter().map(|h| h - eps).collect(),
                };
                shrunk.closure()
            }
            Region::Ball { center, radius } => Region::Ball {
                center: center.clone(),
                radius: radius - eps,
            }
            .closure(),
        }
    }
}

/// `σ̂ = ϑσ`, `b̂ = ϑ²b` on all of ℝⁿ. The scheme is confined to Θ̄, which
/// the continuous process never leaves.
pub fn make_slowed_spec(spec: &DiffusionSpec, cut: &CutoffSpec) -> Result<DiffusionSpec> {
    if cut.region.dim() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: cut.region.dim(),
        });
    }
    for p in cut.region.sample_closure() {
        if !spec.domain.contains(&p) {
            return Err(Error::CutoffOutsideDomain(format!(
                "{p:?} lies in the closure of the cutoff region but not in the domain"
            )));
        }
    }
    let theta = cut.theta();
    let theta2 = theta.clone().mul(theta.clone());
    let sigma = spec
        .sigma
        .iter()
        .map(|row| row.iter().map(|s| theta.clone().mul(s.clone())).collect())
        .collect();
    let drift = spec
        .drift
        .iter()
        .map(|b| theta2.clone().mul(b.clone()))
        .collect();
    let mut slowed = DiffusionSpec::new(sigma, drift, Predicate::True)?;
    slowed.confinement = Some(cut.region.closure());
    Ok(slowed)
}

/// A path read on the slow clock: `Z_s = X_{β(s)}` with
/// `β(s) = ∫_0^s ϑ(Z_ζ)² dζ`.
#[derive(Clone, Debug, Serialize)]
pub struct TimeChanged {
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    /// Index at which ϑ(Z) hit zero; the clock and the state are frozen
    /// from there on.
    pub stalled_at: Option<usize>,
    /// The clock ran past the end of the recorded path; the state is held
    /// at the last recorded point.
    pub ran_out: bool,
}

impl TimeChanged {
    pub fn last(&self) -> &[f64] {
        self.z.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Time-change a recorded path onto the uniform grid `s_j = j·ds`,
/// `j ≤ s_max/ds`. The clock is advanced with left-point increments
/// `ϑ(Z_j)² ds`; the path is linearly interpolated between records.
pub fn time_change(
    path: &Trajectory,
    cut: &CutoffSpec,
    ds: f64,
    s_max: f64,
) -> Result<TimeChanged> {
    time_change_with(path, &cut.theta(), ds, s_max)
}

/// [`time_change`] with an arbitrary speed function ϑ.
pub fn time_change_with(
    path: &Trajectory,
    theta: &Expr,
    ds: f64,
    s_max: f64,
) -> Result<TimeChanged> {
    if !(ds > 0.0) || !(s_max >= 0.0) {
        return Err(Error::Config(
            "time change needs ds > 0 and s_max >= 0".into(),
        ));
    }
    if path.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    let theta = Compiled::new(theta);
    let mut scratch = Scratch::new();
    let steps = (s_max / ds).round() as usize;
    let t0 = path.t[0];
    let mut out = TimeChanged {
        s: Vec::with_capacity(steps + 1),
        beta: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        stalled_at: None,
        ran_out: false,
    };
    let mut beta = 0.0;
    let mut cursor = 0;
    let mut z = path.state(0).to_vec();
    for j in 0..=steps {
        out.s.push(j as f64 * ds);
        out.beta.push(beta);
        out.z.push(z.clone());
        if j == steps {
            break;
        }
        if out.stalled_at.is_none() {
            let th = theta.eval(&z, 0.0, &mut scratch)?;
            if th == 0.0 {
                out.stalled_at = Some(j);
                continue;
            }
            beta += th * th * ds;
            if !path.interpolate(t0 + beta, &mut cursor, &mut z) {
                out.ran_out = true;
            }
        }
    }
    Ok(out)
}

/// [`time_change`] reading the path between records from Brownian bridges
/// instead of straight lines. Each bridge pins the recorded endpoints and
/// freezes the diffusion coefficient of `spec` at the left record, which is
/// exact for constant `σ`. Linear interpolation loses the fluctuations the
/// slow clock resolves near the edge of Θ; the bridge restores them.
pub fn time_change_bridged<R: Rng>(
    path: &Trajectory,
    spec: &DiffusionSpec,
    cut: &CutoffSpec,
    ds: f64,
    s_max: f64,
    rng: &mut R,
) -> Result<TimeChanged> {
    if spec.n != path.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: path.n,
        });
    }
    if !(ds > 0.0) || !(s_max >= 0.0) {
        return Err(Error::Config(
            "time change needs ds > 0 and s_max >= 0".into(),
        ));
    }
    if path.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    let theta = Compiled::new(&cut.theta());
    let sigma: Vec<Vec<Compiled>> = spec
        .sigma
        .iter()
        .map(|row| row.iter().map(Compiled::new).collect())
        .collect();
    let (n, d) = (spec.n, spec.d);
    let mut scratch = Scratch::new();
    let steps = (s_max / ds).round() as usize;
    let t0 = path.t[0];
    let last = path.len() - 1;
    let mut out = TimeChanged {
        s: Vec::with_capacity(steps + 1),
        beta: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        stalled_at: None,
        ran_out: false,
    };
    let mut beta = 0.0;
    let mut z = path.state(0).to_vec();
    // current segment, the last point read inside it, and σ frozen there
    let mut seg = 0;
    let mut anchor_t = path.t[0];
    let mut sig = vec![0.0; n * d];
    let mut xi = vec![0.0; d];
    let mut sig_seg = usize::MAX;
    for j in 0..=steps {
        out.s.push(j as f64 * ds);
        out.beta.push(beta);
        out.z.push(z.clone());
        if j == steps {
            break;
        }
        if out.stalled_at.is_some() {
            continue;
        }
        let th = theta.eval(&z, 0.0, &mut scratch)?;
        if th == 0.0 {
            out.stalled_at = Some(j);
            continue;
        }
        beta += th * th * ds;
        let t = t0 + beta;
        if t >= path.t[last] {
            z.copy_from_slice(path.state(last));
            if t - path.t[last] > 1e-12 * path.t[last].abs().max(1.0) {
                out.ran_out = true;
            }
            continue;
        }
        if path.t[seg + 1] <= t {
            while path.t[seg + 1] <= t {
                seg += 1;
            }
            anchor_t = path.t[seg];
            z.copy_from_slice(path.state(seg));
        }
        if t == anchor_t {
            continue;
        }
        if sig_seg != seg {
            let x = path.state(seg);
            for i in 0..n {
                for q in 0..d {
                    sig[i * d + q] = sigma[i][q].eval(x, path.t[seg], &mut scratch)?;
                }
            }
            sig_seg = seg;
        }
        let end = path.state(seg + 1);
        let t1 = path.t[seg + 1];
        let r = (t - anchor_t) / (t1 - anchor_t);
        let sd = ((t - anchor_t) * (1.0 - r)).sqrt();
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..n {
            let noise: f64 = (0..d).map(|q| sig[i * d + q] * xi[q]).sum();
            z[i] += r * (end[i] - z[i]) + sd * noise;
        }
        anchor_t = t;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> CutoffSpec {
        CutoffSpec::new(
            Region::Box {
                lo: vec![-0.8],
                hi: vec![0.8],
            },
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn theta_profile() {
        let th = unit_box().theta();
        for x in [-0.5, 0.0, 0.3, 0.5] {
            assert_eq!(th.eval(&[x], 0.0).unwrap(), 1.0, "{x}");
        }
        for x in [-0.8, 0.8, 1.5, -3.0] {
            assert_eq!(th.eval(&[x], 0.0).unwrap(), 0.0, "{x}");
        }
        let mid = th.eval(&[0.65], 0.0).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
        let mut prev = 1.0;
        for k in 0..=30 {
            let v = th.eval(&[0.5 + 0.01 * k as f64], 0.0).unwrap();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn ball_profile() {
        let cut = CutoffSpec::new(
            Region::Ball {
                center: vec![1.0, 0.0],
                radius: 1.0,
            },
            0.25,
        )
        .unwrap();
        let th = cut.theta();
        assert_eq!(th.eval(&[1.0, 0.0], 0.0).unwrap(), 1.0);
        assert_eq!(th.eval(&[1.0, 0.74], 0.0).unwrap(), 1.0);
        assert_eq!(th.eval(&[1.0, 1.0], 0.0).unwrap(), 0.0);
        let v = th.eval(&[1.0, 0.9], 0.0).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn slowed_spec_values() {
        let bm = DiffusionSpec::parse(&[vec!["1"]], &["x1"], "-1 < x1 < 1").unwrap();
        let cut = unit_box();
        let s = make_slowed_spec(&bm, &cut).unwrap();
        assert_eq!(s.sigma[0][0].eval(&[0.2], 0.0).unwrap(), 1.0);
        assert_eq!(s.drift[0].eval(&[0.2], 0.0).unwrap(), 0.2);
        assert_eq!(s.sigma[0][0].eval(&[5.0], 0.0).unwrap(), 0.0);
        assert_eq!(s.drift[0].eval(&[0.9], 0.0).unwrap(), 0.0);
        let th = cut.theta().eval(&[0.7], 0.0).unwrap();
        let a = s.eval_diffusion_matrix(&[0.7]).unwrap()[(0, 0)];
        assert!((a - th * th).abs() < 1e-15);
        assert_eq!(s.domain, Predicate::True);
    }

    #[test]
    fn cutoff_must_sit_inside_domain() {
        let bm = DiffusionSpec::parse(&[vec!["1"]], &["0"], "-1 < x1 < 1").unwrap();
        let cut = CutoffSpec::new(
            Region::Box {
                lo: vec![-1.0],
                hi: vec![1.0],
            },
            0.3,
        )
        .unwrap();
        assert!(matches!(
            make_slowed_spec(&bm, &cut),
            Err(Error::CutoffOutsideDomain(_))
        ));
        assert!(CutoffSpec::new(
            Region::Box {
                lo: vec![0.0],
                hi: vec![0.1]
            },
            0.3
        )
        .is_err());
    }

    fn synthetic(ts: &[f64], xs: &[f64]) -> Trajectory {
        let mut tr = Trajectory::new(1);
        for (&t, &x) in ts.iter().zip(xs) {
            tr.push(t, &[x], 0.0, 0.0, 0.0, 0.0);
        }
        tr
    }

    #[test]
    fn identity_clock_on_plateau() {
        let ts: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let xs: Vec<f64> = ts.iter().map(|t| 0.3 * (5.0 * t).sin()).collect();
        let tc = time_change(&synthetic(&ts, &xs), &unit_box(), 0.01, 1.0).unwrap();
        for j in 0..tc.s.len() {
            assert!((tc.beta[j] - tc.s[j]).abs() < 1e-12);
            assert!((tc.z[j][0] - xs[j]).abs() < 1e-9);
        }
        assert!(tc.stalled_at.is_none());
        assert!(!tc.ran_out);
    }

    #[test]
    fn constant_half_speed_quarters_the_clock() {
        let ts: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let tc = time_change_with(&synthetic(&ts, &ts), &Expr::constant(0.5), 0.01, 1.0).unwrap();
        for j in 0..tc.s.len() {
            assert!((tc.beta[j] - tc.s[j] / 4.0).abs() < 1e-12);
            assert!((tc.z[j][0] - tc.beta[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn clock_stalls_outside() {
        let tc = time_change(&synthetic(&[0.0, 1.0], &[0.9, 0.9]), &unit_box(), 0.1, 1.0).unwrap();
        assert_eq!(tc.stalled_at, Some(0));
        assert!(tc.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn bridge_fill_pins_records_and_has_bridge_variance() {
        let bm = DiffusionSpec::parse(&[vec!["1"]], &["0"], "-1 < x1 < 1").unwrap();
        let ts: Vec<f64> = (0..=50).map(|k| k as f64 * 0.01).collect();
        let xs: Vec<f64> = ts.iter().map(|t| 0.3 * (5.0 * t).sin()).collect();
        let mut rng = crate::rng::path_rng(9, 0);
        let tc = time_change_bridged(&synthetic(&ts, &xs), &bm, &unit_box(), 0.01, 0.5, &mut rng)
            .unwrap();
        for j in 0..tc.s.len() {
            assert!((tc.z[j][0] - xs[j]).abs() < 1e-6, "{j}");
        }

        let flat = synthetic(&[0.0, 1.0], &[0.0, 0.0]);
        let wide = CutoffSpec::new(
            Region::Box {
                lo: vec![-100.0],
                hi: vec![100.0],
            },
            1.0,
        )
        .unwrap();
        let wide_bm = DiffusionSpec::parse(&[vec!["1"]], &["0"], "-200 < x1 < 200").unwrap();
        let n = 20_000;
        let mid: Vec<f64> = (0..n)
            .map(|_| {
                time_change_bridged(&flat, &wide_bm, &wide, 0.5, 0.5, &mut rng)
                    .unwrap()
                    .last()[0]
            })
            .collect();
        let var = mid.iter().map(|v| v * v).sum::<f64>() / n as f64;
        // Var = 1/4, se ≈ 0.0025
        assert!((var - 0.25).abs() < 0.01, "{var}");
    }
}
