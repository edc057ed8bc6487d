#![allow(dead_code)]

use hypofk::estimators::solve_parabolic;
use hypofk::expr::UnaryOp;
use hypofk::fields::VectorField;
use hypofk::hormander::lie_bracket;
use hypofk::paths::{gamma_multiplicativity_check, Simulator, Trajectory};
use hypofk::verify::{duality_gap, Bump, QuadGrid};
use hypofk::{DiffusionSpec, Expr, ObservableSpec, PathConfig, Predicate};
use proptest::prelude::*;

/// Smooth expressions in `n` variables, bounded on `[-1, 1]^n`.
pub fn smooth_expr(n: usize, depth: u32) -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        (0..n).prop_map(Expr::var),
        (-2.0..2.0f64).prop_map(Expr::constant),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.sub(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(b)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Sin, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Cos, a)),
            inner.clone().prop_map(|a| Expr::unary(UnaryOp::Tanh, a)),
            inner
                .clone()
                .prop_map(|a| Expr::unary(UnaryOp::Exp, Expr::unary(UnaryOp::Sin, a))),
        ]
    })
    .boxed()
}

pub fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0..1.0f64, n)
}

pub fn field(n: usize, depth: u32) -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(smooth_expr(n, depth), n).prop_map(VectorField::new)
}

pub fn spec(n: usize, d: usize, depth: u32) -> impl Strategy<Value = DiffusionSpec> {
    (
        proptest::collection::vec(proptest::collection::vec(smooth_expr(n, depth), d), n),
        proptest::collection::vec(smooth_expr(n, depth), n),
    )
        .prop_map(|(sigma, drift)| DiffusionSpec::new(sigma, drift, Predicate::True).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Symbolic partial derivatives against Richardson-extrapolated central
/// differences.
pub fn check_autodiff(f: &Expr, x: &[f64]) -> Result<(), TestCaseError> {
    let h = 1e-3;
    for i in 0..x.len() {
        let d = f.diff_var(i).eval(x, 0.0).unwrap();
        let central = |h: f64| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f.eval(&p, 0.0).unwrap() - f.eval(&m, 0.0).unwrap()) / (2.0 * h)
        };
        let fd = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        prop_assert!(close(d, fd, 1e-6), "d/dx{} of {f}: {d} vs {fd}", i + 1);
    }
    Ok(())
}

pub fn check_bracket_algebra(
    u: &VectorField,
    v: &VectorField,
    w: &VectorField,
    x: &[f64],
) -> Result<(), TestCaseError> {
    let uv = lie_bracket(u, v).unwrap().eval(x).unwrap();
    let vu = lie_bracket(v, u).unwrap().eval(x).unwrap();
    for k in 0..x.len() {
        prop_assert!((uv[k] + vu[k]).abs() <= 1e-10 * uv[k].abs().max(1.0));
    }
    let terms = [
        lie_bracket(u, &lie_bracket(v, w).unwrap())
            .unwrap()
            .eval(x)
            .unwrap(),
        lie_bracket(v, &lie_bracket(w, u).unwrap())
            .unwrap()
            .eval(x)
            .unwrap(),
        lie_bracket(w, &lie_bracket(u, v).unwrap())
            .unwrap()
            .eval(x)
            .unwrap(),
    ];
    for k in 0..x.len() {
        let sum = terms[0][k] + terms[1][k] + terms[2][k];
        let scale = terms.iter().map(|t| t[k].abs()).fold(1.0, f64::max);
        prop_assert!(sum.abs() <= 1e-10 * scale, "Jacobi: {sum} at scale {scale}");
    }
    Ok(())
}

pub fn check_generator_identity(
    spec: &DiffusionSpec,
    f: &Expr,
    x: &[f64],
) -> Result<(), TestCaseError> {
    let dev = spec.check_generator_identity(f, &[x.to_vec()]).unwrap();
    let scale = spec.apply_g(f).eval(x, 0.0).unwrap().abs().max(1.0);
    prop_assert!(dev <= 1e-10 * scale, "deviation {dev} at scale {scale}");
    Ok(())
}

/// `∫(Gφ)ψ = ∫φ(G*ψ)` for `φ = p·bump`, `ψ` a second bump overlapping it.
pub fn check_duality(
    spec: &DiffusionSpec,
    poly: &Expr,
    c1: &[f64],
    c2: &[f64],
) -> Result<(), TestCaseError> {
    let n = spec.n;
    let phi = poly.clone().mul(
        Bump {
            center: c1.to_vec(),
            radius: vec![0.8; n],
            time: None,
        }
        .to_expr(),
    );
    let psi = Bump {
        center: c2.to_vec(),
        radius: vec![0.8; n],
        time: None,
    }
    .to_expr();
    let intervals = if n == 1 { 2000 } else { 400 };
    let grid = QuadGrid::new(vec![-1.2; n], vec![1.2; n], vec![intervals; n]).unwrap();
    let gap = duality_gap(spec, &phi, &psi, &grid).unwrap();
    prop_assert!(gap <= 1e-6, "duality gap {gap}");
    Ok(())
}

/// Splitting a recorded path at `frac` of its lifetime reproduces `γ` and
/// `H` from the parts.
pub fn check_gamma_split(g: &Expr, h: &Expr, seed: u64, frac: f64) -> Result<(), TestCaseError> {
    let spec = DiffusionSpec::parse(&[vec!["1"]], &["0"], "-1 < x1 < 1").unwrap();
    let obs = ObservableSpec::new(g.clone(), h.clone(), Expr::zero()).unwrap();
    let cfg = PathConfig {
        dt: 1e-3,
        horizon: 2.0,
        seed,
        ..Default::default()
    };
    let sim = Simulator::new(&spec, &obs, &cfg).unwrap();
    let (tr, s) = Trajectory::record(&sim, &[0.0], 0.0, 0).unwrap();
    let m = gamma_multiplicativity_check(&tr, frac * s.exit_time).unwrap();
    prop_assert!(m.gamma_deviation <= 1e-8, "{m:?}");
    prop_assert!(m.h_deviation <= 1e-8, "{m:?}");
    Ok(())
}

/// Two solves of the same problem, returned as raw bit patterns.
pub fn parabolic_bits(seed: u64) -> (u64, u64) {
    let spec = DiffusionSpec::parse(
        &[vec!["1", "0"], vec!["0", "0.5"]],
        &["-x1", "x1"],
        "-1 < x1 < 1 && -1 < x2 < 1",
    )
    .unwrap();
    let obs = ObservableSpec::parse("-1 - x2*x2", "1", "x1*x1", 2).unwrap();
    let cfg = PathConfig {
        dt: 1e-3,
        horizon: 0.5,
        seed,
        bridge_correction: true,
        ..Default::default()
    };
    let e = solve_parabolic(&spec, &obs, &[0.1, -0.2], 0.0, &cfg, 2000).unwrap();
    (e.mean.to_bits(), e.std_error.to_bits())
}

pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}
