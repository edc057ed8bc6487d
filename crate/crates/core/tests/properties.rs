mod common;

use common::*;
use hypofk::catalog;
use hypofk::hormander::check as rank_check;
use hypofk::paths::make_slowed_spec;
use hypofk::paths::{CutoffSpec, Region};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn autodiff_matches_finite_differences(f in smooth_expr(3, 4), x in point(3)) {
        check_autodiff(&f, &x)?;
    }

    #[test]
    fn brackets_are_antisymmetric_and_satisfy_jacobi(
        u in field(2, 2), v in field(2, 2), w in field(2, 2), x in point(2)
    ) {
        check_bracket_algebra(&u, &v, &w, &x)?;
    }

    #[test]
    fn generator_splits_into_fields(s in spec(2, 2, 2), f in smooth_expr(2, 3), x in point(2)) {
        check_generator_identity(&s, &f, &x)?;
    }

    #[test]
    fn gamma_and_h_split_at_any_time(
        g in smooth_expr(1, 2),
        h in smooth_expr(1, 2),
        seed in 0..1000u64,
        frac in 0.0..1.0f64,
    ) {
        // keep γ bounded so the tolerance is absolute
        let g = hypofk::Expr::unary(hypofk::expr::UnaryOp::Tanh, g);
        check_gamma_split(&g, &h, seed, frac)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dual_is_adjoint_1d(
        s in spec(1, 1, 2),
        p in smooth_expr(1, 2),
        c1 in -0.3..0.3f64,
        c2 in -0.3..0.3f64,
    ) {
        check_duality(&s, &p, &[c1], &[c2])?;
    }

    #[test]
    fn dual_is_adjoint_2d(
        s in spec(2, 1, 1),
        p in smooth_expr(2, 1),
        c1 in point(2).prop_map(|v| v.iter().map(|x| 0.3 * x).collect::<Vec<_>>()),
        c2 in point(2).prop_map(|v| v.iter().map(|x| 0.3 * x).collect::<Vec<_>>()),
    ) {
        check_duality(&s, &p, &c1, &c2)?;
    }

    #[test]
    fn reruns_are_bit_identical(seed in any::<u64>()) {
        prop_assert_eq!(parabolic_bits(seed), parabolic_bits(seed));
    }

    #[test]
    fn thread_count_does_not_change_estimates(seed in any::<u64>(), threads in 2..5usize) {
        let one = with_threads(1, || parabolic_bits(seed));
        let many = with_threads(threads, || parabolic_bits(seed));
        prop_assert_eq!(one, many);
    }
}

#[test]
fn diffusion_matrices_are_nonnegative() {
    for (name, s) in catalog::all() {
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|k| {
                (0..s.n)
                    .map(|i| (k as f64 * 0.37 + i as f64 * 1.3).sin() * 0.9 + 3.0 * i as f64)
                    .collect()
            })
            .collect();
        let m = s.min_eigenvalue(&pts).unwrap();
        assert!(m >= -1e-10, "{name}: {m}");
    }
}

#[test]
fn cutoff_keeps_bracket_rank_on_plateau() {
    let cut = CutoffSpec::new(
        Region::Box {
            lo: vec![-0.9, -0.9],
            hi: vec![0.9, 0.9],
        },
        0.3,
    )
    .unwrap();
    let pts: Vec<Vec<f64>> = (0..20)
        .map(|k| vec![0.5 * (k as f64).sin(), 0.5 * (1.7 * k as f64).cos()])
        .collect();
    for s in [catalog::langevin(), catalog::embedded_bm()] {
        let slowed = make_slowed_spec(&s, &cut).unwrap();
        let depth = 2;
        let a = rank_check(&s, &pts, depth, 1e-9).unwrap();
        let b = rank_check(&slowed, &pts, depth, 1e-9).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.rank, rb.rank);
        }
    }
}
