use bethe_core::bethe2::{bethe2_cover_average, bethe2_grouped, bethe2_pairsum};
use bethe_core::bethe_vi::{bethe_permanent, BetheOptions};
use bethe_core::matrix::{lift, log_permanent, permanent_naive, permanent_ryser, CoverAssignment, NonNegMatrix};
use bethe_core::numeric::rel_err;
use bethe_core::perm_group::Permutation;
use proptest::prelude::*;

fn matrix(max_n: usize) -> impl Strategy<Value = NonNegMatrix> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![1 => Just(0.0), 9 => 0.0f64..2.0], n * n)
            .prop_map(move |data| NonNegMatrix::new(n, data).unwrap())
    })
}

fn with_perturbation(max_n: usize) -> impl Strategy<Value = (NonNegMatrix, Vec<f64>, Vec<f64>, Permutation, Permutation)> {
    matrix(max_n).prop_flat_map(|a| {
        let n = a.n();
        let idx: Vec<usize> = (0..n).collect();
        (
            Just(a),
            prop::collection::vec(0.25f64..4.0, n),
            prop::collection::vec(0.25f64..4.0, n),
            Just(idx.clone()).prop_shuffle().prop_map(|m| Permutation::from_zero_based(m).unwrap()),
            Just(idx).prop_shuffle().prop_map(|m| Permutation::from_zero_based(m).unwrap()),
        )
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    rel_err(a, b) <= tol || (a.abs() < 1e-300 && b.abs() < 1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn permanent_evaluators_agree(a in matrix(8)) {
        let r = permanent_ryser(&a).unwrap();
        let n = permanent_naive(&a).unwrap();
        let l = log_permanent(&a).unwrap();
        prop_assert!(close(r, n, 1e-9), "{r} vs {n}");
        prop_assert!(close(l.value(), r, 1e-9), "{} vs {r}", l.value());
    }

    #[test]
    fn permanent_scaling_and_permutations((a, d, e, p, q) in with_perturbation(7), c in 0.1f64..3.0) {
        let n = a.n() as i32;
        let base = permanent_ryser(&a).unwrap();
        prop_assert!(close(permanent_ryser(&a.scaled(c)).unwrap(), c.powi(n) * base, 1e-10));
        let factor: f64 = d.iter().product::<f64>() * e.iter().product::<f64>();
        prop_assert!(close(permanent_ryser(&a.diag_scaled(&d, &e).unwrap()).unwrap(), factor * base, 1e-10));
        prop_assert!(close(permanent_naive(&a.permuted(&p, &q).unwrap()).unwrap(), base, 1e-12));
    }

    #[test]
    fn trivial_lift_is_identity(a in matrix(6)) {
        prop_assert_eq!(lift(&a, &CoverAssignment::trivial(a.n(), 1)).unwrap(), a);
    }

    #[test]
    fn bethe2_scaling_and_permutations((a, d, e, p, q) in with_perturbation(5), c in 0.1f64..3.0) {
        let n = a.n() as i32;
        let base = bethe2_grouped(&a).unwrap();
        prop_assert!(close(bethe2_grouped(&a.scaled(c)).unwrap(), c.powi(n) * base, 1e-10));
        let factor: f64 = d.iter().product::<f64>() * e.iter().product::<f64>();
        prop_assert!(close(bethe2_pairsum(&a.diag_scaled(&d, &e).unwrap()).unwrap(), factor * base, 1e-10));
        prop_assert!(close(bethe2_grouped(&a.permuted(&p, &q).unwrap()).unwrap(), base, 1e-12));
    }

    #[test]
    fn bethe2_covers_match_grouped(a in matrix(3)) {
        prop_assert!(close(bethe2_cover_average(&a).unwrap(), bethe2_grouped(&a).unwrap(), 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bethe_scaling_permutation_and_bound((a, _d, _e, p, q) in with_perturbation(6), c in 0.25f64..4.0) {
        let opts = BetheOptions::default();
        let perm = permanent_ryser(&a).unwrap();
        prop_assume!(perm > 0.0);
        let base = bethe_permanent(&a, &opts).unwrap().value;
        prop_assert!(base <= perm * (1.0 + 1e-6), "{base} > {perm}");
        let n = a.n() as i32;
        let scaled = bethe_permanent(&a.scaled(c), &opts).unwrap().value;
        prop_assert!(close(scaled, c.powi(n) * base, 1e-6), "{scaled} vs {}", c.powi(n) * base);
        let moved = bethe_permanent(&a.permuted(&p, &q).unwrap(), &opts).unwrap().value;
        prop_assert!(close(moved, base, 1e-6));
        let again = bethe_permanent(&a, &opts).unwrap().value;
        prop_assert!((again - base).abs() <= 1e-9 * base.max(1.0));
    }
}
