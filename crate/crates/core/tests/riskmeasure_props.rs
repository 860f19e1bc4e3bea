mod common;

use paretopool::oracle::brute_force_es;
use paretopool::riskmeasure::{choquet, es, es_dual_measure, exceedance_table, robust_drm, var};
use paretopool::{Distortion, DistortionSet, EmpiricalSpace, LossProfile};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{arb_distortion, arb_space_profile};

fn tol(z: &[f64]) -> f64 {
    1e-9 * z.iter().fold(1.0f64, |a, v| a.max(v.abs()))
}

fn profile(v: &[f64]) -> LossProfile {
    LossProfile::new(v.to_vec()).unwrap()
}

/// `λ T1 + (1 - λ) T2` as a tabulated distortion, exact at the survival
/// probabilities of `z`.
fn mixture(space: &EmpiricalSpace, z: &LossProfile, a: &Distortion, b: &Distortion, lambda: f64) -> Distortion {
    let mut ts: Vec<f64> = exceedance_table(space, z).unwrap().iter().map(|(_, s)| *s).collect();
    ts.push(0.0);
    ts.push(1.0);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    let knots = ts
        .iter()
        .map(|&t| [t, lambda * a.eval(t).unwrap() + (1.0 - lambda) * b.eval(t).unwrap()])
        .collect();
    Distortion::tabulated(knots).unwrap()
}

proptest! {
    #[test]
    fn translation_invariance((space, z) in arb_space_profile(30, -100.0, 100.0), d in arb_distortion(), c in -50.0f64..50.0) {
        let base = choquet(&space, &profile(&z), &d).unwrap();
        let moved = choquet(&space, &profile(&z).shifted(c), &d).unwrap();
        prop_assert!((moved - base - c).abs() <= 2.0 * tol(&z));
    }

    #[test]
    fn monotonicity((space, z) in arb_space_profile(30, -100.0, 100.0), d in arb_distortion(), bumps in prop::collection::vec(0.0f64..10.0, 30)) {
        let bigger: Vec<f64> = z.iter().zip(&bumps).map(|(a, b)| a + b).collect();
        let lo = choquet(&space, &profile(&z), &d).unwrap();
        let hi = choquet(&space, &profile(&bigger), &d).unwrap();
        prop_assert!(lo <= hi + 1e-3 * tol(&bigger));
    }

    #[test]
    fn positive_homogeneity((space, z) in arb_space_profile(30, -100.0, 100.0), d in arb_distortion(), lambda in 0.01f64..10.0) {
        let base = choquet(&space, &profile(&z), &d).unwrap();
        let scaled = choquet(&space, &profile(&z).scaled(lambda), &d).unwrap();
        prop_assert!((scaled - lambda * base).abs() <= 10.0 * tol(&z));
    }

    /// Splitting `S` into a deductible part and an excess part.
    #[test]
    fn comonotone_additivity((space, s) in arb_space_profile(30, 0.0, 100.0), d in arb_distortion(), k in 0.0f64..100.0) {
        let s = profile(&s);
        let f = s.map(|x| x.min(k));
        let g = s.map(|x| (x - k).max(0.0));
        let whole = choquet(&space, &s, &d).unwrap();
        let parts = choquet(&space, &f, &d).unwrap() + choquet(&space, &g, &d).unwrap();
        prop_assert!((whole - parts).abs() <= tol(s.values()));
    }

    #[test]
    fn es_is_tvar_choquet((space, z) in arb_space_profile(40, -50.0, 50.0), alpha in 0.01f64..0.99) {
        let direct = es(&space, &profile(&z), alpha).unwrap();
        let via = choquet(&space, &profile(&z), &Distortion::tvar(alpha).unwrap()).unwrap();
        prop_assert!((direct - via).abs() <= 1e-3 * tol(&z));
    }

    #[test]
    fn es_equals_dual_maximum((space, z) in arb_space_profile(6, -50.0, 50.0), alpha in 0.01f64..0.99) {
        let z = profile(&z);
        let direct = es(&space, &z, alpha).unwrap();
        let dual = brute_force_es(&space, &z, alpha).unwrap();
        prop_assert!((direct - dual).abs() <= tol(z.values()));
        let q = es_dual_measure(&space, &z, alpha).unwrap();
        let mean: f64 = q.iter().zip(z.values()).map(|(w, x)| w * x).sum();
        prop_assert!((mean - direct).abs() <= tol(z.values()));
        for (w, p) in q.iter().zip(space.weights()) {
            prop_assert!(*w >= 0.0 && *w <= p / alpha + 1e-12);
        }
    }

    #[test]
    fn var_bounded_by_es((space, z) in arb_space_profile(30, -50.0, 50.0), alpha in 0.01f64..0.99) {
        let z = profile(&z);
        prop_assert!(var(&space, &z, alpha).unwrap() <= es(&space, &z, alpha).unwrap() + tol(z.values()));
    }

    /// Adding convex combinations of candidates never raises the robust value.
    #[test]
    fn hull_does_not_raise_robust_value(
        (space, z) in arb_space_profile(20, 0.0, 100.0),
        cands in prop::collection::vec(arb_distortion(), 1..4),
        picks in prop::collection::vec((0usize..4, 0usize..4, 0.0f64..1.0), 1..4),
    ) {
        let z = profile(&z);
        let set = DistortionSet::new(cands.clone()).unwrap();
        let (base, _) = robust_drm(&space, &z, &set).unwrap();
        let mut hull = cands.clone();
        for (i, j, lambda) in picks {
            hull.push(mixture(&space, &z, &cands[i % cands.len()], &cands[j % cands.len()], lambda));
        }
        let (extended, _) = robust_drm(&space, &z, &DistortionSet::new(hull).unwrap()).unwrap();
        prop_assert!((extended - base).abs() <= tol(z.values()));
    }

    #[test]
    fn law_invariance((space, z) in arb_space_profile(20, -50.0, 50.0), d in arb_distortion(), seed in any::<u64>(), alpha in 0.01f64..0.99) {
        let m = z.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let w: Vec<f64> = order.iter().map(|&i| space.weights()[i]).collect();
        let permuted_space = EmpiricalSpace::new(w).unwrap();
        let permuted = profile(&order.iter().map(|&i| z[i]).collect::<Vec<_>>());
        let z = profile(&z);
        let t = tol(z.values());
        prop_assert!((choquet(&space, &z, &d).unwrap() - choquet(&permuted_space, &permuted, &d).unwrap()).abs() <= t);
        prop_assert!((es(&space, &z, alpha).unwrap() - es(&permuted_space, &permuted, alpha).unwrap()).abs() <= t);
        prop_assert_eq!(var(&space, &z, alpha).unwrap(), var(&permuted_space, &permuted, alpha).unwrap());
    }
}

#[test]
fn identity_choquet_is_the_mean() {
    let space = EmpiricalSpace::uniform(4).unwrap();
    let z = profile(&[1.0, 2.0, 3.0, 4.0]);
    assert!((choquet(&space, &z, &Distortion::identity()).unwrap() - 2.5).abs() < 1e-12);
}
