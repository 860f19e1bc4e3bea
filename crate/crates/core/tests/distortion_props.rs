mod common;

use paretopool::Distortion;
use proptest::prelude::*;

use common::arb_distortion;

/// `-T''/T'` by central differences with a step proportional to `t`.
fn fd_pra(d: &Distortion, t: f64) -> f64 {
    let h = 1e-4 * t.min(1.0 - t);
    let lo = d.eval(t - h).unwrap();
    let mid = d.eval(t).unwrap();
    let hi = d.eval(t + h).unwrap();
    let d1 = (hi - lo) / (2.0 * h);
    let d2 = (hi - 2.0 * mid + lo) / (h * h);
    -d2 / d1
}

fn closed_form() -> impl Strategy<Value = Distortion> {
    prop_oneof![
        (0.1f64..2.0).prop_map(|g| Distortion::power(g).unwrap()),
        (0.05f64..0.99).prop_map(|a| Distortion::prelec1(a).unwrap()),
        (0.05f64..0.99, 0.2f64..3.0).prop_map(|(a, b)| Distortion::prelec2(a, b).unwrap()),
        Just(Distortion::identity()),
    ]
}

proptest! {
    #[test]
    fn eval_is_monotone(d in arb_distortion(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(d.eval(s).unwrap() <= d.eval(t).unwrap());
    }

    #[test]
    fn eval_fixes_endpoints(d in arb_distortion()) {
        prop_assert_eq!(d.eval(0.0).unwrap(), 0.0);
        prop_assert_eq!(d.eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn pra_matches_finite_differences(d in closed_form(), t in 0.05f64..0.95) {
        let exact = d.pra(t).unwrap();
        let numeric = fd_pra(&d, t);
        prop_assert!(
            (exact - numeric).abs() <= 1e-4 * exact.abs().max(1.0),
            "{:?} at {}: closed form {} vs differences {}", d, t, exact, numeric
        );
    }

    #[test]
    fn prelec1_pra_falls_with_alpha_below_inverse_e(
        a in 0.05f64..0.98,
        gap in 0.01f64..0.5,
        t in 0.001f64..0.367,
    ) {
        let b = (a + gap).min(0.99);
        prop_assume!(b > a);
        let low = Distortion::prelec1(a).unwrap().pra(t).unwrap();
        let high = Distortion::prelec1(b).unwrap().pra(t).unwrap();
        prop_assert!(low > high, "alpha {} -> {}, alpha {} -> {}", a, low, b, high);
    }

    #[test]
    fn prelec2_pra_falls_with_beta(alpha in 0.05f64..0.99, b1 in 0.2f64..3.0, gap in 0.01f64..2.0, t in 0.01f64..0.99) {
        let b2 = b1 + gap;
        let low = Distortion::prelec2(alpha, b1).unwrap().pra(t).unwrap();
        let high = Distortion::prelec2(alpha, b2).unwrap().pra(t).unwrap();
        prop_assert!(low > high);
    }

    /// The square root of a power or Prelec-2 distortion stays in its family,
    /// with half the exponent or half the second parameter.
    #[test]
    fn concave_composition_raises_pra(gamma in 0.1f64..2.0, alpha in 0.05f64..0.99, beta in 0.2f64..3.0, t in 0.01f64..0.99) {
        let p = Distortion::power(gamma).unwrap();
        let p_sqrt = Distortion::power(gamma / 2.0).unwrap();
        prop_assert!((p_sqrt.eval(t).unwrap() - p.eval(t).unwrap().sqrt()).abs() < 1e-12);
        prop_assert!(p_sqrt.pra(t).unwrap() >= p.pra(t).unwrap());

        let q = Distortion::prelec2(alpha, beta).unwrap();
        let q_sqrt = Distortion::prelec2(alpha, beta / 2.0).unwrap();
        prop_assert!((q_sqrt.eval(t).unwrap() - q.eval(t).unwrap().sqrt()).abs() < 1e-12);
        prop_assert!(q_sqrt.pra(t).unwrap() >= q.pra(t).unwrap());
    }

    /// Same comparison for KT, where the composite has no closed form.
    #[test]
    fn concave_composition_raises_kt_pra(gamma in 0.3f64..1.0, t in 0.05f64..0.95) {
        let d = Distortion::kahneman_tversky(gamma).unwrap();
        let h = 1e-4 * t.min(1.0 - t);
        let g = |x: f64| d.eval(x).unwrap().sqrt();
        let d1 = (g(t + h) - g(t - h)) / (2.0 * h);
        let d2 = (g(t + h) - 2.0 * g(t) + g(t - h)) / (h * h);
        let composed = -d2 / d1;
        prop_assert!(composed >= d.pra(t).unwrap() - 1e-3 * composed.abs().max(1.0));
    }
}

#[test]
fn power_rpra_is_constant() {
    let d = Distortion::power(0.4).unwrap();
    for t in [0.1, 0.3, 0.5, 0.9] {
        assert!((d.rpra(t).unwrap() - 0.6).abs() < 1e-12);
    }
}

#[test]
fn prelec1_pra_vanishes_at_inverse_e() {
    let t = (-1.0f64).exp();
    for alpha in [0.2, 0.5, 0.65, 0.9] {
        assert!(Distortion::prelec1(alpha).unwrap().pra(t).unwrap().abs() < 1e-9);
    }
}
