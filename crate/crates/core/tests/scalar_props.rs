use fts_teleop::scalar_ops::{
    dilate, s_integral, sat_clip, sat_pow, sign, signed_pow, Regime, Weights,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn signed_pow_is_odd(x in -50.0..50.0_f64, p in 0.01..4.0_f64) {
        prop_assert_eq!(signed_pow(-x, p).unwrap(), -signed_pow(x, p).unwrap());
    }

    #[test]
    fn signed_pow_keeps_sign_and_magnitude(x in -50.0..50.0_f64, p in 0.01..4.0_f64) {
        let y = signed_pow(x, p).unwrap();
        prop_assert_eq!(sign(y), sign(x));
        prop_assert!((y.abs() - x.abs().powf(p)).abs() <= 1e-12 * y.abs().max(1.0));
    }

    #[test]
    fn clip_then_power_equals_saturated_power(
        x in -20.0..20.0_f64, p in 0.01..4.0_f64, d in 0.01..5.0_f64,
    ) {
        let lhs = signed_pow(sat_clip(x, d), p).unwrap();
        prop_assert_eq!(lhs.to_bits(), sat_pow(x, p, d).unwrap().to_bits());
    }

    #[test]
    fn saturated_power_is_capped(x in -1e6..1e6_f64, p in 0.01..4.0_f64, d in 0.01..5.0_f64) {
        prop_assert!(sat_pow(x, p, d).unwrap().abs() <= d.powf(p));
    }

    #[test]
    fn integral_derivative_is_saturated_power(
        frac in 0.01..4.0_f64, neg in any::<bool>(), p in 0.05..3.0_f64, d in 0.05..3.0_f64,
    ) {
        prop_assume!((frac - 1.0).abs() > 1e-3);
        let x = if neg { -frac * d } else { frac * d };
        let h = 1e-6 * x.abs();
        let fd = (s_integral(x + h, d, p).unwrap() - s_integral(x - h, d, p).unwrap()) / (2.0 * h);
        let exact = sat_pow(x, p, d).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "fd {} vs {}", fd, exact);
    }

    #[test]
    fn integral_is_even_and_positive(x in -20.0..20.0_f64, p in 0.05..3.0_f64, d in 0.05..3.0_f64) {
        let s = s_integral(x, d, p).unwrap();
        prop_assert_eq!(s, s_integral(-x, d, p).unwrap());
        let positive = if x == 0.0 { s == 0.0 } else { s > 0.0 };
        prop_assert!(positive);
    }

    #[test]
    fn integral_grows_linearly_beyond_the_knee(
        frac in 1.0..50.0_f64, p in 0.05..3.0_f64, d in 0.05..3.0_f64,
    ) {
        let x = frac * d;
        prop_assert!(s_integral(x, d, p).unwrap() >= d.powf(p) * x / (p + 1.0));
    }

    #[test]
    fn power_law_is_homogeneous_under_dilation(
        x in -5.0..5.0_f64, eps in 1e-3..1.0_f64, r in 0.2..3.0_f64, p in 0.1..3.0_f64,
    ) {
        // ⌈ε^r x⌋^p = ε^{rp} ⌈x⌋^p
        let xd = dilate(&[x], &[r], eps).unwrap()[0];
        let lhs = signed_pow(xd, p).unwrap();
        let rhs = eps.powf(r * p) * signed_pow(x, p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
    }
}

#[test]
fn saturation_switches_at_the_level() {
    assert_eq!(sat_pow(0.5, 2.0, 0.5).unwrap(), 0.25);
    assert_eq!(sat_pow(-0.5, 2.0, 0.5).unwrap(), -0.25);
    assert_eq!(sat_clip(0.5, 0.5), 0.5);
    assert_eq!(sat_clip(-7.0, 0.5), -0.5);
    // continuous at the knee
    let below = sat_pow(0.5 - 1e-12, 1.0 / 3.0, 0.5).unwrap();
    assert!((below - 0.5_f64.powf(1.0 / 3.0)).abs() < 1e-11);
}

#[test]
fn integral_closed_form_matches_quadrature() {
    let (p, d) = (1.0 / 3.0, 0.2);
    for x in [-1.3, -0.2, -0.05, 0.0, 0.11, 0.2, 0.9] {
        let n = 200_000;
        let h = x / n as f64;
        // midpoint rule; the cusp at 0 limits it to ~1e-8
        let mut acc = 0.0;
        for k in 0..n {
            let mid = (k as f64 + 0.5) * h;
            acc += sat_pow(mid, p, d).unwrap() * h;
        }
        assert!((s_integral(x, d, p).unwrap() - acc).abs() < 1e-7, "x = {x}");
    }
}

#[test]
fn invalid_arguments_are_rejected() {
    assert!(signed_pow(1.0, 0.0).is_err());
    assert!(signed_pow(1.0, -1.0).is_err());
    assert!(signed_pow(f64::NAN, 1.0).is_err());
    assert!(sat_pow(1.0, 1.0, 0.0).is_err());
    assert!(sat_pow(f64::NAN, 1.0, 1.0).is_err());
    assert!(s_integral(1.0, -1.0, 1.0).is_err());
    assert!(dilate(&[1.0, 2.0], &[1.0], 0.5).is_err());
    assert!(dilate(&[1.0], &[1.0], 0.0).is_err());
}

#[test]
fn weights_classify_regimes() {
    let ft = Weights::new(1.5, 1.0).unwrap();
    assert_eq!(ft.regime(), Regime::FiniteTime);
    assert_eq!(ft.degree(), -0.5);
    assert_eq!(Weights::new(1.0, 1.0).unwrap().regime(), Regime::Asymptotic);
    let err = Weights::new(2.0, 1.0).unwrap_err().to_string();
    assert!(err.contains("2*r2 > r1"), "{err}");
    assert!(Weights::new(0.5, 1.0).is_err());
}
