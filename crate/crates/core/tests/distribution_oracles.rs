mod common;

use common::{integrate_below, moments, tail_mean};
use proptest::prelude::*;
use regarch::distributions::{skewt_constants, ErrorDist};

fn knot(d: &ErrorDist) -> f64 {
    match *d {
        ErrorDist::SkewT { nu, lambda } => skewt_constants(nu, lambda).unwrap().knot(),
        _ => 0.0,
    }
}

fn grid99() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[test]
fn quadrature_on_gaussian() {
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (m, mu, v) = moments(phi, 0.0);
    assert!((m - 1.0).abs() < 1e-12 && mu.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
    let d = ErrorDist::SkewT { nu: 4.4, lambda: 0.5 };
    let (m, mu, v) = moments(|x| d.pdf(x - 0.3) * 0.5, knot(&d) + 0.3);
    assert!((m - 0.5).abs() < 1e-9 && (mu - 0.15).abs() < 1e-9, "{m} {mu} {v}");
}

#[test]
fn standardized_moments() {
    for d in [
        ErrorDist::Normal,
        ErrorDist::StudentT { nu: 4.4 },
        ErrorDist::StudentT { nu: 10.0 },
        ErrorDist::SkewT { nu: 4.4, lambda: 0.5 },
        ErrorDist::SkewT { nu: 4.4, lambda: -0.5 },
        ErrorDist::SkewT { nu: 30.0, lambda: 0.9 },
    ] {
        let (mass, mean, var) = moments(|x| d.pdf(x), knot(&d));
        assert!((mass - 1.0).abs() < 1e-6, "{d:?} mass {mass}");
        assert!(mean.abs() < 1e-6, "{d:?} mean {mean}");
        assert!((var - 1.0).abs() < 1e-5, "{d:?} var {var}");
    }
}

#[test]
fn tail_expectations_match_quadrature() {
    for d in [
        ErrorDist::Normal,
        ErrorDist::StudentT { nu: 4.4 },
        ErrorDist::StudentT { nu: 10.0 },
        ErrorDist::SkewT { nu: 4.4, lambda: 0.5 },
        ErrorDist::SkewT { nu: 4.4, lambda: -0.5 },
    ] {
        for a in [0.01, 0.025, 0.05, 0.3, 0.6] {
            let q = d.quantile(a).unwrap();
            let oracle = tail_mean(|x| d.pdf(x), q, a, knot(&d));
            let es = d.tail_expectation(a).unwrap();
            assert!((es - oracle).abs() < 1e-6, "{d:?} α={a}: {es} vs {oracle}");
        }
    }
}

#[test]
fn cdf_matches_integrated_density() {
    let d = ErrorDist::SkewT { nu: 6.0, lambda: -0.3 };
    for x in [-4.0, -1.0, -0.2, 0.0, 0.7, 2.5] {
        let k = knot(&d);
        let oracle =
            if x > k { integrate_below(|y| d.pdf(y), k) + common::integrate(|y| d.pdf(y), k, x) } else { integrate_below(|y| d.pdf(y), x) };
        assert!((d.cdf(x) - oracle).abs() < 1e-9, "x={x}");
    }
}

#[test]
fn skewt_with_zero_skew_is_student_t() {
    for nu in [4.4, 7.0, 25.0] {
        let (s, t) = (ErrorDist::SkewT { nu, lambda: 0.0 }, ErrorDist::StudentT { nu });
        for a in grid99() {
            assert!((s.quantile(a).unwrap() - t.quantile(a).unwrap()).abs() < 1e-10);
            assert!((s.tail_expectation(a).unwrap() - t.tail_expectation(a).unwrap()).abs() < 1e-10);
            let x = t.quantile(a).unwrap();
            assert!((s.log_pdf(x) - t.log_pdf(x)).abs() < 1e-10);
        }
    }
}

fn admissible() -> impl Strategy<Value = ErrorDist> {
    prop_oneof![
        Just(ErrorDist::Normal),
        (4.05f64..200.0).prop_map(|nu| ErrorDist::StudentT { nu }),
        (4.05f64..200.0, -0.95f64..0.95).prop_map(|(nu, lambda)| ErrorDist::SkewT { nu, lambda }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_moments_on_admissible_region(d in admissible()) {
        let (mass, mean, var) = moments(|x| d.pdf(x), knot(&d));
        prop_assert!((mass - 1.0).abs() < 1e-6);
        prop_assert!(mean.abs() < 1e-6, "mean {}", mean);
        prop_assert!((var - 1.0).abs() < 1e-5, "var {}", var);
    }

    #[test]
    fn quantile_increasing_and_above_tail_mean(d in admissible()) {
        let mut prev = f64::NEG_INFINITY;
        for a in grid99() {
            let q = d.quantile(a).unwrap();
            prop_assert!(q > prev);
            prop_assert!(d.tail_expectation(a).unwrap() < q);
            prop_assert!((d.cdf(q) - a).abs() < 1e-9);
            prev = q;
        }
    }

    #[test]
    fn knot_carries_left_mass(nu in 4.05f64..200.0, lambda in -0.95f64..0.95) {
        let d = ErrorDist::SkewT { nu, lambda };
        let k = skewt_constants(nu, lambda).unwrap();
        prop_assert!((d.cdf(k.knot()) - 0.5 * (1.0 - lambda)).abs() < 1e-12);
        prop_assert!(k.b > 0.0 && k.c > 0.0);
    }
}
