use proptest::collection::vec;
use proptest::prelude::*;
use regarch::backtest::{al_score_series, cc_test, dq_test, fz_joint_loss, quantile_loss, uc_test, TestStatus};
use regarch::distributions::{DistKind, ErrorDist};
use regarch::forecast::var_es_given_log_h;
use regarch::mcs::{mcs, LossMatrix, McsConfig, McsMethod};
use regarch::measures::{realized_range, realized_variance};
use regarch::model::{log_likelihood, simulate, MeasureParams, ModelParams};

fn params() -> impl Strategy<Value = ModelParams> {
    (
        (-0.01f64..0.01, -0.5f64..0.5, 0.5f64..0.98, -0.2f64..0.2, 0.0f64..0.2),
        (0.0f64..0.5, -0.5f64..0.5, 0.6f64..1.2, -0.2f64..0.2, 0.0f64..0.2, 0.01f64..1.0),
        prop_oneof![
            Just(ErrorDist::Normal),
            (4.2f64..150.0).prop_map(|nu| ErrorDist::StudentT { nu }),
            (4.2f64..150.0, -0.9f64..0.9).prop_map(|(nu, lambda)| ErrorDist::SkewT { nu, lambda }),
        ],
    )
        .prop_map(|((mu, omega, beta, tau1, tau2), (gamma, xi, phi, delta1, delta2, sigma2), dist)| ModelParams {
            mu,
            omega,
            beta,
            tau1,
            tau2,
            measures: vec![MeasureParams { gamma, xi, phi, delta1, delta2, sigma2 }],
            dist,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pack_round_trip_preserves_likelihood(p in params(), seed in 0u64..1000) {
        let sim = simulate(&ModelParams::simulation_dgp(), 200, 0.0025, seed).unwrap();
        let data = sim.model_data();
        let kind = p.dist.kind();
        let q = ModelParams::unpack(&p.pack(), 1, kind).unwrap();
        let (a, b) = (log_likelihood(&p, &data, 0.0025f64.ln()), log_likelihood(&q, &data, 0.0025f64.ln()));
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        }
        for (x, y) in p.to_natural().iter().zip(q.to_natural()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn unpack_always_lands_in_region(z in vec(-8.0f64..8.0, 13)) {
        if let Ok(p) = ModelParams::unpack(&z, 1, DistKind::SkewT) {
            prop_assert!(p.validate().is_ok());
        }
    }

    #[test]
    fn forecasts_are_ordered(p in params(), lh in -12.0f64..-4.0) {
        let (v1, e1) = var_es_given_log_h(&p, lh, 0.01).unwrap();
        let (v2, e2) = var_es_given_log_h(&p, lh, 0.025).unwrap();
        prop_assert!(v1 <= v2);
        prop_assert!(e1 <= v1 && e2 <= v2);
    }

    #[test]
    fn quantile_loss_shift_invariant(
        rq in vec((-0.1f64..0.1, -0.1f64..0.0), 1..60),
        c in -1.0f64..1.0,
        alpha in 0.005f64..0.2,
    ) {
        let (r, q): (Vec<f64>, Vec<f64>) = rq.into_iter().unzip();
        let base = quantile_loss(&r, &q, alpha).unwrap();
        let rs: Vec<f64> = r.iter().map(|x| x + c).collect();
        let qs: Vec<f64> = q.iter().map(|x| x + c).collect();
        prop_assert!((quantile_loss(&rs, &qs, alpha).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn losses_additive_over_segments(
        rows in vec((-0.1f64..0.1, -0.1f64..-0.001, 1.05f64..2.0), 2..80),
        cut in 0.0f64..1.0,
        alpha in 0.005f64..0.2,
    ) {
        let r: Vec<f64> = rows.iter().map(|x| x.0).collect();
        let v: Vec<f64> = rows.iter().map(|x| x.1).collect();
        let e: Vec<f64> = rows.iter().map(|x| x.1 * x.2).collect();
        let m = 1 + ((rows.len() - 1) as f64 * cut) as usize;
        let split = |f: &dyn Fn(&[f64], &[f64], &[f64]) -> f64| {
            (f(&r, &v, &e), f(&r[..m], &v[..m], &e[..m]) + f(&r[m..], &v[m..], &e[m..]))
        };
        let (whole, parts) = split(&|r, v, _| quantile_loss(r, v, alpha).unwrap());
        prop_assert!((whole - parts).abs() < 1e-10);
        let (whole, parts) = split(&|r, v, e| fz_joint_loss(r, v, e, alpha).unwrap());
        prop_assert!(whole.is_finite() && (whole - parts).abs() < 1e-9 * whole.abs().max(1.0));
        let (whole, parts) = split(&|r, v, e| al_score_series(r, v, e, alpha).unwrap().iter().sum());
        prop_assert!(whole.is_finite() && (whole - parts).abs() < 1e-9 * whole.abs().max(1.0));
    }

    #[test]
    fn p_values_in_unit_interval(
        h in vec(prop::bool::weighted(0.05), 30..400),
        alpha in 0.01f64..0.1,
    ) {
        let var: Vec<f64> = (0..h.len()).map(|t| -0.02 - 0.001 * (t % 7) as f64).collect();
        for t in [uc_test(&h, alpha).unwrap(), cc_test(&h, alpha).unwrap(), dq_test(&h, &var, alpha, 4).unwrap()] {
            match t.status {
                TestStatus::Ok => {
                    let p = t.p_value.unwrap();
                    prop_assert!((0.0..=1.0).contains(&p));
                    prop_assert_eq!(t.reject, p < 0.05);
                }
                _ => prop_assert!(t.p_value.is_none() && !t.reject),
            }
        }
    }

    #[test]
    fn measures_invariant_to_price_scale(
        steps in vec(-0.01f64..0.01, 2..100),
        spread in vec(0.0f64..0.005, 2..100),
        c in 0.001f64..1000.0,
    ) {
        let mut prices = vec![100.0];
        for s in &steps {
            prices.push(prices.last().unwrap() * s.exp());
        }
        let scaled: Vec<f64> = prices.iter().map(|p| p * c).collect();
        let rv = realized_variance(&prices).unwrap();
        prop_assert!((realized_variance(&scaled).unwrap() - rv).abs() <= 1e-9 * rv.max(1e-12));
        let ranges: Vec<(f64, f64)> = prices.iter().zip(&spread).map(|(p, s)| (p * (1.0 + s), *p)).collect();
        let scaled_ranges: Vec<(f64, f64)> = ranges.iter().map(|(h, l)| (h * c, l * c)).collect();
        let rr = realized_range(&ranges).unwrap();
        prop_assert!(rr >= 0.0);
        prop_assert!((realized_range(&scaled_ranges).unwrap() - rr).abs() <= 1e-9 * rr.max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mcs_invariant_to_common_shift(
        cols in vec(vec(-1.0f64..1.0, 120), 3..5),
        shift in -5.0f64..5.0,
        bias in 0.0f64..0.4,
        sq in any::<bool>(),
    ) {
        let ids: Vec<String> = (0..cols.len()).map(|i| format!("M{i}")).collect();
        let rows = |s: f64| -> Vec<Vec<f64>> {
            (0..120).map(|t| cols.iter().enumerate().map(|(i, c)| c[t] + s + bias * i as f64).collect()).collect()
        };
        let cfg = McsConfig { replicates: 200, ..Default::default() };
        let method = if sq { McsMethod::SQ } else { McsMethod::R };
        let a = mcs(&LossMatrix::new(ids.clone(), rows(0.0)).unwrap(), method, 0.9, &cfg).unwrap();
        let b = mcs(&LossMatrix::new(ids, rows(shift)).unwrap(), method, 0.9, &cfg).unwrap();
        prop_assert_eq!(&a.elimination_order, &b.elimination_order);
        prop_assert_eq!(&a.survivors, &b.survivors);
        for (x, y) in a.p_values.iter().zip(&b.p_values) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        for w in a.p_values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }
}
