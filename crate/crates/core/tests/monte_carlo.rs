use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regarch::backtest::{al_log_score, esr_backtest, fz_joint_loss, mqr_backtest, BootstrapConfig};
use regarch::distributions::{DistKind, ErrorDist};
use regarch::forecast::{mqr_levels, next_log_h, var_es_given_log_h, FilterState};
use regarch::market_data::IntradayBar;
use regarch::measures::{realized_variance, subsampled_measure, BaseMeasure};
use regarch::ml_fit::{fit_ml, MlConfig};
use regarch::model::{filter, log_likelihood, simulate, ModelParams};
use regarch::seed::seed_for;

#[test]
fn true_one_step_tail_risk_matches_reference() {
    let p = ModelParams::simulation_dgp();
    let (mut var, mut es) = (0.0, 0.0);
    let reps = 200;
    for i in 0..reps {
        let sim = simulate(&p, 2000, 0.0025, seed_for(77, "dgp", i)).unwrap();
        let f = filter(&p, &sim.model_data(), 0.0025f64.ln()).unwrap();
        let (v, e) = var_es_given_log_h(&p, f.log_h_next, 0.025).unwrap();
        var += v / reps as f64;
        es += e / reps as f64;
    }
    assert!((var / -0.0763 - 1.0).abs() < 0.10, "mean VaR {var}");
    assert!((es / -0.0948 - 1.0).abs() < 0.10, "mean ES {es}");
}

#[test]
fn ml_recovers_normal_dgp() {
    let mut p = ModelParams::simulation_dgp();
    p.dist = ErrorDist::Normal;
    let mut err = 0.0;
    for i in 0..3 {
        let data = simulate(&p, 2000, 0.0025, seed_for(3, "ml", i)).unwrap().model_data();
        let cfg = MlConfig { log_h0: Some(0.0025f64.ln()), seed: i, ..Default::default() };
        let fit = fit_ml(&data, DistKind::Normal, &ModelParams::flat_init(1, DistKind::Normal, 0.1, 5.0), &cfg).unwrap();
        let truth_ll = log_likelihood(&p, &data, 0.0025f64.ln()).unwrap();
        assert!(fit.log_likelihood >= truth_ll - 1e-6, "{} < {truth_ll}", fit.log_likelihood);
        err += (fit.params.beta - 0.98).abs() / 3.0;
        if let Some(se) = &fit.std_errors {
            assert!(se.iter().all(|s| *s > 0.0));
        }
    }
    assert!(err < 0.02, "mean |β̂ - β| = {err}");
}

/// Heteroskedastic skew-t returns with their true 2.5% VaR and ES.
fn skewt_path(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = ErrorDist::SkewT { nu: 5.0, lambda: -0.3 };
    let (q, te) = (d.quantile(0.025).unwrap(), d.tail_expectation(0.025).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut r, mut v, mut e) = (Vec::new(), Vec::new(), Vec::new());
    let mut lh = (1e-4f64).ln();
    for _ in 0..n {
        lh = -0.2 + 0.98 * lh + 0.15 * rng.sample::<f64, _>(StandardNormal);
        let s = (0.5 * lh).exp();
        r.push(s * d.quantile(rng.random_range(1e-12..1.0 - 1e-12)).unwrap());
        v.push(s * q);
        e.push(s * te);
    }
    (r, v, e)
}

#[test]
fn joint_scores_rank_dominating_forecasts() {
    let mut wins = (0, 0);
    for i in 0..100 {
        let (r, v, e) = skewt_path(1000, seed_for(5, "dominance", i));
        let near: (Vec<f64>, Vec<f64>) = (v.iter().map(|x| x * 1.05).collect(), e.iter().map(|x| x * 1.05).collect());
        let far: (Vec<f64>, Vec<f64>) = (v.iter().map(|x| x * 1.4).collect(), e.iter().map(|x| x * 1.4).collect());
        wins.0 += (fz_joint_loss(&r, &near.0, &near.1, 0.025).unwrap() < fz_joint_loss(&r, &far.0, &far.1, 0.025).unwrap()) as u32;
        wins.1 += (al_log_score(&r, &near.0, &near.1, 0.025).unwrap() < al_log_score(&r, &far.0, &far.1, 0.025).unwrap()) as u32;
    }
    assert!(wins.0 >= 95 && wins.1 >= 95, "{wins:?}");
}

#[test]
fn esr_size_and_power() {
    let boot = BootstrapConfig { replicates: 200, block_length: 20.0, seed: 8 };
    let (mut null_rej, mut alt_rej) = (0, 0);
    let reps = 10;
    for i in 0..reps {
        let (r, _, e) = skewt_path(1000, seed_for(6, "esr", i));
        null_rej += esr_backtest(&r, &e, 0.025, &boot).unwrap().test.reject as u32;
        let mild: Vec<f64> = e.iter().map(|x| x * 0.6).collect();
        alt_rej += esr_backtest(&r, &mild, 0.025, &boot).unwrap().test.reject as u32;
    }
    assert!(null_rej <= 3, "null rejections {null_rej}/{reps}");
    assert!(alt_rej >= 8, "alternative rejections {alt_rej}/{reps}");
}

#[test]
fn mqr_size_and_power() {
    let d = ErrorDist::SkewT { nu: 5.0, lambda: -0.3 };
    let levels = mqr_levels(0.025, 6);
    let boot = BootstrapConfig { replicates: 200, block_length: 20.0, seed: 4 };
    let (mut null_rej, mut alt_rej) = (0, 0);
    for i in 0..10 {
        let (r, v, _) = skewt_path(2000, seed_for(9, "mqr", i));
        let q25 = d.quantile(0.025).unwrap();
        let grid = |scale: f64| -> Vec<Vec<f64>> {
            levels.iter().map(|&a| v.iter().map(|x| x / q25 * d.quantile(a).unwrap() * scale).collect()).collect()
        };
        null_rej += mqr_backtest(&r, &grid(1.0), &levels, &boot).unwrap().s.reject as u32;
        alt_rej += mqr_backtest(&r, &grid(0.6), &levels, &boot).unwrap().s.reject as u32;
    }
    assert!(null_rej <= 3, "null rejections {null_rej}");
    assert!(alt_rej >= 8, "alternative rejections {alt_rej}");
}

#[test]
fn forecast_state_advances_like_filter() {
    let p = ModelParams::simulation_dgp();
    let data = simulate(&p, 50, 0.0025, 1).unwrap().model_data();
    let f = filter(&p, &data, -6.0).unwrap();
    let last = data.len() - 1;
    let state = FilterState { log_h: f.log_h[last], eps: f.eps[last], u: f.u[last].clone() };
    assert!((next_log_h(&p, &state) - f.log_h_next).abs() < 1e-12);
}

#[test]
fn subsampled_rv_matches_rv_on_a_diffusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let t0 = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap().and_hms_opt(9, 30, 0).unwrap();
    let sigma = 0.01 / (390f64).sqrt();
    let (mut ss, mut rv) = (0.0, 0.0);
    for _ in 0..200 {
        let mut price = 100.0;
        let mut bars = Vec::with_capacity(390);
        let mut path = vec![price];
        for m in 0..390 {
            let open = price;
            price *= (sigma * rng.sample::<f64, _>(StandardNormal)).exp();
            bars.push(IntradayBar {
                timestamp: t0 + chrono::Duration::minutes(m + 1),
                open,
                high: open.max(price),
                low: open.min(price),
                close: price,
            });
            path.push(price);
        }
        ss += subsampled_measure(BaseMeasure::Rv, &bars, 1, 5).unwrap();
        rv += realized_variance(&path).unwrap();
    }
    assert!((ss / rv - 1.0).abs() < 0.02, "ratio {}", ss / rv);
}
