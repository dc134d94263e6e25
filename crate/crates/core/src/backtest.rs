//! VaR and ES backtests and scoring functions.

use crate::bootstrap::{iid_indices, stationary_indices};
use crate::forecast::{mqr_levels, ForecastRecord, GridRecord};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::seed::seed_for;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};
use std::collections::BTreeMap;
use thiserror::Error;

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("level {0} outside (0, 1)")]
    Level(f64),
    #[error("ES must lie below VaR; violated at t = {0}")]
    EsAboveVar(usize),
    #[error("ES must be negative; violated at t = {0}")]
    EsNotNegative(usize),
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("inputs: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Ok,
    /// The statistic is undefined for this input (for example no hits).
    Degenerate,
    /// Estimation needed by the test failed.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub status: TestStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TestResult {
    pub fn ok(statistic: f64, p_value: f64) -> Self {
        let p = p_value.clamp(0.0, 1.0);
        Self { statistic: Some(statistic), p_value: Some(p), reject: p < SIGNIFICANCE, status: TestStatus::Ok, note: None }
    }

    pub fn flagged(status: TestStatus, note: impl Into<String>) -> Self {
        Self { statistic: None, p_value: None, reject: false, status, note: Some(note.into()) }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

fn check_level(alpha: f64) -> Result<(), BacktestError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(BacktestError::Level(alpha))
    }
}

fn check_len(a: usize, b: usize) -> Result<(), BacktestError> {
    if a != b {
        return Err(BacktestError::Length(a, b));
    }
    if a == 0 {
        return Err(BacktestError::Empty);
    }
    Ok(())
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).map(|d| d.sf(x.max(0.0))).unwrap_or(f64::NAN)
}

/// `I(r_t < VaR_t)`.
pub fn hits(returns: &[f64], var: &[f64]) -> Result<Vec<bool>, BacktestError> {
    check_len(returns.len(), var.len())?;
    Ok(returns.iter().zip(var).map(|(r, v)| r < v).collect())
}

pub fn vrate(hits: &[bool]) -> Result<f64, BacktestError> {
    if hits.is_empty() {
        return Err(BacktestError::Empty);
    }
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// `x ln p` with `0 ln 0 = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn warn_short(n: usize, what: &str) {
    if n < 100 {
        log::warn!("{what}: only {n} observations, asymptotic p-value is unreliable");
    }
}

/// Likelihood-ratio test of unconditional coverage. With no hits or only
/// hits the p-value is the doubled exact binomial tail.
pub fn uc_test(hits: &[bool], alpha: f64) -> Result<TestResult, BacktestError> {
    check_level(alpha)?;
    if hits.is_empty() {
        return Err(BacktestError::Empty);
    }
    warn_short(hits.len(), "UC test");
    let m = hits.len() as f64;
    let x = hits.iter().filter(|&&h| h).count() as f64;
    let pi = x / m;
    let lr = -2.0 * ((xlogy(m - x, 1.0 - alpha) + xlogy(x, alpha)) - (xlogy(m - x, 1.0 - pi) + xlogy(x, pi)));
    let lr = lr.max(0.0);
    if x == 0.0 || x == m {
        let bin = Binomial::new(alpha, hits.len() as u64).map_err(|e| BacktestError::Input(e.to_string()))?;
        let tail = if x == 0.0 { bin.cdf(0) } else { bin.sf(hits.len() as u64 - 1) };
        return Ok(TestResult::ok(lr, (2.0 * tail).min(1.0)).with_note("exact binomial tail"));
    }
    Ok(TestResult::ok(lr, chi2_sf(lr, 1.0)))
}

/// Christoffersen independence statistic from first-order transitions.
fn independence_lr(hits: &[bool]) -> f64 {
    let (mut n00, mut n01, mut n10, mut n11) = (0.0, 0.0, 0.0, 0.0);
    for w in hits.windows(2) {
        match (w[0], w[1]) {
            (false, false) => n00 += 1.0,
            (false, true) => n01 += 1.0,
            (true, false) => n10 += 1.0,
            (true, true) => n11 += 1.0,
        }
    }
    let p01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
    let p11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
    let p = (n01 + n11) / (n00 + n01 + n10 + n11);
    let restricted = xlogy(n00 + n10, 1.0 - p) + xlogy(n01 + n11, p);
    let free = xlogy(n00, 1.0 - p01) + xlogy(n01, p01) + xlogy(n10, 1.0 - p11) + xlogy(n11, p11);
    (-2.0 * (restricted - free)).max(0.0)
}

/// Conditional coverage: UC plus first-order Markov independence, χ²(2).
pub fn cc_test(hits: &[bool], alpha: f64) -> Result<TestResult, BacktestError> {
    check_level(alpha)?;
    if hits.len() < 2 {
        return Err(BacktestError::TooShort { needed: 2, got: hits.len() });
    }
    let x = hits.iter().filter(|&&h| h).count();
    if x == 0 || x == hits.len() {
        return Ok(TestResult::flagged(TestStatus::Degenerate, "no variation in hits"));
    }
    warn_short(hits.len(), "CC test");
    let uc = uc_test(hits, alpha)?.statistic.unwrap_or(0.0);
    let lr = uc + independence_lr(hits);
    Ok(TestResult::ok(lr, chi2_sf(lr, 2.0)))
}

/// Dynamic quantile test: demeaned hits regressed on a constant, `lags`
/// lagged hits and the contemporaneous VaR; Wald statistic χ²(lags + 2).
pub fn dq_test(hits: &[bool], var: &[f64], alpha: f64, lags: usize) -> Result<TestResult, BacktestError> {
    check_level(alpha)?;
    check_len(hits.len(), var.len())?;
    if hits.len() <= lags + 2 + 1 {
        return Err(BacktestError::TooShort { needed: lags + 4, got: hits.len() });
    }
    let x_count = hits.iter().filter(|&&h| h).count();
    if x_count == 0 || x_count == hits.len() {
        return Ok(TestResult::flagged(TestStatus::Degenerate, "no variation in hits"));
    }
    warn_short(hits.len(), "DQ test");
    let h: Vec<f64> = hits.iter().map(|&b| b as u8 as f64 - alpha).collect();
    let rows = hits.len() - lags;
    let k = lags + 2;
    let x = DMatrix::from_fn(rows, k, |i, j| {
        let t = i + lags;
        match j {
            0 => 1.0,
            j if j <= lags => h[t - j],
            _ => var[t],
        }
    });
    let y = DVector::from_iterator(rows, h[lags..].iter().copied());
    let xtx = x.transpose() * &x;
    let Some(chol) = xtx.clone().cholesky() else {
        return Ok(TestResult::flagged(TestStatus::Degenerate, "singular regressor matrix"));
    };
    let beta = chol.solve(&(x.transpose() * &y));
    let stat = (beta.transpose() * &xtx * &beta)[(0, 0)] / (alpha * (1.0 - alpha));
    if !stat.is_finite() {
        return Ok(TestResult::flagged(TestStatus::Degenerate, "non-finite statistic"));
    }
    Ok(TestResult::ok(stat, chi2_sf(stat, k as f64)))
}

/// Tick loss `Σ (r_t - Q_t)(α - I(r_t < Q_t))`.
pub fn quantile_loss(returns: &[f64], var: &[f64], alpha: f64) -> Result<f64, BacktestError> {
    check_level(alpha)?;
    check_len(returns.len(), var.len())?;
    Ok(returns.iter().zip(var).map(|(&r, &q)| (r - q) * (alpha - (r < q) as u8 as f64)).sum())
}

/// One day of the exponential joint VaR-ES loss.
pub fn fz_loss_day(r: f64, var: f64, es: f64, alpha: f64) -> f64 {
    let i = (r < var) as u8 as f64;
    (i - alpha) * var - i * r + es.exp() * (es - var + i / alpha * (var - r)) - es.exp() + 1.0 - (1.0 - alpha).ln()
}

/// Total joint VaR-ES loss over the sample.
pub fn fz_joint_loss(returns: &[f64], var: &[f64], es: &[f64], alpha: f64) -> Result<f64, BacktestError> {
    check_level(alpha)?;
    check_len(returns.len(), var.len())?;
    check_len(returns.len(), es.len())?;
    if let Some(t) = es.iter().zip(var).position(|(e, v)| !(e < v)) {
        return Err(BacktestError::EsAboveVar(t));
    }
    Ok(returns.iter().zip(var).zip(es).map(|((&r, &v), &e)| fz_loss_day(r, v, e, alpha)).sum())
}

/// Negative asymmetric-Laplace log-likelihood of one day.
pub fn al_score_day(y: f64, q: f64, es: f64, alpha: f64) -> f64 {
    let i = (y <= q) as u8 as f64;
    -((alpha - 1.0) / es).ln() - (y - q) * (alpha - i) / (alpha * es)
}

pub fn al_score_series(returns: &[f64], var: &[f64], es: &[f64], alpha: f64) -> Result<Vec<f64>, BacktestError> {
    check_level(alpha)?;
    check_len(returns.len(), var.len())?;
    check_len(returns.len(), es.len())?;
    if let Some(t) = es.iter().position(|e| !(*e < 0.0)) {
        return Err(BacktestError::EsNotNegative(t));
    }
    Ok(returns.iter().zip(var).zip(es).map(|((&y, &q), &e)| al_score_day(y, q, e, alpha)).collect())
}

/// Mean AL log score.
pub fn al_log_score(returns: &[f64], var: &[f64], es: &[f64], alpha: f64) -> Result<f64, BacktestError> {
    let s = al_score_series(returns, var, es, alpha)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Mean block length of the stationary bootstrap.
    pub block_length: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: 1000, block_length: 20.0, seed: 1 }
    }
}

/// Wald statistic of `g` against bootstrap replicates `reps` of `g`,
/// recentred at `g`. Returns `(statistic, p-value)`; `None` when the
/// bootstrap covariance is singular and `g` is not zero.
fn bootstrap_wald(g: &[f64], reps: &[Vec<f64>]) -> Option<(f64, f64)> {
    let d = g.len();
    let b = reps.len() as f64;
    let mean: Vec<f64> = (0..d).map(|i| reps.iter().map(|r| r[i]).sum::<f64>() / b).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| reps.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (b - 1.0));
    let exact = g.iter().all(|v| v.abs() < 1e-8);
    if cov.diagonal().max() < 1e-18 {
        return exact.then_some((0.0, 1.0));
    }
    let Some(chol) = cov.clone().cholesky() else {
        return exact.then_some((0.0, 1.0));
    };
    let quad = |v: &[f64]| {
        let x = DVector::from_column_slice(v);
        x.dot(&chol.solve(&x))
    };
    let stat = quad(g);
    let exceed = reps
        .iter()
        .filter(|r| {
            let c: Vec<f64> = r.iter().zip(g).map(|(a, b)| a - b).collect();
            quad(&c) >= stat
        })
        .count();
    Some((stat, exceed as f64 / b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsrResult {
    pub test: TestResult,
    /// `(a_q, b_q, a_e, b_e)`: quantile and ES equations on the ES forecast.
    pub coefficients: Option<[f64; 4]>,
}

struct EsrFit {
    theta: [f64; 4],
    converged: bool,
}

/// Minimizes the mean AL score of `Q_t = a_q + b_q ê_t`, `E_t = a_e + b_e ê_t`.
fn esr_fit(r: &[f64], e: &[f64], alpha: f64, starts: &[[f64; 4]]) -> Option<EsrFit> {
    let obj = |th: &[f64]| {
        let mut s = 0.0;
        for (&y, &x) in r.iter().zip(e) {
            let es = th[2] + th[3] * x;
            if !(es < 0.0) {
                return f64::INFINITY;
            }
            s += al_score_day(y, th[0] + th[1] * x, es, alpha);
        }
        s / r.len() as f64
    };
    let cfg = NelderMeadConfig { max_evals: 5000, f_tol: 1e-12, x_tol: 1e-9, step: 0.1 };
    let mut best: Option<(f64, EsrFit)> = None;
    for s in starts {
        if !obj(s).is_finite() {
            continue;
        }
        let mut m = nelder_mead(obj, s, &cfg);
        if !m.converged {
            m = nelder_mead(obj, &m.x.clone(), &cfg);
        }
        if best.as_ref().is_none_or(|(f, _)| m.f < *f) {
            best = Some((m.f, EsrFit { theta: [m.x[0], m.x[1], m.x[2], m.x[3]], converged: m.converged }));
        }
    }
    best.map(|(_, f)| f)
}

/// Bivariate ES regression backtest of `H0: (a_e, b_e) = (0, 1)` with a
/// stationary-bootstrap Wald p-value.
pub fn esr_backtest(returns: &[f64], es: &[f64], alpha: f64, boot: &BootstrapConfig) -> Result<EsrResult, BacktestError> {
    check_level(alpha)?;
    check_len(returns.len(), es.len())?;
    let n = returns.len();
    if n < 250 {
        return Err(BacktestError::TooShort { needed: 250, got: n });
    }
    if let Some(t) = es.iter().position(|e| !(*e < 0.0)) {
        return Err(BacktestError::EsNotNegative(t));
    }
    let scale = es.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
    let r: Vec<f64> = returns.iter().map(|v| v / scale).collect();
    let e: Vec<f64> = es.iter().map(|v| v / scale).collect();
    let starts = [[0.0, 0.8, 0.0, 1.0], [0.0, 0.6, 0.0, 0.8], [0.0, 1.0, 0.0, 1.2]];
    let Some(fit) = esr_fit(&r, &e, alpha, &starts).filter(|f| f.converged) else {
        return Ok(EsrResult { test: TestResult::flagged(TestStatus::Unavailable, "ES regression did not converge"), coefficients: None });
    };
    let th = fit.theta;
    let coefficients = Some([th[0] * scale, th[1], th[2] * scale, th[3]]);
    let g = [th[2], th[3] - 1.0];
    let reps: Vec<Option<Vec<f64>>> = (0..boot.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(boot.seed, "esr", b));
            let idx = stationary_indices(n, boot.block_length, &mut rng);
            let rb: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
            let eb: Vec<f64> = idx.iter().map(|&i| e[i]).collect();
            esr_fit(&rb, &eb, alpha, &[th]).filter(|f| f.converged).map(|f| vec![f.theta[2], f.theta[3] - 1.0])
        })
        .collect();
    let ok: Vec<Vec<f64>> = reps.into_iter().flatten().collect();
    if ok.len() < boot.replicates.div_ceil(2).max(2) {
        return Ok(EsrResult { test: TestResult::flagged(TestStatus::Unavailable, "too many bootstrap fits failed"), coefficients });
    }
    let test = match bootstrap_wald(&g, &ok) {
        Some((stat, p)) => TestResult::ok(stat, p),
        None => TestResult::flagged(TestStatus::Degenerate, "singular bootstrap covariance"),
    };
    Ok(EsrResult { test, coefficients })
}

/// Linear quantile regression of `y` on `(1, x)` at level `u`. The
/// intercept is profiled out exactly; the slope is found by golden-section
/// search on the convex profile loss. `None` for a constant regressor or a
/// slope at the search bound.
pub fn quantile_regression(y: &[f64], x: &[f64], u: f64) -> Option<(f64, f64)> {
    let n = y.len();
    if n < 2 || x.len() != n {
        return None;
    }
    let (xmin, xmax) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(xmax - xmin > 1e-12 * xmax.abs().max(xmin.abs()).max(1e-300)) {
        return None;
    }
    let k = ((n as f64 * u).ceil() as usize).clamp(1, n) - 1;
    let mut z = vec![0.0; n];
    let mut profile = |b1: f64| -> (f64, f64) {
        for ((zi, yi), xi) in z.iter_mut().zip(y).zip(x) {
            *zi = yi - b1 * xi;
        }
        let mut sorted = z.clone();
        let (_, &mut b0, _) = sorted.select_nth_unstable_by(k, f64::total_cmp);
        let loss = z.iter().map(|&v| (v - b0) * (u - (v < b0) as u8 as f64)).sum::<f64>();
        (loss, b0)
    };
    let bound = 1e3;
    let (mut lo, mut hi) = (-bound, bound);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (profile(c).0, profile(d).0);
    for _ in 0..200 {
        if hi - lo < 1e-12 * (1.0 + c.abs()) {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = profile(c).0;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = profile(d).0;
        }
    }
    let b1 = 0.5 * (lo + hi);
    if (bound - b1.abs()) < 1e-3 {
        return None;
    }
    let (_, b0) = profile(b1);
    Some((b0, b1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MqrResult {
    /// Loss-side levels `u_j`.
    pub levels: Vec<f64>,
    /// `(β₀(u_j), β₁(u_j))`.
    pub coefficients: Option<Vec<(f64, f64)>>,
    #[serde(rename = "J1")]
    pub j1: TestResult,
    #[serde(rename = "J2")]
    pub j2: TestResult,
    #[serde(rename = "I")]
    pub i: TestResult,
    #[serde(rename = "S")]
    pub s: TestResult,
}

fn mqr_fit(loss: &[f64], xs: &[Vec<f64>], levels: &[f64]) -> Option<Vec<(f64, f64)>> {
    xs.iter().zip(levels).map(|(x, &u)| quantile_regression(loss, x, u)).collect()
}

fn mqr_hypotheses(c: &[(f64, f64)]) -> [Vec<f64>; 4] {
    let p = c.len() as f64;
    let s0: f64 = c.iter().map(|v| v.0).sum();
    let s1: f64 = c.iter().map(|v| v.1).sum();
    [vec![s0 + s1 - p], vec![s0, s1 - p], vec![s0], vec![s1 - p]]
}

/// Multi-quantile regression ES backtest. `var_grid[j][t]` is the return-side
/// VaR at level `return_levels[j]`; losses `-r_t` are regressed on `-VaR`
/// at loss-side level `1 - return_levels[j]`. P-values from a pairs
/// bootstrap.
pub fn mqr_backtest(
    returns: &[f64],
    var_grid: &[Vec<f64>],
    return_levels: &[f64],
    boot: &BootstrapConfig,
) -> Result<MqrResult, BacktestError> {
    if var_grid.len() != return_levels.len() || var_grid.len() < 2 {
        return Err(BacktestError::Input("need a VaR series for each of at least 2 levels".into()));
    }
    for v in var_grid {
        check_len(returns.len(), v.len())?;
    }
    for &l in return_levels {
        check_level(l)?;
    }
    let n = returns.len();
    let loss: Vec<f64> = returns.iter().map(|r| -r).collect();
    let xs: Vec<Vec<f64>> = var_grid.iter().map(|v| v.iter().map(|q| -q).collect()).collect();
    let levels: Vec<f64> = return_levels.iter().map(|l| 1.0 - l).collect();
    let Some(coef) = mqr_fit(&loss, &xs, &levels) else {
        let f = || TestResult::flagged(TestStatus::Degenerate, "quantile regression degenerate");
        return Ok(MqrResult { levels, coefficients: None, j1: f(), j2: f(), i: f(), s: f() });
    };
    let g = mqr_hypotheses(&coef);
    let reps: Vec<Option<[Vec<f64>; 4]>> = (0..boot.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(boot.seed, "mqr", b));
            let idx = iid_indices(n, &mut rng);
            let lb: Vec<f64> = idx.iter().map(|&i| loss[i]).collect();
            let xb: Vec<Vec<f64>> = xs.iter().map(|x| idx.iter().map(|&i| x[i]).collect()).collect();
            mqr_fit(&lb, &xb, &levels).map(|c| mqr_hypotheses(&c))
        })
        .collect();
    let ok: Vec<[Vec<f64>; 4]> = reps.into_iter().flatten().collect();
    let test = |h: usize| {
        if ok.len() < 2 {
            return TestResult::flagged(TestStatus::Unavailable, "bootstrap fits failed");
        }
        let r: Vec<Vec<f64>> = ok.iter().map(|v| v[h].clone()).collect();
        match bootstrap_wald(&g[h], &r) {
            Some((s, p)) => TestResult::ok(s, p),
            None => TestResult::flagged(TestStatus::Degenerate, "singular bootstrap covariance"),
        }
    };
    Ok(MqrResult { levels, coefficients: Some(coef), j1: test(0), j2: test(1), i: test(2), s: test(3) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub dq_lags: usize,
    pub mqr_p: usize,
    pub bootstrap: BootstrapConfig,
    /// Skip the bootstrap-based ES tests.
    pub skip_es_tests: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self { dq_lags: 4, mqr_p: 6, bootstrap: BootstrapConfig::default(), skip_es_tests: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub quantile: f64,
    pub fz: f64,
    pub al: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub model: String,
    pub alpha: f64,
    pub n: usize,
    pub vrate: f64,
    pub uc: TestResult,
    pub cc: TestResult,
    pub dq: TestResult,
    pub esr: Option<EsrResult>,
    pub mqr: Option<MqrResult>,
    pub losses: Losses,
}

/// All tests and losses for one model at one level. `records` must hold
/// that model's forecasts at `alpha` in date order; `grid` its VaR grid.
pub fn backtest_model(
    records: &[&ForecastRecord],
    grid: &[&GridRecord],
    alpha: f64,
    cfg: &BacktestConfig,
) -> Result<BacktestReport, BacktestError> {
    if records.is_empty() {
        return Err(BacktestError::Empty);
    }
    let model = records[0].model.clone();
    let r: Vec<f64> = records.iter().map(|x| x.ret).collect();
    let var: Vec<f64> = records.iter().map(|x| x.var).collect();
    let es: Vec<f64> = records.iter().map(|x| x.es).collect();
    let h = hits(&r, &var)?;
    let esr = if cfg.skip_es_tests || r.len() < 250 { None } else { Some(esr_backtest(&r, &es, alpha, &cfg.bootstrap)?) };
    let mqr = if cfg.skip_es_tests || grid.is_empty() {
        None
    } else {
        let levels = mqr_levels(alpha, cfg.mqr_p);
        let mut by_level: Vec<BTreeMap<_, f64>> = vec![BTreeMap::new(); levels.len()];
        for g in grid.iter().filter(|g| g.alpha == alpha) {
            if let Some(j) = levels.iter().position(|l| (l - g.level).abs() < 1e-12) {
                by_level[j].insert(g.date, g.var);
            }
        }
        let series: Option<Vec<Vec<f64>>> =
            by_level.iter().map(|m| records.iter().map(|rec| m.get(&rec.date).copied()).collect()).collect();
        match series {
            Some(s) => Some(mqr_backtest(&r, &s, &levels, &cfg.bootstrap)?),
            None => return Err(BacktestError::Input(format!("{model}: VaR grid incomplete at alpha {alpha}"))),
        }
    };
    Ok(BacktestReport {
        model,
        alpha,
        n: r.len(),
        vrate: vrate(&h)?,
        uc: uc_test(&h, alpha)?,
        cc: cc_test(&h, alpha)?,
        dq: dq_test(&h, &var, alpha, cfg.dq_lags)?,
        esr,
        mqr,
        losses: Losses {
            quantile: quantile_loss(&r, &var, alpha)?,
            fz: fz_joint_loss(&r, &var, &es, alpha)?,
            al: al_log_score(&r, &var, &es, alpha)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn vrate_examples() {
        let mut h = vec![false; 1000];
        for v in h.iter_mut().take(25) {
            *v = true;
        }
        assert_eq!(vrate(&h).unwrap(), 0.025);
        assert_eq!(vrate(&[true; 4]).unwrap(), 1.0);
    }

    #[test]
    fn uc_exact_null() {
        let mut h = vec![false; 1000];
        for i in 0..25 {
            h[i * 40] = true;
        }
        let t = uc_test(&h, 0.025).unwrap();
        assert!(t.statistic.unwrap().abs() < 1e-9);
        assert!((t.p_value.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn clustered_hits_fail_cc_only() {
        let mut h = vec![false; 1000];
        for v in h.iter_mut().skip(500).take(25) {
            *v = true;
        }
        assert!(!uc_test(&h, 0.025).unwrap().reject);
        assert!(cc_test(&h, 0.025).unwrap().reject);
    }

    #[test]
    fn no_hits_exact_tail() {
        let h = vec![false; 300];
        let t = uc_test(&h, 0.025).unwrap();
        let expect = 2.0 * 0.975f64.powi(300);
        assert!((t.p_value.unwrap() - expect).abs() < 1e-12);
        assert_eq!(cc_test(&h, 0.025).unwrap().status, TestStatus::Degenerate);
        assert_eq!(dq_test(&h, &vec![-1.0; 300], 0.025, 4).unwrap().status, TestStatus::Degenerate);
    }

    #[test]
    fn quantile_loss_hand_value() {
        assert!((quantile_loss(&[-0.02], &[-0.03], 0.025).unwrap() - 0.00025).abs() < 1e-15);
        assert_eq!(quantile_loss(&[0.1, -0.2], &[0.1, -0.2], 0.01).unwrap(), 0.0);
    }

    #[test]
    fn fz_and_al_hand_values() {
        let (r, v, e, a) = (-0.01f64, -0.02f64, -0.03f64, 0.025f64);
        // no hit: only the VaR and ES terms survive
        let fz = -a * v + e.exp() * (e - v) - e.exp() + 1.0 - (1.0 - a).ln();
        assert!((fz_loss_day(r, v, e, a) - fz).abs() < 1e-15);
        let al = -((a - 1.0) / e).ln() - (r - v) * a / (a * e);
        assert!((al_score_day(r, v, e, a) - al).abs() < 1e-15);
        assert!(matches!(fz_joint_loss(&[r], &[v], &[v], a), Err(BacktestError::EsAboveVar(0))));
        assert!(matches!(al_log_score(&[r], &[v], &[0.01], a), Err(BacktestError::EsNotNegative(0))));
    }

    #[test]
    fn quantile_regression_recovers_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..3.0)).collect();
        // y = 0.5 + 2x + x·e, e ~ U(-1, 1): the u-quantile is 0.5 + (2 + (2u - 1))x
        let y: Vec<f64> = x.iter().map(|&xi| 0.5 + 2.0 * xi + xi * rng.random_range(-1.0..1.0)).collect();
        let (b0, b1) = quantile_regression(&y, &x, 0.9).unwrap();
        assert!((b0 - 0.5).abs() < 0.1, "{b0}");
        assert!((b1 - 2.8).abs() < 0.08, "{b1}");
        assert!(quantile_regression(&y, &vec![1.0; n], 0.9).is_none());
    }

    #[test]
    fn mqr_exact_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 300;
        let r: Vec<f64> = (0..n).map(|_| -rng.random_range(0.01..0.05)).collect();
        let levels = mqr_levels(0.025, 6);
        let grid: Vec<Vec<f64>> = levels.iter().map(|_| r.clone()).collect();
        let boot = BootstrapConfig { replicates: 50, ..Default::default() };
        let res = mqr_backtest(&r, &grid, &levels, &boot).unwrap();
        for t in [&res.j1, &res.j2, &res.i, &res.s] {
            assert!(t.statistic.unwrap() < 1e-6, "{t:?}");
            assert!(t.p_value.unwrap() > 0.99);
        }
    }

    #[test]
    fn wald_p_value_in_unit_interval() {
        let reps: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let (s, p) = bootstrap_wald(&[0.3, -0.1], &reps).unwrap();
        assert!(s >= 0.0 && (0.0..=1.0).contains(&p));
    }
}
