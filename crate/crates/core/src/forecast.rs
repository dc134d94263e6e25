//! One-step-ahead VaR and ES forecasts: per parameter draw, averaged over
//! a posterior sample, and along a rolling estimation window.

use crate::distributions::{DistError, DistKind};
use crate::market_data::{DateKey, ReturnSeries};
use crate::mcmc::{estimate, McmcConfig, McmcError};
use crate::measures::{MeasureKind, RealizedPanel};
use crate::model::{default_log_h0, filter, ModelData, ModelError, ModelParams};
use crate::seed::seed_for;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{failed} of {total} draws diverged, more than 1%")]
    Quality { failed: usize, total: usize },
    #[error("estimation failed for {model} at {date}: {source}")]
    Estimation { model: String, date: DateKey, source: McmcError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("forecast file: {0}")]
    Parse(String),
}

/// A realized EGARCH specification: error distribution plus the realized
/// measures it uses, identified as e.g. `RE-RVSS-RK-SkN`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub measures: Vec<MeasureKind>,
    pub dist: DistKind,
}

impl ModelSpec {
    pub fn id(&self) -> String {
        let labels: Vec<String> = self.measures.iter().map(|m| m.label()).collect();
        format!("RE-{}-{}", labels.join("-"), self.dist.suffix())
    }

    pub fn labels(&self) -> Vec<String> {
        self.measures.iter().map(|m| m.label()).collect()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for ModelSpec {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ForecastError::Config(format!("bad model id `{s}`, expected e.g. RE-RV-RK-SkN"));
        let parts: Vec<&str> = s.trim().split('-').collect();
        if parts.len() < 3 || !parts[0].eq_ignore_ascii_case("re") {
            return Err(bad());
        }
        let dist = DistKind::from_suffix(parts[parts.len() - 1]).ok_or_else(bad)?;
        let measures =
            parts[1..parts.len() - 1].iter().map(|p| p.parse::<MeasureKind>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
        let mut seen = measures.clone();
        seen.sort_by_key(|m| m.name());
        seen.dedup();
        if seen.len() != measures.len() {
            return Err(bad());
        }
        Ok(Self { measures, dist })
    }
}

/// Filter state at day `t`: everything needed for `log h_{t+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub log_h: f64,
    pub eps: f64,
    pub u: Vec<f64>,
}

/// `log h_{t+1} = ω + β log h_t + τ(ε_t) + γ'u_t`.
pub fn next_log_h(p: &ModelParams, s: &FilterState) -> f64 {
    let e = s.eps;
    let mut v = p.omega + p.beta * s.log_h + p.tau1 * e + p.tau2 * (e * e - 1.0);
    for (m, u) in p.measures.iter().zip(&s.u) {
        v += m.gamma * u;
    }
    v
}

/// `(VaR, ES)` at level `alpha` given `log h_{t+1}`.
pub fn var_es_given_log_h(p: &ModelParams, log_h_next: f64, alpha: f64) -> Result<(f64, f64), DistError> {
    let sd = (0.5 * log_h_next).exp();
    let q = p.dist.quantile(alpha)?;
    let te = p.dist.tail_expectation(alpha)?;
    Ok((p.mu + sd * q, p.mu + sd * te))
}

pub fn one_step_var_es(p: &ModelParams, state: &FilterState, alpha: f64) -> Result<(f64, f64), DistError> {
    var_es_given_log_h(p, next_log_h(p, state), alpha)
}

/// Return-side levels of the ES-MQR VaR grid for base level `alpha`:
/// `α (1 - (j-1)/p)` for `j = 1..p`. On the loss scale these are
/// `u_j = 1 - α + (j-1) α / p`.
pub fn mqr_levels(alpha: f64, p: usize) -> Vec<f64> {
    (0..p).map(|j| alpha * (1.0 - j as f64 / p as f64)).collect()
}

/// Posterior-mean forecast for the day after `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorForecast {
    /// `(alpha, VaR, ES)` in the order requested.
    pub var_es: Vec<(f64, f64, f64)>,
    /// `(alpha, level, VaR)` for each grid level.
    pub grid: Vec<(f64, f64, f64)>,
    pub diverged: usize,
    pub draws: usize,
}

/// Filters `data` under every draw, forecasts one step ahead and averages.
/// Draws whose filter diverges are dropped; more than 1% is an error.
pub fn posterior_forecast(
    draws: &[ModelParams],
    data: &ModelData,
    log_h0: f64,
    alphas: &[f64],
    grid_p: usize,
) -> Result<PosteriorForecast, ForecastError> {
    if draws.is_empty() {
        return Err(ForecastError::Config("no posterior draws".into()));
    }
    let grid_levels: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| mqr_levels(a, grid_p).into_iter().map(move |l| (a, l))).collect();
    let per_draw: Vec<Option<(Vec<(f64, f64)>, Vec<f64>)>> = draws
        .par_iter()
        .map(|p| {
            let lh = filter(p, data, log_h0).ok()?.log_h_next;
            let ve = alphas.iter().map(|&a| var_es_given_log_h(p, lh, a)).collect::<Result<Vec<_>, _>>().ok()?;
            let sd = (0.5 * lh).exp();
            let g = grid_levels.iter().map(|&(_, l)| p.dist.quantile(l).map(|q| p.mu + sd * q)).collect::<Result<Vec<_>, _>>().ok()?;
            let finite = ve.iter().all(|(v, e)| v.is_finite() && e.is_finite()) && g.iter().all(|v| v.is_finite());
            finite.then_some((ve, g))
        })
        .collect();
    let diverged = per_draw.iter().filter(|d| d.is_none()).count();
    if diverged * 100 > draws.len() {
        return Err(ForecastError::Quality { failed: diverged, total: draws.len() });
    }
    let ok: Vec<_> = per_draw.into_iter().flatten().collect();
    let n = ok.len() as f64;
    let mut var_es: Vec<(f64, f64, f64)> = alphas.iter().map(|&a| (a, 0.0, 0.0)).collect();
    let mut grid: Vec<(f64, f64, f64)> = grid_levels.iter().map(|&(a, l)| (a, l, 0.0)).collect();
    for (ve, g) in &ok {
        for (acc, (v, e)) in var_es.iter_mut().zip(ve) {
            acc.1 += v / n;
            acc.2 += e / n;
        }
        for (acc, v) in grid.iter_mut().zip(g) {
            acc.2 += v / n;
        }
    }
    Ok(PosteriorForecast { var_es, grid, diverged, draws: draws.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Record the failure and leave a gap until the next successful refit.
    Gap,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    pub in_sample: usize,
    pub n_forecasts: usize,
    /// Re-estimate every `stride` forecasts.
    pub stride: usize,
    pub alphas: Vec<f64>,
    /// Number of VaR levels in the ES-MQR grid.
    pub grid_p: usize,
    /// Use every `thin`-th posterior draw for forecasting.
    pub thin: usize,
    pub on_failure: FailurePolicy,
    pub mcmc: McmcConfig,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            in_sample: 2000,
            n_forecasts: 1000,
            stride: 1,
            alphas: vec![0.025, 0.01],
            grid_p: 6,
            thin: 1,
            on_failure: FailurePolicy::Gap,
            mcmc: McmcConfig::default(),
        }
    }
}

impl RollingConfig {
    pub fn validate(&self, n_obs: usize) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::Config(m));
        if self.stride == 0 || self.thin == 0 || self.n_forecasts == 0 {
            return bad("stride, thin and n_forecasts must be at least 1".into());
        }
        if self.in_sample < 10 {
            return bad("in_sample must be at least 10".into());
        }
        if self.in_sample + self.n_forecasts > n_obs {
            return bad(format!("{} in-sample days plus {} forecasts exceed the {n_obs} observations", self.in_sample, self.n_forecasts));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 0.5)) {
            return bad("alphas must lie in (0, 0.5)".into());
        }
        if self.grid_p < 2 {
            return bad("grid_p must be at least 2".into());
        }
        self.mcmc.validate().map_err(|e| ForecastError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: DateKey,
    pub alpha: f64,
    pub var: f64,
    pub es: f64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub date: DateKey,
    pub alpha: f64,
    pub level: f64,
    pub var: f64,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastGap {
    pub date: DateKey,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub model: String,
    pub records: Vec<ForecastRecord>,
    pub grid: Vec<GridRecord>,
    pub gaps: Vec<ForecastGap>,
    pub refits: usize,
}

impl ForecastSeries {
    /// Records at one level, in date order.
    pub fn at_alpha(&self, alpha: f64) -> Vec<&ForecastRecord> {
        self.records.iter().filter(|r| r.alpha == alpha).collect()
    }
}

fn thinned(post: &crate::mcmc::PosteriorResult, thin: usize) -> Result<Vec<ModelParams>, ModelError> {
    post.all_draws().step_by(thin).map(|d| post.draw_params(d)).collect()
}

/// Rolling one-step-ahead forecasts for one model. `returns` and `panel`
/// must be aligned; the panel must contain every measure of the model.
pub fn rolling_forecast(
    returns: &ReturnSeries,
    panel: &RealizedPanel,
    spec: &ModelSpec,
    cfg: &RollingConfig,
) -> Result<ForecastSeries, ForecastError> {
    if returns.dates != panel.dates {
        return Err(ForecastError::Config("returns and panel are not aligned".into()));
    }
    cfg.validate(returns.len())?;
    let sub = panel.select(&spec.labels()).map_err(|e| ForecastError::Config(e.to_string()))?;
    let full = ModelData::from_series(returns, &sub)?;
    let id = spec.id();
    let model_seed = seed_for(cfg.mcmc.seed, &id, 0);
    let mut out = ForecastSeries { model: id.clone(), ..Default::default() };
    let mut draws: Option<Vec<ModelParams>> = None;

    for step in 0..cfg.n_forecasts {
        let window = full.slice(step, step + cfg.in_sample);
        let t = step + cfg.in_sample;
        let date = returns.dates[t];
        let log_h0 = match cfg.mcmc.log_h0 {
            Some(v) => v,
            None => default_log_h0(&window.returns)?,
        };
        if step % cfg.stride == 0 {
            let mut mc = cfg.mcmc.clone();
            mc.seed = seed_for(model_seed, "refit", (step / cfg.stride) as u64);
            mc.log_h0 = Some(log_h0);
            match estimate(&window, spec.dist, &mc) {
                Ok(post) => {
                    draws = Some(thinned(&post, cfg.thin)?);
                    out.refits += 1;
                }
                Err(e) => {
                    if cfg.on_failure == FailurePolicy::Abort {
                        return Err(ForecastError::Estimation { model: id, date, source: e });
                    }
                    log::warn!("{id}: estimation failed at {date}: {e}");
                    draws = None;
                }
            }
        }
        let Some(ds) = &draws else {
            out.gaps.push(ForecastGap { date, reason: "no successful estimation".into() });
            continue;
        };
        match posterior_forecast(ds, &window, log_h0, &cfg.alphas, cfg.grid_p) {
            Ok(f) => {
                let ret = returns.values[t];
                for (alpha, var, es) in f.var_es {
                    out.records.push(ForecastRecord { date, alpha, var, es, ret, model: id.clone() });
                }
                for (alpha, level, var) in f.grid {
                    out.grid.push(GridRecord { date, alpha, level, var, model: id.clone() });
                }
            }
            Err(e) => {
                if cfg.on_failure == FailurePolicy::Abort {
                    return Err(e);
                }
                log::warn!("{id}: forecast failed at {date}: {e}");
                out.gaps.push(ForecastGap { date, reason: e.to_string() });
            }
        }
    }
    Ok(out)
}

/// Runs [`rolling_forecast`] for several models in parallel. Each model's
/// output depends only on its own id and the master seed.
pub fn rolling_forecast_all(
    returns: &ReturnSeries,
    panel: &RealizedPanel,
    specs: &[ModelSpec],
    cfg: &RollingConfig,
) -> Result<Vec<ForecastSeries>, ForecastError> {
    specs.par_iter().map(|s| rolling_forecast(returns, panel, s, cfg)).collect()
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

/// CSV with header `date,alpha,var,es,return,model`.
pub fn write_forecasts<W: Write>(out: W, records: &[ForecastRecord]) -> Result<(), ForecastError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "alpha", "var", "es", "return", "model"])?;
    for r in records {
        w.write_record([r.date.to_string(), r.alpha.to_string(), num(r.var), num(r.es), num(r.ret), r.model.clone()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T, ForecastError> {
    rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| ForecastError::Parse(format!("line {line}: bad field {}", i + 1)))
}

pub fn read_forecasts<R: Read>(src: R) -> Result<Vec<ForecastRecord>, ForecastError> {
    let mut rd = csv::Reader::from_reader(src);
    let header: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if header != ["date", "alpha", "var", "es", "return", "model"] {
        return Err(ForecastError::Parse(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        out.push(ForecastRecord {
            date: field(&rec, 0, line)?,
            alpha: field(&rec, 1, line)?,
            var: field(&rec, 2, line)?,
            es: field(&rec, 3, line)?,
            ret: field(&rec, 4, line)?,
            model: rec.get(5).unwrap_or("").trim().to_string(),
        });
    }
    Ok(out)
}

/// CSV with header `date,alpha,level,var,model`.
pub fn write_grid<W: Write>(out: W, records: &[GridRecord]) -> Result<(), ForecastError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "alpha", "level", "var", "model"])?;
    for r in records {
        w.write_record([r.date.to_string(), r.alpha.to_string(), num(r.level), num(r.var), r.model.clone()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_grid<R: Read>(src: R) -> Result<Vec<GridRecord>, ForecastError> {
    let mut rd = csv::Reader::from_reader(src);
    let header: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if header != ["date", "alpha", "level", "var", "model"] {
        return Err(ForecastError::Parse(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        out.push(GridRecord {
            date: field(&rec, 0, line)?,
            alpha: field(&rec, 1, line)?,
            level: field(&rec, 2, line)?,
            var: field(&rec, 3, line)?,
            model: rec.get(4).unwrap_or("").trim().to_string(),
        });
    }
    Ok(out)
}
