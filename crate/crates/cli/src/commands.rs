use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{BacktestArgs, DataArgs, EstimateArgs, FitMlArgs, ForecastArgs, McmcArgs, McsArgs, MeasuresArgs, SimulateArgs};
use anyhow::{bail, Context, Result};
use regarch::backtest::backtest_model;
use regarch::distributions::{DistKind, ErrorDist};
use regarch::forecast::{
    read_forecasts, read_grid, rolling_forecast_all, write_forecasts, write_grid, ForecastRecord, GridRecord, ModelSpec,
};
use regarch::market_data::{
    daily_log_returns, load_daily, load_intraday, load_precomputed, load_returns, write_daily, write_returns, DailySeries, DateKey,
    ReturnSeries,
};
use regarch::mcmc::{estimate as run_mcmc, PosteriorResult};
use regarch::mcs::{mcs as run_mcs, LossMatrix, McsMethod};
use regarch::measures::{build_measure_panel, RealizedPanel};
use regarch::ml_fit::fit_ml as run_ml;
use regarch::model::{simulate as run_simulation, ModelData, ModelParams};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::to_string).collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    split_list(s).iter().map(|v| v.parse::<f64>().with_context(|| format!("bad number `{v}`"))).collect()
}

fn pick(flag: &Option<PathBuf>, cfg: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.clone())
}

/// Returns aligned with the panel.
pub fn load_data(d: &DataArgs, cfg: &mut RunConfig) -> Result<(ReturnSeries, RealizedPanel)> {
    cfg.returns = pick(&d.returns, &cfg.returns);
    cfg.daily = pick(&d.daily, &cfg.daily);
    cfg.panel = pick(&d.panel, &cfg.panel);
    cfg.check_files()?;
    let returns = match (&cfg.returns, &cfg.daily) {
        (Some(p), _) => load_returns(p).with_context(|| format!("loading {}", p.display()))?,
        (None, Some(p)) => daily_log_returns(&load_daily(p).with_context(|| format!("loading {}", p.display()))?)?,
        (None, None) => bail!("no returns: pass --returns or --daily"),
    };
    let Some(panel_path) = &cfg.panel else {
        bail!("no realized-measure panel: pass --panel");
    };
    let panel = RealizedPanel::read_csv(File::open(panel_path).with_context(|| format!("opening {}", panel_path.display()))?)
        .with_context(|| format!("reading {}", panel_path.display()))?;
    Ok(panel.align_returns(&returns)?)
}

fn model_data(spec: &ModelSpec, returns: &ReturnSeries, panel: &RealizedPanel) -> Result<ModelData> {
    let sub = panel.select(&spec.labels()).with_context(|| format!("panel lacks measures for {spec}"))?;
    Ok(ModelData::from_series(returns, &sub)?)
}

fn apply_mcmc_args(a: &McmcArgs, cfg: &mut RunConfig) {
    if let Some(v) = a.n_burn {
        cfg.n_burn = v;
    }
    if let Some(v) = a.n_samp {
        cfg.n_samp = v;
    }
    if let Some(v) = a.blocks {
        cfg.blocks = v;
    }
    if let Some(v) = a.chains {
        cfg.n_chains = v;
    }
    if a.log_h0.is_some() {
        cfg.log_h0 = a.log_h0;
    }
}

fn single_model(flag: &Option<String>, cfg: &RunConfig) -> Result<ModelSpec> {
    match flag {
        Some(m) => Ok(m.parse()?),
        None => {
            let specs = cfg.model_specs()?;
            if specs.len() != 1 {
                bail!("{} models configured; choose one with --model", specs.len());
            }
            Ok(specs[0].clone())
        }
    }
}

pub fn measures(a: MeasuresArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    cfg.intraday = pick(&a.intraday, &cfg.intraday);
    cfg.daily = pick(&a.daily, &cfg.daily);
    cfg.precomputed = pick(&a.precomputed, &cfg.precomputed);
    if let Some(i) = a.interval {
        cfg.intraday_minutes = i;
    }
    if let Some(m) = &a.measures {
        cfg.measures = split_list(m);
    }
    cfg.include_overnight |= a.overnight;
    cfg.check_files()?;
    let (Some(intraday), Some(daily)) = (&cfg.intraday, &cfg.daily) else {
        bail!("measures needs --intraday and --daily");
    };
    let spec = cfg.panel_spec()?;
    let series = load_intraday(intraday, cfg.intraday_minutes).with_context(|| format!("loading {}", intraday.display()))?;
    let daily = load_daily(daily).with_context(|| format!("loading {}", daily.display()))?;
    let pre = cfg.precomputed.as_ref().map(load_precomputed).transpose()?;
    let (panel, report) = build_measure_panel(&series, &daily, &spec, pre.as_ref())?;
    let returns = daily_log_returns(&daily)?;
    let (returns, panel) = panel.align_returns(&returns)?;
    out.write("panel.csv", |w| Ok(panel.write_csv(w)?))?;
    out.write("returns.csv", |w| Ok(write_returns(w, &returns)?))?;
    let report: Vec<_> = report
        .dropped
        .iter()
        .map(|(d, m)| serde_json::json!({"date": d.to_string(), "dropped": m}))
        .chain(report.notes.iter().map(|(d, m)| serde_json::json!({"date": d.to_string(), "note": m})))
        .collect();
    out.write_json("measures_report.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct Truth<'a> {
    seed: u64,
    n: usize,
    h0: f64,
    labels: &'a [String],
    params: &'a ModelParams,
}

pub fn simulation_params(dist: &str, k: usize) -> Result<ModelParams> {
    let mut p = ModelParams::simulation_dgp();
    let base = p.measures[0];
    p.measures = vec![base; k];
    for m in &mut p.measures {
        m.gamma = base.gamma / k as f64;
    }
    let (nu, lambda) = (p.dist.nu().unwrap_or(4.4), p.dist.lambda().unwrap_or(0.5));
    p.dist = match DistKind::from_suffix(dist) {
        Some(DistKind::Normal) => ErrorDist::Normal,
        Some(DistKind::StudentT) => ErrorDist::StudentT { nu },
        Some(DistKind::SkewT) => ErrorDist::SkewT { nu, lambda },
        None => bail!("unknown distribution `{dist}`"),
    };
    Ok(p)
}

pub fn simulate(a: SimulateArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    if let Some(n) = a.n {
        cfg.sim_n = n;
    }
    if let Some(d) = &a.dist {
        cfg.sim_dist = d.clone();
    }
    if let Some(m) = &a.measures {
        cfg.sim_measures = split_list(m);
    }
    if let Some(h) = a.h0 {
        cfg.sim_h0 = h;
    }
    let kinds = RunConfig::measure_kinds(&cfg.sim_measures)?;
    if kinds.is_empty() {
        bail!("no measures to simulate");
    }
    let labels: Vec<String> = kinds.iter().map(|k| k.label()).collect();
    let p = simulation_params(&cfg.sim_dist, labels.len())?;
    let sim = run_simulation(&p, cfg.sim_n, cfg.sim_h0, cfg.seed)?;
    let (returns, panel) = sim.to_series(&labels)?;
    let dates: Vec<DateKey> = (0..=cfg.sim_n as u32).map(DateKey::Index).collect();
    let daily = DailySeries::from_returns(&dates, &sim.returns, 100.0)?;
    out.write("returns.csv", |w| Ok(write_returns(w, &returns)?))?;
    out.write("panel.csv", |w| Ok(panel.write_csv(w)?))?;
    out.write("daily.csv", |w| Ok(write_daily(w, &daily)?))?;
    out.write("latent.csv", |w| {
        writeln!(w, "date,h,eps")?;
        for ((d, h), e) in returns.dates.iter().zip(&sim.h).zip(&sim.eps) {
            writeln!(w, "{d},{h:.17e},{e:.17e}")?;
        }
        Ok(())
    })?;
    out.write_json("truth.json", &Truth { seed: cfg.seed, n: cfg.sim_n, h0: cfg.sim_h0, labels: &labels, params: &p })?;
    Ok(())
}

#[derive(Serialize)]
struct ParamSummary {
    name: String,
    mean: f64,
    sd: f64,
    q025: f64,
    q500: f64,
    q975: f64,
    rhat: Option<f64>,
    n_eff: Option<f64>,
    act: Option<f64>,
}

#[derive(Serialize)]
struct PosteriorSummary<'a> {
    model: String,
    n_obs: usize,
    log_h0: f64,
    n_chains: usize,
    draws_per_chain: usize,
    params: Vec<ParamSummary>,
    sampling_acceptance: Vec<&'a [f64]>,
    burnin_acceptance: Vec<&'a [f64]>,
    burnin_targets: &'a [f64],
    skipped_downdates: Vec<&'a [u64]>,
    chain_seeds: Vec<u64>,
    diagnostics: &'a regarch::diagnostics::DiagnosticsReport,
}

fn summarize<'a>(model: &ModelSpec, n_obs: usize, post: &'a PosteriorResult) -> PosteriorSummary<'a> {
    let mean = post.posterior_mean();
    let sd = post.posterior_sd();
    let (q1, q2, q3) = (post.posterior_quantile(0.025), post.posterior_quantile(0.5), post.posterior_quantile(0.975));
    let params = post
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let d = post.diagnostics.get(name);
            ParamSummary {
                name: name.clone(),
                mean: mean[j],
                sd: sd[j],
                q025: q1[j],
                q500: q2[j],
                q975: q3[j],
                rhat: d.and_then(|d| d.rhat),
                n_eff: d.and_then(|d| d.n_eff),
                act: d.and_then(|d| d.act),
            }
        })
        .collect();
    PosteriorSummary {
        model: model.id(),
        n_obs,
        log_h0: post.log_h0,
        n_chains: post.chains.len(),
        draws_per_chain: post.chains.first().map_or(0, |c| c.draws.len()),
        params,
        sampling_acceptance: post.chains.iter().map(|c| c.acceptance.as_slice()).collect(),
        burnin_acceptance: post.burnin.iter().map(|b| b.acceptance.as_slice()).collect(),
        burnin_targets: post.burnin.first().map_or(&[], |b| b.targets.as_slice()),
        skipped_downdates: post.burnin.iter().map(|b| b.skipped_downdates.as_slice()).collect(),
        chain_seeds: post.chains.iter().map(|c| c.seed).collect(),
        diagnostics: &post.diagnostics,
    }
}

pub fn estimate(a: EstimateArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    apply_mcmc_args(&a.mcmc, &mut cfg);
    let spec = single_model(&a.model, &cfg)?;
    let mcmc = cfg.mcmc()?;
    let (returns, panel) = load_data(&a.data, &mut cfg)?;
    let data = model_data(&spec, &returns, &panel)?;
    let post = run_mcmc(&data, spec.dist, &mcmc).with_context(|| format!("estimating {spec}"))?;
    let id = spec.id();
    for (c, chain) in post.chains.iter().enumerate() {
        out.write(Path::new(&id).join(format!("chain_{}.csv", c + 1)), |w| Ok(chain.write_csv(w, &post.names)?))?;
    }
    out.write_json(Path::new(&id).join("posterior.json"), &summarize(&spec, data.len(), &post))?;
    Ok(())
}

pub fn fit_ml(a: FitMlArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    if let Some(v) = a.max_evals {
        cfg.ml_max_evals = v;
    }
    if let Some(v) = a.restarts {
        cfg.ml_restarts = v;
    }
    if a.log_h0.is_some() {
        cfg.log_h0 = a.log_h0;
    }
    let spec = single_model(&a.model, &cfg)?;
    let (returns, panel) = load_data(&a.data, &mut cfg)?;
    let data = model_data(&spec, &returns, &panel)?;
    let init = ModelParams::flat_init(data.k(), spec.dist, 0.1, 5.0);
    let fit = run_ml(&data, spec.dist, &init, &cfg.ml()).with_context(|| format!("fitting {spec}"))?;
    let doc = serde_json::json!({ "model": spec.id(), "n_obs": data.len(), "fit": fit });
    out.write_json(Path::new(&spec.id()).join("ml_fit.json"), &doc)?;
    Ok(())
}

fn write_plot_data(w: &mut dyn Write, records: &[ForecastRecord], alphas: &[f64]) -> Result<()> {
    write!(w, "date,return")?;
    for a in alphas {
        write!(w, ",var_{a},es_{a}")?;
    }
    writeln!(w)?;
    let mut by_date: BTreeMap<DateKey, (f64, BTreeMap<String, (f64, f64)>)> = BTreeMap::new();
    for r in records {
        by_date.entry(r.date).or_insert((r.ret, BTreeMap::new())).1.insert(r.alpha.to_string(), (r.var, r.es));
    }
    for (d, (ret, levels)) in by_date {
        write!(w, "{d},{ret:.17e}")?;
        for a in alphas {
            match levels.get(&a.to_string()) {
                Some((v, e)) => write!(w, ",{v:.17e},{e:.17e}")?,
                None => write!(w, ",,")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn forecast(a: ForecastArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    apply_mcmc_args(&a.mcmc, &mut cfg);
    if let Some(m) = &a.models {
        cfg.models = split_list(m);
    }
    if let Some(v) = a.in_sample {
        cfg.in_sample = v;
    }
    if let Some(v) = a.n_forecasts {
        cfg.n_forecasts = v;
    }
    if let Some(v) = a.stride {
        cfg.stride = v;
    }
    if let Some(v) = a.thin {
        cfg.thin = v;
    }
    if let Some(v) = &a.alphas {
        cfg.alphas = parse_f64_list(v)?;
    }
    let specs = cfg.model_specs()?;
    let rolling = cfg.rolling()?;
    let (returns, panel) = load_data(&a.data, &mut cfg)?;
    let series = rolling_forecast_all(&returns, &panel, &specs, &rolling)?;
    let records: Vec<ForecastRecord> = series.iter().flat_map(|s| s.records.iter().cloned()).collect();
    let grid: Vec<GridRecord> = series.iter().flat_map(|s| s.grid.iter().cloned()).collect();
    out.write("forecasts.csv", |w| Ok(write_forecasts(w, &records)?))?;
    out.write("var_grid.csv", |w| Ok(write_grid(w, &grid)?))?;
    let status: Vec<_> = series
        .iter()
        .map(|s| serde_json::json!({"model": s.model, "refits": s.refits, "forecasts": s.records.len() / rolling.alphas.len(), "gaps": s.gaps}))
        .collect();
    out.write_json("forecast_status.json", &status)?;
    for s in &series {
        out.write(Path::new("plot").join(format!("{}.csv", s.model)), |w| write_plot_data(w, &s.records, &rolling.alphas))?;
    }
    Ok(())
}

/// Distinct values in order of first appearance.
fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

pub fn load_forecasts(flag: &Option<PathBuf>, cfg: &mut RunConfig) -> Result<Vec<ForecastRecord>> {
    cfg.forecasts = pick(flag, &cfg.forecasts);
    cfg.check_files()?;
    let Some(p) = &cfg.forecasts else {
        bail!("pass --forecasts");
    };
    let recs = read_forecasts(File::open(p)?).with_context(|| format!("reading {}", p.display()))?;
    if recs.is_empty() {
        bail!("{} holds no forecasts", p.display());
    }
    Ok(recs)
}

pub fn backtest(a: BacktestArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    if let Some(v) = a.replicates {
        cfg.bootstrap_replicates = v;
    }
    cfg.skip_es_tests |= a.skip_es_tests;
    cfg.var_grid = pick(&a.grid, &cfg.var_grid);
    let records = load_forecasts(&a.forecasts, &mut cfg)?;
    let grid = match &cfg.var_grid {
        Some(p) => read_grid(File::open(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    let bt = cfg.backtest();
    let mut reports = Vec::new();
    for model in first_seen(records.iter().map(|r| r.model.clone())) {
        let mine: Vec<&ForecastRecord> = records.iter().filter(|r| r.model == model).collect();
        for alpha in first_seen(mine.iter().map(|r| r.alpha)) {
            let at: Vec<&ForecastRecord> = mine.iter().copied().filter(|r| r.alpha == alpha).collect();
            let g: Vec<&GridRecord> = grid.iter().filter(|g| g.model == model && g.alpha == alpha).collect();
            reports.push(backtest_model(&at, &g, alpha, &bt).with_context(|| format!("backtesting {model} at {alpha}"))?);
        }
    }
    out.write_json("backtest.json", &reports)?;
    Ok(())
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct McsEntry {
    pub alpha: f64,
    pub method: McsMethod,
    pub days: usize,
    pub models: Vec<String>,
    pub elimination_order: Vec<String>,
    pub p_values: Vec<f64>,
    /// Confidence level (as written) to surviving models.
    pub survivors: BTreeMap<String, Vec<String>>,
}

/// Days × models AL score matrix on the dates every model forecast.
pub fn loss_matrix(records: &[ForecastRecord], alpha: f64) -> Result<LossMatrix> {
    let at: Vec<&ForecastRecord> = records.iter().filter(|r| r.alpha == alpha).collect();
    let models = first_seen(at.iter().map(|r| r.model.clone()));
    let mut cells: BTreeMap<DateKey, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in &at {
        let score = regarch::backtest::al_score_day(r.ret, r.var, r.es, alpha);
        if r.es.is_nan() || r.es >= 0.0 || !score.is_finite() {
            bail!("{} on {}: AL score undefined (ES = {})", r.model, r.date, r.es);
        }
        cells.entry(r.date).or_default().insert(r.model.as_str(), score);
    }
    let rows: Vec<Vec<f64>> =
        cells.values().filter(|m| m.len() == models.len()).map(|m| models.iter().map(|id| m[id.as_str()]).collect()).collect();
    Ok(LossMatrix::new(models, rows)?)
}

pub fn mcs(a: McsArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    if let Some(m) = &a.methods {
        cfg.mcs_methods = split_list(m);
    }
    if let Some(l) = &a.levels {
        cfg.mcs_levels = parse_f64_list(l)?;
    }
    if let Some(v) = a.replicates {
        cfg.mcs_replicates = v;
    }
    if let Some(v) = a.block {
        cfg.mcs_block = v;
    }
    let methods = cfg.mcs_methods()?;
    if cfg.mcs_levels.is_empty() {
        bail!("no MCS confidence levels");
    }
    let records = load_forecasts(&a.forecasts, &mut cfg)?;
    let mc = cfg.mcs();
    let mut entries = Vec::new();
    for alpha in first_seen(records.iter().map(|r| r.alpha)) {
        let lm = loss_matrix(&records, alpha).with_context(|| format!("loss matrix at alpha {alpha}"))?;
        for &method in &methods {
            let res = run_mcs(&lm, method, cfg.mcs_levels[0], &mc)?;
            let survivors = cfg.mcs_levels.iter().map(|&l| (l.to_string(), res.survivors_at(l, &lm.ids))).collect();
            entries.push(McsEntry {
                alpha,
                method,
                days: lm.n_days(),
                models: lm.ids.clone(),
                elimination_order: res.elimination_order,
                p_values: res.p_values,
                survivors,
            });
        }
    }
    out.write_json("mcs.json", &entries)?;
    Ok(())
}
