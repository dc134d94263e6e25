use anyhow::{bail, Context, Result};
use regarch::backtest::{BacktestConfig, BootstrapConfig};
use regarch::forecast::{FailurePolicy, ModelSpec, RollingConfig};
use regarch::mcmc::{BlockChoice, McmcConfig};
use regarch::mcs::{McsConfig, McsMethod};
use regarch::measures::{KernelConfig, MeasureKind, PanelSpec};
use regarch::ml_fit::MlConfig;
use regarch::seed::seed_for;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Flat key-value run configuration, read from TOML. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,

    pub intraday: Option<PathBuf>,
    pub intraday_minutes: u32,
    pub daily: Option<PathBuf>,
    pub precomputed: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
    pub var_grid: Option<PathBuf>,

    pub measures: Vec<String>,
    pub coarse_minutes: u32,
    pub scaling_window: usize,
    pub include_overnight: bool,
    pub kernel_c_star: f64,
    pub kernel_bandwidth: Option<usize>,

    pub models: Vec<String>,

    pub n_burn: usize,
    pub n_samp: usize,
    pub blocks: u8,
    pub n_chains: usize,
    pub mixture_weights: [f64; 3],
    pub ram_exponent: f64,
    pub log_h0: Option<f64>,

    pub ml_max_evals: usize,
    pub ml_restarts: usize,

    pub in_sample: usize,
    pub n_forecasts: usize,
    pub stride: usize,
    pub alphas: Vec<f64>,
    pub thin: usize,
    pub on_failure: String,

    pub mqr_p: usize,
    pub dq_lags: usize,
    pub bootstrap_replicates: usize,
    pub bootstrap_block: f64,
    pub skip_es_tests: bool,

    pub mcs_replicates: usize,
    pub mcs_block: usize,
    pub mcs_levels: Vec<f64>,
    pub mcs_methods: Vec<String>,

    pub sim_n: usize,
    pub sim_h0: f64,
    pub sim_dist: String,
    pub sim_measures: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mcmc = McmcConfig::default();
        Self {
            seed: 1,
            output_dir: None,
            intraday: None,
            intraday_minutes: 1,
            daily: None,
            precomputed: None,
            returns: None,
            panel: None,
            forecasts: None,
            var_grid: None,
            measures: vec!["rvss".into(), "rrss".into(), "rk".into()],
            coarse_minutes: 5,
            scaling_window: 66,
            include_overnight: false,
            kernel_c_star: KernelConfig::default().c_star,
            kernel_bandwidth: None,
            models: vec!["RE-RVSS-SkN".into()],
            n_burn: mcmc.n_burn,
            n_samp: mcmc.n_samp,
            blocks: 4,
            n_chains: mcmc.n_chains,
            mixture_weights: mcmc.mixture_weights,
            ram_exponent: mcmc.ram_exponent,
            log_h0: None,
            ml_max_evals: 20_000,
            ml_restarts: 3,
            in_sample: 2000,
            n_forecasts: 1000,
            stride: 1,
            alphas: vec![0.025, 0.01],
            thin: 1,
            on_failure: "gap".into(),
            mqr_p: 6,
            dq_lags: 4,
            bootstrap_replicates: 1000,
            bootstrap_block: 20.0,
            skip_es_tests: false,
            mcs_replicates: 1000,
            mcs_block: 20,
            mcs_levels: vec![0.9, 0.75],
            mcs_methods: vec!["R".into(), "SQ".into()],
            sim_n: 2000,
            sim_h0: 0.0025,
            sim_dist: "skn".into(),
            sim_measures: vec!["rv".into()],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        let specs = self.models.iter().map(|m| m.parse::<ModelSpec>().map_err(anyhow::Error::from)).collect::<Result<Vec<_>>>()?;
        let mut ids: Vec<String> = specs.iter().map(ModelSpec::id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            bail!("model `{}` listed twice", w[0]);
        }
        if specs.is_empty() {
            bail!("no models configured");
        }
        Ok(specs)
    }

    pub fn measure_kinds(list: &[String]) -> Result<Vec<MeasureKind>> {
        list.iter().map(|m| m.parse::<MeasureKind>().map_err(anyhow::Error::from)).collect()
    }

    pub fn panel_spec(&self) -> Result<PanelSpec> {
        Ok(PanelSpec {
            measures: Self::measure_kinds(&self.measures)?,
            coarse_minutes: self.coarse_minutes,
            scaling_window: self.scaling_window,
            kernel: KernelConfig { c_star: self.kernel_c_star, bandwidth: self.kernel_bandwidth, ..Default::default() },
            include_overnight: self.include_overnight,
        })
    }

    pub fn mcmc(&self) -> Result<McmcConfig> {
        let blocks = match self.blocks {
            1 => BlockChoice::One,
            4 => BlockChoice::Four,
            b => bail!("blocks must be 1 or 4, got {b}"),
        };
        let cfg = McmcConfig {
            n_burn: self.n_burn,
            n_samp: self.n_samp,
            blocks,
            seed: seed_for(self.seed, "mcmc", 0),
            n_chains: self.n_chains,
            mixture_weights: self.mixture_weights,
            ram_exponent: self.ram_exponent,
            log_h0: self.log_h0,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ml(&self) -> MlConfig {
        MlConfig {
            max_evals: self.ml_max_evals,
            restarts: self.ml_restarts,
            seed: seed_for(self.seed, "ml", 0),
            log_h0: self.log_h0,
            ..Default::default()
        }
    }

    pub fn rolling(&self) -> Result<RollingConfig> {
        let on_failure = match self.on_failure.to_ascii_lowercase().as_str() {
            "gap" => FailurePolicy::Gap,
            "abort" => FailurePolicy::Abort,
            o => bail!("on_failure must be `gap` or `abort`, got `{o}`"),
        };
        Ok(RollingConfig {
            in_sample: self.in_sample,
            n_forecasts: self.n_forecasts,
            stride: self.stride,
            alphas: self.alphas.clone(),
            grid_p: self.mqr_p,
            thin: self.thin,
            on_failure,
            mcmc: self.mcmc()?,
        })
    }

    pub fn backtest(&self) -> BacktestConfig {
        BacktestConfig {
            dq_lags: self.dq_lags,
            mqr_p: self.mqr_p,
            bootstrap: BootstrapConfig {
                replicates: self.bootstrap_replicates,
                block_length: self.bootstrap_block,
                seed: seed_for(self.seed, "backtest", 0),
            },
            skip_es_tests: self.skip_es_tests,
        }
    }

    pub fn mcs(&self) -> McsConfig {
        McsConfig { replicates: self.mcs_replicates, block_length: self.mcs_block, seed: seed_for(self.seed, "mcs", 0) }
    }

    pub fn mcs_methods(&self) -> Result<Vec<McsMethod>> {
        self.mcs_methods.iter().map(|m| m.parse::<McsMethod>().map_err(anyhow::Error::from)).collect()
    }

    /// Every path that is set must exist.
    pub fn check_files(&self) -> Result<()> {
        let paths = [
            ("intraday", &self.intraday),
            ("daily", &self.daily),
            ("precomputed", &self.precomputed),
            ("returns", &self.returns),
            ("panel", &self.panel),
            ("forecasts", &self.forecasts),
            ("var_grid", &self.var_grid),
        ];
        for (name, p) in paths {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{name} file {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }
}
