//! Bayesian estimation: RAM burn-in followed by block random-walk
//! Metropolis with a three-component scale mixture.

mod cholesky;
mod prior;
pub mod ram;

pub use cholesky::{cholesky_with_ridge, rank_one_update, NotPositiveDefinite};
pub use prior::{log_prior, LogPosterior};
pub use ram::{step_size, target_acceptance, RamBlock};

use crate::diagnostics::{diagnose, DiagnosticsReport};
use crate::distributions::DistKind;
use crate::model::{default_log_h0, ModelData, ModelError, ModelParams, ParamLayout};
use crate::seed::seed_for;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McmcError {
    #[error("invalid MCMC configuration: {0}")]
    Config(String),
    #[error("initial point has zero posterior density: {0}")]
    InfeasibleStart(String),
    #[error("adaptation failed: block {block} accepted only {accepted} burn-in proposals")]
    AdaptationFailure { block: usize, accepted: u64 },
    #[error("burn-in covariance of block {0} could not be factorized")]
    ProposalCovariance(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockChoice {
    #[serde(rename = "1", alias = "one")]
    One,
    #[serde(rename = "4", alias = "four")]
    Four,
}

/// Partition of parameter indices into blocks updated one after another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub blocks: Vec<Vec<usize>>,
}

impl BlockScheme {
    pub fn one(layout: ParamLayout) -> Self {
        Self { blocks: vec![(0..layout.len()).collect()] }
    }

    /// `(μ)`, `(ω, β, τ₁, τ₂, γ, φ)`, `(ξ, δ, σ²)`, `(ν, λ)`; the last block
    /// is absent for Gaussian errors.
    pub fn four(layout: ParamLayout) -> Self {
        let k = layout.k;
        let mut b2 = vec![ParamLayout::OMEGA, ParamLayout::BETA, ParamLayout::TAU1, ParamLayout::TAU2];
        b2.extend((0..k).map(|j| layout.gamma(j)));
        b2.extend((0..k).map(|j| layout.phi(j)));
        let mut b3 = Vec::new();
        for j in 0..k {
            b3.extend([layout.xi(j), layout.delta1(j), layout.delta2(j), layout.sigma2(j)]);
        }
        let mut blocks = vec![vec![ParamLayout::MU], b2, b3];
        let b4: Vec<usize> = layout.nu().into_iter().chain(layout.lambda()).collect();
        if !b4.is_empty() {
            blocks.push(b4);
        }
        Self { blocks }
    }

    pub fn for_choice(choice: BlockChoice, layout: ParamLayout) -> Self {
        match choice {
            BlockChoice::One => Self::one(layout),
            BlockChoice::Four => Self::four(layout),
        }
    }

    /// Checks that the blocks are non-empty, disjoint and cover `0..len`.
    pub fn validate(&self, len: usize) -> Result<(), McmcError> {
        let mut seen = vec![false; len];
        for b in &self.blocks {
            if b.is_empty() {
                return Err(McmcError::Config("empty block".into()));
            }
            for &i in b {
                if i >= len || seen[i] {
                    return Err(McmcError::Config(format!("index {i} out of range or repeated")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(McmcError::Config("blocks do not cover every parameter".into()));
        }
        Ok(())
    }

    pub fn targets(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| target_acceptance(b.len())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_burn: usize,
    pub n_samp: usize,
    pub blocks: BlockChoice,
    pub seed: u64,
    pub n_chains: usize,
    pub mixture_scales: [f64; 3],
    pub mixture_weights: [f64; 3],
    pub ram_exponent: f64,
    /// Diagonal of the initial RAM factor, on the packed scale.
    pub init_scale: f64,
    /// Standard deviation of the Gaussian jitter applied to the packed
    /// starting point of every chain after the first.
    pub init_jitter: f64,
    pub min_burn_accepts: u64,
    pub ridge: f64,
    pub log_h0: Option<f64>,
    pub init: Option<ModelParams>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_burn: 20_000,
            n_samp: 10_000,
            blocks: BlockChoice::Four,
            seed: 1,
            n_chains: 1,
            mixture_scales: [1.0, 100.0, 0.01],
            mixture_weights: [0.85, 0.05, 0.10],
            ram_exponent: 2.0 / 3.0,
            init_scale: 0.1,
            init_jitter: 0.0,
            min_burn_accepts: 100,
            ridge: 1e-10,
            log_h0: None,
            init: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        let bad = |m: &str| Err(McmcError::Config(m.into()));
        if self.n_burn < 2 || self.n_samp == 0 || self.n_chains == 0 {
            return bad("n_burn >= 2, n_samp >= 1 and n_chains >= 1 are required");
        }
        if !(self.ram_exponent > 0.5 && self.ram_exponent <= 1.0) {
            return bad("ram_exponent must lie in (1/2, 1]");
        }
        let wsum: f64 = self.mixture_weights.iter().sum();
        if self.mixture_weights.iter().any(|w| !(*w >= 0.0)) || (wsum - 1.0).abs() > 1e-9 {
            return bad("mixture weights must be non-negative and sum to 1");
        }
        if self.mixture_scales.iter().any(|c| !(*c > 0.0)) {
            return bad("mixture scales must be positive");
        }
        if !(self.init_scale > 0.0) || !(self.init_jitter >= 0.0) || !(self.ridge >= 0.0) {
            return bad("init_scale must be positive; init_jitter and ridge non-negative");
        }
        Ok(())
    }
}

/// State handed from burn-in to the sampling phase (packed scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurninSummary {
    pub blocks: Vec<Vec<usize>>,
    /// Mean and covariance of the second half of the burn-in draws.
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub last: Vec<f64>,
    pub last_log_post: f64,
    pub acceptance: Vec<f64>,
    pub targets: Vec<f64>,
    pub accepted: Vec<u64>,
    pub skipped_downdates: Vec<u64>,
}

/// Post-burn-in draws in natural parameter units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub acceptance: Vec<f64>,
    pub seed: u64,
}

impl Chain {
    /// CSV with header `iteration,<names>`.
    pub fn write_csv<W: Write>(&self, out: W, names: &[String]) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(d.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub layout: ParamLayout,
    pub names: Vec<String>,
    pub log_h0: f64,
    pub chains: Vec<Chain>,
    pub burnin: Vec<BurninSummary>,
    pub diagnostics: DiagnosticsReport,
}

impl PosteriorResult {
    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    pub fn all_draws(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let n = self.n_draws() as f64;
        let mut m = vec![0.0; self.layout.len()];
        for d in self.all_draws() {
            for (a, b) in m.iter_mut().zip(d) {
                *a += b / n;
            }
        }
        m
    }

    pub fn posterior_sd(&self) -> Vec<f64> {
        let mean = self.posterior_mean();
        let n = self.n_draws() as f64;
        let mut v = vec![0.0; mean.len()];
        for d in self.all_draws() {
            for ((a, b), m) in v.iter_mut().zip(d).zip(&mean) {
                *a += (b - m).powi(2) / (n - 1.0);
            }
        }
        v.into_iter().map(f64::sqrt).collect()
    }

    /// Posterior quantile of each parameter (linear interpolation).
    pub fn posterior_quantile(&self, q: f64) -> Vec<f64> {
        (0..self.layout.len())
            .map(|j| {
                let mut col: Vec<f64> = self.all_draws().map(|d| d[j]).collect();
                col.sort_by(f64::total_cmp);
                let pos = q.clamp(0.0, 1.0) * (col.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                col[lo] + (col[hi] - col[lo]) * (pos - lo as f64)
            })
            .collect()
    }

    pub fn mean_params(&self) -> Result<ModelParams, ModelError> {
        ModelParams::from_natural(&self.posterior_mean(), self.layout.k, self.layout.kind)
    }

    pub fn draw_params(&self, draw: &[f64]) -> Result<ModelParams, ModelError> {
        ModelParams::from_natural(draw, self.layout.k, self.layout.kind)
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// RAM burn-in from the packed starting point `z0`.
pub fn run_burnin<F, R>(
    log_density: &mut F,
    z0: Vec<f64>,
    scheme: &BlockScheme,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<BurninSummary, McmcError>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let p = z0.len();
    scheme.validate(p)?;
    let mut x = z0;
    let mut lp = log_density(&x);
    if !lp.is_finite() {
        return Err(McmcError::InfeasibleStart(format!("log posterior {lp}")));
    }
    let mut blocks: Vec<RamBlock> = scheme.blocks.iter().map(|b| RamBlock::new(b.clone(), cfg.init_scale)).collect();
    let half = cfg.n_burn / 2;
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_burn - half);
    for it in 0..cfg.n_burn {
        for b in blocks.iter_mut() {
            b.step(&mut x, &mut lp, log_density, rng, cfg.ram_exponent);
        }
        if it >= half {
            kept.push(x.clone());
        }
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.accepted < cfg.min_burn_accepts {
            return Err(McmcError::AdaptationFailure { block: i, accepted: b.accepted });
        }
    }
    let n = kept.len() as f64;
    let mut mean = vec![0.0; p];
    for d in &kept {
        for (a, b) in mean.iter_mut().zip(d) {
            *a += b / n;
        }
    }
    let mut cov = vec![vec![0.0; p]; p];
    for d in &kept {
        for i in 0..p {
            let di = d[i] - mean[i];
            for j in 0..=i {
                cov[i][j] += di * (d[j] - mean[j]) / (n - 1.0).max(1.0);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            cov[j][i] = cov[i][j];
        }
    }
    Ok(BurninSummary {
        blocks: scheme.blocks.clone(),
        mean,
        cov,
        last: x,
        last_log_post: lp,
        acceptance: blocks.iter().map(RamBlock::acceptance_rate).collect(),
        targets: blocks.iter().map(|b| b.target).collect(),
        accepted: blocks.iter().map(|b| b.accepted).collect(),
        skipped_downdates: blocks.iter().map(|b| b.skipped_downdates).collect(),
    })
}

/// Block random-walk Metropolis continuing from the burn-in state. Returns
/// the packed draws and per-block acceptance rates.
pub fn run_sampling<F, R>(
    log_density: &mut F,
    burn: &BurninSummary,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), McmcError>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let factors: Vec<DMatrix<f64>> = burn
        .blocks
        .iter()
        .enumerate()
        .map(|(bi, idx)| {
            let d = idx.len();
            let c = DMatrix::from_fn(d, d, |i, j| burn.cov[idx[i]][idx[j]] * 2.38 * 2.38 / d as f64);
            cholesky_with_ridge(&c, cfg.ridge).ok_or(McmcError::ProposalCovariance(bi))
        })
        .collect::<Result<_, _>>()?;
    let scale_sqrt: Vec<f64> = cfg.mixture_scales.iter().map(|c| c.sqrt()).collect();
    let mut x = burn.last.clone();
    let mut lp = burn.last_log_post;
    let mut accepted = vec![0u64; burn.blocks.len()];
    let mut draws = Vec::with_capacity(cfg.n_samp);
    let mut y = x.clone();
    for _ in 0..cfg.n_samp {
        for (bi, (idx, l)) in burn.blocks.iter().zip(&factors).enumerate() {
            let pick: f64 = rng.random();
            let comp = if pick < cfg.mixture_weights[0] {
                0
            } else if pick < cfg.mixture_weights[0] + cfg.mixture_weights[1] {
                1
            } else {
                2
            };
            let step = l * gaussian_vec(rng, idx.len()) * scale_sqrt[comp];
            y.copy_from_slice(&x);
            for (k, &i) in idx.iter().enumerate() {
                y[i] += step[k];
            }
            let lp_y = log_density(&y);
            let u: f64 = rng.random();
            if u < ram::accept_prob(lp_y, lp) {
                x.copy_from_slice(&y);
                lp = lp_y;
                accepted[bi] += 1;
            }
        }
        draws.push(x.clone());
    }
    let rates = accepted.iter().map(|&a| a as f64 / cfg.n_samp as f64).collect();
    Ok((draws, rates))
}

/// Full estimation: burn-in and sampling for each chain (in parallel),
/// followed by convergence diagnostics.
pub fn estimate(data: &ModelData, kind: DistKind, cfg: &McmcConfig) -> Result<PosteriorResult, McmcError> {
    cfg.validate()?;
    let k = data.k();
    let layout = ParamLayout::new(k, kind);
    let log_h0 = match cfg.log_h0 {
        Some(v) => v,
        None => default_log_h0(&data.returns)?,
    };
    let init = match &cfg.init {
        Some(p) => {
            if p.k() != k || p.dist.kind() != kind {
                return Err(McmcError::Config("initial parameters do not match the model".into()));
            }
            p.repaired()
        }
        None => ModelParams::flat_init(k, kind, 0.1, 5.0),
    };
    let z0 = init.pack();
    let post = LogPosterior { data, layout, log_h0 };
    let scheme = BlockScheme::for_choice(cfg.blocks, layout);

    let runs: Vec<(Chain, BurninSummary)> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| {
            let seed = seed_for(cfg.seed, "chain", c as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut f = |z: &[f64]| post.eval(z);
            let mut start = z0.clone();
            if c > 0 && cfg.init_jitter > 0.0 {
                for _ in 0..100 {
                    let cand: Vec<f64> = z0.iter().map(|v| v + cfg.init_jitter * rng.sample::<f64, _>(StandardNormal)).collect();
                    if f(&cand).is_finite() {
                        start = cand;
                        break;
                    }
                }
            }
            let burn = run_burnin(&mut f, start, &scheme, cfg, &mut rng)?;
            let (packed, acceptance) = run_sampling(&mut f, &burn, cfg, &mut rng)?;
            let draws = packed.iter().map(|z| ModelParams::unpack(z, k, kind).map(|p| p.to_natural())).collect::<Result<Vec<_>, _>>()?;
            Ok((Chain { draws, acceptance, seed }, burn))
        })
        .collect::<Result<_, McmcError>>()?;

    let names = layout.names();
    let (chains, burnin): (Vec<Chain>, Vec<BurninSummary>) = runs.into_iter().unzip();
    let all: Vec<Vec<Vec<f64>>> = chains.iter().map(|c| c.draws.clone()).collect();
    let diagnostics = diagnose(&names, &all);
    Ok(PosteriorResult { layout, names, log_h0, chains, burnin, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;

    #[test]
    fn four_block_layout() {
        let l = ParamLayout::new(1, DistKind::SkewT);
        let s = BlockScheme::four(l);
        s.validate(l.len()).unwrap();
        let sizes: Vec<usize> = s.blocks.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 6, 4, 2]);
        assert_eq!(s.targets(), vec![0.44, 0.234, 0.35, 0.35]);
        assert_eq!(BlockScheme::four(ParamLayout::new(2, DistKind::Normal)).blocks.len(), 3);
        assert!(BlockScheme { blocks: vec![vec![0, 1], vec![1]] }.validate(2).is_err());
    }

    #[test]
    fn standard_normal_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = McmcConfig { n_burn: 5000, n_samp: 50_000, ..Default::default() };
        let mut f = |z: &[f64]| -0.5 * z[0] * z[0];
        let scheme = BlockScheme { blocks: vec![vec![0]] };
        let burn = run_burnin(&mut f, vec![0.5], &scheme, &cfg, &mut rng).unwrap();
        let (d, _) = run_sampling(&mut f, &burn, &cfg, &mut rng).unwrap();
        assert_eq!(d.len(), 50_000);
        let m = d.iter().map(|v| v[0]).sum::<f64>() / 5e4;
        let v = d.iter().map(|x| (x[0] - m).powi(2)).sum::<f64>() / 5e4;
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((0.9..=1.1).contains(&v), "var {v}");
    }

    #[test]
    fn adaptation_failure_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = McmcConfig { n_burn: 50, ..Default::default() };
        let mut f = |z: &[f64]| -0.5 * z[0] * z[0];
        let scheme = BlockScheme { blocks: vec![vec![0]] };
        assert!(matches!(run_burnin(&mut f, vec![0.0], &scheme, &cfg, &mut rng), Err(McmcError::AdaptationFailure { .. })));
    }

    #[test]
    fn estimate_is_deterministic_and_in_region() {
        let p = ModelParams::simulation_dgp();
        let data = simulate(&p, 300, 0.0025, 5).unwrap().model_data();
        let cfg = McmcConfig { n_burn: 2000, n_samp: 200, n_chains: 2, seed: 9, ..Default::default() };
        let a = estimate(&data, DistKind::SkewT, &cfg).unwrap();
        let b = estimate(&data, DistKind::SkewT, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chains[0].draws.len(), 200);
        for d in a.all_draws() {
            assert!(a.draw_params(d).unwrap().in_region());
        }
        let cfg1 = McmcConfig { blocks: BlockChoice::One, n_chains: 1, ..cfg };
        assert!(estimate(&data, DistKind::SkewT, &cfg1).is_ok());
    }
}
