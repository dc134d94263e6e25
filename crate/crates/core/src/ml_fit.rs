//! Maximum-likelihood fitting by Nelder-Mead on the packed parameter space,
//! with jittered restarts and standard errors from a numerical Hessian.

use crate::distributions::DistKind;
use crate::model::{default_log_h0, log_likelihood, ModelData, ModelError, ModelParams, ParamLayout};
use crate::optim::{nelder_mead, Minimum, NelderMeadConfig};
use crate::seed::seed_for;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("initial parameters: {0}")]
    Init(ModelError),
    #[error("log-likelihood is not finite at the initial point")]
    InfeasibleStart,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlConfig {
    /// Evaluation budget of each simplex search.
    pub max_evals: usize,
    pub restarts: usize,
    /// Standard deviation of the restart perturbation on the packed scale.
    pub restart_jitter: f64,
    pub hessian_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub seed: u64,
    pub log_h0: Option<f64>,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self { max_evals: 20_000, restarts: 3, restart_jitter: 0.1, hessian_step: 1e-4, f_tol: 1e-10, x_tol: 1e-7, seed: 1, log_h0: None }
    }
}

impl MlConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.max_evals < 10 {
            return Err(MlError::Config("max_evals must be at least 10".into()));
        }
        if !(self.restart_jitter >= 0.0) || !(self.hessian_step > 0.0) {
            return Err(MlError::Config("restart_jitter must be >= 0 and hessian_step > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlFit {
    pub params: ModelParams,
    pub names: Vec<String>,
    pub log_likelihood: f64,
    pub init_log_likelihood: f64,
    /// False when no search met the tolerance or none improved on the start.
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best result came from restart `best_start` (0 is the initial search).
    pub best_start: usize,
    /// Natural-scale standard errors; `None` unless the Hessian is
    /// negative definite.
    pub std_errors: Option<Vec<f64>>,
    pub log_h0: f64,
}

impl MlFit {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn packed_ll(data: &ModelData, layout: ParamLayout, log_h0: f64, z: &[f64]) -> f64 {
    match ModelParams::unpack(z, layout.k, layout.kind) {
        Ok(p) => match log_likelihood(&p, data, log_h0) {
            Ok(ll) if ll.is_finite() => ll,
            _ => f64::NEG_INFINITY,
        },
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Central-difference Hessian of `f` at `z`.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], h: f64) -> DMatrix<f64> {
    let d = z.len();
    let f0 = f(z);
    let at = |moves: &[(usize, f64)]| {
        let mut y = z.to_vec();
        for &(i, s) in moves {
            y[i] += s;
        }
        f(&y)
    };
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        hess[(i, i)] = (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)])) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// `dθ_i/dz_i` of the unpack map; the map is coordinate-wise.
fn unpack_derivative(layout: ParamLayout, z: &[f64]) -> Vec<f64> {
    let mut g = vec![1.0; z.len()];
    for j in 0..layout.k {
        g[layout.sigma2(j)] = z[layout.sigma2(j)].exp();
    }
    if let Some(i) = layout.nu() {
        let s = 1.0 / (1.0 + (-z[i]).exp());
        g[i] = 196.0 * s * (1.0 - s);
    }
    if let Some(i) = layout.lambda() {
        g[i] = 1.0 - z[i].tanh().powi(2);
    }
    g
}

fn standard_errors(hess: &DMatrix<f64>, layout: ParamLayout, z: &[f64]) -> Option<Vec<f64>> {
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let info = -hess;
    let cov = info.cholesky()?.inverse();
    let g = unpack_derivative(layout, z);
    let se: Vec<f64> = (0..z.len()).map(|i| g[i].abs() * cov[(i, i)].sqrt()).collect();
    se.iter().all(|s| s.is_finite() && *s > 0.0).then_some(se)
}

/// Maximizes the log-likelihood from `init`, then from `cfg.restarts`
/// perturbations of the first optimum, and returns the best.
pub fn fit_ml(data: &ModelData, kind: DistKind, init: &ModelParams, cfg: &MlConfig) -> Result<MlFit, MlError> {
    cfg.validate()?;
    init.validate().map_err(MlError::Init)?;
    if init.dist.kind() != kind || init.k() != data.k() {
        return Err(MlError::Init(ModelError::Layout { expected: ParamLayout::new(data.k(), kind).len(), found: init.layout().len() }));
    }
    let log_h0 = match cfg.log_h0 {
        Some(v) => v,
        None => default_log_h0(&data.returns)?,
    };
    let layout = init.layout();
    let z0 = init.pack();
    let objective = |z: &[f64]| -packed_ll(data, layout, log_h0, z);
    let init_ll = -objective(&z0);
    if !init_ll.is_finite() {
        return Err(MlError::InfeasibleStart);
    }
    let nm = NelderMeadConfig { max_evals: cfg.max_evals, f_tol: cfg.f_tol, x_tol: cfg.x_tol, ..Default::default() };

    let first = nelder_mead(objective, &z0, &nm);
    let normal = Normal::new(0.0, cfg.restart_jitter).map_err(|e| MlError::Config(e.to_string()))?;
    let restarts: Vec<Minimum> = (1..=cfg.restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, "ml-restart", r));
            let mut start: Vec<f64> = first.x.iter().map(|v| v + normal.sample(&mut rng)).collect();
            if !objective(&start).is_finite() {
                start = first.x.clone();
            }
            nelder_mead(objective, &start, &nm)
        })
        .collect();

    let evaluations = first.evals + restarts.iter().map(|m| m.evals).sum::<usize>();
    let iterations = first.iterations + restarts.iter().map(|m| m.iterations).sum::<usize>();
    let mut best_start = 0;
    let mut best = &first;
    for (i, m) in restarts.iter().enumerate() {
        if m.f < best.f {
            best = m;
            best_start = i + 1;
        }
    }
    let (z, ll) = if -best.f >= init_ll { (best.x.clone(), -best.f) } else { (z0.clone(), init_ll) };
    let improved = ll > init_ll;
    let converged = improved && std::iter::once(&first).chain(&restarts).any(|m| m.converged);
    if !converged {
        log::warn!("ML search did not converge (best LL {ll}, initial LL {init_ll})");
    }

    let hess = numerical_hessian(|v| packed_ll(data, layout, log_h0, v), &z, cfg.hessian_step);
    let params = ModelParams::unpack(&z, layout.k, layout.kind)?;
    Ok(MlFit {
        params,
        names: layout.names(),
        log_likelihood: ll,
        init_log_likelihood: init_ll,
        converged,
        iterations,
        evaluations,
        best_start,
        std_errors: standard_errors(&hess, layout, &z),
        log_h0,
    })
}
