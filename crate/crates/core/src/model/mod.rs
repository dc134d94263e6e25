//! Realized EGARCH with K realized measures:
//!
//! ```text
//! r_t        = μ + sqrt(h_t) ε_t
//! log h_t    = ω + β log h_{t-1} + τ(ε_{t-1}) + γ'u_{t-1}
//! log x_k,t  = ξ_k + φ_k log h_t + δ_k(ε_t) + u_k,t
//! ```
//!
//! with `τ(e) = τ₁e + τ₂(e²-1)`, `δ_k(e) = δ_k1 e + δ_k2 (e²-1)` and
//! `u_t ~ N(0, diag(σ²_u))`.

mod filter;
mod layout;
mod simulate;

pub use filter::{default_log_h0, filter, log_likelihood, FilterOutput};
pub use layout::ParamLayout;
pub use simulate::{simulate, SimulatedData};

use crate::distributions::{DistError, DistKind, ErrorDist};
use crate::market_data::ReturnSeries;
use crate::measures::RealizedPanel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter vector has length {found}, layout expects {expected}")]
    Layout { expected: usize, found: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-stationary parameters: beta - gamma'phi = {0} >= 1")]
    NonStationary(f64),
    #[error("filter diverged at t = {t}")]
    FilterDivergence { t: usize },
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Measurement-equation parameters of one realized measure, together with
/// its loading γ_k in the volatility equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    pub gamma: f64,
    pub xi: f64,
    pub phi: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub omega: f64,
    pub beta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub measures: Vec<MeasureParams>,
    pub dist: ErrorDist,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.measures.len()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.k(), self.dist.kind())
    }

    /// `β - Σ_k γ_k φ_k`.
    pub fn persistence(&self) -> f64 {
        self.beta - self.measures.iter().map(|m| m.gamma * m.phi).sum::<f64>()
    }

    pub fn stationarity_ok(&self) -> bool {
        self.persistence() < 1.0
    }

    /// Finite values, positive measurement variances and a well-defined
    /// error distribution. Stationarity is checked separately.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.measures.is_empty() {
            return Err(ModelError::InvalidParams("at least one realized measure is required".into()));
        }
        let scalars = [self.mu, self.omega, self.beta, self.tau1, self.tau2];
        let all_finite = scalars.iter().all(|v| v.is_finite())
            && self.measures.iter().all(|m| [m.gamma, m.xi, m.phi, m.delta1, m.delta2, m.sigma2].iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(ModelError::InvalidParams("non-finite parameter".into()));
        }
        if let Some((k, m)) = self.measures.iter().enumerate().find(|(_, m)| !(m.sigma2 > 0.0)) {
            return Err(ModelError::InvalidParams(format!("sigma2_{} = {} must be positive", k + 1, m.sigma2)));
        }
        self.dist.validate()?;
        Ok(())
    }

    /// Whether the parameters lie in the estimation region: valid,
    /// stationary, ν ∈ (4, 200) and λ ∈ (-1, 1).
    pub fn in_region(&self) -> bool {
        self.validate().is_ok() && self.stationarity_ok() && self.dist.is_admissible()
    }

    /// Parameters in natural units, in layout order.
    pub fn to_natural(&self) -> Vec<f64> {
        let mut v = vec![self.mu, self.omega, self.beta, self.tau1, self.tau2];
        v.extend(self.measures.iter().map(|m| m.gamma));
        for m in &self.measures {
            v.extend([m.xi, m.phi, m.delta1, m.delta2, m.sigma2]);
        }
        v.extend(self.dist.nu());
        v.extend(self.dist.lambda());
        v
    }

    pub fn from_natural(v: &[f64], k: usize, kind: DistKind) -> Result<Self, ModelError> {
        let lay = ParamLayout::new(k, kind);
        lay.check_len(v)?;
        let measures = (0..k)
            .map(|j| MeasureParams {
                gamma: v[lay.gamma(j)],
                xi: v[lay.xi(j)],
                phi: v[lay.phi(j)],
                delta1: v[lay.delta1(j)],
                delta2: v[lay.delta2(j)],
                sigma2: v[lay.sigma2(j)],
            })
            .collect();
        let dist = match kind {
            DistKind::Normal => ErrorDist::Normal,
            DistKind::StudentT => ErrorDist::StudentT { nu: v[lay.nu().unwrap()] },
            DistKind::SkewT => ErrorDist::SkewT { nu: v[lay.nu().unwrap()], lambda: v[lay.lambda().unwrap()] },
        };
        Ok(Self { mu: v[0], omega: v[1], beta: v[2], tau1: v[3], tau2: v[4], measures, dist })
    }

    /// Maps to the unconstrained sampling space: `log σ²`, `atanh λ` and
    /// `log((ν-4)/(200-ν))`; all other coordinates are unchanged.
    pub fn pack(&self) -> Vec<f64> {
        let lay = self.layout();
        let mut v = self.to_natural();
        for j in 0..self.k() {
            v[lay.sigma2(j)] = v[lay.sigma2(j)].ln();
        }
        if let Some(i) = lay.nu() {
            let nu = v[i];
            v[i] = ((nu - 4.0) / (200.0 - nu)).ln();
        }
        if let Some(i) = lay.lambda() {
            v[i] = v[i].atanh();
        }
        v
    }

    pub fn unpack(z: &[f64], k: usize, kind: DistKind) -> Result<Self, ModelError> {
        let lay = ParamLayout::new(k, kind);
        lay.check_len(z)?;
        let mut v = z.to_vec();
        for j in 0..k {
            v[lay.sigma2(j)] = z[lay.sigma2(j)].exp();
        }
        if let Some(i) = lay.nu() {
            v[i] = 4.0 + 196.0 / (1.0 + (-z[i]).exp());
        }
        if let Some(i) = lay.lambda() {
            v[i] = z[i].tanh();
        }
        Self::from_natural(&v, k, kind)
    }

    /// Paper-style simulation design: one measure, skewed-t errors.
    pub fn simulation_dgp() -> Self {
        Self {
            mu: 0.0,
            omega: -0.12,
            beta: 0.98,
            tau1: -0.12,
            tau2: 0.04,
            measures: vec![MeasureParams { gamma: 0.47, xi: -0.17, phi: 0.94, delta1: -0.09, delta2: 0.06, sigma2: 0.15 }],
            dist: ErrorDist::SkewT { nu: 4.4, lambda: 0.5 },
        }
    }

    /// Every coordinate set to `value`, with ν = `nu` where applicable and
    /// λ = `value`. `flat_init(k, kind, 0.1, 5.0)` is the default start of
    /// both estimators.
    pub fn flat_init(k: usize, kind: DistKind, value: f64, nu: f64) -> Self {
        let m = MeasureParams { gamma: value, xi: value, phi: value, delta1: value, delta2: value, sigma2: value };
        let dist = match kind {
            DistKind::Normal => ErrorDist::Normal,
            DistKind::StudentT => ErrorDist::StudentT { nu },
            DistKind::SkewT => ErrorDist::SkewT { nu, lambda: value },
        };
        Self { mu: value, omega: value, beta: value, tau1: value, tau2: value, measures: vec![m; k], dist }
    }

    /// Projects σ², ν and λ inside their bounds and shrinks β until the
    /// stationarity restriction holds.
    pub fn repaired(&self) -> Self {
        let mut p = self.clone();
        for m in &mut p.measures {
            if !(m.sigma2 > 1e-8) {
                m.sigma2 = 1e-8;
            }
        }
        p.dist = match p.dist {
            ErrorDist::Normal => ErrorDist::Normal,
            ErrorDist::StudentT { nu } => ErrorDist::StudentT { nu: nu.clamp(4.01, 199.0) },
            ErrorDist::SkewT { nu, lambda } => ErrorDist::SkewT { nu: nu.clamp(4.01, 199.0), lambda: lambda.clamp(-0.99, 0.99) },
        };
        let excess = p.persistence() - 0.999;
        if excess > 0.0 {
            p.beta -= excess;
        }
        p
    }
}

/// Returns and log measures aligned day by day, ready for filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub returns: Vec<f64>,
    /// `log_x[t][k]`.
    pub log_x: Vec<Vec<f64>>,
}

impl ModelData {
    pub fn new(returns: Vec<f64>, measures: &[Vec<f64>]) -> Result<Self, ModelError> {
        if returns.len() != measures.len() {
            return Err(ModelError::Data(format!("{} returns but {} measure rows", returns.len(), measures.len())));
        }
        if returns.is_empty() {
            return Err(ModelError::Data("empty sample".into()));
        }
        let k = measures[0].len();
        if k == 0 {
            return Err(ModelError::Data("no realized measures".into()));
        }
        let mut log_x = Vec::with_capacity(measures.len());
        for (t, row) in measures.iter().enumerate() {
            if row.len() != k {
                return Err(ModelError::Data(format!("row {t} has {} measures, expected {k}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(ModelError::Data(format!("measure {v} at t = {t} is not positive")));
            }
            log_x.push(row.iter().map(|v| v.ln()).collect());
        }
        if let Some(t) = returns.iter().position(|r| !r.is_finite()) {
            return Err(ModelError::Data(format!("non-finite return at t = {t}")));
        }
        Ok(Self { returns, log_x })
    }

    /// Aligns by date and builds the data set.
    pub fn from_series(returns: &ReturnSeries, panel: &RealizedPanel) -> Result<Self, ModelError> {
        let (r, p) = panel.align_returns(returns).map_err(|e| ModelError::Data(e.to_string()))?;
        Self::new(r.values, &p.values)
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn k(&self) -> usize {
        self.log_x.first().map_or(0, Vec::len)
    }

    /// Sub-sample `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self { returns: self.returns[start..end].to_vec(), log_x: self.log_x[start..end].to_vec() }
    }
}
