use super::{ModelData, ModelError, ModelParams};
use crate::market_data::{DateKey, ReturnSeries};
use crate::measures::RealizedPanel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub returns: Vec<f64>,
    /// `measures[t][k]`, in variance units.
    pub measures: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub eps: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SimulatedData {
    pub fn model_data(&self) -> ModelData {
        ModelData::new(self.returns.clone(), &self.measures).expect("simulated measures are positive")
    }

    /// Series with synthetic dates `1..=n` and the given column labels.
    pub fn to_series(&self, labels: &[String]) -> Result<(ReturnSeries, RealizedPanel), ModelError> {
        let k = self.measures.first().map_or(0, Vec::len);
        if labels.len() != k {
            return Err(ModelError::Data(format!("{} labels for {k} measures", labels.len())));
        }
        let dates: Vec<DateKey> = (1..=self.returns.len() as u32).map(DateKey::Index).collect();
        let panel =
            RealizedPanel::new(dates.clone(), labels.to_vec(), self.measures.clone()).map_err(|e| ModelError::Data(e.to_string()))?;
        Ok((ReturnSeries { dates, values: self.returns.clone() }, panel))
    }
}

/// Simulates `n` days starting from `h_1 = h0`. Errors ε are drawn by
/// inverse CDF from one uniform per day, followed by K standard normals for
/// the measurement shocks.
pub fn simulate(p: &ModelParams, n: usize, h0: f64, seed: u64) -> Result<SimulatedData, ModelError> {
    p.validate()?;
    if !p.stationarity_ok() {
        return Err(ModelError::NonStationary(p.persistence()));
    }
    if !(h0 > 0.0) || !h0.is_finite() {
        return Err(ModelError::InvalidParams(format!("initial variance {h0} must be positive")));
    }
    let k = p.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd: Vec<f64> = p.measures.iter().map(|m| m.sigma2.sqrt()).collect();
    let mut out = SimulatedData {
        returns: Vec::with_capacity(n),
        measures: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        eps: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        seed,
    };
    let mut log_h = h0.ln();
    for t in 0..n {
        if !log_h.is_finite() || log_h.abs() > 700.0 {
            return Err(ModelError::FilterDivergence { t });
        }
        let uni: f64 = rng.sample(Open01);
        let e = p.dist.quantile(uni)?;
        let e2m1 = e * e - 1.0;
        let mut u = Vec::with_capacity(k);
        let mut x = Vec::with_capacity(k);
        let mut next = p.omega + p.beta * log_h + p.tau1 * e + p.tau2 * e2m1;
        for (m, s) in p.measures.iter().zip(&sd) {
            let z: f64 = rng.sample(StandardNormal);
            let uk = s * z;
            x.push((m.xi + m.phi * log_h + m.delta1 * e + m.delta2 * e2m1 + uk).exp());
            next += m.gamma * uk;
            u.push(uk);
        }
        let h = log_h.exp();
        out.returns.push(p.mu + h.sqrt() * e);
        out.h.push(h);
        out.eps.push(e);
        out.measures.push(x);
        out.u.push(u);
        log_h = next;
    }
    Ok(out)
}
