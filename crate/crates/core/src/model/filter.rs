use super::{ModelData, ModelError, ModelParams};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// `exp` overflows past this; treat larger |log h| as divergence.
const LOG_H_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub log_h: Vec<f64>,
    pub eps: Vec<f64>,
    /// `u[t][k]`.
    pub u: Vec<Vec<f64>>,
    /// One-step-ahead `log h_{T+1}` implied by the last observation.
    pub log_h_next: f64,
}

/// Runs the recursion with `log h_1 = log_h0`, calling `visit(t, log h_t,
/// ε_t, u_t)` for every day. Returns `log h_{T+1}`.
#[inline]
fn run<F: FnMut(usize, f64, f64, &[f64])>(p: &ModelParams, data: &ModelData, log_h0: f64, mut visit: F) -> Result<f64, ModelError> {
    let k = p.k();
    if data.k() != k {
        return Err(ModelError::Data(format!("data has {} measures, parameters {k}", data.k())));
    }
    let mut u = vec![0.0; k];
    let mut log_h = log_h0;
    for (t, (&r, lx)) in data.returns.iter().zip(&data.log_x).enumerate() {
        if !log_h.is_finite() || log_h.abs() > LOG_H_LIMIT {
            return Err(ModelError::FilterDivergence { t });
        }
        let e = (r - p.mu) * (-0.5 * log_h).exp();
        let e2m1 = e * e - 1.0;
        let mut next = p.omega + p.beta * log_h + p.tau1 * e + p.tau2 * e2m1;
        for ((uk, m), &x) in u.iter_mut().zip(&p.measures).zip(lx) {
            *uk = x - m.xi - m.phi * log_h - m.delta1 * e - m.delta2 * e2m1;
            next += m.gamma * *uk;
        }
        visit(t, log_h, e, &u);
        log_h = next;
    }
    if !log_h.is_finite() || log_h.abs() > LOG_H_LIMIT {
        return Err(ModelError::FilterDivergence { t: data.len() });
    }
    Ok(log_h)
}

pub fn filter(p: &ModelParams, data: &ModelData, log_h0: f64) -> Result<FilterOutput, ModelError> {
    let n = data.len();
    let mut out = FilterOutput { log_h: Vec::with_capacity(n), eps: Vec::with_capacity(n), u: Vec::with_capacity(n), log_h_next: f64::NAN };
    out.log_h_next = run(p, data, log_h0, |_, lh, e, u| {
        out.log_h.push(lh);
        out.eps.push(e);
        out.u.push(u.to_vec());
    })?;
    Ok(out)
}

/// Joint log-likelihood of returns and log measures.
///
/// Parameters outside the admissible set (invalid distribution, σ² ≤ 0,
/// non-stationary) give `Ok(-inf)`; a diverging filter path is an error.
pub fn log_likelihood(p: &ModelParams, data: &ModelData, log_h0: f64) -> Result<f64, ModelError> {
    if p.validate().is_err() || !p.stationarity_ok() {
        return Ok(f64::NEG_INFINITY);
    }
    let dens = p.dist.density()?;
    let inv_s2: Vec<f64> = p.measures.iter().map(|m| 1.0 / m.sigma2).collect();
    let meas_const: f64 = p.measures.iter().map(|m| LN_2PI + m.sigma2.ln()).sum();
    let mut ret_part = 0.0;
    let mut quad = 0.0;
    run(p, data, log_h0, |_, lh, e, u| {
        ret_part += dens.log_pdf(e) - 0.5 * lh;
        quad += u.iter().zip(&inv_s2).map(|(x, w)| x * x * w).sum::<f64>();
    })?;
    let ll = ret_part - 0.5 * (data.len() as f64 * meas_const + quad);
    Ok(if ll.is_nan() { f64::NEG_INFINITY } else { ll })
}

/// Log of the sample variance of `r`, the default initial log variance.
pub fn default_log_h0(r: &[f64]) -> Result<f64, ModelError> {
    if r.len() < 2 {
        return Err(ModelError::Data("need two returns for the initial variance".into()));
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(ModelError::Data("returns have zero sample variance".into()));
    }
    Ok(var.ln())
}
