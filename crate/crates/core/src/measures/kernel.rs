use super::{check_prices, parzen_unchecked, MeasureError};
use serde::{Deserialize, Serialize};

/// Realized kernel settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub c_star: f64,
    /// Sampling interval of the sparse grid used for the integrated
    /// quarticity proxy in the noise ratio.
    pub quarticity_minutes: u32,
    pub max_bandwidth: Option<usize>,
    /// Fixed bandwidth; bypasses the data-driven choice.
    pub bandwidth: Option<usize>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { c_star: 3.5134, quarticity_minutes: 15, max_bandwidth: None, bandwidth: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    pub value: f64,
    pub bandwidth: usize,
    pub noise_ratio: f64,
    pub note: Option<String>,
}

fn autocov(x: &[f64], h: usize) -> f64 {
    x[h..].iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Realized kernel with Parzen weights on the log-price grid `prices`
/// sampled every `interval_minutes`.
///
/// `K = γ₀ + 2 Σ_{h=1..H} k(h/(H+1)) γ_h`.
pub fn realized_kernel(prices: &[f64], interval_minutes: u32, cfg: &KernelConfig) -> Result<KernelEstimate, MeasureError> {
    if prices.len() < 2 {
        return Err(MeasureError::InsufficientData(format!("realized kernel needs 2 prices, got {}", prices.len())));
    }
    if interval_minutes == 0 || cfg.quarticity_minutes == 0 || !(cfg.c_star > 0.0) {
        return Err(MeasureError::Config("kernel intervals and c* must be positive".into()));
    }
    check_prices(prices)?;
    let log_p: Vec<f64> = prices.iter().map(|p| p.ln()).collect();
    let x: Vec<f64> = log_p.windows(2).map(|w| w[1] - w[0]).collect();
    let n = x.len();
    let gamma0 = autocov(&x, 0);
    if gamma0 == 0.0 {
        return Ok(KernelEstimate { value: 0.0, bandwidth: 0, noise_ratio: 0.0, note: Some("degenerate day: zero bandwidth".into()) });
    }

    let omega2 = gamma0 / (2.0 * n as f64);
    let sparse_step = ((cfg.quarticity_minutes as f64 / interval_minutes as f64).round() as usize).max(1);
    let sparse_rv: f64 = log_p.iter().step_by(sparse_step).collect::<Vec<_>>().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let cap = cfg.max_bandwidth.unwrap_or(n - 1).min(n - 1);
    let mut note = None;
    let (bandwidth, noise_ratio) = match cfg.bandwidth {
        Some(h) => (h.min(n - 1), omega2 / sparse_rv),
        None if sparse_rv > 0.0 => {
            let xi2 = omega2 / sparse_rv;
            let h_star = cfg.c_star * xi2.powf(0.4) * (n as f64).powf(0.6);
            ((h_star.floor() as usize).max(1).min(cap), xi2)
        }
        None => {
            note = Some("sparse-grid variance is zero: bandwidth set to cap".into());
            (cap, f64::INFINITY)
        }
    };

    let mut value = gamma0;
    for h in 1..=bandwidth {
        let w = parzen_unchecked(h as f64 / (bandwidth as f64 + 1.0));
        value += 2.0 * w * autocov(&x, h);
    }
    Ok(KernelEstimate { value, bandwidth, noise_ratio, note })
}
