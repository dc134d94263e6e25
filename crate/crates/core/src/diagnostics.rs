//! Convergence diagnostics for multi-chain MCMC output: Gelman-Rubin R̂,
//! effective sample size and integrated autocorrelation time.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RHAT_THRESHOLD: f64 = 1.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("need at least {needed} {what}, got {got}")]
    TooShort { what: &'static str, needed: usize, got: usize },
    #[error("chains have unequal lengths")]
    Ragged,
    #[error("zero within-chain variance")]
    Degenerate,
}

fn check(chains: &[Vec<f64>], min_m: usize, min_n: usize) -> Result<(usize, usize), DiagError> {
    let m = chains.len();
    if m < min_m {
        return Err(DiagError::TooShort { what: "chains", needed: min_m, got: m });
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagError::Ragged);
    }
    if n < min_n {
        return Err(DiagError::TooShort { what: "draws per chain", needed: min_n, got: n });
    }
    Ok((m, n))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Within-chain variance W, between-chain variance B and the pooled
/// estimate `V = (n-1)/n W + B/n`.
fn variance_parts(chains: &[Vec<f64>]) -> (f64, f64, f64) {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let w = chains.iter().zip(&means).map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)).sum::<f64>() / m;
    let b = if m > 1.0 { n * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    (w, b, (n - 1.0) / n * w + b / n)
}

/// Classic (non-split) potential scale reduction factor.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64, DiagError> {
    check(chains, 2, 10)?;
    let (w, _, v) = variance_parts(chains);
    if !(w > 0.0) {
        return Err(DiagError::Degenerate);
    }
    Ok((v / w).sqrt())
}

/// Biased (divide-by-n) autocovariances at lags `0..n` via FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mu = mean(x);
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mu, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().take(n).map(|c| c.re / (len as f64 * n as f64)).collect()
}

/// Effective sample size over `m` chains of `n` draws: `m n / τ` with
/// `τ = 1 + 2 Σ ρ_t` truncated by Geyer's initial positive sequence and
/// clamped to `τ ≥ 1`.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64, DiagError> {
    let (m, n) = check(chains, 1, 50)?;
    let (w, _, v) = variance_parts(chains);
    if !(w > 0.0) || !(v > 0.0) {
        return Err(DiagError::Degenerate);
    }
    let acovs: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let rho = |t: usize| {
        let mean_acov = acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / v
    };
    let mut tau = -1.0;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        t += 2;
    }
    let total = (m * n) as f64;
    Ok(total / tau.max(1.0))
}

/// Integrated autocorrelation time of one chain, `n / n_eff`.
pub fn autocorrelation_time(chain: &[f64]) -> Result<f64, DiagError> {
    let c = [chain.to_vec()];
    Ok(chain.len() as f64 / effective_sample_size(&c)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    /// `None` for a single chain or a degenerate parameter.
    pub rhat: Option<f64>,
    pub n_eff: Option<f64>,
    pub act: Option<f64>,
    pub degenerate: bool,
    pub rhat_exceeds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_chains: usize,
    pub n_draws: usize,
    pub params: Vec<ParamDiagnostics>,
}

impl DiagnosticsReport {
    pub fn get(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Diagnostics for every parameter. `draws[c][i][j]` is draw `i` of
/// parameter `j` in chain `c`.
pub fn diagnose(names: &[String], draws: &[Vec<Vec<f64>>]) -> DiagnosticsReport {
    let m = draws.len();
    let n = draws.first().map_or(0, Vec::len);
    let params = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let series: Vec<Vec<f64>> = draws.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            let rhat = gelman_rubin(&series);
            let ess = effective_sample_size(&series);
            let degenerate = matches!(rhat, Err(DiagError::Degenerate)) || matches!(ess, Err(DiagError::Degenerate));
            let rhat = rhat.ok();
            let n_eff = ess.ok();
            ParamDiagnostics {
                name: name.clone(),
                rhat,
                n_eff,
                act: n_eff.map(|e| (m * n) as f64 / e),
                degenerate,
                rhat_exceeds: rhat.is_some_and(|r| r > RHAT_THRESHOLD),
            }
        })
        .collect();
    DiagnosticsReport { n_chains: m, n_draws: n, params }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(seed: u64, n: usize, rho: f64) -> Vec<f64> {
        let z = normals(seed, n);
        let mut x = Vec::with_capacity(n);
        let mut prev = 0.0;
        for e in z {
            prev = rho * prev + e;
            x.push(prev);
        }
        x
    }

    #[test]
    fn identical_chains() {
        let c = normals(1, 100);
        let r = gelman_rubin(&[c.clone(), c.clone(), c]).unwrap();
        assert!((r - (99.0f64 / 100.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn iid_chains_converged() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| normals(s, 5000)).collect();
        assert!(gelman_rubin(&chains).unwrap() < 1.05);
        let e = effective_sample_size(&chains).unwrap() / 20_000.0;
        assert!((0.8..=1.2).contains(&e), "{e}");
    }

    #[test]
    fn separated_chains() {
        let a: Vec<f64> = normals(1, 200).iter().map(|x| x + 10.0).collect();
        let b: Vec<f64> = normals(2, 200).iter().map(|x| x - 10.0).collect();
        assert!(gelman_rubin(&[a, b]).unwrap() > 2.0);
    }

    #[test]
    fn ar1_autocorrelation_time() {
        let t = autocorrelation_time(&ar1(3, 20_000, 0.9)).unwrap();
        assert!((12.0..=25.0).contains(&t), "{t}");
    }

    #[test]
    fn constant_chain_is_degenerate() {
        assert_eq!(autocorrelation_time(&[2.0; 100]), Err(DiagError::Degenerate));
        assert_eq!(gelman_rubin(&[vec![1.0; 20], vec![1.0; 20]]), Err(DiagError::Degenerate));
    }

    #[test]
    fn rhat_affine_invariant() {
        let chains: Vec<Vec<f64>> = (0..3).map(|s| ar1(s, 500, 0.5)).collect();
        let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| 3.0 * x - 7.0).collect()).collect();
        assert!((gelman_rubin(&chains).unwrap() - gelman_rubin(&moved).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fft_autocovariance_matches_direct() {
        let x = ar1(5, 300, 0.6);
        let mu = mean(&x);
        let a = autocovariance(&x);
        for t in [0, 1, 5, 50] {
            let direct: f64 = (t..x.len()).map(|i| (x[i] - mu) * (x[i - t] - mu)).sum::<f64>() / x.len() as f64;
            assert!((a[t] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn report_product_identity() {
        let draws: Vec<Vec<Vec<f64>>> =
            (0..2).map(|s| ar1(s, 400, 0.7).into_iter().zip(normals(s + 10, 400)).map(|(a, b)| vec![a, b]).collect()).collect();
        let rep = diagnose(&["a".into(), "b".into()], &draws);
        for p in &rep.params {
            assert!((p.act.unwrap() * p.n_eff.unwrap() - 800.0).abs() < 1e-9);
            assert!(p.act.unwrap() >= 1.0);
        }
    }
}
