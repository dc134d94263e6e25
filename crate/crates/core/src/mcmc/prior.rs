use crate::distributions::DistKind;
use crate::model::{log_likelihood, ModelData, ModelParams, ParamLayout};

/// `π(θ) ∝ Π_k 1/σ²_k · 1/ν²` on the admissible region, `-inf` outside.
pub fn log_prior(p: &ModelParams) -> f64 {
    if !p.in_region() {
        return f64::NEG_INFINITY;
    }
    let mut lp = -p.measures.iter().map(|m| m.sigma2.ln()).sum::<f64>();
    if let Some(nu) = p.dist.nu() {
        lp -= 2.0 * nu.ln();
    }
    lp
}

/// Log posterior on the packed (unconstrained) scale, including the
/// Jacobian of the transform.
#[derive(Debug, Clone, Copy)]
pub struct LogPosterior<'a> {
    pub data: &'a ModelData,
    pub layout: ParamLayout,
    pub log_h0: f64,
}

impl<'a> LogPosterior<'a> {
    pub fn new(data: &'a ModelData, k: usize, kind: DistKind, log_h0: f64) -> Self {
        Self { data, layout: ParamLayout::new(k, kind), log_h0 }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let Ok(p) = ModelParams::unpack(z, self.layout.k, self.layout.kind) else {
            return f64::NEG_INFINITY;
        };
        let lp = log_prior(&p);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        match log_likelihood(&p, self.data, self.log_h0) {
            Ok(ll) if ll.is_finite() => ll + lp + self.layout.log_jacobian(z),
            _ => f64::NEG_INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ErrorDist;

    #[test]
    fn nu_below_four_excluded() {
        let mut p = ModelParams::simulation_dgp();
        p.dist = ErrorDist::SkewT { nu: 3.9, lambda: 0.5 };
        assert_eq!(log_prior(&p), f64::NEG_INFINITY);
        p.dist = ErrorDist::StudentT { nu: 200.0 };
        assert_eq!(log_prior(&p), f64::NEG_INFINITY);
    }

    #[test]
    fn flat_in_mu() {
        let mut p = ModelParams::simulation_dgp();
        p.mu = 0.01;
        let a = log_prior(&p);
        p.mu = 0.02;
        assert_eq!(log_prior(&p), a);
    }

    #[test]
    fn jeffreys_on_sigma2() {
        let mut p = ModelParams::simulation_dgp();
        p.measures[0].sigma2 = 1.0;
        let a = log_prior(&p);
        p.measures[0].sigma2 = 2.0;
        assert!((log_prior(&p) - a + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nonstationary_excluded() {
        let mut p = ModelParams::simulation_dgp();
        p.beta = 1.6;
        assert_eq!(log_prior(&p), f64::NEG_INFINITY);
    }
}
