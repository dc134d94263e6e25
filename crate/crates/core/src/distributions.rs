//! Standardized return-error distributions.
//!
//! All three families have zero mean and unit variance. The Student-t is the
//! usual `t_ν` rescaled by `sqrt((ν-2)/ν)`, and the skewed Student-t is
//! Hansen's two-piece construction built from the same kernel.
//!
//! Probabilities passed to [`ErrorDist::quantile`] and
//! [`ErrorDist::tail_expectation`] are lower-tail probabilities: the 2.5%
//! VaR of a long position is `quantile(0.025)`, a negative number.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{PI, SQRT_2};
use thiserror::Error;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("degrees of freedom {0} must exceed 2")]
    InvalidDof(f64),
    #[error("skewness {0} outside (-1, 1)")]
    InvalidSkew(f64),
    #[error("tail expectation requires nu > 2 (got {0})")]
    UndefinedMoment(f64),
    #[error("skewed-t constants degenerate: 1 + 3 lambda^2 - a^2 = {0}")]
    DegenerateConstants(f64),
}

/// Distribution family of the standardized return error, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistKind {
    Normal,
    StudentT,
    SkewT,
}

impl DistKind {
    /// Number of shape parameters carried by the family.
    pub fn n_params(self) -> usize {
        match self {
            DistKind::Normal => 0,
            DistKind::StudentT => 1,
            DistKind::SkewT => 2,
        }
    }

    /// Model-id suffix: the return error followed by the (Gaussian)
    /// measurement error, e.g. `SkN`.
    pub fn suffix(self) -> &'static str {
        match self {
            DistKind::Normal => "NN",
            DistKind::StudentT => "tN",
            DistKind::SkewT => "SkN",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" | "normal" | "n" => Some(DistKind::Normal),
            "tn" | "t" | "student" => Some(DistKind::StudentT),
            "skn" | "skt" | "skewt" => Some(DistKind::SkewT),
            _ => None,
        }
    }
}

/// Standardized (zero mean, unit variance) return-error distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ErrorDist {
    Normal,
    StudentT { nu: f64 },
    SkewT { nu: f64, lambda: f64 },
}

/// Constants of Hansen's skewed Student-t density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewTConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SkewTConstants {
    /// Location of the knot where the density switches branch.
    pub fn knot(&self) -> f64 {
        -self.a / self.b
    }
}

/// `c = Γ((ν+1)/2) / (sqrt(π(ν-2)) Γ(ν/2))`, the normalizer of the
/// unit-variance Student-t kernel.
fn ln_t_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * (nu - 2.0)).ln()
}

pub fn skewt_constants(nu: f64, lambda: f64) -> Result<SkewTConstants, DistError> {
    if !(nu > 2.0) || !nu.is_finite() {
        return Err(DistError::InvalidDof(nu));
    }
    if !(lambda > -1.0 && lambda < 1.0) {
        return Err(DistError::InvalidSkew(lambda));
    }
    let c = ln_t_norm(nu).exp();
    let a = 4.0 * lambda * c * (nu - 2.0) / (nu - 1.0);
    let b2 = 1.0 + 3.0 * lambda * lambda - a * a;
    if !(b2 > 0.0) {
        return Err(DistError::DegenerateConstants(b2));
    }
    Ok(SkewTConstants { a, b: b2.sqrt(), c })
}

impl ErrorDist {
    pub fn normal() -> Self {
        ErrorDist::Normal
    }

    pub fn student_t(nu: f64) -> Result<Self, DistError> {
        let d = ErrorDist::StudentT { nu };
        d.validate()?;
        Ok(d)
    }

    pub fn skew_t(nu: f64, lambda: f64) -> Result<Self, DistError> {
        let d = ErrorDist::SkewT { nu, lambda };
        d.validate()?;
        Ok(d)
    }

    pub fn kind(&self) -> DistKind {
        match self {
            ErrorDist::Normal => DistKind::Normal,
            ErrorDist::StudentT { .. } => DistKind::StudentT,
            ErrorDist::SkewT { .. } => DistKind::SkewT,
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match *self {
            ErrorDist::Normal => None,
            ErrorDist::StudentT { nu } | ErrorDist::SkewT { nu, .. } => Some(nu),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            ErrorDist::SkewT { lambda, .. } => Some(lambda),
            _ => None,
        }
    }

    /// Checks that the distribution is well defined (ν > 2, |λ| < 1).
    pub fn validate(&self) -> Result<(), DistError> {
        match *self {
            ErrorDist::Normal => Ok(()),
            ErrorDist::StudentT { nu } => {
                if nu > 2.0 && nu.is_finite() {
                    Ok(())
                } else {
                    Err(DistError::InvalidDof(nu))
                }
            }
            ErrorDist::SkewT { nu, lambda } => skewt_constants(nu, lambda).map(|_| ()),
        }
    }

    /// Whether the shape parameters lie in the estimation region
    /// ν ∈ (4, 200), λ ∈ (-1, 1).
    pub fn is_admissible(&self) -> bool {
        let nu_ok = |nu: f64| nu > 4.0 && nu < 200.0;
        match *self {
            ErrorDist::Normal => true,
            ErrorDist::StudentT { nu } => nu_ok(nu),
            ErrorDist::SkewT { nu, lambda } => nu_ok(nu) && lambda > -1.0 && lambda < 1.0,
        }
    }

    /// Precomputes the density constants for repeated evaluation.
    pub fn density(&self) -> Result<StdDensity, DistError> {
        StdDensity::new(*self)
    }

    /// Log density at `e`. Returns NaN for an invalid parameterization.
    pub fn log_pdf(&self, e: f64) -> f64 {
        match self.density() {
            Ok(d) => d.log_pdf(e),
            Err(_) => f64::NAN,
        }
    }

    pub fn pdf(&self, e: f64) -> f64 {
        self.log_pdf(e).exp()
    }

    /// Cumulative distribution function. Returns NaN for an invalid
    /// parameterization.
    pub fn cdf(&self, e: f64) -> f64 {
        match *self {
            ErrorDist::Normal => std_normal_cdf(e),
            ErrorDist::StudentT { nu } => {
                if !(nu > 2.0) {
                    return f64::NAN;
                }
                t_cdf(e * (nu / (nu - 2.0)).sqrt(), nu)
            }
            ErrorDist::SkewT { nu, lambda } => {
                let Ok(k) = skewt_constants(nu, lambda) else {
                    return f64::NAN;
                };
                let z = k.b * e + k.a;
                let s = (nu / (nu - 2.0)).sqrt();
                if z < 0.0 {
                    (1.0 - lambda) * t_cdf(s * z / (1.0 - lambda), nu)
                } else {
                    0.5 * (1.0 - lambda) + (1.0 + lambda) * (t_cdf(s * z / (1.0 + lambda), nu) - 0.5)
                }
            }
        }
    }

    /// Inverse CDF at lower-tail probability `p`.
    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::InvalidProbability(p));
        }
        self.validate()?;
        Ok(match *self {
            ErrorDist::Normal => std_normal_quantile(p),
            ErrorDist::StudentT { nu } => ((nu - 2.0) / nu).sqrt() * t_quantile(p, nu),
            ErrorDist::SkewT { nu, lambda } => {
                let k = skewt_constants(nu, lambda)?;
                let s = ((nu - 2.0) / nu).sqrt();
                let knot_mass = 0.5 * (1.0 - lambda);
                if p < knot_mass {
                    (1.0 - lambda) / k.b * s * t_quantile(p / (1.0 - lambda), nu) - k.a / k.b
                } else {
                    let q = 0.5 + (p - knot_mass) / (1.0 + lambda);
                    (1.0 + lambda) / k.b * s * t_quantile(q, nu) - k.a / k.b
                }
            }
        })
    }

    /// Lower-tail conditional expectation `E[ε | ε < quantile(p)]`.
    pub fn tail_expectation(&self, p: f64) -> Result<f64, DistError> {
        let q = self.quantile(p)?;
        Ok(match *self {
            ErrorDist::Normal => -std_normal_pdf(q) / p,
            ErrorDist::StudentT { nu } => {
                if !(nu > 2.0) {
                    return Err(DistError::UndefinedMoment(nu));
                }
                let t = t_quantile(p, nu);
                let g = t_ln_pdf(t, nu).exp();
                -g / p * (nu + t * t) / (nu - 1.0) * ((nu - 2.0) / nu).sqrt()
            }
            ErrorDist::SkewT { nu, lambda } => {
                let k = skewt_constants(nu, lambda)?;
                skewt_partial_expectation(&k, nu, lambda, q, p) / p
            }
        })
    }
}

/// `∫_{-∞}^{θ} ε f(ε) dε` for the skewed t, given `mass = F(θ)`.
fn skewt_partial_expectation(k: &SkewTConstants, nu: f64, lambda: f64, theta: f64, mass: f64) -> f64 {
    let z = k.b * theta + k.a;
    let expo = 0.5 * (1.0 - nu);
    let s_lo = (nu - 2.0) * (1.0 - lambda) * (1.0 - lambda);
    let first = if z < 0.0 {
        s_lo * (1.0 + z * z / s_lo).powf(expo)
    } else {
        let s_hi = (nu - 2.0) * (1.0 + lambda) * (1.0 + lambda);
        s_lo + s_hi * ((1.0 + z * z / s_hi).powf(expo) - 1.0)
    };
    k.c / k.b * first / (1.0 - nu) - k.a / k.b * mass
}

/// Log-density evaluator with the distribution constants hoisted out.
#[derive(Debug, Clone, Copy)]
pub struct StdDensity {
    repr: DensityRepr,
}

#[derive(Debug, Clone, Copy)]
enum DensityRepr {
    Normal,
    StudentT { log_norm: f64, half_nu1: f64, inv_nu2: f64 },
    SkewT { log_norm: f64, half_nu1: f64, inv_nu2: f64, a: f64, b: f64, inv_lo: f64, inv_hi: f64 },
}

impl StdDensity {
    pub fn new(dist: ErrorDist) -> Result<Self, DistError> {
        dist.validate()?;
        let repr = match dist {
            ErrorDist::Normal => DensityRepr::Normal,
            ErrorDist::StudentT { nu } => {
                DensityRepr::StudentT { log_norm: ln_t_norm(nu), half_nu1: 0.5 * (nu + 1.0), inv_nu2: 1.0 / (nu - 2.0) }
            }
            ErrorDist::SkewT { nu, lambda } => {
                let k = skewt_constants(nu, lambda)?;
                DensityRepr::SkewT {
                    log_norm: k.b.ln() + k.c.ln(),
                    half_nu1: 0.5 * (nu + 1.0),
                    inv_nu2: 1.0 / (nu - 2.0),
                    a: k.a,
                    b: k.b,
                    inv_lo: 1.0 / (1.0 - lambda),
                    inv_hi: 1.0 / (1.0 + lambda),
                }
            }
        };
        Ok(Self { repr })
    }

    #[inline]
    pub fn log_pdf(&self, e: f64) -> f64 {
        match self.repr {
            DensityRepr::Normal => -LN_SQRT_2PI - 0.5 * e * e,
            DensityRepr::StudentT { log_norm, half_nu1, inv_nu2 } => log_norm - half_nu1 * (e * e * inv_nu2).ln_1p(),
            DensityRepr::SkewT { log_norm, half_nu1, inv_nu2, a, b, inv_lo, inv_hi } => {
                let z = b * e + a;
                let w = if z < 0.0 { z * inv_lo } else { z * inv_hi };
                log_norm - half_nu1 * (w * w * inv_nu2).ln_1p()
            }
        }
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-LN_SQRT_2PI - 0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    // one Newton polish; erfc_inv is already close to machine precision
    let f = std_normal_pdf(x);
    if f > 0.0 {
        x -= (std_normal_cdf(x) - p) / f;
    }
    x
}

/// Log density of the unstandardized Student-t with ν degrees of freedom.
pub fn t_ln_pdf(x: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln() - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
}

/// CDF of the unstandardized Student-t with ν degrees of freedom.
pub fn t_cdf(x: f64, nu: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let x2 = x * x;
    // Use whichever incomplete-beta argument is far from 1 to keep precision.
    let tail = if x2 < nu { 0.5 - 0.5 * beta_reg(0.5, 0.5 * nu, x2 / (nu + x2)) } else { 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x2)) };
    if x < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Inverse CDF of the unstandardized Student-t, polished by Newton steps
/// to roughly 1e-12 in probability.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let lower = p.min(1.0 - p);
    let y = inv_beta_reg(0.5 * nu, 0.5, 2.0 * lower);
    let mut x = -(nu * (1.0 - y) / y).sqrt();
    if !x.is_finite() {
        x = -1e300_f64.sqrt();
    }
    for _ in 0..4 {
        let f = t_ln_pdf(x, nu).exp();
        if !(f > 0.0) {
            break;
        }
        let step = (t_cdf(x, nu) - lower) / f;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    if p < 0.5 {
        x
    } else {
        -x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_constants() {
        let k = skewt_constants(5.0, 0.0).unwrap();
        assert_eq!(k.a, 0.0);
        assert_eq!(k.b, 1.0);
    }

    #[test]
    fn constants_odd_in_lambda() {
        for &l in &[0.1, 0.5, 0.9] {
            let p = skewt_constants(4.4, l).unwrap();
            let m = skewt_constants(4.4, -l).unwrap();
            assert_eq!(p.a, -m.a);
            assert_eq!(p.b, m.b);
        }
    }

    #[test]
    fn constants_reject_bad_shape() {
        assert!(matches!(skewt_constants(2.0, 0.1), Err(DistError::InvalidDof(_))));
        assert!(matches!(skewt_constants(5.0, 1.0), Err(DistError::InvalidSkew(_))));
    }

    #[test]
    fn normal_mode() {
        let v = ErrorDist::Normal.log_pdf(0.0);
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn skewt_reduces_to_t() {
        let t = ErrorDist::StudentT { nu: 6.3 };
        let s = ErrorDist::SkewT { nu: 6.3, lambda: 0.0 };
        for i in 0..=200 {
            let e = -10.0 + 0.1 * i as f64;
            assert!((t.log_pdf(e) - s.log_pdf(e)).abs() < 1e-12);
            assert!((t.cdf(e) - s.cdf(e)).abs() < 1e-12);
        }
    }

    #[test]
    fn t_cdf_symmetric_at_zero() {
        assert_eq!(ErrorDist::StudentT { nu: 4.4 }.cdf(0.0), 0.5);
    }

    #[test]
    fn normal_quantile_value() {
        let q = ErrorDist::Normal.quantile(0.025).unwrap();
        assert!((q + 1.959_963_984_540_054).abs() < 1e-6);
    }

    #[test]
    fn knot_mass_identity() {
        for &(nu, l) in &[(4.4, 0.5), (8.0, -0.3), (30.0, 0.8)] {
            let d = ErrorDist::SkewT { nu, lambda: l };
            let k = skewt_constants(nu, l).unwrap();
            assert!((d.cdf(k.knot()) - 0.5 * (1.0 - l)).abs() < 1e-14);
            let q = d.quantile(0.5 * (1.0 - l)).unwrap();
            assert!((q - k.knot()).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_round_trip() {
        let dists = [
            ErrorDist::Normal,
            ErrorDist::StudentT { nu: 4.4 },
            ErrorDist::StudentT { nu: 150.0 },
            ErrorDist::SkewT { nu: 4.4, lambda: 0.5 },
            ErrorDist::SkewT { nu: 10.0, lambda: -0.7 },
        ];
        for d in dists {
            for &a in &[1e-4, 0.01, 0.025, 0.3, 0.5, 0.7, 0.975, 0.9999] {
                let q = d.quantile(a).unwrap();
                assert!((d.cdf(q) - a).abs() < 1e-8, "{d:?} {a}");
            }
        }
    }

    #[test]
    fn quantile_rejects_bad_probability() {
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(ErrorDist::Normal.quantile(p).is_err());
        }
    }

    #[test]
    fn normal_tail_expectation() {
        let es = ErrorDist::Normal.tail_expectation(0.025).unwrap();
        assert!((es + 2.337_802_569_389_976).abs() < 1e-5);
    }

    #[test]
    fn large_nu_close_to_normal() {
        // The gap grows in the far tail (7.0e-3 at 0.01), so the grid stops at 2.5%.
        let t = ErrorDist::StudentT { nu: 200.0 };
        for i in 1..=39 {
            let a = i as f64 * 0.025;
            let d = (t.quantile(a).unwrap() - ErrorDist::Normal.quantile(a).unwrap()).abs();
            assert!(d < 5e-3, "alpha {a}: {d}");
        }
    }

    #[test]
    fn tail_expectation_below_quantile() {
        let d = ErrorDist::SkewT { nu: 4.4, lambda: 0.9 };
        // 0.2 > (1 - λ)/2 exercises the upper-branch partial expectation
        for &a in &[0.001, 0.01, 0.025, 0.04, 0.2, 0.45] {
            assert!(d.tail_expectation(a).unwrap() < d.quantile(a).unwrap());
        }
    }
}
