use super::ModelError;
use crate::distributions::DistKind;
use serde::{Deserialize, Serialize};

/// Position of every parameter in packed vectors:
/// `[μ, ω, β, τ₁, τ₂, γ_1..γ_K, (ξ_k, φ_k, δ_k1, δ_k2, σ²_k) for k = 1..K, ν?, λ?]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub k: usize,
    pub kind: DistKind,
}

impl ParamLayout {
    pub fn new(k: usize, kind: DistKind) -> Self {
        Self { k, kind }
    }

    pub fn len(&self) -> usize {
        5 + 6 * self.k + self.kind.n_params()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check_len(&self, v: &[f64]) -> Result<(), ModelError> {
        if v.len() == self.len() {
            Ok(())
        } else {
            Err(ModelError::Layout { expected: self.len(), found: v.len() })
        }
    }

    pub const MU: usize = 0;
    pub const OMEGA: usize = 1;
    pub const BETA: usize = 2;
    pub const TAU1: usize = 3;
    pub const TAU2: usize = 4;

    pub fn gamma(&self, j: usize) -> usize {
        5 + j
    }

    fn psi(&self, j: usize) -> usize {
        5 + self.k + 5 * j
    }

    pub fn xi(&self, j: usize) -> usize {
        self.psi(j)
    }

    pub fn phi(&self, j: usize) -> usize {
        self.psi(j) + 1
    }

    pub fn delta1(&self, j: usize) -> usize {
        self.psi(j) + 2
    }

    pub fn delta2(&self, j: usize) -> usize {
        self.psi(j) + 3
    }

    pub fn sigma2(&self, j: usize) -> usize {
        self.psi(j) + 4
    }

    pub fn nu(&self) -> Option<usize> {
        (self.kind != DistKind::Normal).then_some(5 + 6 * self.k)
    }

    pub fn lambda(&self) -> Option<usize> {
        (self.kind == DistKind::SkewT).then_some(6 + 6 * self.k)
    }

    /// Parameter names in layout order, e.g. `gamma1`, `delta1_2`, `sigma2_u1`.
    pub fn names(&self) -> Vec<String> {
        let mut n: Vec<String> = ["mu", "omega", "beta", "tau1", "tau2"].iter().map(|s| s.to_string()).collect();
        for j in 1..=self.k {
            n.push(format!("gamma{j}"));
        }
        for j in 1..=self.k {
            n.push(format!("xi{j}"));
            n.push(format!("phi{j}"));
            n.push(format!("delta{j}_1"));
            n.push(format!("delta{j}_2"));
            n.push(format!("sigma2_u{j}"));
        }
        if self.nu().is_some() {
            n.push("nu".into());
        }
        if self.lambda().is_some() {
            n.push("lambda".into());
        }
        n
    }

    /// Indices that are stored transformed by `pack`.
    pub fn is_transformed(&self, i: usize) -> bool {
        (0..self.k).any(|j| self.sigma2(j) == i) || self.nu() == Some(i) || self.lambda() == Some(i)
    }

    /// `log |dθ/dz|` of the `unpack` map at packed vector `z`.
    pub fn log_jacobian(&self, z: &[f64]) -> f64 {
        let mut lj = 0.0;
        for j in 0..self.k {
            lj += z[self.sigma2(j)];
        }
        if let Some(i) = self.nu() {
            // dν/dz = 196 s (1 - s), s = logistic(z)
            let a = z[i].abs();
            lj += 196f64.ln() - a - 2.0 * (-a).exp().ln_1p();
        }
        if let Some(i) = self.lambda() {
            // dλ/dz = 1 - tanh² z = 4 / (e^z + e^-z)²
            let a = z[i].abs();
            lj += 4f64.ln() - 2.0 * a - 2.0 * (-2.0 * a).exp().ln_1p();
        }
        lj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_match_length() {
        for k in 1..=3 {
            for kind in [DistKind::Normal, DistKind::StudentT, DistKind::SkewT] {
                let l = ParamLayout::new(k, kind);
                assert_eq!(l.names().len(), l.len());
            }
        }
        let l = ParamLayout::new(2, DistKind::SkewT);
        let names = l.names();
        assert_eq!(names[l.gamma(1)], "gamma2");
        assert_eq!(names[l.sigma2(1)], "sigma2_u2");
        assert_eq!(names[l.lambda().unwrap()], "lambda");
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let l = ParamLayout::new(1, DistKind::SkewT);
        let mut z = vec![0.0; l.len()];
        z[l.sigma2(0)] = -1.3;
        z[l.nu().unwrap()] = 0.7;
        z[l.lambda().unwrap()] = -0.4;
        let nu = |z: f64| 4.0 + 196.0 / (1.0 + (-z).exp());
        let h = 1e-6;
        let dnu = (nu(0.7 + h) - nu(0.7 - h)) / (2.0 * h);
        let dlam = ((-0.4f64 + h).tanh() - (-0.4f64 - h).tanh()) / (2.0 * h);
        let expect = -1.3 + dnu.ln() + dlam.ln();
        assert!((l.log_jacobian(&z) - expect).abs() < 1e-8);
    }
}
