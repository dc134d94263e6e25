//! Robust adaptive Metropolis: a random-walk sampler whose proposal factor
//! `S` is adapted by rank-one Cholesky updates so that the acceptance rate
//! approaches a target.

use super::cholesky::rank_one_update;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Target acceptance rate for a block of dimension `d`.
pub fn target_acceptance(d: usize) -> f64 {
    match d {
        0 | 1 => 0.44,
        2..=4 => 0.35,
        _ => 0.234,
    }
}

/// Adaptation step size `η_n = min(1, d·n^{-exponent})`.
pub fn step_size(n: u64, d: usize, exponent: f64) -> f64 {
    (d as f64 * (n as f64).powf(-exponent)).min(1.0)
}

/// Acceptance probability from log densities; `-inf` or NaN proposals
/// are never accepted.
#[inline]
pub(crate) fn accept_prob(lp_new: f64, lp_old: f64) -> f64 {
    if lp_new.is_nan() || lp_new == f64::NEG_INFINITY {
        return 0.0;
    }
    let d = lp_new - lp_old;
    if d >= 0.0 {
        1.0
    } else {
        d.exp()
    }
}

/// One block of coordinates with its adapted proposal factor.
#[derive(Debug, Clone)]
pub struct RamBlock {
    pub indices: Vec<usize>,
    /// Lower-triangular with positive diagonal.
    pub s: DMatrix<f64>,
    pub target: f64,
    pub n: u64,
    pub proposed: u64,
    pub accepted: u64,
    pub skipped_downdates: u64,
}

impl RamBlock {
    pub fn new(indices: Vec<usize>, init_scale: f64) -> Self {
        let d = indices.len();
        Self {
            target: target_acceptance(d),
            indices,
            s: DMatrix::identity(d, d) * init_scale,
            n: 0,
            proposed: 0,
            accepted: 0,
            skipped_downdates: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Proposes `Y = X + S U` on this block's coordinates, accepts with
    /// probability `min(1, π(Y)/π(X))`, then adapts `S`. Returns whether
    /// the proposal was accepted.
    pub fn step<F, R>(&mut self, x: &mut [f64], lp: &mut f64, log_density: &mut F, rng: &mut R, exponent: f64) -> bool
    where
        F: FnMut(&[f64]) -> f64,
        R: Rng + ?Sized,
    {
        let d = self.dim();
        let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let su = &self.s * &u;
        let mut y = x.to_vec();
        for (k, &i) in self.indices.iter().enumerate() {
            y[i] += su[k];
        }
        let lp_y = log_density(&y);
        let alpha = accept_prob(lp_y, *lp);
        let draw: f64 = rng.random();
        let accepted = draw < alpha;
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
            x.copy_from_slice(&y);
            *lp = lp_y;
        }

        self.n += 1;
        let eta = step_size(self.n, d, exponent);
        let gap = alpha - self.target;
        let norm = u.norm();
        if gap != 0.0 && norm > 0.0 {
            let v = su * ((eta * gap.abs()).sqrt() / norm);
            let sign = gap.signum();
            if rank_one_update(&mut self.s, &v, sign).is_err() {
                self.skipped_downdates += 1;
                log::debug!("RAM downdate skipped at n = {} (block {:?})", self.n, self.indices);
            }
        }
        accepted
    }
}
