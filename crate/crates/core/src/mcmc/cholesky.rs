//! Rank-one update and downdate of a lower-triangular Cholesky factor.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite;

/// Replaces `l` by the factor of `l lᵀ + sign·v vᵀ` (`sign` = ±1).
///
/// Works column by column with Givens-style rotations. On failure `l` is
/// left untouched.
pub fn rank_one_update(l: &mut DMatrix<f64>, v: &DVector<f64>, sign: f64) -> Result<(), NotPositiveDefinite> {
    let n = l.nrows();
    debug_assert_eq!(l.ncols(), n);
    debug_assert_eq!(v.len(), n);
    let mut out = l.clone();
    let mut w = v.clone();
    for j in 0..n {
        let ljj = out[(j, j)];
        let wj = w[j];
        let arg = ljj * ljj + sign * wj * wj;
        if !(arg > 0.0) || !arg.is_finite() || ljj == 0.0 {
            return Err(NotPositiveDefinite);
        }
        let r = arg.sqrt();
        let c = r / ljj;
        let s = wj / ljj;
        out[(j, j)] = r;
        for i in j + 1..n {
            out[(i, j)] = (out[(i, j)] + sign * s * w[i]) / c;
            w[i] = c * w[i] - s * out[(i, j)];
        }
    }
    *l = out;
    Ok(())
}

/// Lower Cholesky factor of a symmetric matrix, adding the smallest ridge
/// from `ridge, 10·ridge, ...` needed for positive definiteness.
pub fn cholesky_with_ridge(a: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    if let Some(c) = a.clone().cholesky() {
        return Some(c.l());
    }
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut eps = ridge;
    for _ in 0..16 {
        let m = a + DMatrix::identity(n, n) * (eps * scale);
        if let Some(c) = m.cholesky() {
            return Some(c.l());
        }
        eps *= 10.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0, 1.2, -0.6, 1.2, 3.0, 0.5, -0.6, 0.5, 2.0])
    }

    #[test]
    fn update_matches_refactorization() {
        let a = spd();
        let mut l = a.clone().cholesky().unwrap().l();
        let v = DVector::from_vec(vec![0.3, -1.1, 0.7]);
        rank_one_update(&mut l, &v, 1.0).unwrap();
        let target = &a + &v * v.transpose();
        assert!((&l * l.transpose() - target).norm() < 1e-12);
        for i in 0..3 {
            assert!(l[(i, i)] > 0.0);
            for j in i + 1..3 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn downdate_inverts_update() {
        let a = spd();
        let l0 = a.clone().cholesky().unwrap().l();
        let mut l = l0.clone();
        let v = DVector::from_vec(vec![0.5, 0.2, -0.4]);
        rank_one_update(&mut l, &v, 1.0).unwrap();
        rank_one_update(&mut l, &v, -1.0).unwrap();
        assert!((l - l0).norm() < 1e-12);
    }

    #[test]
    fn failed_downdate_leaves_factor() {
        let mut l = DMatrix::identity(2, 2);
        let v = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(rank_one_update(&mut l, &v, -1.0), Err(NotPositiveDefinite));
        assert_eq!(l, DMatrix::identity(2, 2));
    }

    #[test]
    fn ridge_repairs_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = cholesky_with_ridge(&a, 1e-10).unwrap();
        assert!((&l * l.transpose() - a).norm() < 1e-6);
    }
}
