//! Small dense helpers for symmetric positive semidefinite matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero when taking square roots.
pub const EIGEN_CLIP: f64 = 1e-12;

fn scale(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let s = scale(m);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * s))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    min_eigenvalue(m) >= -EIGEN_CLIP * scale(m)
}

/// Symmetric square root `S` with `S * S = m`, clipping tiny eigenvalues to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(m, 1e-12) {
        return Err(Error::NotSymmetric);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let s = scale(m);
    let eig = SymmetricEigen::new(m.clone());
    let mut root = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -EIGEN_CLIP * s {
            return Err(Error::NotPsd(lambda));
        }
        if lambda <= EIGEN_CLIP * s {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        root += lambda.sqrt() * v * v.transpose();
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[0.005, 0.001, 0.001, 0.005]);
        let r = psd_sqrt(&m).unwrap();
        assert!((&r * &r - &m).abs().max() < 1e-15);
    }

    #[test]
    fn rank_deficient_is_fine() {
        let m = DMatrix::from_row_slice(2, 2, &[0.005, 0.0, 0.0, 0.0]);
        let r = psd_sqrt(&m).unwrap();
        assert!((r[(0, 0)] - 0.005f64.sqrt()).abs() < 1e-15);
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn indefinite_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(psd_sqrt(&m), Err(Error::NotPsd(_))));
        assert!(!is_psd(&m));
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(psd_sqrt(&a), Err(Error::NotSymmetric)));
    }
}
