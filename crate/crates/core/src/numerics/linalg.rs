use nalgebra::{DMatrix, DVector};

/// Inverse of a symmetric positive definite matrix, or `None` when the
/// Cholesky factorization fails.
pub fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let inv = sym.cholesky()?.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}

/// `v' M v`
pub fn quadratic_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub dim: usize,
}

/// Moore-Penrose inverse of a symmetric matrix through its eigendecomposition.
/// Eigenvalues below `rel_tol` times the largest one are treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> PseudoInverse {
    let sym = (m + m.transpose()) * 0.5;
    let dim = sym.nrows();
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut inv_vals = DVector::zeros(dim);
    let mut rank = 0;
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v.abs() > rel_tol * max && v.abs() > 0.0 {
            inv_vals[i] = 1.0 / v;
            rank += 1;
        }
    }
    let q = &eig.eigenvectors;
    let matrix = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    PseudoInverse { matrix, rank, dim }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_inverse_and_pinv_agree_on_full_rank() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let a = inverse_spd(&m).unwrap();
        let b = pseudo_inverse(&m, 1e-12);
        assert_eq!(b.rank, 3);
        assert!((a - b.matrix).abs().max() < 1e-12);
    }

    #[test]
    fn pinv_reports_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(inverse_spd(&m).is_none());
        let p = pseudo_inverse(&m, 1e-10);
        assert_eq!(p.rank, 1);
        assert!((&m * &p.matrix * &m - &m).abs().max() < 1e-12);
    }
}
