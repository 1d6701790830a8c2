//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Lower Cholesky factor of a symmetric matrix. On failure returns the
/// first column whose pivot is not positive relative to the diagonal scale.
pub fn cholesky(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>, usize> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= rel_tol * scale || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L L' x = b`.
pub fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(b).expect("nonsingular factor");
    l.transpose().solve_upper_triangular(&y).expect("nonsingular factor")
}

/// `(L L')^{-1}`.
pub fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("nonsingular factor");
    linv.transpose() * linv
}

/// Symmetrizes in place against rounding drift.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solve_and_invert() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 2.0, 0.5, 0.6, 0.5, 3.0]);
        let l = cholesky(&a, 1e-12).unwrap();
        assert!((&l * l.transpose() - &a).amax() < 1e-14);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = chol_solve(&l, &b);
        assert!((&a * x - b).amax() < 1e-13);
        assert!((&a * chol_inverse(&l) - DMatrix::identity(3, 3)).amax() < 1e-13);
    }

    #[test]
    fn reports_failing_column() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(cholesky(&a, 1e-12), Err(1));
    }
}
