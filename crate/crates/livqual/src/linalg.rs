//! Small dense linear algebra: 2x2 symmetric eigenvalues and Cholesky
//! factorization for the low-dimensional (d <= 10) classifier covariances.

/// Eigenvalues of the symmetric matrix [[a, b], [b, c]], largest first.
pub fn eigenvalues_sym2x2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let half_trace = 0.5 * (a + c);
    let half_gap = 0.5 * ((a - c).powi(2) + 4.0 * b * b).sqrt();
    (half_trace + half_gap, half_trace - half_gap)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix
/// in row-major order. Returns `None` when the matrix is not positive
/// definite.
pub fn cholesky(matrix: &[f64], dim: usize) -> Option<Vec<f64>> {
    assert_eq!(matrix.len(), dim * dim);
    let mut lower = vec![0.0f64; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = matrix[i * dim + j];
            for k in 0..j {
                sum -= lower[i * dim + k] * lower[j * dim + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                lower[i * dim + j] = sum.sqrt();
            } else {
                lower[i * dim + j] = sum / lower[j * dim + j];
            }
        }
    }
    Some(lower)
}

/// Solves A x = b given the Cholesky factor L of A (forward then back
/// substitution).
pub fn cholesky_solve(lower: &[f64], dim: usize, rhs: &[f64]) -> Vec<f64> {
    assert_eq!(rhs.len(), dim);
    let mut y = vec![0.0f64; dim];
    for i in 0..dim {
        let mut sum = rhs[i];
        for k in 0..i {
            sum -= lower[i * dim + k] * y[k];
        }
        y[i] = sum / lower[i * dim + i];
    }
    let mut x = vec![0.0f64; dim];
    for i in (0..dim).rev() {
        let mut sum = y[i];
        for k in i + 1..dim {
            sum -= lower[k * dim + i] * x[k];
        }
        x[i] = sum / lower[i * dim + i];
    }
    x
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    for i in 0..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_recovers_diagonal() {
        let (hi, lo) = eigenvalues_sym2x2(3.0, 0.0, 1.0);
        assert_eq!((hi, lo), (3.0, 1.0));
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = [[4,2,0],[2,5,1],[0,1,3]]
        let a = [4.0, 2.0, 0.0, 2.0, 5.0, 1.0, 0.0, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let x = cholesky_solve(&l, 3, &[2.0, -1.0, 4.0]);
        // Check A x = b.
        for (row, b) in [2.0, -1.0, 4.0].iter().enumerate() {
            let ax: f64 = (0..3).map(|j| a[row * 3 + j] * x[j]).sum();
            assert!((ax - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&a, 2).is_none());
    }
}
