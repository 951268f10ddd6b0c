//! Cholesky factorization and triangular solves.

use super::matrix::Matrix;
use crate::Error;

/// Lower-triangular Cholesky factor L with A = L L^T.
///
/// `a` must be square and symmetric; asymmetry beyond 1e-9 (relative to the
/// largest entry) is rejected. A non-positive pivot means the matrix is not
/// positive definite and is reported as an error rather than NaN.
pub fn cholesky(a: &Matrix) -> Result<Matrix, Error> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.cols()
        )));
    }
    let scale = a.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-9 * scale {
                return Err(Error::Numeric(format!(
                    "cholesky input not symmetric at ({i},{j})"
                )));
            }
        }
    }

    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "matrix not positive definite (pivot {sum:.3e} at {i})"
                    )));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves L y = b for lower-triangular L.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n, "solve_lower dimension mismatch");
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    y
}

/// Solves L^T x = b for lower-triangular L (so L^T is upper-triangular).
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n, "solve_lower_transpose dimension mismatch");
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in (i + 1)..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng::Rng;

    #[test]
    fn identity_factors_to_identity() {
        let l = cholesky(&Matrix::identity(4)).unwrap();
        assert_eq!(l, Matrix::identity(4));
    }

    #[test]
    fn two_by_two_hand_value() {
        // [[4,2],[2,3]] -> L = [[2,0],[1,sqrt(2)]]
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!((l.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((l.get(1, 0) - 1.0).abs() < 1e-12);
        assert!((l.get(1, 1) - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(l.get(0, 1), 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        // eigenvalues 3 and -1
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::Numeric(_))));
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::Numeric(_))));
    }

    /// Random SPD matrices (A = B B^T + n I) reconstruct within 1e-8 relative.
    #[test]
    fn random_spd_reconstruction() {
        let mut rng = Rng::new(99);
        for trial in 0..20 {
            let n = 1 + rng.range(32);
            let mut b = Matrix::zeros(n, n);
            rng.fill_normal(b.data_mut());
            // A = B B^T + n I
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += b.get(i, k) * b.get(j, k);
                    }
                    a.set(i, j, s + if i == j { n as f64 } else { 0.0 });
                }
            }
            let l = cholesky(&a).unwrap();
            let scale = a.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += l.get(i, k) * l.get(j, k);
                    }
                    assert!(
                        (s - a.get(i, j)).abs() <= 1e-8 * scale,
                        "trial {trial}: reconstruction off at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn triangular_solves_invert_each_other() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap();
        let l = cholesky(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let y = solve_lower(&l, &b);
        // L y should equal b
        let back = l.matvec(&y);
        for (u, v) in back.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
        let x = solve_lower_transpose(&l, &y);
        // A x = L L^T x = L y = b
        let ax = a.matvec(&x);
        for (u, v) in ax.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
