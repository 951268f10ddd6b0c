//! Multivariate normal sampling and density, parameterized by the lower
//! Cholesky factor of the covariance.

use super::linalg::solve_lower;
use super::matrix::Matrix;
use super::rng::Rng;
use crate::Error;

pub const LN_2PI: f64 = 1.837877066409345483560659472811;

/// One draw: mean + L z with z standard normal.
pub fn mvn_sample(mean: &[f64], chol: &Matrix, rng: &mut Rng) -> Vec<f64> {
    let n = mean.len();
    assert_eq!(chol.rows(), n, "mvn_sample dimension mismatch");
    assert_eq!(chol.cols(), n, "mvn_sample factor must be square");
    let mut z = vec![0.0; n];
    rng.fill_normal(&mut z);
    let mut out = mean.to_vec();
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..=i.min(n.saturating_sub(1)) {
            acc += chol.get(i, k) * z[k];
        }
        out[i] += acc;
    }
    out
}

/// Log density of x under N(mean, L L^T).
///
/// log p = -1/2 ||L^{-1}(x - mean)||^2 - sum_i ln L_ii - (n/2) ln 2 pi
pub fn mvn_log_pdf(x: &[f64], mean: &[f64], chol: &Matrix) -> Result<f64, Error> {
    let n = mean.len();
    if x.len() != n || chol.rows() != n || chol.cols() != n {
        return Err(Error::Shape(format!(
            "mvn_log_pdf dims: x {} mean {} chol {}x{}",
            x.len(),
            n,
            chol.rows(),
            chol.cols()
        )));
    }
    let mut diff = vec![0.0; n];
    for i in 0..n {
        diff[i] = x[i] - mean[i];
    }
    let y = solve_lower(chol, &diff);
    let quad: f64 = y.iter().map(|v| v * v).sum();
    let mut log_det = 0.0;
    for i in 0..n {
        let d = chol.get(i, i);
        if d <= 0.0 {
            return Err(Error::Numeric(format!(
                "mvn_log_pdf: non-positive factor diagonal {d} at {i}"
            )));
        }
        log_det += d.ln();
    }
    Ok(-0.5 * quad - log_det - 0.5 * n as f64 * LN_2PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::linalg::cholesky;
    use crate::numkit::stats::mean_and_covariance;

    #[test]
    fn zero_factor_returns_mean() {
        let mut rng = Rng::new(1);
        let mean = [1.5, -2.0, 0.25];
        let l = Matrix::zeros(3, 3);
        let x = mvn_sample(&mean, &l, &mut rng);
        assert_eq!(x, mean.to_vec());
    }

    #[test]
    fn sample_moments_converge() {
        let mut rng = Rng::new(2);
        let mean = vec![1.0, -1.0];
        // covariance [[1, 0.6], [0.6, 2]]
        let cov = Matrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 2.0]]).unwrap();
        let l = cholesky(&cov).unwrap();
        let n = 20_000;
        let mut draws = Matrix::zeros(n, 2);
        for i in 0..n {
            let x = mvn_sample(&mean, &l, &mut rng);
            draws.row_mut(i).copy_from_slice(&x);
        }
        let (m, c) = mean_and_covariance(&draws).unwrap();
        assert!((m[0] - 1.0).abs() < 0.05 && (m[1] + 1.0).abs() < 0.05);
        for (i, j, want) in [(0, 0, 1.0), (0, 1, 0.6), (1, 1, 2.0)] {
            assert!(
                (c.get(i, j) - want).abs() < 0.1,
                "cov({i},{j}) = {}",
                c.get(i, j)
            );
        }
    }

    #[test]
    fn standard_normal_log_pdf_at_zero() {
        let l = Matrix::identity(1);
        let got = mvn_log_pdf(&[0.0], &[0.0], &l).unwrap();
        assert!((got - (-0.9189385332046727)).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn diagonal_two_dim_at_mean() {
        // N(mean, diag(1, 4)): log p(mean) = -ln 2 - ln 2pi
        let cov = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let l = cholesky(&cov).unwrap();
        let got = mvn_log_pdf(&[3.0, -1.0], &[3.0, -1.0], &l).unwrap();
        let want = -(2.0f64.ln()) - LN_2PI;
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    /// Oracle: evaluate the density through an explicitly inverted covariance.
    #[test]
    fn matches_dense_inverse_oracle() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let n = 1 + rng.range(5);
            let mut b = Matrix::zeros(n, n);
            rng.fill_normal(b.data_mut());
            let mut cov = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += b.get(i, k) * b.get(j, k);
                    }
                    cov.set(i, j, s + if i == j { 0.5 } else { 0.0 });
                }
            }
            let l = cholesky(&cov).unwrap();
            let mut mean = vec![0.0; n];
            let mut x = vec![0.0; n];
            rng.fill_normal(&mut mean);
            rng.fill_normal(&mut x);

            // dense inverse by Gauss-Jordan
            let mut aug: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut row: Vec<f64> = cov.row(i).to_vec();
                    row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                    row
                })
                .collect();
            for col in 0..n {
                let pivot = (col..n)
                    .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
                    .unwrap();
                aug.swap(col, pivot);
                let p = aug[col][col];
                for v in aug[col].iter_mut() {
                    *v /= p;
                }
                for r in 0..n {
                    if r != col {
                        let f = aug[r][col];
                        for c in 0..2 * n {
                            aug[r][c] -= f * aug[col][c];
                        }
                    }
                }
            }
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    quad += (x[i] - mean[i]) * aug[i][j + n] * (x[j] - mean[j]);
                }
            }
            // log det from the factor diagonal
            let log_det: f64 = (0..n).map(|i| l.get(i, i).ln()).sum::<f64>() * 2.0;
            let want = -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
            let got = mvn_log_pdf(&x, &mean, &l).unwrap();
            assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
        }
    }

    /// 1-D density integrates to 1 over +-8 sigma by trapezoid rule.
    #[test]
    fn one_dim_density_integrates_to_one() {
        let mut l = Matrix::zeros(1, 1);
        l.set(0, 0, 1.7);
        let mean = [0.4];
        let steps = 4000;
        let (lo, hi) = (mean[0] - 8.0 * 1.7, mean[0] + 8.0 * 1.7);
        let dx = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for i in 0..=steps {
            let x = lo + i as f64 * dx;
            let p = mvn_log_pdf(&[x], &mean, &l).unwrap().exp();
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            total += w * p * dx;
        }
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mean = [0.0, 1.0];
        let cov = Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let l = cholesky(&cov).unwrap();
        let a = mvn_sample(&mean, &l, &mut Rng::new(11));
        let b = mvn_sample(&mean, &l, &mut Rng::new(11));
        assert_eq!(a, b);
    }
}
