//! Percentiles and sample moments.

use super::matrix::Matrix;
use crate::Error;

/// Percentile with linear interpolation between order statistics.
///
/// For p in [0, 1] the rank is h = p * (n - 1); the result interpolates
/// between the floor(h)-th and ceil(h)-th smallest values. p = 0 gives the
/// minimum, p = 1 the maximum.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, Error> {
    if values.is_empty() {
        return Err(Error::Contract("percentile of an empty slice".into()));
    }
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Contract(format!("percentile p={p} outside [0,1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in percentile input"));
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Sample mean vector and unbiased (n-1) covariance matrix of the rows.
///
/// Needs at least two rows. The covariance is symmetric by construction.
pub fn mean_and_covariance(samples: &Matrix) -> Result<(Vec<f64>, Matrix), Error> {
    let n = samples.rows();
    let d = samples.cols();
    if n < 2 {
        return Err(Error::Contract(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in samples.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in samples.iter_rows() {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(mean.iter())) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                let v = cov.get(i, j) + ci * centered[j];
                cov.set(i, j, v);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn median_of_three() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn interpolated_tail_value() {
        // 0..=99, p = 0.05 -> h = 4.95 -> 4.95
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let got = percentile(&v, 0.05).unwrap();
        assert!((got - 4.95).abs() < 1e-12, "got {got}");
        let hi = percentile(&v, 0.95).unwrap();
        assert!((hi - 94.05).abs() < 1e-12, "got {hi}");
    }

    #[test]
    fn extremes_are_min_and_max() {
        let v = [5.0, -1.0, 9.0, 2.0];
        assert_eq!(percentile(&v, 0.0).unwrap(), -1.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 9.0);
    }

    #[test]
    fn contract_errors() {
        assert!(percentile(&[], 0.5).is_err());
        assert!(percentile(&[1.0], 1.5).is_err());
        assert!(percentile(&[1.0], -0.1).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_p_and_permutation_invariant(
            mut v in proptest::collection::vec(-1e6f64..1e6, 1..50),
            p1 in 0.0f64..1.0,
            p2 in 0.0f64..1.0,
            seed in 0u64..1000,
        ) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let a = percentile(&v, lo).unwrap();
            let b = percentile(&v, hi).unwrap();
            prop_assert!(a <= b);
            let before = percentile(&v, lo).unwrap();
            Rng::new(seed).shuffle(&mut v);
            let after = percentile(&v, lo).unwrap();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn two_point_hand_values() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let (mean, cov) = mean_and_covariance(&m).unwrap();
        assert_eq!(mean, vec![1.0, 1.0]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((cov.get(i, j) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_rows_have_zero_covariance() {
        let m = Matrix::from_rows(&vec![vec![3.0, -1.0]; 10]).unwrap();
        let (mean, cov) = mean_and_covariance(&m).unwrap();
        assert_eq!(mean, vec![3.0, -1.0]);
        assert!(cov.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_is_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(mean_and_covariance(&m).is_err());
    }

    /// Independently written per-entry oracle: cov[i][j] via an explicit loop.
    #[test]
    fn matches_naive_oracle_on_random_data() {
        let mut rng = Rng::new(7);
        let (n, d) = (40, 5);
        let mut m = Matrix::zeros(n, d);
        rng.fill_normal(m.data_mut());
        let (mean, cov) = mean_and_covariance(&m).unwrap();
        for j in 0..d {
            let mu: f64 = (0..n).map(|r| m.get(r, j)).sum::<f64>() / n as f64;
            assert!((mean[j] - mu).abs() < 1e-10);
        }
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for r in 0..n {
                    s += (m.get(r, i) - mean[i]) * (m.get(r, j) - mean[j]);
                }
                s /= (n - 1) as f64;
                assert!((cov.get(i, j) - s).abs() < 1e-10);
                assert_eq!(cov.get(i, j), cov.get(j, i));
            }
        }
    }
}
