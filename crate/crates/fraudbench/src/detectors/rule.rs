//! Extreme-value rule: reject a transaction when any feature falls into the
//! most extreme tails of the genuine training values.

use crate::numkit::{percentile, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExtremeValueRule {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Fits per-feature acceptance intervals. `tail_fraction` is the total
/// two-sided rejected mass per feature: the interval runs from the
/// (tail/2) to the (1 - tail/2) percentile of each column.
pub fn fit_extreme_rule(rows: &Matrix, tail_fraction: f64) -> Result<ExtremeValueRule> {
    if rows.rows() == 0 {
        return Err(Error::Contract("rule fit on an empty matrix".into()));
    }
    if !(0.0 < tail_fraction && tail_fraction < 0.5) || !tail_fraction.is_finite() {
        return Err(Error::Contract(format!(
            "tail fraction {tail_fraction} outside (0, 0.5)"
        )));
    }
    let d = rows.cols();
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    let mut column = vec![0.0; rows.rows()];
    for c in 0..d {
        for (r, v) in column.iter_mut().enumerate() {
            *v = rows.get(r, c);
        }
        lower.push(percentile(&column, tail_fraction / 2.0)?);
        upper.push(percentile(&column, 1.0 - tail_fraction / 2.0)?);
    }
    Ok(ExtremeValueRule { lower, upper })
}

impl ExtremeValueRule {
    /// 1 (block) iff any feature lies strictly outside its closed acceptance
    /// interval; boundary values are accepted.
    pub fn predict(&self, row: &[f64]) -> Result<u8> {
        if row.len() != self.lower.len() {
            return Err(Error::Shape(format!(
                "rule over {} features got a row of {}",
                self.lower.len(),
                row.len()
            )));
        }
        for ((v, lo), hi) in row.iter().zip(self.lower.iter()).zip(self.upper.iter()) {
            if v < lo || v > hi {
                return Ok(1);
            }
        }
        Ok(0)
    }

    /// True when the listed feature values all lie inside their intervals.
    /// Used to check partial rows (for example, only context features).
    pub fn accepts_at(&self, indices: &[usize], values: &[f64]) -> bool {
        indices
            .iter()
            .zip(values.iter())
            .all(|(&i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_interpolate_percentiles() {
        // column 0..=99: tail 0.10 -> [4.95, 94.05]
        let rows = Matrix::from_vec(100, 1, (0..100).map(f64::from).collect()).unwrap();
        let rule = fit_extreme_rule(&rows, 0.10).unwrap();
        assert!((rule.lower[0] - 4.95).abs() < 1e-12);
        assert!((rule.upper[0] - 94.05).abs() < 1e-12);
    }

    #[test]
    fn constant_column_collapses_interval() {
        let rows = Matrix::from_vec(10, 1, vec![3.0; 10]).unwrap();
        let rule = fit_extreme_rule(&rows, 0.2).unwrap();
        assert_eq!(rule.lower[0], 3.0);
        assert_eq!(rule.upper[0], 3.0);
        assert_eq!(rule.predict(&[3.0]).unwrap(), 0);
        assert_eq!(rule.predict(&[3.0001]).unwrap(), 1);
    }

    #[test]
    fn invalid_tail_is_rejected() {
        let rows = Matrix::from_vec(10, 1, (0..10).map(f64::from).collect()).unwrap();
        assert!(fit_extreme_rule(&rows, 0.0).is_err());
        assert!(fit_extreme_rule(&rows, 0.5).is_err());
        assert!(fit_extreme_rule(&rows, -0.1).is_err());
    }

    #[test]
    fn predict_blocks_only_outside_closed_interval() {
        let rule = ExtremeValueRule {
            lower: vec![0.0, -1.0],
            upper: vec![10.0, 1.0],
        };
        assert_eq!(rule.predict(&[5.0, 0.0]).unwrap(), 0);
        // boundary accepted
        assert_eq!(rule.predict(&[0.0, 1.0]).unwrap(), 0);
        assert_eq!(rule.predict(&[10.0, -1.0]).unwrap(), 0);
        // one extreme feature blocks
        assert_eq!(rule.predict(&[10.5, 0.0]).unwrap(), 1);
        assert_eq!(rule.predict(&[5.0, -1.5]).unwrap(), 1);
        // wrong width errors
        assert!(rule.predict(&[1.0]).is_err());
    }

    #[test]
    fn per_feature_block_rate_tracks_tail() {
        let mut rng = crate::numkit::Rng::new(55);
        let n = 5000;
        let mut rows = Matrix::zeros(n, 3);
        rng.fill_normal(rows.data_mut());
        for tail in [0.10, 0.30] {
            let rule = fit_extreme_rule(&rows, tail).unwrap();
            for c in 0..3 {
                let blocked = (0..n)
                    .filter(|&r| {
                        let v = rows.get(r, c);
                        v < rule.lower[c] || v > rule.upper[c]
                    })
                    .count();
                let rate = blocked as f64 / n as f64;
                assert!(
                    (rate - tail).abs() <= 0.02,
                    "tail {tail} column {c}: block rate {rate}"
                );
            }
        }
    }

    #[test]
    fn accepts_at_checks_partial_rows() {
        let rule = ExtremeValueRule {
            lower: vec![0.0, 0.0, 0.0],
            upper: vec![1.0, 1.0, 1.0],
        };
        assert!(rule.accepts_at(&[0, 2], &[0.5, 0.5]));
        assert!(!rule.accepts_at(&[0, 2], &[0.5, 1.5]));
        // feature 1 is not checked
        assert!(rule.accepts_at(&[0, 2], &[0.5, 0.5]));
    }
}
