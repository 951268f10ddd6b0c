//! Mimicry baselines: fit a distribution to the controllable columns of
//! genuine transactions, then sample attack values from it. The attacker
//! ignores the observed context entirely and never learns from rewards.

use crate::core::MimicFamily;
use crate::numkit::{cholesky, mean_and_covariance, mvn_log_pdf, mvn_sample, Matrix, Rng};
use crate::{Error, Result};

/// Ridge added to every fitted covariance before factoring.
const COV_RIDGE: f64 = 1e-6;
/// Floor for per-feature standard deviations (constant columns).
const STD_FLOOR: f64 = 1e-12;
/// EM stops once the log-likelihood gain drops below this.
const EM_TOL: f64 = 1e-6;
const EM_MAX_ITERS: usize = 100;

/// A fitted generative model over the controllable feature columns.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum MimicModel {
    Uniform {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    UnivariateNormal {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
    MultivariateNormal {
        mean: Vec<f64>,
        chol: Matrix,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        chols: Vec<Matrix>,
    },
}

impl MimicModel {
    pub fn dim(&self) -> usize {
        match self {
            MimicModel::Uniform { lo, .. } => lo.len(),
            MimicModel::UnivariateNormal { mean, .. } => mean.len(),
            MimicModel::MultivariateNormal { mean, .. } => mean.len(),
            MimicModel::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
        }
    }
}

/// Fit a mimic model of the requested family on `rows`, the controllable
/// columns of genuine transactions. `n_components` only applies to the
/// mixture family; `seed` only affects mixture initialization.
pub fn mimic_fit(
    rows: &Matrix,
    family: MimicFamily,
    n_components: usize,
    seed: u64,
) -> Result<MimicModel> {
    let n = rows.rows();
    let d = rows.cols();
    if d == 0 {
        return Err(Error::Shape("mimic fit needs at least one column".into()));
    }
    if n < 2 {
        return Err(Error::Contract(format!(
            "mimic fit needs at least 2 rows, got {n}"
        )));
    }
    match family {
        MimicFamily::Uniform => {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for row in rows.iter_rows() {
                for j in 0..d {
                    lo[j] = lo[j].min(row[j]);
                    hi[j] = hi[j].max(row[j]);
                }
            }
            Ok(MimicModel::Uniform { lo, hi })
        }
        MimicFamily::UnivariateNormal => {
            let (mean, cov) = mean_and_covariance(rows)?;
            let std = (0..d).map(|j| cov.get(j, j).sqrt().max(STD_FLOOR)).collect();
            Ok(MimicModel::UnivariateNormal { mean, std })
        }
        MimicFamily::MultivariateNormal => {
            let (mean, mut cov) = mean_and_covariance(rows)?;
            for j in 0..d {
                cov.set(j, j, cov.get(j, j) + COV_RIDGE);
            }
            let chol = cholesky(&cov)?;
            Ok(MimicModel::MultivariateNormal { mean, chol })
        }
        MimicFamily::GaussianMixture => {
            if n_components == 0 {
                return Err(Error::Contract("mixture needs at least one component".into()));
            }
            if n < n_components {
                return Err(Error::Contract(format!(
                    "mixture with {n_components} components needs at least that many rows, got {n}"
                )));
            }
            let (model, _trace) = fit_mixture(rows, n_components, seed)?;
            Ok(model)
        }
    }
}

/// Draw one attack vector from the fitted model.
pub fn mimic_sample(model: &MimicModel, rng: &mut Rng) -> Vec<f64> {
    match model {
        MimicModel::Uniform { lo, hi } => lo
            .iter()
            .zip(hi.iter())
            .map(|(&a, &b)| rng.uniform(a, b))
            .collect(),
        MimicModel::UnivariateNormal { mean, std } => mean
            .iter()
            .zip(std.iter())
            .map(|(&m, &s)| m + s * rng.normal())
            .collect(),
        MimicModel::MultivariateNormal { mean, chol } => mvn_sample(mean, chol, rng),
        MimicModel::GaussianMixture {
            weights,
            means,
            chols,
        } => {
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut pick = weights.len() - 1;
            for (k, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            mvn_sample(&means[pick], &chols[pick], rng)
        }
    }
}

/// EM fit of a Gaussian mixture. Returns the model and the per-iteration
/// log-likelihood trace (one entry per E-step, including the initial fit).
pub fn fit_mixture(
    rows: &Matrix,
    n_components: usize,
    seed: u64,
) -> Result<(MimicModel, Vec<f64>)> {
    let n = rows.rows();
    let d = rows.cols();
    let k = n_components;
    let mut rng = Rng::new(seed);

    // k-means++-style seeding: first center uniform, then proportional to
    // squared distance from the nearest chosen center.
    let mut centers: Vec<Vec<f64>> = vec![rows.row(rng.range(n)).to_vec()];
    let mut d2 = vec![0.0f64; n];
    while centers.len() < k {
        let last = centers.last().unwrap();
        let mut total = 0.0;
        for (i, row) in rows.iter_rows().enumerate() {
            let dist: f64 = row
                .iter()
                .zip(last.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if centers.len() == 1 || dist < d2[i] {
                d2[i] = dist;
            }
            total += d2[i];
        }
        let idx = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.range(n)
        };
        centers.push(rows.row(idx).to_vec());
    }

    // All components start at the global covariance with uniform weights.
    let (_, mut global_cov) = mean_and_covariance(rows)?;
    for j in 0..d {
        global_cov.set(j, j, global_cov.get(j, j) + COV_RIDGE);
    }
    let mut weights = vec![1.0 / k as f64; k];
    let mut means = centers;
    let mut chols: Vec<Matrix> = vec![cholesky(&global_cov)?; k];

    let mut trace = Vec::new();
    let mut resp = Matrix::zeros(n, k);
    for _ in 0..EM_MAX_ITERS {
        // E-step in log space.
        let mut ll = 0.0;
        for (i, row) in rows.iter_rows().enumerate() {
            let logs: Vec<f64> = (0..k)
                .map(|c| {
                    let lp = mvn_log_pdf(row, &means[c], &chols[c]).unwrap_or(f64::NEG_INFINITY);
                    weights[c].max(f64::MIN_POSITIVE).ln() + lp
                })
                .collect();
            let lse = logsumexp(&logs);
            ll += lse;
            for c in 0..k {
                resp.set(i, c, (logs[c] - lse).exp());
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numeric("mixture log-likelihood diverged".into()));
        }
        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| ll - prev < EM_TOL);
        trace.push(ll);
        if converged {
            break;
        }

        // M-step.
        for c in 0..k {
            let nc: f64 = (0..n).map(|i| resp.get(i, c)).sum();
            let nc_safe = nc.max(STD_FLOOR);
            weights[c] = nc / n as f64;
            let mut mu = vec![0.0; d];
            for (i, row) in rows.iter_rows().enumerate() {
                let r = resp.get(i, c);
                for j in 0..d {
                    mu[j] += r * row[j];
                }
            }
            for m in mu.iter_mut() {
                *m /= nc_safe;
            }
            let mut cov = Matrix::zeros(d, d);
            let mut centered = vec![0.0; d];
            for (i, row) in rows.iter_rows().enumerate() {
                let r = resp.get(i, c);
                for j in 0..d {
                    centered[j] = row[j] - mu[j];
                }
                for a in 0..d {
                    let ra = r * centered[a];
                    for b in a..d {
                        cov.set(a, b, cov.get(a, b) + ra * centered[b]);
                    }
                }
            }
            for a in 0..d {
                for b in a..d {
                    let v = cov.get(a, b) / nc_safe;
                    cov.set(a, b, v);
                    cov.set(b, a, v);
                }
                cov.set(a, a, cov.get(a, a) + COV_RIDGE);
            }
            means[c] = mu;
            chols[c] = cholesky(&cov)?;
        }
        // Renormalize against responsibility rounding drift.
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
    }

    Ok((
        MimicModel::GaussianMixture {
            weights,
            means,
            chols,
        },
        trace,
    ))
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
