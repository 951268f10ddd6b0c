//! PPO attacker with a learned full-covariance Gaussian policy.
//!
//! The actor maps the known-feature observation to C + C^2 outputs: the first
//! C are the action mean, the remaining C^2 are reshaped row-major into a
//! C x C matrix whose strict lower triangle is kept as-is and whose diagonal
//! passes through softplus (+1e-3 floor), giving a valid Cholesky factor of
//! the action covariance. The critic is a layer-normed scalar value net.
//!
//! One update runs E epochs of shuffled minibatches over a full rollout
//! buffer, maximizing the clipped surrogate min(rho*A, clip(rho)*A) plus an
//! entropy bonus, with advantages A = r - V(obs) normalized per batch.

use crate::core::PpoSpec;
use crate::datagen::ScalerStats;
use crate::numkit::{
    mvn_log_pdf, mvn_sample, solve_lower, solve_lower_transpose, Activation, AdamState, Matrix,
    MlpGrads, MlpParams, Rng, LN_2PI,
};
use crate::{Error, Result};

pub const AGENT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    pub mean: Vec<f64>,
    /// Lower-triangular Cholesky factor of the covariance.
    pub chol: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
struct Sample {
    obs: Vec<f64>,
    /// Action in the policy's own (pre-scaler) units.
    action: Vec<f64>,
    log_prob: f64,
    reward: f64,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PpoAgent {
    spec: PpoSpec,
    n_known: usize,
    n_actions: usize,
    actor: MlpParams,
    critic: MlpParams,
    actor_opt: AdamState,
    critic_opt: AdamState,
    /// When present, actions are emitted de-standardized through this scaler
    /// (one entry per controllable feature); the policy itself always works
    /// in scaler units.
    action_scaler: Option<ScalerStats>,
    rng: Rng,
    buffer: Vec<Sample>,
    pending: Option<(Vec<f64>, Vec<f64>, f64)>,
}

const HIDDEN: usize = 32;

impl PpoAgent {
    pub fn new(
        n_known: usize,
        n_actions: usize,
        spec: PpoSpec,
        action_scaler: Option<ScalerStats>,
        seed: u64,
    ) -> Result<PpoAgent> {
        if n_actions == 0 {
            return Err(Error::Contract("PPO needs at least one action".into()));
        }
        if spec.rollout == 0 || spec.epochs == 0 || spec.minibatch == 0 {
            return Err(Error::Contract(format!("bad PPO sizes in {spec:?}")));
        }
        if let Some(s) = &action_scaler {
            if s.dim() != n_actions {
                return Err(Error::Shape(format!(
                    "action scaler covers {} features, policy outputs {}",
                    s.dim(),
                    n_actions
                )));
            }
        }
        let mut rng = Rng::new(seed);
        let mut actor = MlpParams::new(
            &[n_known, HIDDEN, HIDDEN, n_actions + n_actions * n_actions],
            &[Activation::Tanh, Activation::Tanh, Activation::Linear],
            false,
        );
        // small final gain keeps the initial policy near N(0, softplus(0)^2 I)
        actor.init_orthogonal(&[1.0, 1.0, 0.01], &mut rng);
        let mut critic = MlpParams::new(
            &[n_known, HIDDEN, HIDDEN, 1],
            &[Activation::Tanh, Activation::Tanh, Activation::Linear],
            true,
        );
        critic.init_orthogonal(&[1.0, 1.0, 1.0], &mut rng);
        // Nonzero hidden biases keep the tanh stack responsive even when the
        // observation is empty (K = 0): with zero biases every hidden unit
        // outputs tanh(0) = 0 and only the final bias would ever get a
        // gradient, freezing learning on unconditioned tasks.
        for net in [&mut actor, &mut critic] {
            let last = net.layers.len() - 1;
            for layer in &mut net.layers[..last] {
                for b in layer.bias.iter_mut() {
                    *b = rng.uniform(-0.5, 0.5);
                }
            }
        }
        let actor_opt = AdamState::new(actor.param_count(), spec.actor_lr);
        let critic_opt = AdamState::new(critic.param_count(), spec.critic_lr);
        Ok(PpoAgent {
            spec,
            n_known,
            n_actions,
            actor,
            critic,
            actor_opt,
            critic_opt,
            action_scaler,
            rng,
            buffer: Vec::new(),
            pending: None,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn ready_to_update(&self) -> bool {
        self.buffer.len() >= self.spec.rollout
    }

    /// The current action distribution at an observation.
    pub fn policy(&self, obs: &[f64]) -> Result<PolicyDistribution> {
        if obs.len() != self.n_known {
            return Err(Error::Shape(format!(
                "observation has {} features, actor expects {}",
                obs.len(),
                self.n_known
            )));
        }
        let (out, _) = self.actor.forward(obs);
        parse_policy(&out, self.n_actions)
    }

    /// Samples an action and stores the pending (obs, action, log-prob)
    /// buffer entry. Returns the action in emission units plus its log-prob
    /// (which always refers to the policy's own units).
    pub fn act(&mut self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        if self.pending.is_some() {
            return Err(Error::Contract(
                "act called twice without recording a reward".into(),
            ));
        }
        if self.ready_to_update() {
            return Err(Error::Contract(
                "rollout buffer is full; update before acting again".into(),
            ));
        }
        let dist = self.policy(obs)?;
        let action = mvn_sample(&dist.mean, &dist.chol, &mut self.rng);
        let log_prob = mvn_log_pdf(&action, &dist.mean, &dist.chol)?;
        let emitted = match &self.action_scaler {
            Some(s) => s.inverse_row(&action),
            None => action.clone(),
        };
        self.pending = Some((obs.to_vec(), action, log_prob));
        Ok((emitted, log_prob))
    }

    /// Completes the pending buffer entry with the environment's reward and
    /// the critic's value estimate at the stored observation.
    pub fn record_reward(&mut self, reward: f64) -> Result<()> {
        let (obs, action, log_prob) = self.pending.take().ok_or_else(|| {
            Error::Contract("record_reward called without a pending action".into())
        })?;
        let (v, _) = self.critic.forward(&obs);
        self.buffer.push(Sample {
            obs,
            action,
            log_prob,
            reward,
            value: v[0],
        });
        Ok(())
    }

    /// One PPO update over a full rollout buffer. Clears the buffer.
    pub fn update(&mut self) -> Result<LossReport> {
        let b = self.buffer.len();
        if b < self.spec.rollout {
            return Err(Error::Contract(format!(
                "update needs a full rollout ({} samples), buffer has {b}",
                self.spec.rollout
            )));
        }
        let mut adv: Vec<f64> = self.buffer.iter().map(|s| s.reward - s.value).collect();
        let mean = adv.iter().sum::<f64>() / b as f64;
        for a in adv.iter_mut() {
            *a -= mean;
        }
        let std = (adv.iter().map(|a| a * a).sum::<f64>() / b as f64).sqrt();
        if std >= 1e-8 {
            for a in adv.iter_mut() {
                *a /= std;
            }
        } else {
            // no signal in the batch; what's left after centering is float
            // dust that would otherwise leak through Adam's epsilon
            for a in adv.iter_mut() {
                *a = 0.0;
            }
        }

        let eps = self.spec.clip;
        let coef = self.spec.entropy_coef;
        let mut order: Vec<usize> = (0..b).collect();
        let mut policy_loss_sum = 0.0;
        let mut value_loss_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut clipped = 0usize;
        let mut n_minibatches = 0usize;
        let mut n_samples_seen = 0usize;

        for _ in 0..self.spec.epochs {
            self.rng.shuffle(&mut order);
            for chunk in order.chunks(self.spec.minibatch) {
                let m = chunk.len() as f64;
                let mut actor_grads = MlpGrads::zeros_like(&self.actor);
                let mut critic_grads = MlpGrads::zeros_like(&self.critic);
                let mut mb_policy_loss = 0.0;
                let mut mb_value_loss = 0.0;

                for &i in chunk {
                    let s = &self.buffer[i];
                    let a = adv[i];

                    let (out, cache) = self.actor.forward(&s.obs);
                    let dist = parse_policy(&out, self.n_actions)?;
                    let lp = mvn_log_pdf(&s.action, &dist.mean, &dist.chol)?;
                    let rho = (lp - s.log_prob).exp();
                    let surr1 = rho * a;
                    let surr2 = rho.clamp(1.0 - eps, 1.0 + eps) * a;
                    let entropy = gaussian_entropy(&dist.chol);
                    mb_policy_loss += -surr1.min(surr2) - coef * entropy;
                    entropy_sum += entropy;
                    if (rho - 1.0).abs() > eps {
                        clipped += 1;
                    }
                    // d(loss)/d(lp): the clipped branch contributes nothing
                    let dlp = if surr1 <= surr2 { -rho * a / m } else { 0.0 };
                    let dent = -coef / m;
                    let g_out =
                        policy_output_grad(&out, &dist, &s.action, self.n_actions, dlp, dent);
                    let (g, _) = self.actor.backward(&cache, &g_out);
                    actor_grads.add(&g);

                    let (v, vcache) = self.critic.forward(&s.obs);
                    let err = v[0] - s.reward;
                    mb_value_loss += err * err;
                    let (g, _) = self.critic.backward(&vcache, &[2.0 * err / m]);
                    critic_grads.add(&g);
                }

                mb_policy_loss /= m;
                mb_value_loss /= m;
                if !mb_policy_loss.is_finite() || !mb_value_loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "PPO update diverged: policy loss {mb_policy_loss}, value loss {mb_value_loss}"
                    )));
                }
                policy_loss_sum += mb_policy_loss;
                value_loss_sum += mb_value_loss;
                n_minibatches += 1;
                n_samples_seen += chunk.len();

                let mut flat = self.actor.to_flat();
                self.actor_opt.step(&mut flat, &actor_grads.to_flat());
                self.actor.set_from_flat(&flat);
                let mut flat = self.critic.to_flat();
                self.critic_opt.step(&mut flat, &critic_grads.to_flat());
                self.critic.set_from_flat(&flat);
            }
        }

        self.buffer.clear();
        Ok(LossReport {
            policy_loss: policy_loss_sum / n_minibatches as f64,
            value_loss: value_loss_sum / n_minibatches as f64,
            entropy: entropy_sum / n_samples_seen as f64,
            clip_fraction: clipped as f64 / n_samples_seen as f64,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = VersionedAgent {
            version: AGENT_FORMAT_VERSION,
            agent: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<PpoAgent> {
        let doc: VersionedAgent = serde_json::from_str(text)?;
        if doc.version != AGENT_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "agent document is version {}, this build reads version {}",
                doc.version, AGENT_FORMAT_VERSION
            )));
        }
        Ok(doc.agent)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct VersionedAgent {
    version: u32,
    agent: PpoAgent,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const DIAG_FLOOR: f64 = 1e-3;

/// Splits raw actor outputs into mean and Cholesky factor: first C values are
/// the mean, the next C^2 reshape row-major with strict lower kept, diagonal
/// softplus-floored, upper triangle discarded.
fn parse_policy(out: &[f64], c: usize) -> Result<PolicyDistribution> {
    debug_assert_eq!(out.len(), c + c * c);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "actor produced a non-finite output (divergence)".into(),
        ));
    }
    let mean = out[..c].to_vec();
    let mut chol = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..i {
            chol.set(i, j, out[c + i * c + j]);
        }
        chol.set(i, i, softplus(out[c + i * c + i]) + DIAG_FLOOR);
    }
    Ok(PolicyDistribution { mean, chol })
}

/// Entropy of N(mean, LL^T): C/2 (1 + ln 2 pi) + sum_i ln L_ii.
fn gaussian_entropy(chol: &Matrix) -> f64 {
    let c = chol.rows();
    let mut h = 0.5 * c as f64 * (1.0 + LN_2PI);
    for i in 0..c {
        h += chol.get(i, i).ln();
    }
    h
}

/// Gradient of the per-sample loss w.r.t. the raw actor outputs, given
/// d(loss)/d(log-prob) and d(loss)/d(entropy).
///
/// With y = L^-1 (a - mu) and u = L^-T y:
///   d(lp)/d(mu)   = u
///   d(lp)/d(L_jk) = u_j y_k - [j=k]/L_jj   (lower triangle)
///   d(H)/d(L_ii)  = 1/L_ii
/// and the diagonal chains through softplus' = sigmoid(raw).
fn policy_output_grad(
    out: &[f64],
    dist: &PolicyDistribution,
    action: &[f64],
    c: usize,
    dlp: f64,
    dent: f64,
) -> Vec<f64> {
    let mut r: Vec<f64> = action
        .iter()
        .zip(dist.mean.iter())
        .map(|(a, m)| a - m)
        .collect();
    let y = solve_lower(&dist.chol, &r);
    let u = solve_lower_transpose(&dist.chol, &y);
    r.clear();

    let mut g = vec![0.0; c + c * c];
    for i in 0..c {
        // d(lp)/d(mu_i) = u_i
        g[i] = dlp * u[i];
        for j in 0..i {
            g[c + i * c + j] = dlp * u[i] * y[j];
        }
        let l_ii = dist.chol.get(i, i);
        let d_l = dlp * (u[i] * y[i] - 1.0 / l_ii) + dent / l_ii;
        g[c + i * c + i] = d_l * sigmoid(out[c + i * c + i]);
    }
    g
}
