//! Attack policies that act against an [`crate::env::AttackEnv`].

pub mod mimicry;
pub mod ppo;

pub use mimicry::{fit_mixture, mimic_fit, mimic_sample, MimicModel};
pub use ppo::{LossReport, PolicyDistribution, PpoAgent};

use crate::numkit::Rng;
use crate::Result;

/// Runner-facing wrapper over the two attacker kinds. Mimicry ignores the
/// observation and the reward stream; PPO uses both.
#[derive(Debug, Clone)]
pub enum Attacker {
    Ppo(Box<PpoAgent>),
    Mimic { model: MimicModel, rng: Rng },
}

impl Attacker {
    pub fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Attacker::Ppo(agent) => Ok(agent.act(obs)?.0),
            Attacker::Mimic { model, rng } => Ok(mimic_sample(model, rng)),
        }
    }

    pub fn record_reward(&mut self, reward: f64) -> Result<()> {
        match self {
            Attacker::Ppo(agent) => agent.record_reward(reward),
            Attacker::Mimic { .. } => Ok(()),
        }
    }

    /// Run a learning update if the attacker has one pending. Mimicry never
    /// updates; PPO updates once its rollout buffer is full.
    pub fn maybe_update(&mut self) -> Result<Option<LossReport>> {
        match self {
            Attacker::Ppo(agent) if agent.ready_to_update() => Ok(Some(agent.update()?)),
            _ => Ok(None),
        }
    }
}
