//! Single-step episodic environment around a fraud engine: each episode draws
//! a real fraud context, exposes its known slice, takes one controllable
//! action, and pays 1 when the composed transaction gets through.

use crate::core::{compose_transaction, FeaturePartition};
use crate::detectors::FraudEngine;
use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub known: Vec<f64>,
    pub round: usize,
}

#[derive(Debug)]
pub struct AttackEnv {
    engine: FraudEngine,
    context_pool: Matrix,
    partition: FeaturePartition,
    rng: Rng,
    t: usize,
    t_max: usize,
    /// Context drawn at the last reset, cleared by step.
    pending: Option<(Vec<f64>, Vec<f64>)>,
}

impl AttackEnv {
    pub fn new(
        engine: FraudEngine,
        context_pool: Matrix,
        partition: FeaturePartition,
        t_max: usize,
        seed: u64,
    ) -> Result<AttackEnv> {
        if context_pool.rows() == 0 {
            return Err(Error::Contract("context pool is empty".into()));
        }
        if context_pool.cols() != partition.total() {
            return Err(Error::Shape(format!(
                "context pool has {} columns, partition covers {}",
                context_pool.cols(),
                partition.total()
            )));
        }
        if t_max == 0 {
            return Err(Error::Contract("t_max must be positive".into()));
        }
        Ok(AttackEnv {
            engine,
            context_pool,
            partition,
            rng: Rng::new(seed),
            t: 0,
            t_max,
            pending: None,
        })
    }

    pub fn rounds_done(&self) -> usize {
        self.t
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn partition(&self) -> &FeaturePartition {
        &self.partition
    }

    /// Starts an episode: draws a fraud context uniformly with replacement
    /// and returns its known slice. Errors once the round budget is spent or
    /// if the previous episode was never stepped.
    pub fn reset(&mut self) -> Result<Observation> {
        if self.t >= self.t_max {
            return Err(Error::Contract(format!(
                "budget exhausted: {} rounds already played",
                self.t_max
            )));
        }
        if self.pending.is_some() {
            return Err(Error::Contract(
                "reset called twice without an intervening step".into(),
            ));
        }
        let row = self.context_pool.row(self.rng.range(self.context_pool.rows()));
        let known: Vec<f64> = self.partition.known().iter().map(|&i| row[i]).collect();
        let unknown: Vec<f64> = self.partition.unknown().iter().map(|&i| row[i]).collect();
        self.pending = Some((known.clone(), unknown));
        Ok(Observation {
            known,
            round: self.t,
        })
    }

    /// Finishes the episode: composes the drawn context with the attacker's
    /// controllable values and pays 1 − engine decision.
    pub fn step(&mut self, action: &[f64]) -> Result<f64> {
        let (known, unknown) = self.pending.take().ok_or_else(|| {
            Error::Contract("step called without a pending reset".into())
        })?;
        if action.len() != self.partition.controllable().len() {
            // restore the episode: a malformed action should not consume it
            let err = Error::Shape(format!(
                "action has {} values, partition has {} controllable features",
                action.len(),
                self.partition.controllable().len()
            ));
            self.pending = Some((known, unknown));
            return Err(err);
        }
        let row = compose_transaction(action, &known, &unknown, &self.partition)?;
        let decision = self.engine.decide(&row)?;
        self.t += 1;
        Ok(1.0 - f64::from(decision))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{EngineKind, EngineSpec, LabeledDataset};
    use crate::detectors::fit_engine;
    use crate::numkit::derive_seed;

    /// 4-feature engine: rule accepts roughly [-2.6, 2.6] per feature (fit on
    /// standard normal data), forest stump engine.
    fn make_engine(seed: u64) -> FraudEngine {
        let mut rng = Rng::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..400 {
            let genuine = i % 2 == 0;
            let shift = if genuine { 0.0 } else { 6.0 };
            rows.push((0..4).map(|_| shift + rng.normal()).collect::<Vec<_>>());
            labels.push(u8::from(!genuine));
        }
        let ds = LabeledDataset::new(
            Matrix::from_rows(&rows).unwrap(),
            labels,
            (0..4).map(|i| format!("f{i}")).collect(),
        )
        .unwrap();
        let spec = EngineSpec {
            kind: EngineKind::Forest,
            cv_draws: 2,
            ..EngineSpec::default()
        };
        fit_engine(&ds, &spec, seed).unwrap().0
    }

    fn partition_2_1_1() -> FeaturePartition {
        // known {0,1}, unknown {2}, controllable {3}
        FeaturePartition::new(vec![3], vec![0, 1], vec![2], 4).unwrap()
    }

    fn pool_of(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_row_pool_always_returns_its_known_slice() {
        let pool = pool_of(&[vec![0.5, -0.5, 0.25, 9.0]]);
        let mut env =
            AttackEnv::new(make_engine(1), pool, partition_2_1_1(), 50, 42).unwrap();
        for _ in 0..50 {
            let obs = env.reset().unwrap();
            assert_eq!(obs.known, vec![0.5, -0.5]);
            env.step(&[0.0]).unwrap();
        }
    }

    #[test]
    fn empty_known_partition_gives_empty_observations() {
        let partition = FeaturePartition::new(vec![2, 3], vec![], vec![0, 1], 4).unwrap();
        let pool = pool_of(&[vec![0.1, 0.2, 0.3, 0.4]]);
        let mut env = AttackEnv::new(make_engine(2), pool, partition, 5, 7).unwrap();
        let obs = env.reset().unwrap();
        assert!(obs.known.is_empty());
    }

    #[test]
    fn draws_are_uniform_with_replacement() {
        let n_rows = 8;
        let rows: Vec<Vec<f64>> = (0..n_rows)
            .map(|i| vec![i as f64, 0.0, 0.0, 0.0])
            .collect();
        let mut env = AttackEnv::new(
            make_engine(3),
            pool_of(&rows),
            partition_2_1_1(),
            100_000,
            derive_seed(11, "uniformity"),
        )
        .unwrap();
        let mut counts = vec![0usize; n_rows];
        for _ in 0..100_000 {
            let obs = env.reset().unwrap();
            counts[obs.known[0] as usize] += 1;
            env.step(&[0.0]).unwrap();
        }
        // multinomial cell: mean n/k, sd sqrt(n p (1-p))
        let n = 100_000.0;
        let p = 1.0 / n_rows as f64;
        let sd = (n * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - n * p).abs();
            assert!(dev <= 3.0 * sd, "row {i} drawn {c} times, dev {dev:.1} > 3sd");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let pool = pool_of(&[vec![0.0; 4]]);
        let mut env = AttackEnv::new(make_engine(4), pool, partition_2_1_1(), 3, 1).unwrap();
        for _ in 0..3 {
            env.reset().unwrap();
            env.step(&[0.0]).unwrap();
        }
        assert_eq!(env.rounds_done(), 3);
        let err = env.reset().unwrap_err();
        assert!(err.to_string().contains("budget"), "{err}");
    }

    #[test]
    fn protocol_violations_are_errors() {
        let pool = pool_of(&[vec![0.0; 4]]);
        let mut env = AttackEnv::new(make_engine(5), pool, partition_2_1_1(), 10, 1).unwrap();
        // step before any reset
        assert!(env.step(&[0.0]).is_err());
        env.reset().unwrap();
        // double reset
        assert!(env.reset().is_err());
        env.step(&[0.0]).unwrap();
        // double step
        assert!(env.step(&[0.0]).is_err());
    }

    #[test]
    fn wrong_action_length_does_not_consume_the_episode() {
        let pool = pool_of(&[vec![0.0; 4]]);
        let mut env = AttackEnv::new(make_engine(6), pool, partition_2_1_1(), 10, 1).unwrap();
        env.reset().unwrap();
        assert!(matches!(env.step(&[0.0, 1.0]), Err(Error::Shape(_))));
        assert_eq!(env.rounds_done(), 0);
        // the episode is still live and can be finished correctly
        env.step(&[0.0]).unwrap();
        assert_eq!(env.rounds_done(), 1);
    }

    #[test]
    fn reward_matches_the_engine_decision_oracle() {
        let engine = make_engine(7);
        let partition = partition_2_1_1();
        let mut rng = Rng::new(13);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.uniform(-3.0, 7.0)).collect())
            .collect();
        let mut env = AttackEnv::new(
            engine.clone(),
            pool_of(&rows),
            partition.clone(),
            500,
            17,
        )
        .unwrap();
        for _ in 0..500 {
            let obs = env.reset().unwrap();
            let action = [rng.uniform(-8.0, 8.0)];
            let reward = env.step(&action).unwrap();
            // rebuild the full row: observation gives known, the pool row is
            // recoverable from it here because feature 0 values are distinct
            let source = rows
                .iter()
                .find(|r| r[0] == obs.known[0] && r[1] == obs.known[1])
                .expect("drawn context must come from the pool");
            let mut full = source.clone();
            full[3] = action[0];
            let want = 1.0 - f64::from(engine.decide(&full).unwrap());
            assert_eq!(reward, want);
        }
    }

    #[test]
    fn action_cannot_alter_the_context_slices() {
        // engine that only looks at the rule; rule bounds from make_engine
        // are near [-2.6, 2.6]; context feature 2 sits outside at 9.0, so no
        // action can earn a reward
        let pool = pool_of(&[vec![0.0, 0.0, 9.0, 0.0]]);
        let mut env =
            AttackEnv::new(make_engine(8), pool, partition_2_1_1(), 200, 23).unwrap();
        let mut rng = Rng::new(29);
        for _ in 0..200 {
            env.reset().unwrap();
            let reward = env.step(&[rng.uniform(-10.0, 10.0)]).unwrap();
            assert_eq!(reward, 0.0, "unknown slice must pass through unchanged");
        }
    }

    #[test]
    fn extreme_action_coordinate_is_always_blocked() {
        let engine = make_engine(9);
        let upper = engine.rule.upper[3];
        let pool = pool_of(&[vec![0.0; 4]]);
        let mut env = AttackEnv::new(engine, pool, partition_2_1_1(), 100, 31).unwrap();
        for i in 0..100 {
            env.reset().unwrap();
            let reward = env.step(&[upper + 1.0 + i as f64]).unwrap();
            assert_eq!(reward, 0.0);
        }
    }

    #[test]
    fn episode_count_reaches_t_max() {
        let pool = pool_of(&[vec![0.0; 4]]);
        let t_max = 64;
        let mut env = AttackEnv::new(make_engine(10), pool, partition_2_1_1(), t_max, 3).unwrap();
        let mut episodes = 0;
        while env.rounds_done() < env.t_max() {
            env.reset().unwrap();
            env.step(&[0.0]).unwrap();
            episodes += 1;
        }
        assert_eq!(episodes, t_max);
    }
}
