//! Domain types: feature partitions, transactions, labeled datasets, and the
//! run configuration shared by the harness and the CLI.

use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

pub const LABEL_GENUINE: u8 = 0;
pub const LABEL_FRAUD: u8 = 1;

/// Assignment of every feature index to exactly one attacker-visibility role:
/// controllable (the attacker chooses the value), known (visible context), or
/// unknown (hidden context).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeaturePartition {
    controllable: Vec<usize>,
    known: Vec<usize>,
    unknown: Vec<usize>,
    total: usize,
}

impl FeaturePartition {
    /// Validates that the three role sets partition 0..total exactly, with a
    /// non-empty controllable set. Indices are stored sorted.
    pub fn new(
        controllable: Vec<usize>,
        known: Vec<usize>,
        unknown: Vec<usize>,
        total: usize,
    ) -> Result<Self> {
        if controllable.is_empty() {
            return Err(Error::Contract(
                "partition needs at least one controllable feature".into(),
            ));
        }
        let mut seen = vec![false; total];
        for (role, set) in [
            ("controllable", &controllable),
            ("known", &known),
            ("unknown", &unknown),
        ] {
            for &i in set.iter() {
                if i >= total {
                    return Err(Error::Contract(format!(
                        "{role} index {i} out of range for {total} features"
                    )));
                }
                if seen[i] {
                    return Err(Error::Contract(format!(
                        "feature {i} assigned to more than one role"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Contract(format!(
                "feature {missing} not assigned to any role"
            )));
        }
        let mut p = FeaturePartition {
            controllable,
            known,
            unknown,
            total,
        };
        p.controllable.sort_unstable();
        p.known.sort_unstable();
        p.unknown.sort_unstable();
        Ok(p)
    }

    /// Draws a partition from role fractions: `fixed_fraction` of features
    /// become known, `unknown_fraction` become unknown, the rest controllable.
    /// Counts are rounded to the nearest integer and the controllable set is
    /// kept non-empty. Assignment is a seeded shuffle of the indices.
    pub fn from_fractions(
        total: usize,
        fixed_fraction: f64,
        unknown_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if total == 0 {
            return Err(Error::Contract("partition over zero features".into()));
        }
        for (name, f) in [("fixed", fixed_fraction), ("unknown", unknown_fraction)] {
            if !(0.0..=1.0).contains(&f) || !f.is_finite() {
                return Err(Error::Contract(format!(
                    "{name} fraction {f} outside [0, 1]"
                )));
            }
        }
        if fixed_fraction + unknown_fraction >= 1.0 {
            return Err(Error::Contract(format!(
                "fixed ({fixed_fraction}) + unknown ({unknown_fraction}) fractions must stay below 1"
            )));
        }
        let mut n_known = (fixed_fraction * total as f64).round() as usize;
        let mut n_unknown = (unknown_fraction * total as f64).round() as usize;
        // rounding may eat the controllable remainder; shrink the larger set
        while n_known + n_unknown >= total {
            if n_unknown >= n_known && n_unknown > 0 {
                n_unknown -= 1;
            } else if n_known > 0 {
                n_known -= 1;
            }
        }
        let mut idx: Vec<usize> = (0..total).collect();
        Rng::new(seed).shuffle(&mut idx);
        let known = idx[..n_known].to_vec();
        let unknown = idx[n_known..n_known + n_unknown].to_vec();
        let controllable = idx[n_known + n_unknown..].to_vec();
        FeaturePartition::new(controllable, known, unknown, total)
    }

    pub fn controllable(&self) -> &[usize] {
        &self.controllable
    }

    pub fn known(&self) -> &[usize] {
        &self.known
    }

    pub fn unknown(&self) -> &[usize] {
        &self.unknown
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Known and unknown indices together: the part the attacker cannot set.
    pub fn context_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.known.iter().chain(self.unknown.iter()).copied().collect();
        v.sort_unstable();
        v
    }
}

/// A transaction split by feature role.
#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub controllable: Vec<f64>,
    pub known: Vec<f64>,
    pub unknown: Vec<f64>,
}

/// Assembles a full feature row from role slices.
pub fn compose_transaction(
    controllable: &[f64],
    known: &[f64],
    unknown: &[f64],
    partition: &FeaturePartition,
) -> Result<Vec<f64>> {
    if controllable.len() != partition.controllable.len()
        || known.len() != partition.known.len()
        || unknown.len() != partition.unknown.len()
    {
        return Err(Error::Shape(format!(
            "compose: got {}/{}/{} values for a {}/{}/{} partition",
            controllable.len(),
            known.len(),
            unknown.len(),
            partition.controllable.len(),
            partition.known.len(),
            partition.unknown.len()
        )));
    }
    let mut row = vec![0.0; partition.total];
    for (&i, &v) in partition.controllable.iter().zip(controllable.iter()) {
        row[i] = v;
    }
    for (&i, &v) in partition.known.iter().zip(known.iter()) {
        row[i] = v;
    }
    for (&i, &v) in partition.unknown.iter().zip(unknown.iter()) {
        row[i] = v;
    }
    Ok(row)
}

/// Splits a full feature row into role slices.
pub fn decompose_row(row: &[f64], partition: &FeaturePartition) -> Result<Transaction> {
    if row.len() != partition.total {
        return Err(Error::Shape(format!(
            "decompose: row has {} features, partition covers {}",
            row.len(),
            partition.total
        )));
    }
    Ok(Transaction {
        controllable: partition.controllable.iter().map(|&i| row[i]).collect(),
        known: partition.known.iter().map(|&i| row[i]).collect(),
        unknown: partition.unknown.iter().map(|&i| row[i]).collect(),
    })
}

/// Feature matrix plus binary labels (0 genuine, 1 fraud).
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub rows: Matrix,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(rows: Matrix, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if rows.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                rows.rows(),
                labels.len()
            )));
        }
        if feature_names.len() != rows.cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                rows.cols()
            )));
        }
        if let Some(bad) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Data(format!(
                "label at row {bad} is {}, expected 0 or 1",
                labels[bad]
            )));
        }
        Ok(LabeledDataset {
            rows,
            labels,
            feature_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows.rows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.cols()
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows belonging to one class, in dataset order.
    pub fn class_rows(&self, label: u8) -> Matrix {
        self.rows.select_rows(&self.indices_of(label))
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            rows: self.rows.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Which classifier backs the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Forest,
    Network,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineKind::Forest => write!(f, "forest"),
            EngineKind::Network => write!(f, "network"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EngineSpec {
    pub kind: EngineKind,
    /// Total two-sided per-feature tail mass rejected by the extreme-value rule.
    pub rule_tail: f64,
    pub threshold: f64,
    pub cv_draws: usize,
    pub cv_folds: usize,
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec {
            kind: EngineKind::Network,
            rule_tail: 0.10,
            threshold: 0.5,
            cv_draws: 10,
            cv_folds: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MimicFamily {
    Uniform,
    UnivariateNormal,
    MultivariateNormal,
    GaussianMixture,
}

impl std::fmt::Display for MimicFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MimicFamily::Uniform => "uniform",
            MimicFamily::UnivariateNormal => "univariate",
            MimicFamily::MultivariateNormal => "multivariate",
            MimicFamily::GaussianMixture => "mixture",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PpoSpec {
    pub clip: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub rollout: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    /// Emit actions in raw feature units by de-standardizing with a scaler
    /// fit on genuine training data. Without it the policy acts in raw units
    /// directly.
    pub scale_actions: bool,
}

impl Default for PpoSpec {
    fn default() -> Self {
        PpoSpec {
            clip: 0.2,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            rollout: 64,
            epochs: 4,
            minibatch: 16,
            entropy_coef: 1e-3,
            scale_actions: true,
        }
    }
}

/// How many genuine rows the mimic attacker may fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MimicTrainSize {
    Subset(usize),
    All,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MimicSpec {
    pub family: MimicFamily,
    pub train_size: MimicTrainSize,
    pub components: usize,
}

impl Default for MimicSpec {
    fn default() -> Self {
        MimicSpec {
            family: MimicFamily::MultivariateNormal,
            train_size: MimicTrainSize::All,
            components: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerSpec {
    Ppo(PpoSpec),
    Mimicry(MimicSpec),
}

impl AttackerSpec {
    pub fn label(&self) -> String {
        match self {
            AttackerSpec::Ppo(_) => "ppo".into(),
            AttackerSpec::Mimicry(m) => {
                let size = match m.train_size {
                    MimicTrainSize::Subset(n) => format!("{n}"),
                    MimicTrainSize::All => "all".into(),
                };
                format!("mimicry:{}:{}", m.family, size)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSpec {
    Fractions { fixed: f64, unknown: f64 },
    Explicit {
        controllable: Vec<usize>,
        known: Vec<usize>,
        unknown: Vec<usize>,
    },
}

impl PartitionSpec {
    pub fn resolve(&self, total: usize, seed: u64) -> Result<FeaturePartition> {
        match self {
            PartitionSpec::Fractions { fixed, unknown } => {
                FeaturePartition::from_fractions(total, *fixed, *unknown, seed)
            }
            PartitionSpec::Explicit {
                controllable,
                known,
                unknown,
            } => FeaturePartition::new(
                controllable.clone(),
                known.clone(),
                unknown.clone(),
                total,
            ),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PartitionSpec::Fractions { fixed, unknown } => {
                format!("fixed{:.0}%-unknown{:.0}%", fixed * 100.0, unknown * 100.0)
            }
            PartitionSpec::Explicit { controllable, known, unknown } => format!(
                "explicit-c{}k{}u{}",
                controllable.len(),
                known.len(),
                unknown.len()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSpec {
    Scenario {
        n_features: usize,
        clusters_per_class: usize,
        separation: f64,
        n_samples: usize,
    },
    Csv {
        path: String,
        label_column: String,
    },
}

/// Complete description of one attack run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub data: DataSpec,
    pub partition: PartitionSpec,
    pub engine: EngineSpec,
    pub attacker: AttackerSpec,
    pub t_max: usize,
    pub checkpoints: Vec<usize>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be positive".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::Config("at least one checkpoint required".into()));
        }
        let mut prev = 0;
        for &c in &self.checkpoints {
            if c <= prev {
                return Err(Error::Config(format!(
                    "checkpoints must be strictly ascending and positive, got {:?}",
                    self.checkpoints
                )));
            }
            prev = c;
        }
        if *self.checkpoints.last().unwrap() > self.t_max {
            return Err(Error::Config(format!(
                "last checkpoint {} exceeds t_max {}",
                self.checkpoints.last().unwrap(),
                self.t_max
            )));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if !(0.0 < self.engine.rule_tail && self.engine.rule_tail < 0.5) {
            return Err(Error::Config(format!(
                "rule tail {} outside (0, 0.5)",
                self.engine.rule_tail
            )));
        }
        if self.engine.cv_draws == 0 || self.engine.cv_folds < 2 {
            return Err(Error::Config(
                "grid search needs cv_draws >= 1 and cv_folds >= 2".into(),
            ));
        }
        if let AttackerSpec::Ppo(p) = &self.attacker {
            if p.rollout == 0 || p.minibatch == 0 || p.epochs == 0 {
                return Err(Error::Config("ppo sizes must be positive".into()));
            }
            if p.minibatch > p.rollout {
                return Err(Error::Config(format!(
                    "ppo minibatch {} larger than rollout {}",
                    p.minibatch, p.rollout
                )));
            }
            if !(0.0 < p.clip && p.clip < 1.0) {
                return Err(Error::Config(format!("ppo clip {} outside (0,1)", p.clip)));
            }
        }
        if let AttackerSpec::Mimicry(m) = &self.attacker {
            if m.family == MimicFamily::GaussianMixture && m.components == 0 {
                return Err(Error::Config("mixture needs at least one component".into()));
            }
            if let MimicTrainSize::Subset(0) = m.train_size {
                return Err(Error::Config("mimic train size must be positive".into()));
            }
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSpec::Scenario {
                n_features: 16,
                clusters_per_class: 1,
                separation: 4.0,
                n_samples: 5000,
            },
            partition: PartitionSpec::Fractions {
                fixed: 0.0,
                unknown: 0.0,
            },
            engine: EngineSpec::default(),
            attacker: AttackerSpec::Ppo(PpoSpec::default()),
            t_max: 4000,
            checkpoints: vec![300, 1000, 4000],
            train_fraction: 0.75,
            seed: 1,
        }
    }
}
