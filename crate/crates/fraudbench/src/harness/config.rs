//! Flat key-value run configuration with dotted section names.
//!
//! ```text
//! # one attack run
//! data.scenario.n_features = 16
//! engine.kind = network
//! attacker.kind = ppo
//! run.t_max = 4000
//! run.checkpoints = 300,1000,4000
//! ```
//!
//! Sweeps add axis keys (`sweep.seeds`, `sweep.engines`, `sweep.partitions`,
//! `sweep.attackers`) on top of the same base keys; the cartesian product of
//! the axes becomes the run list.

use std::collections::BTreeMap;

use crate::core::{
    AttackerSpec, DataSpec, EngineKind, MimicFamily, MimicSpec, MimicTrainSize, PartitionSpec,
    PpoSpec, RunConfig,
};
use crate::{Error, Result};

/// A fully expanded sweep: one config per run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepSpec {
    pub runs: Vec<RunConfig>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(Error::Config("sweep contains no runs".into()));
        }
        let mut seen: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for run in &self.runs {
            run.validate()?;
            let key = format!(
                "{}|{}|{}",
                run.engine.kind,
                run.partition.label(),
                run.attacker.label()
            );
            let seeds = seen.entry(key.clone()).or_default();
            if seeds.contains(&run.seed) {
                return Err(Error::Config(format!(
                    "duplicate seed {} for setting {key}"
                , run.seed)));
            }
            seeds.push(run.seed);
        }
        Ok(())
    }
}

/// Key-value bag that tracks which keys were consumed, so leftovers can be
/// reported as unknown.
struct KeyBag {
    entries: BTreeMap<String, String>,
    used: std::collections::BTreeSet<String>,
}

impl KeyBag {
    fn parse(text: &str) -> Result<KeyBag> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key}",
                    lineno + 1
                )));
            }
        }
        Ok(KeyBag {
            entries,
            used: Default::default(),
        })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let v = self.entries.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self
            .entries
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown config key(s): {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

fn bad<T: std::str::FromStr>(key: &str, value: &str) -> Error
where
    T::Err: std::fmt::Display,
{
    Error::Config(format!(
        "key {key}: cannot parse {value:?} as {}",
        std::any::type_name::<T>()
    ))
}

fn take_parsed<T: std::str::FromStr>(bag: &mut KeyBag, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match bag.take(key) {
        None => Ok(default),
        Some(v) => v.parse::<T>().map_err(|_| bad::<T>(key, &v)),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| bad::<T>(key, s)))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "key {key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn parse_family(value: &str) -> Result<MimicFamily> {
    match value {
        "uniform" => Ok(MimicFamily::Uniform),
        "univariate" => Ok(MimicFamily::UnivariateNormal),
        "multivariate" => Ok(MimicFamily::MultivariateNormal),
        "mixture" => Ok(MimicFamily::GaussianMixture),
        _ => Err(Error::Config(format!(
            "unknown mimic family {value:?} (uniform|univariate|multivariate|mixture)"
        ))),
    }
}

fn parse_engine_kind(value: &str) -> Result<EngineKind> {
    match value {
        "forest" => Ok(EngineKind::Forest),
        "network" => Ok(EngineKind::Network),
        _ => Err(Error::Config(format!(
            "unknown engine kind {value:?} (forest|network)"
        ))),
    }
}

fn parse_train_size(value: &str) -> Result<MimicTrainSize> {
    if value == "all" {
        Ok(MimicTrainSize::All)
    } else {
        let n: usize = value
            .parse()
            .map_err(|_| Error::Config(format!("mimic train size {value:?} is not `all` or a count")))?;
        Ok(MimicTrainSize::Subset(n))
    }
}

/// `ppo` or `mimicry:<family>:<all|n>` as emitted by `AttackerSpec::label`.
fn parse_attacker_label(value: &str, base: &RunConfig) -> Result<AttackerSpec> {
    if value == "ppo" {
        let ppo = match &base.attacker {
            AttackerSpec::Ppo(p) => p.clone(),
            _ => PpoSpec::default(),
        };
        return Ok(AttackerSpec::Ppo(ppo));
    }
    if let Some(rest) = value.strip_prefix("mimicry:") {
        let (family, size) = rest.split_once(':').ok_or_else(|| {
            Error::Config(format!(
                "attacker {value:?}: expected mimicry:<family>:<all|n>"
            ))
        })?;
        let components = match &base.attacker {
            AttackerSpec::Mimicry(m) => m.components,
            _ => MimicSpec::default().components,
        };
        return Ok(AttackerSpec::Mimicry(MimicSpec {
            family: parse_family(family)?,
            train_size: parse_train_size(size)?,
            components,
        }));
    }
    Err(Error::Config(format!(
        "unknown attacker {value:?} (ppo | mimicry:<family>:<all|n>)"
    )))
}

/// `<fixed%>/<unknown%>`, e.g. `25/25`.
fn parse_partition_pair(value: &str) -> Result<PartitionSpec> {
    let (fixed, unknown) = value.split_once('/').ok_or_else(|| {
        Error::Config(format!(
            "partition {value:?}: expected <fixed%>/<unknown%>"
        ))
    })?;
    let f: f64 = fixed
        .trim()
        .parse()
        .map_err(|_| bad::<f64>("sweep.partitions", fixed))?;
    let u: f64 = unknown
        .trim()
        .parse()
        .map_err(|_| bad::<f64>("sweep.partitions", unknown))?;
    Ok(PartitionSpec::Fractions {
        fixed: f / 100.0,
        unknown: u / 100.0,
    })
}

fn build_run_config(bag: &mut KeyBag) -> Result<RunConfig> {
    let defaults = RunConfig::default();

    let data = if bag.has("data.csv.path") {
        let scenario_keys = [
            "data.scenario.n_features",
            "data.scenario.clusters_per_class",
            "data.scenario.separation",
            "data.scenario.n_samples",
        ];
        if scenario_keys.iter().any(|k| bag.has(k)) {
            return Err(Error::Config(
                "config mixes data.csv.* and data.scenario.* keys".into(),
            ));
        }
        DataSpec::Csv {
            path: bag.take("data.csv.path").unwrap(),
            label_column: bag
                .take("data.csv.label_column")
                .unwrap_or_else(|| "class".into()),
        }
    } else {
        let (n_features, clusters, separation, n_samples) = match defaults.data {
            DataSpec::Scenario {
                n_features,
                clusters_per_class,
                separation,
                n_samples,
            } => (n_features, clusters_per_class, separation, n_samples),
            _ => unreachable!("default config is a scenario"),
        };
        DataSpec::Scenario {
            n_features: take_parsed(bag, "data.scenario.n_features", n_features)?,
            clusters_per_class: take_parsed(bag, "data.scenario.clusters_per_class", clusters)?,
            separation: take_parsed(bag, "data.scenario.separation", separation)?,
            n_samples: take_parsed(bag, "data.scenario.n_samples", n_samples)?,
        }
    };

    let explicit_keys = [
        "partition.indices.controllable",
        "partition.indices.known",
        "partition.indices.unknown",
    ];
    let partition = if explicit_keys.iter().any(|k| bag.has(k)) {
        if bag.has("partition.fixed") || bag.has("partition.unknown") {
            return Err(Error::Config(
                "config mixes partition fractions and explicit index lists".into(),
            ));
        }
        let mut lists = Vec::new();
        for key in explicit_keys {
            let v = bag.take(key).unwrap_or_default();
            lists.push(parse_list::<usize>(key, &v)?);
        }
        let unknown = lists.pop().unwrap();
        let known = lists.pop().unwrap();
        let controllable = lists.pop().unwrap();
        PartitionSpec::Explicit {
            controllable,
            known,
            unknown,
        }
    } else {
        PartitionSpec::Fractions {
            fixed: take_parsed(bag, "partition.fixed", 0.0)?,
            unknown: take_parsed(bag, "partition.unknown", 0.0)?,
        }
    };

    let mut engine = defaults.engine.clone();
    if let Some(v) = bag.take("engine.kind") {
        engine.kind = parse_engine_kind(&v)?;
    }
    engine.rule_tail = take_parsed(bag, "engine.rule_tail", engine.rule_tail)?;
    engine.threshold = take_parsed(bag, "engine.threshold", engine.threshold)?;
    engine.cv_draws = take_parsed(bag, "engine.cv_draws", engine.cv_draws)?;
    engine.cv_folds = take_parsed(bag, "engine.cv_folds", engine.cv_folds)?;

    let kind = bag.take("attacker.kind").unwrap_or_else(|| "ppo".into());
    let attacker = match kind.as_str() {
        "ppo" => {
            let d = PpoSpec::default();
            let scale = match bag.take("attacker.ppo.scale_actions") {
                None => d.scale_actions,
                Some(v) => parse_bool("attacker.ppo.scale_actions", &v)?,
            };
            AttackerSpec::Ppo(PpoSpec {
                clip: take_parsed(bag, "attacker.ppo.clip", d.clip)?,
                actor_lr: take_parsed(bag, "attacker.ppo.actor_lr", d.actor_lr)?,
                critic_lr: take_parsed(bag, "attacker.ppo.critic_lr", d.critic_lr)?,
                rollout: take_parsed(bag, "attacker.ppo.rollout", d.rollout)?,
                epochs: take_parsed(bag, "attacker.ppo.epochs", d.epochs)?,
                minibatch: take_parsed(bag, "attacker.ppo.minibatch", d.minibatch)?,
                entropy_coef: take_parsed(bag, "attacker.ppo.entropy_coef", d.entropy_coef)?,
                scale_actions: scale,
            })
        }
        "mimicry" => {
            let d = MimicSpec::default();
            let family = match bag.take("attacker.mimic.family") {
                None => d.family,
                Some(v) => parse_family(&v)?,
            };
            let train_size = match bag.take("attacker.mimic.train_size") {
                None => d.train_size,
                Some(v) => parse_train_size(&v)?,
            };
            AttackerSpec::Mimicry(MimicSpec {
                family,
                train_size,
                components: take_parsed(bag, "attacker.mimic.components", d.components)?,
            })
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown attacker kind {kind:?} (ppo|mimicry)"
            )))
        }
    };

    let checkpoints = match bag.take("run.checkpoints") {
        None => defaults.checkpoints.clone(),
        Some(v) => parse_list::<usize>("run.checkpoints", &v)?,
    };

    let config = RunConfig {
        data,
        partition,
        engine,
        attacker,
        t_max: take_parsed(bag, "run.t_max", defaults.t_max)?,
        checkpoints,
        train_fraction: take_parsed(bag, "run.train_fraction", defaults.train_fraction)?,
        seed: take_parsed(bag, "run.seed", defaults.seed)?,
    };
    config.validate()?;
    Ok(config)
}

/// Parses a single-run config. Unknown keys are an error.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let mut bag = KeyBag::parse(text)?;
    let config = build_run_config(&mut bag)?;
    bag.finish()?;
    Ok(config)
}

/// Parses a sweep config: base run keys plus axis lists. Every combination of
/// engine x partition x attacker x seed becomes one run.
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec> {
    let mut bag = KeyBag::parse(text)?;
    let base = build_run_config(&mut bag)?;

    let seeds = match bag.take("sweep.seeds") {
        None => vec![base.seed],
        Some(v) => parse_list::<u64>("sweep.seeds", &v)?,
    };
    let engines: Vec<EngineKind> = match bag.take("sweep.engines") {
        None => vec![base.engine.kind],
        Some(v) => v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_engine_kind)
            .collect::<Result<_>>()?,
    };
    let partitions: Vec<PartitionSpec> = match bag.take("sweep.partitions") {
        None => vec![base.partition.clone()],
        Some(v) => v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_partition_pair)
            .collect::<Result<_>>()?,
    };
    let attackers: Vec<AttackerSpec> = match bag.take("sweep.attackers") {
        None => vec![base.attacker.clone()],
        Some(v) => v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_attacker_label(s, &base))
            .collect::<Result<_>>()?,
    };
    bag.finish()?;

    let mut runs = Vec::new();
    for engine_kind in &engines {
        for partition in &partitions {
            for attacker in &attackers {
                for &seed in &seeds {
                    let mut run = base.clone();
                    run.engine.kind = *engine_kind;
                    run.partition = partition.clone();
                    run.attacker = attacker.clone();
                    run.seed = seed;
                    runs.push(run);
                }
            }
        }
    }
    let spec = SweepSpec { runs };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let c = parse_run_config("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn comments_and_spacing_are_ignored() {
        let text = "\n# a comment\n  run.seed =  9  \n\nrun.t_max=100\nrun.checkpoints = 50, 100\n";
        let c = parse_run_config(text).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.t_max, 100);
        assert_eq!(c.checkpoints, vec![50, 100]);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = parse_run_config("run.sed = 9").unwrap_err();
        assert!(err.to_string().contains("run.sed"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        assert!(parse_run_config("run.seed = 1\nrun.seed = 2").is_err());
    }

    #[test]
    fn malformed_line_is_rejected_with_line_number() {
        let err = parse_run_config("run.seed = 1\nnot a pair").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn mimicry_attacker_round_trips_through_label() {
        let text = "attacker.kind = mimicry\nattacker.mimic.family = mixture\nattacker.mimic.train_size = 1000\n";
        let c = parse_run_config(text).unwrap();
        assert_eq!(c.attacker.label(), "mimicry:mixture:1000");
        let back = parse_attacker_label(&c.attacker.label(), &c).unwrap();
        assert_eq!(back, c.attacker);
    }

    #[test]
    fn explicit_partition_indices_parse() {
        let text = "data.scenario.n_features = 4\npartition.indices.controllable = 0,1\npartition.indices.known = 2\npartition.indices.unknown = 3\n";
        let c = parse_run_config(text).unwrap();
        match &c.partition {
            PartitionSpec::Explicit {
                controllable,
                known,
                unknown,
            } => {
                assert_eq!(controllable, &[0, 1]);
                assert_eq!(known, &[2]);
                assert_eq!(unknown, &[3]);
            }
            _ => panic!("expected explicit partition"),
        }
    }

    #[test]
    fn mixing_partition_styles_is_rejected() {
        let text = "partition.fixed = 0.25\npartition.indices.controllable = 0\n";
        assert!(parse_run_config(text).is_err());
    }

    #[test]
    fn mixing_data_sources_is_rejected() {
        let text = "data.csv.path = x.csv\ndata.scenario.n_features = 4\n";
        assert!(parse_run_config(text).is_err());
    }

    #[test]
    fn csv_data_source_parses() {
        let c = parse_run_config("data.csv.path = frauds.csv\ndata.csv.label_column = is_fraud\n")
            .unwrap();
        assert_eq!(
            c.data,
            DataSpec::Csv {
                path: "frauds.csv".into(),
                label_column: "is_fraud".into()
            }
        );
    }

    #[test]
    fn invalid_config_values_are_rejected() {
        assert!(parse_run_config("run.t_max = 0").is_err());
        assert!(parse_run_config("run.train_fraction = 1.5").is_err());
        assert!(parse_run_config("engine.kind = boost").is_err());
        assert!(parse_run_config("run.checkpoints = 10,5").is_err());
        assert!(parse_run_config("run.t_max = 100\nrun.checkpoints = 200").is_err());
    }

    #[test]
    fn sweep_expands_the_cartesian_product() {
        let text = "run.t_max = 100\nrun.checkpoints = 100\nsweep.seeds = 1,2,3\nsweep.engines = forest,network\nsweep.partitions = 0/0,25/25\nsweep.attackers = ppo,mimicry:uniform:all\n";
        let spec = parse_sweep_spec(text).unwrap();
        assert_eq!(spec.runs.len(), 3 * 2 * 2 * 2);
        let forest_runs = spec
            .runs
            .iter()
            .filter(|r| r.engine.kind == EngineKind::Forest)
            .count();
        assert_eq!(forest_runs, 12);
        for run in &spec.runs {
            assert_eq!(run.t_max, 100);
        }
    }

    #[test]
    fn sweep_with_duplicate_seeds_is_rejected() {
        let err = parse_sweep_spec("sweep.seeds = 1,1").unwrap_err();
        assert!(err.to_string().contains("duplicate seed"), "{err}");
    }

    #[test]
    fn sweep_partition_pairs_set_fractions() {
        let spec = parse_sweep_spec("sweep.partitions = 50/25").unwrap();
        assert_eq!(spec.runs.len(), 1);
        assert_eq!(
            spec.runs[0].partition,
            PartitionSpec::Fractions {
                fixed: 0.5,
                unknown: 0.25
            }
        );
    }
}
