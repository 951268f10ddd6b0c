//! The fraud engine: an extreme-value rule composed with a tuned classifier.
//! A transaction is accepted only when both parts accept it.

pub mod cv;
pub mod forest;
pub mod metrics;
pub mod mlp_clf;
pub mod rule;

pub use cv::{grid_search_cv, CvOutcome, HyperChoice, HyperGrid};
pub use forest::{forest_fit, ForestHyperParams, RandomForestModel};
pub use metrics::{classification_metrics, Metrics};
pub use mlp_clf::{mlp_clf_fit, MlpClassifierModel, NetworkHyperParams};
pub use rule::{fit_extreme_rule, ExtremeValueRule};

use crate::core::{EngineKind, EngineSpec, LabeledDataset, LABEL_GENUINE};
use crate::numkit::derive_seed;
use crate::{Error, Result};

pub const ENGINE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum EngineModel {
    Forest(RandomForestModel),
    Network(MlpClassifierModel),
}

impl EngineModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        match self {
            EngineModel::Forest(m) => m.predict_proba(row),
            EngineModel::Network(m) => m.predict_proba(row),
        }
    }

    pub fn kind(&self) -> EngineKind {
        match self {
            EngineModel::Forest(_) => EngineKind::Forest,
            EngineModel::Network(_) => EngineKind::Network,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FraudEngine {
    pub rule: ExtremeValueRule,
    pub model: EngineModel,
    pub threshold: f64,
}

impl FraudEngine {
    /// 1 = blocked. A row passes only if the rule accepts it AND the model's
    /// fraud probability stays below the threshold (>= threshold blocks).
    pub fn decide(&self, row: &[f64]) -> Result<u8> {
        if self.rule.predict(row)? == 1 {
            return Ok(1);
        }
        Ok(u8::from(self.model.predict_proba(row)? >= self.threshold))
    }

    pub fn model_proba(&self, row: &[f64]) -> Result<f64> {
        self.model.predict_proba(row)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = VersionedEngine {
            version: ENGINE_FORMAT_VERSION,
            engine: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<FraudEngine> {
        let doc: VersionedEngine = serde_json::from_str(text)?;
        if doc.version != ENGINE_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "engine document is version {}, this build reads version {}",
                doc.version, ENGINE_FORMAT_VERSION
            )));
        }
        Ok(doc.engine)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<FraudEngine> {
        FraudEngine::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct VersionedEngine {
    version: u32,
    engine: FraudEngine,
}

#[derive(Debug, Clone)]
pub struct EngineFitReport {
    pub choice: HyperChoice,
    pub cv_f1: f64,
    pub train_metrics: Metrics,
}

/// Full engine construction: extreme-value rule fit on the genuine training
/// rows, classifier hyperparameters picked by random grid CV, final model
/// refit on all training rows.
pub fn fit_engine(
    train: &LabeledDataset,
    spec: &EngineSpec,
    seed: u64,
) -> Result<(FraudEngine, EngineFitReport)> {
    let genuine = train.class_rows(LABEL_GENUINE);
    if genuine.rows() == 0 {
        return Err(Error::Data(
            "cannot fit the rule: no genuine training rows".into(),
        ));
    }
    let rule = fit_extreme_rule(&genuine, spec.rule_tail)?;

    let grid = match spec.kind {
        EngineKind::Forest => HyperGrid::default_forest(),
        EngineKind::Network => HyperGrid::default_network(),
    };
    let cv = grid_search_cv(
        train,
        &grid,
        spec.cv_draws,
        spec.cv_folds,
        derive_seed(seed, "cv"),
    )?;
    let cv_f1 = cv
        .draws
        .iter()
        .find(|(c, _)| *c == cv.best)
        .map(|(_, s)| *s)
        .unwrap_or(0.0);
    let model = cv.best.fit(train, derive_seed(seed, "fit"))?;

    let engine = FraudEngine {
        rule,
        model,
        threshold: spec.threshold,
    };
    let train_metrics = evaluate_engine_model(&engine, train)?;
    Ok((
        engine,
        EngineFitReport {
            choice: cv.best,
            cv_f1,
            train_metrics,
        },
    ))
}

/// Classifier-only metrics (the rule is a fixed filter, not a classifier).
pub fn evaluate_engine_model(engine: &FraudEngine, ds: &LabeledDataset) -> Result<Metrics> {
    let mut preds = Vec::with_capacity(ds.n_samples());
    for row in ds.rows.iter_rows() {
        preds.push(u8::from(engine.model_proba(row)? >= engine.threshold));
    }
    classification_metrics(&preds, &ds.labels)
}
