//! Feed-forward network classifier: tanh hidden layers, sigmoid head,
//! binary cross-entropy, minibatch Adam on standardized inputs.

use crate::core::LabeledDataset;
use crate::datagen::ScalerStats;
use crate::numkit::{Activation, AdamState, MlpGrads, MlpParams, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetworkHyperParams {
    pub hidden: Vec<usize>,
    /// Learning rate scaled by 1e4 so the type stays Eq/hashable for grids.
    pub lr_times_1e4: u32,
    pub epochs: usize,
    pub batch_size: usize,
}

impl NetworkHyperParams {
    pub fn lr(&self) -> f64 {
        self.lr_times_1e4 as f64 * 1e-4
    }
}

impl Default for NetworkHyperParams {
    fn default() -> Self {
        NetworkHyperParams {
            hidden: vec![32],
            lr_times_1e4: 10, // 1e-3
            epochs: 50,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpClassifierModel {
    pub params: NetworkHyperParams,
    pub scaler: ScalerStats,
    pub mlp: MlpParams,
}

pub fn mlp_clf_fit(
    train: &LabeledDataset,
    params: &NetworkHyperParams,
    seed: u64,
) -> Result<MlpClassifierModel> {
    fit_with_trace(train, params, seed).map(|(model, _)| model)
}

/// Also returns the mean training loss per epoch, for learning-curve checks.
pub fn fit_with_trace(
    train: &LabeledDataset,
    params: &NetworkHyperParams,
    seed: u64,
) -> Result<(MlpClassifierModel, Vec<f64>)> {
    if !train.labels.contains(&0) || !train.labels.contains(&1) {
        return Err(Error::Contract(
            "network training needs both classes present".into(),
        ));
    }
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::Contract(format!(
            "network needs positive epochs and batch size, got {params:?}"
        )));
    }
    let scaler = ScalerStats::fit(&train.rows)?;
    let inputs = scaler.transform(&train.rows);

    let d = train.n_features();
    let mut sizes = vec![d];
    sizes.extend_from_slice(&params.hidden);
    sizes.push(1);
    let mut activations = vec![Activation::Tanh; params.hidden.len()];
    activations.push(Activation::Linear);
    let mut mlp = MlpParams::new(&sizes, &activations, false);
    let mut rng = Rng::new(seed);
    mlp.init_orthogonal(&vec![1.0; activations.len()], &mut rng);
    let mut adam = AdamState::new(mlp.param_count(), params.lr());

    let n = train.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            let mut grads = MlpGrads::zeros_like(&mlp);
            for &i in batch {
                let (out, cache) = mlp.forward(inputs.row(i));
                let z = out[0];
                let y = f64::from(train.labels[i]);
                // numerically stable BCE with logits
                epoch_loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                let dz = sigmoid(z) - y;
                let (g, _) = mlp.backward(&cache, &[dz]);
                grads.add(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            let mut flat = mlp.to_flat();
            adam.step(&mut flat, &grads.to_flat());
            mlp.set_from_flat(&flat);
        }
        let mean_loss = epoch_loss / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "network training diverged at epoch {epoch}: loss {mean_loss}"
            )));
        }
        losses.push(mean_loss);
    }

    Ok((
        MlpClassifierModel {
            params: params.clone(),
            scaler,
            mlp,
        },
        losses,
    ))
}

impl MlpClassifierModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.scaler.dim() {
            return Err(Error::Shape(format!(
                "network over {} features got a row of {}",
                self.scaler.dim(),
                row.len()
            )));
        }
        let (out, _) = self.mlp.forward(&self.scaler.transform_row(row));
        Ok(sigmoid(out[0]))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
