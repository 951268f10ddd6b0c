//! Random forest of Gini-split decision trees on bootstrap samples.

use rayon::prelude::*;

use crate::core::LabeledDataset;
use crate::numkit::{derive_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ForestHyperParams {
    pub n_trees: usize,
    /// None = grow until pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestHyperParams {
    fn default() -> Self {
        ForestHyperParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        p_fraud: f64,
    },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p_fraud } => return *p_fraud,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(nodes, *left).max(depth(nodes, *right)),
            }
        }
        depth(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RandomForestModel {
    pub params: ForestHyperParams,
    pub n_features: usize,
    trees: Vec<Tree>,
}

/// Fits `params.n_trees` trees, each on a bootstrap sample of the training
/// rows. Splits consider ceil(sqrt(d)) features drawn fresh at every node and
/// minimize Gini impurity; candidate thresholds are midpoints between
/// consecutive distinct values. Tree seeds are derived from `seed` up front,
/// so parallel fitting gives the same forest as serial.
pub fn forest_fit(
    train: &LabeledDataset,
    params: &ForestHyperParams,
    seed: u64,
) -> Result<RandomForestModel> {
    if train.n_samples() == 0 {
        return Err(Error::Contract("forest fit on an empty dataset".into()));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::Contract(format!(
            "forest needs positive sizes, got {params:?}"
        )));
    }
    let tree_seeds: Vec<u64> = (0..params.n_trees)
        .map(|i| derive_seed(seed, &format!("tree-{i}")))
        .collect();
    let trees: Vec<Tree> = tree_seeds
        .par_iter()
        .map(|&s| fit_tree(train, params, s))
        .collect();
    Ok(RandomForestModel {
        params: *params,
        n_features: train.n_features(),
        trees,
    })
}

impl RandomForestModel {
    /// Mean of the per-tree leaf fraud fractions.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::Shape(format!(
                "forest over {} features got a row of {}",
                self.n_features,
                row.len()
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    #[cfg(test)]
    pub fn shuffle_trees(&mut self, rng: &mut Rng) {
        rng.shuffle(&mut self.trees);
    }
}

fn fit_tree(train: &LabeledDataset, params: &ForestHyperParams, seed: u64) -> Tree {
    let mut rng = Rng::new(seed);
    let n = train.n_samples();
    let sample: Vec<usize> = (0..n).map(|_| rng.range(n)).collect();
    let mut nodes = Vec::new();
    let n_candidates = (train.n_features() as f64).sqrt().ceil() as usize;
    build_node(train, params, &mut rng, n_candidates, sample, 0, &mut nodes);
    Tree { nodes }
}

/// Appends the subtree for `samples` to `nodes`, returning its root index.
fn build_node(
    train: &LabeledDataset,
    params: &ForestHyperParams,
    rng: &mut Rng,
    n_candidates: usize,
    samples: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let n = samples.len();
    let fraud = samples.iter().filter(|&&i| train.labels[i] == 1).count();
    let make_leaf = |nodes: &mut Vec<Node>| {
        nodes.push(Node::Leaf {
            p_fraud: fraud as f64 / n as f64,
        });
        nodes.len() - 1
    };
    let depth_exhausted = params.max_depth.is_some_and(|d| depth >= d);
    if depth_exhausted || fraud == 0 || fraud == n || n < 2 * params.min_leaf {
        return make_leaf(nodes);
    }

    let candidates = rng.sample_indices(train.n_features(), n_candidates.min(train.n_features()));
    let mut best: Option<(f64, usize, f64)> = None; // (gini decrease, feature, threshold)
    let parent_gini = gini(fraud, n);
    let mut sorted: Vec<(f64, u8)> = Vec::with_capacity(n);
    for &feature in &candidates {
        sorted.clear();
        sorted.extend(
            samples
                .iter()
                .map(|&i| (train.rows.get(i, feature), train.labels[i])),
        );
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN feature value"));
        let mut left_n = 0usize;
        let mut left_fraud = 0usize;
        for k in 0..n - 1 {
            left_n += 1;
            left_fraud += usize::from(sorted[k].1 == 1);
            if sorted[k].0 == sorted[k + 1].0 {
                continue; // no boundary between equal values
            }
            let right_n = n - left_n;
            if left_n < params.min_leaf || right_n < params.min_leaf {
                continue;
            }
            let right_fraud = fraud - left_fraud;
            let weighted = (left_n as f64 * gini(left_fraud, left_n)
                + right_n as f64 * gini(right_fraud, right_n))
                / n as f64;
            let decrease = parent_gini - weighted;
            if decrease > 1e-12 && best.is_none_or(|(d, _, _)| decrease > d) {
                let threshold = 0.5 * (sorted[k].0 + sorted[k + 1].0);
                best = Some((decrease, feature, threshold));
            }
        }
    }

    match best {
        None => make_leaf(nodes),
        Some((_, feature, threshold)) => {
            let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
                .into_iter()
                .partition(|&i| train.rows.get(i, feature) <= threshold);
            let slot = nodes.len();
            nodes.push(Node::Leaf { p_fraud: 0.0 }); // placeholder
            let left = build_node(train, params, rng, n_candidates, left_samples, depth + 1, nodes);
            let right =
                build_node(train, params, rng, n_candidates, right_samples, depth + 1, nodes);
            nodes[slot] = Node::Split {
                feature,
                threshold,
                left,
                right,
            };
            slot
        }
    }
}

fn gini(fraud: usize, n: usize) -> f64 {
    let p = fraud as f64 / n as f64;
    2.0 * p * (1.0 - p)
}
