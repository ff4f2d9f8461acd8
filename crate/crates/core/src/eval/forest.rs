use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{Predictions, Targets};
use super::tree::{DecisionTree, MaxFeatures, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_estimators: usize, max_depth: Option<usize>, seed: u64) -> Self {
        Self {
            n_estimators,
            max_depth,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed,
        }
    }
}

/// Bagged CART trees. Classes by majority vote (ties to the lower index), values by mean.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: Option<usize>,
}

impl RandomForest {
    pub fn fit(x: &Array2<f64>, targets: &Targets, params: ForestParams) -> Result<Self> {
        if params.n_estimators == 0 {
            return Err(Error::Config("random forest needs at least one tree".into()));
        }
        let n = x.nrows();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            max_features: params.max_features,
            min_samples_leaf: 1,
        };
        let mut trees = Vec::with_capacity(params.n_estimators);
        for k in 0..params.n_estimators {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(k as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n.max(1))).collect()
            } else {
                (0..n).collect()
            };
            trees.push(DecisionTree::fit(x, targets, &rows, tree_params, &mut rng)?);
        }
        let n_classes = match targets {
            Targets::Classes { n_classes, .. } => Some(*n_classes),
            Targets::Values(_) => None,
        };
        Ok(Self { trees, n_classes })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Predictions {
        let per_tree: Vec<Predictions> = self.trees.iter().map(|t| t.predict(x)).collect();
        let n = x.nrows();
        match self.n_classes {
            Some(k) => {
                let mut votes = vec![vec![0usize; k]; n];
                for p in &per_tree {
                    let Predictions::Classes(c) = p else { unreachable!() };
                    for (v, &ci) in votes.iter_mut().zip(c) {
                        v[ci] += 1;
                    }
                }
                Predictions::Classes(
                    votes
                        .iter()
                        .map(|v| {
                            let mut best = 0;
                            for (i, &c) in v.iter().enumerate() {
                                if c > v[best] {
                                    best = i;
                                }
                            }
                            best
                        })
                        .collect(),
                )
            }
            None => {
                let mut sum = vec![0.0; n];
                for p in &per_tree {
                    let Predictions::Values(v) = p else { unreachable!() };
                    sum.iter_mut().zip(v).for_each(|(s, vi)| *s += vi);
                }
                let m = self.trees.len() as f64;
                Predictions::Values(sum.into_iter().map(|s| s / m).collect())
            }
        }
    }
}
