//! Bagged regression/classification trees used as a posterior surrogate.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Task};
use crate::error::{Error, Result};
use crate::proxy_tree::{grow, FitTargets, GrowConfig, ProxyTree};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_trees: 100,
            max_depth: 10,
            min_leaf: 3,
            bootstrap_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidConfig(
                "n_trees, max_depth and min_leaf must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: EnsembleConfig,
    pub task: Task,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub n_classes: usize,
    pub trees: Vec<ProxyTree>,
    /// Mean in-leaf residual variance across trees (regression only).
    pub noise_variance: f64,
}

pub fn fit_ensemble(train: &Dataset, cfg: &EnsembleConfig) -> Result<EnsembleModel> {
    cfg.validate()?;
    let n = train.len();
    if n < 2 * cfg.min_leaf {
        return Err(Error::TooFewSamples {
            samples: n,
            folds: 2,
            min_leaf: cfg.min_leaf,
        });
    }
    let targets = FitTargets::from_dataset(train)?;
    let grow_cfg = GrowConfig {
        min_leaf: cfg.min_leaf,
        max_depth: Some(cfg.max_depth),
    };
    let trees: Vec<ProxyTree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::rng(rng::derive_seed(cfg.bootstrap_seed, t as u64));
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            grow(&targets.subset(&idx), &grow_cfg)
                .map(|tree| tree.with_feature_names(&train.feature_names))
        })
        .collect::<Result<_>>()?;
    let noise_variance = match train.task() {
        Task::Regression => {
            trees.iter().map(|t| t.sigma2.unwrap_or(0.0)).sum::<f64>() / trees.len() as f64
        }
        Task::Classification => 0.0,
    };
    let n_classes = match &train.target {
        crate::data::Target::Classification { n_classes, .. } => *n_classes,
        crate::data::Target::Regression(_) => 0,
    };
    Ok(EnsembleModel {
        config: cfg.clone(),
        task: train.task(),
        n_features: train.n_features(),
        feature_names: train.feature_names.clone(),
        n_classes,
        trees,
        noise_variance,
    })
}

impl EnsembleModel {
    /// Per-tree mean predictions, one vector per tree.
    pub fn tree_means(&self, points: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.trees.iter().map(|t| t.predict_mean(points)).collect()
    }

    /// Per-tree class probabilities, indexed `[tree][point][class]`.
    pub fn tree_probs(&self, points: &Matrix) -> Result<Vec<Vec<Vec<f64>>>> {
        self.trees.iter().map(|t| t.predict_proba(points)).collect()
    }

    /// Across-tree mean and population variance (epistemic part only).
    pub fn mean_and_spread(&self, points: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let per_tree = self.tree_means(points)?;
        let t = per_tree.len() as f64;
        let s = points.nrows();
        let mut mean = vec![0.0; s];
        for tree in &per_tree {
            for (m, v) in mean.iter_mut().zip(tree) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t);
        let mut spread = vec![0.0; s];
        for tree in &per_tree {
            for ((acc, v), m) in spread.iter_mut().zip(tree).zip(&mean) {
                *acc += (v - m).powi(2);
            }
        }
        spread.iter_mut().for_each(|v| *v /= t);
        Ok((mean, spread))
    }

    pub fn mean_probs(&self, points: &Matrix) -> Result<Vec<Vec<f64>>> {
        let per_tree = self.tree_probs(points)?;
        let t = per_tree.len() as f64;
        let mut out = vec![vec![0.0; self.n_classes]; points.nrows()];
        for tree in &per_tree {
            for (row, p) in out.iter_mut().zip(tree) {
                for (a, b) in row.iter_mut().zip(p) {
                    *a += b;
                }
            }
        }
        for row in &mut out {
            row.iter_mut().for_each(|v| *v /= t);
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        Ok(out)
    }
}
