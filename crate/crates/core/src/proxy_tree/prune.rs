//! Weakest-link cost-complexity pruning and cross-validated size selection.
//!
//! The cost of a tree with `b` leaves is `C_alpha(T) = R(T) + alpha * b`,
//! where `R(T) = log(sigma2)` for regression (floored at `log 1e-12`) and the
//! per-sample multinomial deviance `-L / S` for classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::proxy_tree::grow::{grow, multinomial_score};
use crate::proxy_tree::{FitTargets, GrowConfig, NodeKind, NodeStats, ProxyTree, VARIANCE_FLOOR};
use crate::rng;

/// Nested subtrees `T_0 ⊃ T_1 ⊃ … ⊃ T_m` (root only) with nondecreasing
/// complexity parameters `0 = alpha_0 <= … <= alpha_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneSequence {
    pub subtrees: Vec<ProxyTree>,
    pub alphas: Vec<f64>,
}

impl PruneSequence {
    /// Last subtree whose alpha does not exceed `alpha`.
    pub fn subtree_at(&self, alpha: f64) -> &ProxyTree {
        &self.subtrees[self.index_at(alpha)]
    }

    pub fn index_at(&self, alpha: f64) -> usize {
        self.alphas.iter().rposition(|&a| a <= alpha).unwrap_or(0)
    }

    /// Geometric midpoints between consecutive alphas, ending at `+inf`.
    pub fn cv_grid(&self) -> Vec<f64> {
        let m = self.alphas.len();
        (0..m)
            .map(|i| {
                if i + 1 < m {
                    (self.alphas[i] * self.alphas[i + 1]).sqrt()
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

fn fit_cost(tree: &ProxyTree) -> f64 {
    let s = tree.n_samples() as f64;
    match tree.task {
        Task::Regression => (tree.total_sse() / s).max(VARIANCE_FLOOR).ln(),
        Task::Classification => {
            -tree
                .nodes
                .iter()
                .filter(|n| n.is_leaf())
                .map(|n| match &n.stats {
                    NodeStats::Classification { counts } => multinomial_score(counts),
                    NodeStats::Regression { .. } => 0.0,
                })
                .sum::<f64>()
                / s
        }
    }
}

/// Per-node (leaf count, summed leaf statistic) of the subtree rooted there.
fn subtree_totals(tree: &ProxyTree) -> Vec<(usize, f64)> {
    let mut out = vec![(0usize, 0.0f64); tree.nodes.len()];
    // Children always have larger ids than their parent in preorder.
    for id in (0..tree.nodes.len()).rev() {
        let node = &tree.nodes[id];
        out[id] = match node.kind {
            NodeKind::Split { left, right, .. } => {
                (out[left].0 + out[right].0, out[left].1 + out[right].1)
            }
            NodeKind::Leaf => (1, leaf_statistic(&node.stats)),
        };
    }
    out
}

fn leaf_statistic(stats: &NodeStats) -> f64 {
    match stats {
        NodeStats::Regression { sse, .. } => *sse,
        NodeStats::Classification { counts } => multinomial_score(counts),
    }
}

/// Collapses the weakest link until only the root remains. The internal node
/// `h` pruned at each step minimizes
/// `(R(T with h collapsed) - R(T)) / (leaves(T_h) - 1)`; ties go to the
/// lowest preorder id. Because `log(sigma2)` is not additive over leaves, a
/// raw step value can dip below its predecessor; the recorded alpha is the
/// running maximum, i.e. the smallest penalty at which the subtree is reached.
pub fn prune_path(tree: &ProxyTree) -> PruneSequence {
    let mut subtrees = vec![tree.clone()];
    let mut alphas = vec![0.0];
    let mut current = tree.clone();
    while current.n_internal() > 0 {
        let s = current.n_samples() as f64;
        let cost = fit_cost(&current);
        let totals = subtree_totals(&current);
        let tree_stat: f64 = totals[0].1;
        let mut best: Option<(usize, f64)> = None;
        for (id, node) in current.nodes.iter().enumerate() {
            if node.is_leaf() {
                continue;
            }
            let (leaves, sub_stat) = totals[id];
            let collapsed_cost = match current.task {
                Task::Regression => ((tree_stat - sub_stat + leaf_statistic(&node.stats)) / s)
                    .max(VARIANCE_FLOOR)
                    .ln(),
                Task::Classification => -(tree_stat - sub_stat + leaf_statistic(&node.stats)) / s,
            };
            let alpha = (collapsed_cost - cost) / (leaves - 1) as f64;
            if best.is_none_or(|(_, a)| alpha < a) {
                best = Some((id, alpha));
            }
        }
        let (id, alpha) = best.expect("tree with internal nodes");
        let prev = *alphas.last().unwrap_or(&0.0);
        current = current.collapse(id);
        alphas.push(alpha.max(prev).max(0.0));
        subtrees.push(current.clone());
    }
    PruneSequence { subtrees, alphas }
}

/// Outcome of cross-validated alpha selection.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSelection {
    /// Path alpha of the selected full-data subtree.
    pub alpha: f64,
    pub tree: ProxyTree,
    /// Candidate alphas (geometric midpoints; last is `+inf`).
    pub grid: Vec<f64>,
    /// Mean held-out negative log-likelihood per candidate.
    pub cv_scores: Vec<f64>,
}

/// Grows and prunes on all data, then scores each geometric-midpoint alpha
/// by `folds`-fold held-out negative log-likelihood. The lowest mean score
/// wins; near-ties go to the larger alpha (smaller tree).
pub fn select_alpha(
    targets: &FitTargets,
    cfg: &GrowConfig,
    folds: usize,
    seed: u64,
) -> Result<AlphaSelection> {
    cfg.validate()?;
    if folds < 2 {
        return Err(Error::InvalidConfig(
            "cross-validation needs >= 2 folds".into(),
        ));
    }
    if targets.len() < folds * cfg.min_leaf || targets.len() < folds {
        return Err(Error::TooFewSamples {
            samples: targets.len(),
            folds,
            min_leaf: cfg.min_leaf,
        });
    }
    let full = grow(targets, cfg)?;
    let path = prune_path(&full);
    let grid = path.cv_grid();
    let assignment = rng::fold_assignment(targets.len(), folds, seed);

    let per_fold: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..targets.len()).filter(|&i| assignment[i] != k).collect();
            let test: Vec<usize> = (0..targets.len()).filter(|&i| assignment[i] == k).collect();
            let held = targets.subset(&test);
            let fold_path = prune_path(&grow(&targets.subset(&train), cfg)?);
            grid.iter()
                .map(|&beta| {
                    let tree = fold_path.subtree_at(beta);
                    Ok(tree.heldout_nll(&held)? * test.len() as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n = targets.len() as f64;
    let cv_scores: Vec<f64> = (0..grid.len())
        .map(|j| per_fold.iter().map(|f| f[j]).sum::<f64>() / n)
        .collect();
    let best = cv_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1.0);
    let chosen = (0..grid.len())
        .rev()
        .find(|&j| cv_scores[j] <= best + tol)
        .unwrap_or(0);
    let idx = path.index_at(grid[chosen]);
    Ok(AlphaSelection {
        alpha: path.alphas[idx],
        tree: path.subtrees[idx].clone(),
        grid,
        cv_scores,
    })
}

/// Tree selected for a requested leaf budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizedTree {
    pub tree: ProxyTree,
    pub requested: usize,
    /// False when the prune path skips the requested leaf count, or the
    /// fully grown tree is smaller than requested.
    pub exact: bool,
}

/// Grows a large tree and walks its prune path to the subtree with exactly
/// `size` leaves, or the largest one below it.
pub fn fit_size_constrained(
    targets: &FitTargets,
    cfg: &GrowConfig,
    size: usize,
) -> Result<SizedTree> {
    if size == 0 {
        return Err(Error::InvalidConfig("tree size must be >= 1".into()));
    }
    let full = grow(targets, cfg)?;
    Ok(size_from_path(&prune_path(&full), size))
}

pub(crate) fn size_from_path(path: &PruneSequence, size: usize) -> SizedTree {
    let tree = path
        .subtrees
        .iter()
        .find(|t| t.n_leaves() <= size)
        .unwrap_or_else(|| path.subtrees.last().expect("nonempty path"));
    SizedTree {
        exact: tree.n_leaves() == size,
        tree: tree.clone(),
        requested: size,
    }
}
