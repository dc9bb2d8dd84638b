//! Greedy maximum-likelihood growth.
//!
//! Regression split gain for node `i` with `n_i` samples is
//! `n_i * (log sigma2_i - log sigma2_split)`, where `sigma2_i = sse_i / n_i`
//! and `sigma2_split = (sse_L + sse_R) / n_i` is the shared leaf variance
//! after the split. The gain is monotone in `sse_i - sse_L - sse_R`, so with
//! zero reference variances the chosen split is the least-squares CART split.
//! Classification gain is `L_L + L_R - L_i` with `L = sum n_k log(n_k / n)`.

use crate::data::Task;
use crate::error::{Error, Result};
use crate::proxy_tree::{
    FitTargets, GrowConfig, Node, NodeKind, NodeStats, ProxyTree, TargetValues,
};

/// Relative tolerance under which two split scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// A candidate split and its log-likelihood gain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub pivot: f64,
    pub gain: f64,
}

/// Maximum-likelihood summary of a regression node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeScore {
    pub mu_hat: f64,
    /// `sum(s2 + (ybar - mu_hat)^2) / n`.
    pub variance: f64,
    /// `-n log(variance)`.
    pub score: f64,
}

pub fn node_score_regression(means: &[f64], variances: &[f64]) -> Result<NodeScore> {
    if means.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if means.len() != variances.len() {
        return Err(Error::DimensionMismatch {
            expected: means.len(),
            got: variances.len(),
        });
    }
    let n = means.len() as f64;
    let mu_hat = means.iter().sum::<f64>() / n;
    let sse: f64 = means
        .iter()
        .zip(variances)
        .map(|(m, v)| v + (m - mu_hat).powi(2))
        .sum();
    let variance = sse / n;
    Ok(NodeScore {
        mu_hat,
        variance,
        score: -n * variance.ln(),
    })
}

/// `sum_k n_k log(n_k / n)` with `0 log 0 = 0`.
pub fn multinomial_score(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * (c / n).ln()
        })
        .sum()
}

/// Best admissible split over every feature and every midpoint between
/// consecutive distinct values, or `None` when no split improves the
/// likelihood or the node is too small.
pub fn best_split(targets: &FitTargets, cfg: &GrowConfig) -> Option<Split> {
    let idx: Vec<usize> = (0..targets.len()).collect();
    best_split_among(targets, &idx, cfg.min_leaf)
}

pub(crate) fn best_split_among(
    targets: &FitTargets,
    idx: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let min_leaf = min_leaf.max(1);
    if idx.len() < 2 * min_leaf {
        return None;
    }
    match &targets.values {
        TargetValues::Regression { means, variances } => {
            regression_split(targets, means, variances, idx, min_leaf)
        }
        TargetValues::Classification { classes, n_classes } => {
            classification_split(targets, classes, *n_classes, idx, min_leaf)
        }
    }
}

fn sorted_by_feature(targets: &FitTargets, idx: &[usize], f: usize) -> Vec<usize> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| {
        targets
            .points
            .get(a, f)
            .total_cmp(&targets.points.get(b, f))
            .then(a.cmp(&b))
    });
    order
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid < hi {
        mid
    } else {
        lo
    }
}

fn regression_split(
    targets: &FitTargets,
    means: &[f64],
    variances: &[f64],
    idx: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = idx.len();
    let nf = n as f64;
    let mu = idx.iter().map(|&i| means[i]).sum::<f64>() / nf;
    let var_sum: f64 = idx.iter().map(|&i| variances[i]).sum();
    let centered_sq: f64 = idx.iter().map(|&i| (means[i] - mu).powi(2)).sum();
    let centered_sum: f64 = idx.iter().map(|&i| means[i] - mu).sum();
    let sse_node = var_sum + centered_sq;
    let tol = TIE_TOLERANCE * sse_node;
    if !(sse_node > 0.0) {
        return None;
    }

    // (feature, pivot, split sse) in feature-then-pivot order.
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for f in 0..targets.points.ncols() {
        let order = sorted_by_feature(targets, idx, f);
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for p in 0..n - 1 {
            let c = means[order[p]] - mu;
            sum_l += c;
            sq_l += c * c;
            let n_l = p + 1;
            let n_r = n - n_l;
            if n_r < min_leaf {
                break;
            }
            if n_l < min_leaf {
                continue;
            }
            let x0 = targets.points.get(order[p], f);
            let x1 = targets.points.get(order[p + 1], f);
            if x0 == x1 {
                continue;
            }
            let sum_r = centered_sum - sum_l;
            let sq_r = centered_sq - sq_l;
            let within_l = (sq_l - sum_l * sum_l / n_l as f64).max(0.0);
            let within_r = (sq_r - sum_r * sum_r / n_r as f64).max(0.0);
            candidates.push((f, midpoint(x0, x1), var_sum + within_l + within_r));
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    if !(sse_node - best > tol) {
        return None;
    }
    let &(feature, pivot, split_sse) = candidates.iter().find(|c| c.2 <= best + tol)?;
    let gain = if split_sse > 0.0 {
        nf * (sse_node / split_sse).ln()
    } else {
        f64::INFINITY
    };
    Some(Split {
        feature,
        pivot,
        gain,
    })
}

fn classification_split(
    targets: &FitTargets,
    classes: &[usize],
    n_classes: usize,
    idx: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = idx.len();
    let mut total = vec![0usize; n_classes];
    for &i in idx {
        total[classes[i]] += 1;
    }
    let score_node = multinomial_score(&total);
    let tol = TIE_TOLERANCE * score_node.abs().max(1.0);

    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for f in 0..targets.points.ncols() {
        let order = sorted_by_feature(targets, idx, f);
        left.iter_mut().for_each(|c| *c = 0);
        for p in 0..n - 1 {
            left[classes[order[p]]] += 1;
            let n_l = p + 1;
            let n_r = n - n_l;
            if n_r < min_leaf {
                break;
            }
            if n_l < min_leaf {
                continue;
            }
            let x0 = targets.points.get(order[p], f);
            let x1 = targets.points.get(order[p + 1], f);
            if x0 == x1 {
                continue;
            }
            for k in 0..n_classes {
                right[k] = total[k] - left[k];
            }
            let gain = multinomial_score(&left) + multinomial_score(&right) - score_node;
            candidates.push((f, midpoint(x0, x1), gain));
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.2)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(best > tol) {
        return None;
    }
    let &(feature, pivot, gain) = candidates.iter().find(|c| c.2 >= best - tol)?;
    Some(Split {
        feature,
        pivot,
        gain,
    })
}

/// Grows a tree depth-first (left child first) until no node admits a
/// split. Dispatches on the target task.
pub fn grow(targets: &FitTargets, cfg: &GrowConfig) -> Result<ProxyTree> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if targets.len() < cfg.min_leaf {
        return Err(Error::TooFewSamples {
            samples: targets.len(),
            folds: 1,
            min_leaf: cfg.min_leaf,
        });
    }
    let (task, n_classes) = match &targets.values {
        TargetValues::Regression { .. } => (Task::Regression, 0),
        TargetValues::Classification { n_classes, .. } => (Task::Classification, *n_classes),
    };
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..targets.len()).collect();
    build(targets, cfg, idx, 0, &mut nodes);
    let mut tree = ProxyTree {
        task,
        n_features: targets.points.ncols(),
        feature_names: Vec::new(),
        nodes,
        sigma2: None,
        n_classes,
    };
    tree.refresh_sigma2();
    Ok(tree)
}

/// [`grow`] restricted to classification targets with at least two classes present.
pub fn grow_classification(targets: &FitTargets, cfg: &GrowConfig) -> Result<ProxyTree> {
    match &targets.values {
        TargetValues::Classification { classes, n_classes } => {
            let mut seen = vec![false; *n_classes];
            classes.iter().for_each(|&c| seen[c] = true);
            if seen.iter().filter(|&&s| s).count() < 2 {
                return Err(Error::SingleClass);
            }
            grow(targets, cfg)
        }
        TargetValues::Regression { .. } => Err(Error::TaskMismatch(
            "grow_classification needs class targets".into(),
        )),
    }
}

fn node_stats(targets: &FitTargets, idx: &[usize]) -> NodeStats {
    match &targets.values {
        TargetValues::Regression { means, variances } => {
            let n = idx.len() as f64;
            let mu = idx.iter().map(|&i| means[i]).sum::<f64>() / n;
            let sse = idx
                .iter()
                .map(|&i| variances[i] + (means[i] - mu).powi(2))
                .sum();
            NodeStats::Regression { mu, sse }
        }
        TargetValues::Classification { classes, n_classes } => {
            let mut counts = vec![0; *n_classes];
            idx.iter().for_each(|&i| counts[classes[i]] += 1);
            NodeStats::Classification { counts }
        }
    }
}

fn build(
    targets: &FitTargets,
    cfg: &GrowConfig,
    idx: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    nodes.push(Node {
        kind: NodeKind::Leaf,
        n: idx.len(),
        stats: node_stats(targets, &idx),
    });
    if cfg.max_depth.is_some_and(|d| depth >= d) {
        return id;
    }
    if let Some(split) = best_split_among(targets, &idx, cfg.min_leaf) {
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| targets.points.get(i, split.feature) <= split.pivot);
        let l = build(targets, cfg, left, depth + 1, nodes);
        let r = build(targets, cfg, right, depth + 1, nodes);
        nodes[id].kind = NodeKind::Split {
            feature: split.feature,
            pivot: split.pivot,
            left: l,
            right: r,
        };
    }
    id
}
