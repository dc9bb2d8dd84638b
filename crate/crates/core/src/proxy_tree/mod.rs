//! Maximum-likelihood decision trees used as interpretable proxies.
//!
//! Regression trees model every leaf as `N(mu_i, sigma^2)` with one shared
//! variance. They are fit to reference predictive means `ybar` and variances
//! `s2`, so a node's sufficient statistic is
//! `sse = sum(s2 + (ybar - mu)^2)` and the tree variance is `sum(sse) / S`.
//! Classification trees are multinomial with leaf probabilities `n_k / n`.
//!
//! Trees are stored as a preorder arena. Every node, internal or not, keeps
//! the statistics of the samples that reached it during fitting; pruning
//! collapses nodes without revisiting the data.

mod grow;
mod prune;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Target, Task};
use crate::error::{Error, Result};

pub use grow::{
    best_split, grow, grow_classification, multinomial_score, node_score_regression, NodeScore,
    Split,
};
pub(crate) use prune::size_from_path;
pub use prune::{
    fit_size_constrained, prune_path, select_alpha, AlphaSelection, PruneSequence, SizedTree,
};

/// Floor applied to variances inside logarithms.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Floor applied to held-out class probabilities inside logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Responses a tree is fit to.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetValues {
    /// Reference predictive means and variances per point.
    Regression {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// Zero-based class indices.
    Classification {
        classes: Vec<usize>,
        n_classes: usize,
    },
}

/// Points `z_s` paired with the reference model's output at each of them.
#[derive(Clone, Debug, PartialEq)]
pub struct FitTargets {
    pub points: Matrix,
    pub values: TargetValues,
}

impl FitTargets {
    pub fn regression(points: Matrix, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        for len in [means.len(), variances.len()] {
            if len != points.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: points.nrows(),
                    got: len,
                });
            }
        }
        if variances.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig(
                "reference variances must be >= 0".into(),
            ));
        }
        Ok(FitTargets {
            points,
            values: TargetValues::Regression { means, variances },
        })
    }

    pub fn classification(points: Matrix, classes: Vec<usize>, n_classes: usize) -> Result<Self> {
        if classes.len() != points.nrows() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                got: classes.len(),
            });
        }
        if n_classes < 2 || classes.iter().any(|&c| c >= n_classes) {
            return Err(Error::InvalidConfig("class index out of range".into()));
        }
        Ok(FitTargets {
            points,
            values: TargetValues::Classification { classes, n_classes },
        })
    }

    /// Raw observations as targets, with zero reference variance. This is the
    /// "fit directly to the data" baseline.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        match &ds.target {
            Target::Regression(y) => {
                Self::regression(ds.features.clone(), y.clone(), vec![0.0; y.len()])
            }
            Target::Classification { labels, n_classes } => Self::classification(
                ds.features.clone(),
                labels.iter().map(|l| l - 1).collect(),
                *n_classes,
            ),
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    /// Reference means, for regression targets.
    pub fn means(&self) -> Option<&[f64]> {
        match &self.values {
            TargetValues::Regression { means, .. } => Some(means),
            TargetValues::Classification { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self.values {
            TargetValues::Regression { .. } => Task::Regression,
            TargetValues::Classification { .. } => Task::Classification,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> FitTargets {
        let values = match &self.values {
            TargetValues::Regression { means, variances } => TargetValues::Regression {
                means: indices.iter().map(|&i| means[i]).collect(),
                variances: indices.iter().map(|&i| variances[i]).collect(),
            },
            TargetValues::Classification { classes, n_classes } => TargetValues::Classification {
                classes: indices.iter().map(|&i| classes[i]).collect(),
                n_classes: *n_classes,
            },
        };
        FitTargets {
            points: self.points.select_rows(indices),
            values,
        }
    }
}

/// Stopping rule for growth. Ties between equally good splits always go to
/// the lowest feature index, then the smallest pivot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowConfig {
    pub min_leaf: usize,
    /// Root is depth 0; `Some(3)` allows at most 8 leaves.
    pub max_depth: Option<usize>,
}

impl Default for GrowConfig {
    fn default() -> Self {
        GrowConfig {
            min_leaf: 5,
            max_depth: None,
        }
    }
}

impl GrowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeStats {
    Regression { mu: f64, sse: f64 },
    Classification { counts: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf,
    Split {
        feature: usize,
        pivot: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// Number of fitting samples routed here.
    pub n: usize,
    pub stats: NodeStats,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }

    pub fn probs(&self) -> Option<Vec<f64>> {
        match &self.stats {
            NodeStats::Classification { counts } => {
                let n: usize = counts.iter().sum();
                Some(counts.iter().map(|&c| c as f64 / n as f64).collect())
            }
            NodeStats::Regression { .. } => None,
        }
    }
}

/// A fitted binary tree of axis-aligned splits. A point goes left iff
/// `x[feature] <= pivot`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyTree {
    pub task: Task,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    /// Preorder arena; the root is `nodes[0]`.
    pub nodes: Vec<Node>,
    /// Shared leaf variance (regression only).
    pub sigma2: Option<f64>,
    pub n_classes: usize,
}

/// Per-point tree output.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictions {
    Means(Vec<f64>),
    Probs(Vec<Vec<f64>>),
}

impl ProxyTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    pub fn n_samples(&self) -> usize {
        self.nodes[0].n
    }

    pub fn depth(&self) -> usize {
        fn go(t: &ProxyTree, id: usize) -> usize {
            match t.nodes[id].kind {
                NodeKind::Leaf => 0,
                NodeKind::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn with_feature_names(mut self, names: &[String]) -> Self {
        if names.len() == self.n_features {
            self.feature_names = names.to_vec();
        }
        self
    }

    pub fn feature_name(&self, k: usize) -> String {
        self.feature_names
            .get(k)
            .cloned()
            .unwrap_or_else(|| format!("x{k}"))
    }

    /// Sorted distinct features used by any split.
    pub fn features_used(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Split { feature, .. } => Some(feature),
                NodeKind::Leaf => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let NodeKind::Split {
            feature,
            pivot,
            left,
            right,
        } = self.nodes[id].kind
        {
            id = if x[feature] <= pivot { left } else { right };
        }
        id
    }

    pub fn predict(&self, points: &Matrix) -> Result<Predictions> {
        points.check_cols(self.n_features)?;
        Ok(match self.task {
            Task::Regression => Predictions::Means(
                points
                    .rows()
                    .map(|x| self.leaf_mean(self.leaf_index(x)))
                    .collect(),
            ),
            Task::Classification => Predictions::Probs(
                points
                    .rows()
                    .map(|x| self.nodes[self.leaf_index(x)].probs().unwrap_or_default())
                    .collect(),
            ),
        })
    }

    /// Leaf means for a regression tree.
    pub fn predict_mean(&self, points: &Matrix) -> Result<Vec<f64>> {
        match self.predict(points)? {
            Predictions::Means(m) => Ok(m),
            Predictions::Probs(_) => Err(Error::TaskMismatch(
                "predict_mean called on a classification tree".into(),
            )),
        }
    }

    pub fn predict_proba(&self, points: &Matrix) -> Result<Vec<Vec<f64>>> {
        match self.predict(points)? {
            Predictions::Probs(p) => Ok(p),
            Predictions::Means(_) => Err(Error::TaskMismatch(
                "predict_proba called on a regression tree".into(),
            )),
        }
    }

    fn leaf_mean(&self, id: usize) -> f64 {
        match self.nodes[id].stats {
            NodeStats::Regression { mu, .. } => mu,
            NodeStats::Classification { .. } => f64::NAN,
        }
    }

    /// Log-likelihood of `targets` under this tree's fitted parameters.
    ///
    /// Regression uses the expected Gaussian log-likelihood
    /// `-S/2 log(2 pi sigma2) - sum(s2 + (ybar - mu_leaf)^2) / (2 sigma2)`;
    /// classification uses `sum log p_leaf[class]` with `0 log 0 = 0`.
    pub fn log_likelihood(&self, targets: &FitTargets) -> Result<f64> {
        targets.points.check_cols(self.n_features)?;
        match (&targets.values, self.sigma2) {
            (TargetValues::Regression { means, variances }, Some(sigma2)) => {
                let resid: f64 = targets
                    .points
                    .rows()
                    .zip(means.iter().zip(variances))
                    .map(|(x, (m, v))| v + (m - self.leaf_mean(self.leaf_index(x))).powi(2))
                    .sum();
                Ok(gaussian_log_likelihood(targets.len(), sigma2, resid))
            }
            (TargetValues::Classification { classes, .. }, None) => Ok(targets
                .points
                .rows()
                .zip(classes)
                .map(|(x, &c)| {
                    let probs = self.nodes[self.leaf_index(x)].probs().unwrap_or_default();
                    let p = probs.get(c).copied().unwrap_or(0.0);
                    if p > 0.0 {
                        p.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .sum()),
            _ => Err(Error::TaskMismatch("targets do not match tree task".into())),
        }
    }

    /// Mean negative log-likelihood of held-out targets, with variances and
    /// probabilities floored so the value stays finite.
    pub fn heldout_nll(&self, targets: &FitTargets) -> Result<f64> {
        targets.points.check_cols(self.n_features)?;
        let n = targets.len().max(1) as f64;
        match (&targets.values, self.sigma2) {
            (TargetValues::Regression { means, variances }, Some(sigma2)) => {
                let s2 = sigma2.max(VARIANCE_FLOOR);
                let total: f64 = targets
                    .points
                    .rows()
                    .zip(means.iter().zip(variances))
                    .map(|(x, (m, v))| {
                        let mu = self.leaf_mean(self.leaf_index(x));
                        0.5 * (2.0 * std::f64::consts::PI * s2).ln()
                            + (v + (m - mu).powi(2)) / (2.0 * s2)
                    })
                    .sum();
                Ok(total / n)
            }
            (TargetValues::Classification { classes, .. }, None) => {
                let total: f64 = targets
                    .points
                    .rows()
                    .zip(classes)
                    .map(|(x, &c)| {
                        let probs = self.nodes[self.leaf_index(x)].probs().unwrap_or_default();
                        -probs
                            .get(c)
                            .copied()
                            .unwrap_or(0.0)
                            .max(PROBABILITY_FLOOR)
                            .ln()
                    })
                    .sum();
                Ok(total / n)
            }
            _ => Err(Error::TaskMismatch("targets do not match tree task".into())),
        }
    }

    /// Internal nodes keyed by their path from the root (`""` is the root,
    /// then `L`/`R` per edge), with `(feature, pivot)`.
    pub fn splits_by_path(&self) -> BTreeMap<String, (usize, f64)> {
        let mut out = BTreeMap::new();
        let mut stack = vec![(0usize, String::new())];
        while let Some((id, path)) = stack.pop() {
            if let NodeKind::Split {
                feature,
                pivot,
                left,
                right,
            } = self.nodes[id].kind
            {
                stack.push((right, format!("{path}R")));
                stack.push((left, format!("{path}L")));
                out.insert(path, (feature, pivot));
            }
        }
        out
    }

    /// A copy with node `id` turned into a leaf; the arena is rebuilt in preorder.
    pub fn collapse(&self, id: usize) -> ProxyTree {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        self.copy_subtree(0, id, &mut nodes);
        let mut out = ProxyTree {
            nodes,
            ..self.clone_header()
        };
        out.refresh_sigma2();
        out
    }

    fn clone_header(&self) -> ProxyTree {
        ProxyTree {
            task: self.task,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            nodes: Vec::new(),
            sigma2: self.sigma2,
            n_classes: self.n_classes,
        }
    }

    fn copy_subtree(&self, id: usize, collapse: usize, out: &mut Vec<Node>) -> usize {
        let new_id = out.len();
        let node = &self.nodes[id];
        out.push(Node {
            kind: NodeKind::Leaf,
            n: node.n,
            stats: node.stats.clone(),
        });
        if id != collapse {
            if let NodeKind::Split {
                feature,
                pivot,
                left,
                right,
            } = node.kind
            {
                let l = self.copy_subtree(left, collapse, out);
                let r = self.copy_subtree(right, collapse, out);
                out[new_id].kind = NodeKind::Split {
                    feature,
                    pivot,
                    left: l,
                    right: r,
                };
            }
        }
        new_id
    }

    /// Sum of leaf `sse` (regression) over the whole tree.
    pub fn total_sse(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| match n.stats {
                NodeStats::Regression { sse, .. } => sse,
                NodeStats::Classification { .. } => 0.0,
            })
            .sum()
    }

    pub(crate) fn refresh_sigma2(&mut self) {
        if self.task == Task::Regression {
            self.sigma2 = Some(self.total_sse() / self.n_samples() as f64);
        }
    }

    /// Versioned JSON document for reports and model files.
    pub fn to_document(&self) -> TreeDocument {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| match node.kind {
                NodeKind::Split {
                    feature,
                    pivot,
                    left,
                    right,
                } => NodeDocument::Split {
                    id,
                    feature,
                    feature_name: self.feature_name(feature),
                    pivot,
                    left,
                    right,
                    n: node.n,
                },
                NodeKind::Leaf => match &node.stats {
                    NodeStats::Regression { mu, .. } => NodeDocument::Leaf {
                        id,
                        mu: Some(*mu),
                        probs: None,
                        counts: None,
                        n: node.n,
                    },
                    NodeStats::Classification { counts } => NodeDocument::Leaf {
                        id,
                        mu: None,
                        probs: node.probs(),
                        counts: Some(counts.clone()),
                        n: node.n,
                    },
                },
            })
            .collect();
        TreeDocument {
            version: TreeDocument::VERSION,
            task: self.task,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            n_classes: (self.task == Task::Classification).then_some(self.n_classes),
            sigma2: self.sigma2,
            n_leaves: self.n_leaves(),
            nodes,
        }
    }

    /// Rebuilds a tree from its document. Internal-node statistics are not
    /// part of the document, so the result supports prediction and export
    /// but not further pruning.
    pub fn from_document(doc: &TreeDocument) -> Result<ProxyTree> {
        if doc.version != TreeDocument::VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        let n_classes = doc.n_classes.unwrap_or(0);
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for (pos, nd) in doc.nodes.iter().enumerate() {
            let node = match nd {
                NodeDocument::Split {
                    id,
                    feature,
                    pivot,
                    left,
                    right,
                    n,
                    ..
                } => {
                    check_doc_node(*id, pos, &[*left, *right], doc.nodes.len())?;
                    if *feature >= doc.n_features {
                        return Err(Error::InvalidConfig(format!(
                            "split feature {feature} out of range"
                        )));
                    }
                    Node {
                        kind: NodeKind::Split {
                            feature: *feature,
                            pivot: *pivot,
                            left: *left,
                            right: *right,
                        },
                        n: *n,
                        stats: match doc.task {
                            Task::Regression => NodeStats::Regression {
                                mu: f64::NAN,
                                sse: 0.0,
                            },
                            Task::Classification => NodeStats::Classification {
                                counts: vec![0; n_classes],
                            },
                        },
                    }
                }
                NodeDocument::Leaf {
                    id, mu, counts, n, ..
                } => {
                    check_doc_node(*id, pos, &[], doc.nodes.len())?;
                    let stats = match (doc.task, mu, counts) {
                        (Task::Regression, Some(mu), _) => {
                            NodeStats::Regression { mu: *mu, sse: 0.0 }
                        }
                        (Task::Classification, _, Some(c)) if c.len() == n_classes => {
                            NodeStats::Classification { counts: c.clone() }
                        }
                        _ => {
                            return Err(Error::InvalidConfig(format!(
                                "leaf {id} lacks parameters for its task"
                            )))
                        }
                    };
                    Node {
                        kind: NodeKind::Leaf,
                        n: *n,
                        stats,
                    }
                }
            };
            nodes.push(node);
        }
        if nodes.is_empty() {
            return Err(Error::InvalidConfig("tree document has no nodes".into()));
        }
        Ok(ProxyTree {
            task: doc.task,
            n_features: doc.n_features,
            feature_names: doc.feature_names.clone(),
            nodes,
            sigma2: doc.sigma2,
            n_classes,
        })
    }

    /// Graphviz rendering with leaf labels `mu=..., n=...`.
    pub fn to_dot(&self) -> String {
        let mut s =
            String::from("digraph proxy_tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        for (id, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Split {
                    feature,
                    pivot,
                    left,
                    right,
                } => {
                    let _ = writeln!(
                        s,
                        "  n{id} [label=\"{} <= {}\"];",
                        escape(&self.feature_name(feature)),
                        fmt_num(pivot)
                    );
                    let _ = writeln!(s, "  n{id} -> n{left} [label=\"yes\"];");
                    let _ = writeln!(s, "  n{id} -> n{right} [label=\"no\"];");
                }
                NodeKind::Leaf => {
                    let label = match &node.stats {
                        NodeStats::Regression { mu, .. } => {
                            format!("μ={}, n={}", fmt_num(*mu), node.n)
                        }
                        NodeStats::Classification { .. } => {
                            let p: Vec<String> = node
                                .probs()
                                .unwrap_or_default()
                                .iter()
                                .map(|v| fmt_num(*v))
                                .collect();
                            format!("p=[{}], n={}", p.join(", "), node.n)
                        }
                    };
                    let _ = writeln!(s, "  n{id} [label=\"{label}\", shape=ellipse];");
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

fn check_doc_node(id: usize, pos: usize, children: &[usize], len: usize) -> Result<()> {
    if id != pos {
        return Err(Error::InvalidConfig(format!(
            "node id {id} at position {pos}"
        )));
    }
    if children.iter().any(|&c| c <= id || c >= len) {
        return Err(Error::InvalidConfig(format!(
            "node {id} has invalid children"
        )));
    }
    Ok(())
}

fn fmt_num(v: f64) -> String {
    format!("{:.4}", v)
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// `-S/2 log(2 pi sigma2) - resid / (2 sigma2)`, with the `sigma2 = 0`
/// limit taken as `+inf` for a perfect fit.
pub fn gaussian_log_likelihood(n: usize, sigma2: f64, resid: f64) -> f64 {
    if sigma2 <= 0.0 {
        return if resid <= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    -(n as f64) / 2.0 * (2.0 * std::f64::consts::PI * sigma2).ln() - resid / (2.0 * sigma2)
}

/// Serialized tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub version: u32,
    pub task: Task,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma2: Option<f64>,
    pub n_leaves: usize,
    pub nodes: Vec<NodeDocument>,
}

impl TreeDocument {
    pub const VERSION: u32 = 1;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeDocument {
    Split {
        id: usize,
        feature: usize,
        feature_name: String,
        pivot: f64,
        left: usize,
        right: usize,
        n: usize,
    },
    Leaf {
        id: usize,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        mu: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        probs: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        counts: Option<Vec<usize>>,
        n: usize,
    },
}
