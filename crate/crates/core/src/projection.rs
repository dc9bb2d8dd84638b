//! Projection of a reference model onto interpretable proxies.
//!
//! Global targets are the reference predictive summary at the training
//! inputs; local targets are the summary at Gaussian samples around a query
//! point. A tree fit to either maximizes the expected log-likelihood of the
//! reference predictive distribution, which for Gaussian predictives is the
//! same as minimizing the summed KL divergence from reference to proxy.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, Task};
use crate::error::{Error, Result};
use crate::proxy_tree::{
    fit_size_constrained, select_alpha, FitTargets, GrowConfig, ProxyTree, TreeDocument,
};
use crate::reference::{DrawSource, DrawValues, PredictiveSummary, ReferenceModel};
use crate::rng;

/// Isotropic Gaussian neighborhood `N(center, sd^2 diag(scale^2))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub center: Vec<f64>,
    pub sd: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Per-feature unit. `None` samples on the raw feature scale.
    #[serde(default)]
    pub scale: Option<Vec<f64>>,
}

impl NeighborhoodSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig(
                "neighborhood needs >= 1 sample".into(),
            ));
        }
        if !(self.sd > 0.0 && self.sd.is_finite()) {
            return Err(Error::InvalidConfig(
                "neighborhood sd must be positive".into(),
            ));
        }
        if self.center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "neighborhood center must be finite".into(),
            ));
        }
        if let Some(scale) = &self.scale {
            if scale.len() != self.center.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.center.len(),
                    got: scale.len(),
                });
            }
            if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidConfig(
                    "neighborhood scales must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn unit(&self, j: usize) -> f64 {
        self.sd * self.scale.as_ref().map_or(1.0, |s| s[j])
    }

    pub fn sample(&self) -> Result<Matrix> {
        self.validate()?;
        let d = self.center.len();
        let mut r = rng::rng(self.seed);
        let mut data = Vec::with_capacity(self.n_samples * d);
        for _ in 0..self.n_samples {
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut r);
                data.push(self.center[j] + self.unit(j) * z);
            }
        }
        Matrix::new(self.n_samples, d, data)
    }

    /// Normalized neighborhood density weights at `points`.
    pub fn weights(&self, points: &Matrix) -> Result<Vec<f64>> {
        points.check_cols(self.center.len())?;
        let logs: Vec<f64> = points
            .rows()
            .map(|z| {
                -0.5 * z
                    .iter()
                    .enumerate()
                    .map(|(j, v)| ((v - self.center[j]) / self.unit(j)).powi(2))
                    .sum::<f64>()
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(w.iter().map(|v| v / total).collect())
    }
}

/// Turns a predictive summary into tree targets. Classification uses the
/// reference's most probable class.
pub fn targets_from_summary(points: Matrix, summary: PredictiveSummary) -> Result<FitTargets> {
    match summary {
        PredictiveSummary::Regression { means, variances } => {
            FitTargets::regression(points, means, variances)
        }
        PredictiveSummary::Classification { ref probs } => {
            let n_classes = probs.first().map_or(0, |p| p.len());
            let classes = summary.argmax().unwrap_or_default();
            FitTargets::classification(points, classes, n_classes)
        }
    }
}

pub fn make_global_targets(model: &ReferenceModel, train: &Matrix) -> Result<FitTargets> {
    if train.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let summary = model.predict_summary(train)?;
    targets_from_summary(train.clone(), summary)
}

pub fn make_local_targets(model: &ReferenceModel, nb: &NeighborhoodSpec) -> Result<FitTargets> {
    if nb.center.len() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: nb.center.len(),
        });
    }
    let points = nb.sample()?;
    let summary = model.predict_summary(&points)?;
    targets_from_summary(points, summary)
}

/// Leaf budget: a fixed size along the prune path, or CV-selected alpha.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProxySize {
    Fixed { leaves: usize },
    Cv { folds: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyOptions {
    pub grow: GrowConfig,
    pub size: ProxySize,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        ProxyOptions {
            grow: GrowConfig::default(),
            size: ProxySize::Cv { folds: 5, seed: 0 },
        }
    }
}

/// A fitted proxy tree with how its size was chosen.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedProxy {
    pub tree: ProxyTree,
    /// Whether the prune path had exactly the requested leaf count.
    pub exact: Option<bool>,
    pub alpha: Option<f64>,
}

pub fn fit_proxy(targets: &FitTargets, opts: &ProxyOptions) -> Result<FittedProxy> {
    match opts.size {
        ProxySize::Fixed { leaves } => {
            let sized = fit_size_constrained(targets, &opts.grow, leaves)?;
            Ok(FittedProxy {
                tree: sized.tree,
                exact: Some(sized.exact),
                alpha: None,
            })
        }
        ProxySize::Cv { folds, seed } => {
            let sel = select_alpha(targets, &opts.grow, folds, seed)?;
            Ok(FittedProxy {
                tree: sel.tree,
                exact: None,
                alpha: Some(sel.alpha),
            })
        }
    }
}

/// Fidelity of `tree` to `model` at `points`: (weighted) mean squared
/// difference to the reference means for regression, (weighted) rate of
/// disagreement with the reference's most probable class for classification.
pub fn fidelity(
    model: &ReferenceModel,
    tree: &ProxyTree,
    points: &Matrix,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let summary = model.predict_summary(points)?;
    fidelity_to_summary(tree, points, &summary, weights)
}

pub fn fidelity_to_summary(
    tree: &ProxyTree,
    points: &Matrix,
    summary: &PredictiveSummary,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let losses: Vec<f64> = match summary {
        PredictiveSummary::Regression { means, .. } => tree
            .predict_mean(points)?
            .iter()
            .zip(means)
            .map(|(p, m)| (p - m).powi(2))
            .collect(),
        PredictiveSummary::Classification { .. } => {
            let reference = summary.argmax().unwrap_or_default();
            tree.predict_proba(points)?
                .iter()
                .zip(&reference)
                .map(|(p, &c)| {
                    if crate::reference::argmax(p) == c {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect()
        }
    };
    Ok(match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            let total: f64 = w.iter().sum();
            losses.iter().zip(w).map(|(l, w)| l * w).sum::<f64>() / total
        }
        None => losses.iter().sum::<f64>() / n as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetKind {
    Global,
    Local { neighborhood: NeighborhoodSpec },
}

/// Serializable summary of one explanation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub task: Task,
    pub target_kind: TargetKind,
    pub proxy: TreeDocument,
    /// Leaf count of the proxy.
    pub complexity: usize,
    /// Mean squared difference to reference means (regression) or
    /// disagreement rate (classification) on the fitting points; weighted by
    /// the neighborhood density in local mode.
    pub fidelity: f64,
    /// Same measure on held-out points, when supplied.
    pub heldout_fidelity: Option<f64>,
    /// Log-likelihood of the fitting targets under the proxy.
    pub log_likelihood: f64,
    pub features_used: Vec<String>,
    pub options: ProxyOptions,
    pub exact_size: Option<bool>,
    pub alpha: Option<f64>,
    pub n_targets: usize,
    pub reference_fingerprint: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub tree: ProxyTree,
    pub targets: FitTargets,
    pub report: ExplanationReport,
}

fn explain(
    model: &ReferenceModel,
    targets: FitTargets,
    target_kind: TargetKind,
    weights: Option<Vec<f64>>,
    heldout: Option<&Matrix>,
    opts: &ProxyOptions,
) -> Result<Explanation> {
    let fitted = fit_proxy(&targets, opts)?;
    let tree = fitted.tree.with_feature_names(model.feature_names());
    let summary = model.predict_summary(&targets.points)?;
    let fid = fidelity_to_summary(&tree, &targets.points, &summary, weights.as_deref())?;
    let heldout_fidelity = heldout
        .map(|pts| fidelity(model, &tree, pts, None))
        .transpose()?;
    let report = ExplanationReport {
        task: model.task(),
        target_kind,
        proxy: tree.to_document(),
        complexity: tree.n_leaves(),
        fidelity: fid,
        heldout_fidelity,
        log_likelihood: tree.log_likelihood(&targets)?,
        features_used: tree
            .features_used()
            .iter()
            .map(|&k| tree.feature_name(k))
            .collect(),
        options: *opts,
        exact_size: fitted.exact,
        alpha: fitted.alpha,
        n_targets: targets.len(),
        reference_fingerprint: model.fingerprint()?,
    };
    Ok(Explanation {
        tree,
        targets,
        report,
    })
}

/// Projects the reference onto a tree fit at the training inputs.
pub fn explain_global(
    model: &ReferenceModel,
    train: &Matrix,
    heldout: Option<&Matrix>,
    opts: &ProxyOptions,
) -> Result<Explanation> {
    let targets = make_global_targets(model, train)?;
    explain(model, targets, TargetKind::Global, None, heldout, opts)
}

/// Projects the reference onto a tree fit to samples around `nb.center`.
pub fn explain_local(
    model: &ReferenceModel,
    nb: &NeighborhoodSpec,
    opts: &ProxyOptions,
) -> Result<Explanation> {
    let targets = make_local_targets(model, nb)?;
    let weights = nb.weights(&targets.points)?;
    explain(
        model,
        targets,
        TargetKind::Local {
            neighborhood: nb.clone(),
        },
        Some(weights),
        None,
        opts,
    )
}

/// Expected Gaussian log-likelihood `sum_s E[log N(y_s | mu_s, sigma2)]`
/// with `y_s ~ N(means_s, variances_s)`.
pub fn expected_log_likelihood(mu: &[f64], sigma2: f64, means: &[f64], variances: &[f64]) -> f64 {
    let resid: f64 = mu
        .iter()
        .zip(means.iter().zip(variances))
        .map(|(m, (y, v))| v + (y - m).powi(2))
        .sum();
    crate::proxy_tree::gaussian_log_likelihood(mu.len(), sigma2, resid)
}

/// `KL(N(m1, v1) || N(m2, v2))`.
pub fn gaussian_kl(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / v2 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProxy {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub link: Link,
}

/// Ridge added to the normal equations (intercept excluded).
pub const RIDGE_FLOOR: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;
const IRLS_GRAD_TOL: f64 = 1e-8;

fn design(points: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(points.nrows(), points.ncols() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            points.get(i, j - 1)
        }
    })
}

fn ridge_solve(a: &DMatrix<f64>, w: &DVector<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let weighted = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * w[i]);
    let mut gram = a.transpose() * weighted;
    for j in 1..gram.ncols() {
        gram[(j, j)] += RIDGE_FLOOR;
    }
    let chol = gram.cholesky().ok_or(Error::SingularDesign)?;
    Ok(chol.solve(rhs))
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LinearProxy {
    /// Least squares (identity) or logistic regression of `y` on `points`.
    /// Logistic targets are probabilities in `[0, 1]`.
    pub fn fit(points: &Matrix, y: &[f64], link: Link) -> Result<LinearProxy> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        let a = design(points);
        let yv = DVector::from_column_slice(y);
        let beta = match link {
            Link::Identity => {
                ridge_solve(&a, &DVector::from_element(n, 1.0), &(a.transpose() * &yv))?
            }
            Link::Logistic => {
                if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidConfig(
                        "logistic targets must lie in [0, 1]".into(),
                    ));
                }
                irls(&a, &yv)?
            }
        };
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::SingularDesign);
        }
        Ok(LinearProxy {
            intercept: beta[0],
            weights: beta.iter().skip(1).copied().collect(),
            link,
        })
    }

    pub fn predict(&self, points: &Matrix) -> Result<Vec<f64>> {
        points.check_cols(self.weights.len())?;
        Ok(points
            .rows()
            .map(|x| {
                let t =
                    self.intercept + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
                match self.link {
                    Link::Identity => t,
                    Link::Logistic => sigmoid(t),
                }
            })
            .collect())
    }
}

fn penalized_loglik(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = a * beta;
    let ll: f64 = eta
        .iter()
        .zip(y.iter())
        .map(|(t, yi)| {
            // y t - log(1 + e^t), computed stably
            yi * t
                - if *t > 0.0 {
                    t + (-t).exp().ln_1p()
                } else {
                    t.exp().ln_1p()
                }
        })
        .sum();
    ll - 0.5 * RIDGE_FLOOR * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
}

/// Newton steps on the ridge-penalized log-likelihood, halving the step
/// until the objective does not decrease.
fn irls(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let mut beta = DVector::zeros(a.ncols());
    let mut current = penalized_loglik(a, y, &beta);
    for _ in 0..IRLS_MAX_ITER {
        let p = (a * &beta).map(sigmoid);
        let mut grad = a.transpose() * (y - &p);
        for j in 1..grad.len() {
            grad[j] -= RIDGE_FLOOR * beta[j];
        }
        if grad.norm() < IRLS_GRAD_TOL {
            break;
        }
        let w = p.map(|v| (v * (1.0 - v)).max(1e-12));
        let step = ridge_solve(a, &w, &grad)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let value = penalized_loglik(a, y, &cand);
            if value >= current {
                beta = cand;
                current = value;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(beta)
}

/// Per-draw linear proxies and the elementwise mean and population variance
/// of their weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyExplanation {
    pub per_draw: Vec<LinearProxy>,
    pub mean_weights: Vec<f64>,
    pub var_weights: Vec<f64>,
    pub mean_intercept: f64,
    pub var_intercept: f64,
    pub seed: u64,
}

/// Fits one linear proxy per posterior draw at `points`. Regression draws
/// use the identity link; classification draws use the logistic link on the
/// probability of `positive_class` (0-based).
pub fn fit_linear_proxy_per_draw(
    source: &dyn DrawSource,
    points: &Matrix,
    n_draws: usize,
    positive_class: usize,
    seed: u64,
) -> Result<UncertaintyExplanation> {
    if n_draws == 0 {
        return Err(Error::InvalidConfig("need at least one draw".into()));
    }
    points.check_cols(source.n_features())?;
    let draws = source.draws(n_draws, points, seed)?;
    let per_draw: Vec<LinearProxy> = draws
        .par_iter()
        .map(|d| match &d.values {
            DrawValues::Means(v) => LinearProxy::fit(points, v, Link::Identity),
            DrawValues::Probs(p) => {
                let y: Vec<f64> = p
                    .iter()
                    .map(|row| {
                        row.get(positive_class)
                            .copied()
                            .unwrap_or(0.0)
                            .clamp(0.0, 1.0)
                    })
                    .collect();
                LinearProxy::fit(points, &y, Link::Logistic)
            }
        })
        .collect::<Result<_>>()?;

    let d = points.ncols();
    let mut mean = vec![0.0; d + 1];
    let mut m2 = vec![0.0; d + 1];
    for (k, proxy) in per_draw.iter().enumerate() {
        let count = (k + 1) as f64;
        let values = std::iter::once(proxy.intercept).chain(proxy.weights.iter().copied());
        for (j, x) in values.enumerate() {
            let delta = x - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (x - mean[j]);
        }
    }
    let count = per_draw.len() as f64;
    let var: Vec<f64> = m2.iter().map(|v| (v / count).max(0.0)).collect();
    Ok(UncertaintyExplanation {
        mean_intercept: mean[0],
        var_intercept: var[0],
        mean_weights: mean[1..].to_vec(),
        var_weights: var[1..].to_vec(),
        per_draw,
        seed,
    })
}
