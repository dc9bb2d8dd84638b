//! Accuracy-vs-size sweeps, local fidelity, bootstrap stability and paired
//! bootstrap intervals.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_nonempty, Dataset, Matrix, SplitSpec, Task};
use crate::error::{Error, Result};
use crate::projection::{
    fit_proxy, make_global_targets, make_local_targets, NeighborhoodSpec, ProxyOptions,
};
use crate::proxy_tree::{
    grow, prune_path, size_from_path, FitTargets, GrowConfig, NodeKind, NodeStats, ProxyTree,
};
use crate::reference::{ReferenceConfig, ReferenceModel};
use crate::rng::{self, derive_seed};

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((sse / targets.len() as f64).sqrt())
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Similarity of two splits `(feature, pivot)` relative to the feature range.
pub fn tree_similarity_at_node(
    a: (usize, f64),
    b: (usize, f64),
    feature_ranges: &[(f64, f64)],
) -> f64 {
    if a.0 != b.0 {
        return 0.0;
    }
    let (lo, hi) = feature_ranges.get(a.0).copied().unwrap_or((0.0, 0.0));
    let range = hi - lo;
    if !(range > 0.0) {
        return if a.1 == b.1 { 1.0 } else { 0.0 };
    }
    (1.0 - (a.1 - b.1).abs() / range).clamp(0.0, 1.0)
}

/// Per-position weight `q` in the dissimilarity sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `q = 1 / (internal nodes of T1)`: `d(T, T) = 0` and `d` lies in `[0, 1]`.
    #[default]
    InternalNodes,
    /// `q = 1 / (leaves of T1)`: `d(T, T) = 1 / b`, `d` lies in `[1/b, 1]`.
    Leaves,
}

/// `1 - sum_t q S^t` over internal-node positions of `t1`, matched by their
/// path from the root. Positions missing from `t2` contribute nothing. Two
/// single-leaf trees have `d = 0` when their predictions agree and 1 otherwise.
pub fn tree_dissimilarity(
    t1: &ProxyTree,
    t2: &ProxyTree,
    feature_ranges: &[(f64, f64)],
    weighting: Weighting,
) -> f64 {
    let s1 = t1.splits_by_path();
    let s2 = t2.splits_by_path();
    if s1.is_empty() {
        return if s2.is_empty() && leaf_payload(t1) == leaf_payload(t2) {
            0.0
        } else {
            1.0
        };
    }
    let q = match weighting {
        Weighting::InternalNodes => 1.0 / s1.len() as f64,
        Weighting::Leaves => 1.0 / t1.n_leaves() as f64,
    };
    let total: f64 = s1
        .iter()
        .filter_map(|(path, a)| {
            s2.get(path)
                .map(|b| tree_similarity_at_node(*a, *b, feature_ranges))
        })
        .sum();
    1.0 - q * total
}

fn leaf_payload(t: &ProxyTree) -> Vec<f64> {
    let root = &t.nodes[0];
    match (&root.kind, &root.stats) {
        (NodeKind::Leaf, NodeStats::Regression { mu, .. }) => vec![*mu],
        (NodeKind::Leaf, NodeStats::Classification { .. }) => root.probs().unwrap_or_default(),
        (NodeKind::Split { .. }, _) => Vec::new(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// Tree fit directly to the observed targets.
    Prior,
    /// Tree fit to the reference model's predictive summary.
    Utility,
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(Approach::Prior),
            "utility" => Ok(Approach::Utility),
            other => Err(Error::InvalidConfig(format!("unknown approach `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDissimilarity {
    pub i: usize,
    pub j: usize,
    /// `d(T_i, T_j)` with `q` from `T_i`.
    pub d_ij: f64,
    pub d_ji: f64,
    /// Mean of both orientations.
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub approach: Approach,
    pub weighting: Weighting,
    pub pairs: Vec<PairDissimilarity>,
    /// Symmetrized dissimilarities, one per pair.
    pub pairwise_d: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Largest `|d_ij - d_ji|` over pairs.
    pub max_asymmetry: f64,
    pub leaves: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub reference: ReferenceConfig,
    pub proxy: ProxyOptions,
    pub resamples: usize,
    /// Refit the reference model on every resample; otherwise fit it once.
    pub refit_reference: bool,
    pub weighting: Weighting,
}

pub fn pairwise_dissimilarities(
    trees: &[ProxyTree],
    ranges: &[(f64, f64)],
    weighting: Weighting,
) -> Vec<PairDissimilarity> {
    let mut pairs = Vec::new();
    for i in 0..trees.len() {
        for j in i + 1..trees.len() {
            let d_ij = tree_dissimilarity(&trees[i], &trees[j], ranges, weighting);
            let d_ji = tree_dissimilarity(&trees[j], &trees[i], ranges, weighting);
            pairs.push(PairDissimilarity {
                i,
                j,
                d_ij,
                d_ji,
                d: 0.5 * (d_ij + d_ji),
            });
        }
    }
    pairs
}

/// Fits one tree per bootstrap resample of `ds` and summarizes all pairwise
/// dissimilarities. Resample `b` draws its rows from stream `2b` of `seed`,
/// and a refit reference uses stream `2b + 1`.
pub fn stability(
    approach: Approach,
    ds: &Dataset,
    cfg: &StabilityConfig,
    seed: u64,
) -> Result<StabilityResult> {
    if cfg.resamples < 2 {
        return Err(Error::InvalidConfig(
            "stability needs >= 2 resamples".into(),
        ));
    }
    let n = ds.len();
    let shared = match (approach, cfg.refit_reference) {
        (Approach::Utility, false) => Some(cfg.reference.fit(ds)?),
        _ => None,
    };
    let trees: Vec<ProxyTree> = (0..cfg.resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::rng(derive_seed(seed, 2 * b as u64));
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let sample = ds.subset(&idx);
            let targets = match approach {
                Approach::Prior => FitTargets::from_dataset(&sample)?,
                Approach::Utility => {
                    let model = match &shared {
                        Some(m) => m.clone(),
                        None => cfg
                            .reference
                            .with_seed(derive_seed(seed, 2 * b as u64 + 1))
                            .fit(&sample)?,
                    };
                    make_global_targets(&model, &sample.features)?
                }
            };
            Ok(fit_proxy(&targets, &cfg.proxy)?.tree)
        })
        .collect::<Result<_>>()?;
    let pairs = pairwise_dissimilarities(&trees, &ds.feature_ranges, cfg.weighting);
    let pairwise_d: Vec<f64> = pairs.iter().map(|p| p.d).collect();
    let (mean, sd) = mean_sd(&pairwise_d);
    Ok(StabilityResult {
        approach,
        weighting: cfg.weighting,
        max_asymmetry: pairs
            .iter()
            .map(|p| (p.d_ij - p.d_ji).abs())
            .fold(0.0, f64::max),
        pairs,
        pairwise_d,
        mean,
        sd,
        leaves: trees.iter().map(|t| t.n_leaves()).collect(),
        seed,
    })
}

/// Neighborhood settings shared by every test point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodTemplate {
    pub sd: f64,
    pub n_samples: usize,
    /// Per-feature unit for sampling; usually the training standard deviations.
    pub scale: Option<Vec<f64>>,
    pub seed: u64,
}

impl NeighborhoodTemplate {
    /// Neighborhood used to fit the proxy at test point `i`.
    pub fn fitting(&self, center: &[f64], i: usize) -> NeighborhoodSpec {
        self.spec(center, derive_seed(self.seed, 2 * i as u64))
    }

    /// Independent neighborhood used to score the proxy at test point `i`.
    pub fn scoring(&self, center: &[f64], i: usize) -> NeighborhoodSpec {
        self.spec(center, derive_seed(self.seed, 2 * i as u64 + 1))
    }

    fn spec(&self, center: &[f64], seed: u64) -> NeighborhoodSpec {
        NeighborhoodSpec {
            center: center.to_vec(),
            sd: self.sd,
            n_samples: self.n_samples,
            seed,
            scale: self.scale.clone(),
        }
    }
}

/// How the local proxy at a test point is obtained.
#[derive(Clone, Copy, Debug)]
pub enum LocalFitter<'a> {
    /// Tree fit to reference outputs at neighborhood samples.
    Utility,
    /// Tree fit to the `n_local` training rows nearest the test point, in
    /// template units.
    Prior { train: &'a Dataset, n_local: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub per_point: Vec<f64>,
    pub leaves: Vec<usize>,
    pub features_used: Vec<usize>,
    pub mean: f64,
    pub sd: f64,
}

fn nearest_rows(train: &Dataset, center: &[f64], scale: Option<&[f64]>, k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = train
        .features
        .rows()
        .enumerate()
        .map(|(i, x)| {
            let d: f64 = x
                .iter()
                .enumerate()
                .map(|(j, v)| ((v - center[j]) / scale.map_or(1.0, |s| s[j])).powi(2))
                .sum();
            (d, i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut idx: Vec<usize> = dist.iter().take(k).map(|p| p.1).collect();
    idx.sort_unstable();
    idx
}

/// Local proxy for test point `i` under the given fitter.
pub fn fit_local_proxy(
    model: &ReferenceModel,
    center: &[f64],
    i: usize,
    template: &NeighborhoodTemplate,
    fitter: LocalFitter<'_>,
    opts: &ProxyOptions,
) -> Result<ProxyTree> {
    let targets = match fitter {
        LocalFitter::Utility => make_local_targets(model, &template.fitting(center, i))?,
        LocalFitter::Prior { train, n_local } => {
            let idx = nearest_rows(train, center, template.scale.as_deref(), n_local.max(1));
            FitTargets::from_dataset(&train.subset(&idx))?
        }
    };
    Ok(fit_proxy(&targets, opts)?.tree)
}

/// Mean over test points of the neighborhood-weighted squared difference
/// between the local proxy and the reference mean, scored on fresh samples.
pub fn local_fidelity(
    model: &ReferenceModel,
    test_points: &Matrix,
    template: &NeighborhoodTemplate,
    fitter: LocalFitter<'_>,
    opts: &ProxyOptions,
) -> Result<FidelityResult> {
    if model.task() != Task::Regression {
        return Err(Error::TaskMismatch(
            "local fidelity is defined for regression".into(),
        ));
    }
    if test_points.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let per: Vec<(f64, usize, usize)> = (0..test_points.nrows())
        .into_par_iter()
        .map(|i| {
            let center = test_points.row(i);
            let tree = fit_local_proxy(model, center, i, template, fitter, opts)?;
            let nb = template.scoring(center, i);
            let z = nb.sample()?;
            let w = nb.weights(&z)?;
            let loss = crate::projection::fidelity(model, &tree, &z, Some(&w))?;
            Ok((loss, tree.n_leaves(), tree.features_used().len()))
        })
        .collect::<Result<_>>()?;
    let per_point: Vec<f64> = per.iter().map(|p| p.0).collect();
    let (mean, sd) = mean_sd(&per_point);
    Ok(FidelityResult {
        leaves: per.iter().map(|p| p.1).collect(),
        features_used: per.iter().map(|p| p.2).collect(),
        per_point,
        mean,
        sd,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedCi {
    pub mean_diff: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    /// The interval excludes zero.
    pub significant: bool,
}

/// Percentile bootstrap interval for the mean of `a - b`. The bounds are
/// widened if needed so that they always contain the observed mean.
pub fn paired_bootstrap_ci(
    a: &[f64],
    b: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<PairedCi> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidConfig(
            "paired bootstrap needs >= 2 pairs".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::InvalidConfig(
            "level must be in (0, 1) and resamples >= 1".into(),
        ));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diff.len();
    let mean_diff = diff.iter().sum::<f64>() / n as f64;
    let mut r = rng::rng(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| diff[r.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = quantile(&means, (1.0 - level) / 2.0).min(mean_diff);
    let hi = quantile(&means, (1.0 + level) / 2.0).max(mean_diff);
    Ok(PairedCi {
        mean_diff,
        lo,
        hi,
        level,
        significant: lo > 0.0 || hi < 0.0,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub reference: ReferenceConfig,
    pub grow: GrowConfig,
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub ci_level: f64,
    pub ci_resamples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(v: &[f64]) -> MeanSd {
        let (mean, sd) = mean_sd(v);
        MeanSd { mean, sd }
    }
}

/// Test RMSE of one sweep run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub rmse_utility: Vec<f64>,
    pub rmse_prior: Vec<f64>,
    pub leaves_utility: Vec<usize>,
    pub leaves_prior: Vec<usize>,
    pub rmse_reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub sizes: Vec<usize>,
    pub rmse_utility: Vec<MeanSd>,
    pub rmse_prior: Vec<MeanSd>,
    pub rmse_reference: MeanSd,
    /// Interval for the mean of `prior - utility` per size.
    pub prior_minus_utility: Vec<PairedCi>,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub per_run: Vec<SweepRun>,
}

impl SweepResult {
    /// Plot-ready rows: one per size.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "size,rmse_utility_mean,rmse_utility_sd,rmse_prior_mean,rmse_prior_sd,rmse_reference_mean,rmse_reference_sd,diff_mean,diff_lo,diff_hi,significant\n",
        );
        for (k, size) in self.sizes.iter().enumerate() {
            let ci = &self.prior_minus_utility[k];
            out.push_str(&format!(
                "{size},{},{},{},{},{},{},{},{},{},{}\n",
                self.rmse_utility[k].mean,
                self.rmse_utility[k].sd,
                self.rmse_prior[k].mean,
                self.rmse_prior[k].sd,
                self.rmse_reference.mean,
                self.rmse_reference.sd,
                ci.mean_diff,
                ci.lo,
                ci.hi,
                ci.significant
            ));
        }
        out
    }
}

impl StabilityResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,d_ij,d_ji,d\n");
        for p in &self.pairs {
            out.push_str(&format!("{},{},{},{},{}\n", p.i, p.j, p.d_ij, p.d_ji, p.d));
        }
        out
    }
}

impl FidelityResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,fidelity,leaves,features_used\n");
        for (i, f) in self.per_point.iter().enumerate() {
            out.push_str(&format!(
                "{i},{f},{},{}\n",
                self.leaves[i], self.features_used[i]
            ));
        }
        out
    }
}

/// One sweep run: split, fit the reference, then fit both proxies along their
/// prune paths and score each requested size on the test split.
pub fn sweep_run(ds: &Dataset, cfg: &SweepConfig, run_seed: u64) -> Result<SweepRun> {
    let (train, test) = split_nonempty(
        ds,
        &SplitSpec::new(cfg.train_fraction, derive_seed(run_seed, 0))?,
    )?;
    let y_test = test
        .target
        .as_regression()
        .ok_or_else(|| Error::TaskMismatch("sweep needs a regression target".into()))?;
    let model = cfg
        .reference
        .with_seed(derive_seed(run_seed, 1))
        .fit(&train)?;
    let rmse_reference = rmse(&model.predict_point(&test.features)?, y_test)?;
    let utility_path = prune_path(&grow(
        &make_global_targets(&model, &train.features)?,
        &cfg.grow,
    )?);
    let prior_path = prune_path(&grow(&FitTargets::from_dataset(&train)?, &cfg.grow)?);
    let mut run = SweepRun {
        seed: run_seed,
        rmse_utility: Vec::new(),
        rmse_prior: Vec::new(),
        leaves_utility: Vec::new(),
        leaves_prior: Vec::new(),
        rmse_reference,
    };
    for &size in &cfg.sizes {
        let u = size_from_path(&utility_path, size).tree;
        let p = size_from_path(&prior_path, size).tree;
        run.rmse_utility
            .push(rmse(&u.predict_mean(&test.features)?, y_test)?);
        run.rmse_prior
            .push(rmse(&p.predict_mean(&test.features)?, y_test)?);
        run.leaves_utility.push(u.n_leaves());
        run.leaves_prior.push(p.n_leaves());
    }
    Ok(run)
}

/// Runs use seeds `derive_seed(cfg.seed, r)` for `r in 0..runs`.
pub fn sweep(ds: &Dataset, cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(Error::InvalidConfig(
            "sizes must be nonempty and >= 1".into(),
        ));
    }
    if cfg.runs == 0 {
        return Err(Error::InvalidConfig("runs must be >= 1".into()));
    }
    if ds.task() != Task::Regression {
        return Err(Error::TaskMismatch(
            "sweep needs a regression target".into(),
        ));
    }
    let seeds: Vec<u64> = (0..cfg.runs as u64)
        .map(|r| derive_seed(cfg.seed, r))
        .collect();
    let per_run: Vec<SweepRun> = seeds
        .par_iter()
        .map(|&s| sweep_run(ds, cfg, s))
        .collect::<Result<_>>()?;
    let column = |k: usize, f: fn(&SweepRun) -> &Vec<f64>| {
        per_run.iter().map(|r| f(r)[k]).collect::<Vec<f64>>()
    };
    let mut rmse_utility = Vec::new();
    let mut rmse_prior = Vec::new();
    let mut prior_minus_utility = Vec::new();
    for k in 0..cfg.sizes.len() {
        let u = column(k, |r| &r.rmse_utility);
        let p = column(k, |r| &r.rmse_prior);
        rmse_utility.push(MeanSd::of(&u));
        rmse_prior.push(MeanSd::of(&p));
        prior_minus_utility.push(if per_run.len() >= 2 {
            paired_bootstrap_ci(
                &p,
                &u,
                cfg.ci_level,
                cfg.ci_resamples,
                derive_seed(cfg.seed, u64::MAX - k as u64),
            )?
        } else {
            let d = p[0] - u[0];
            PairedCi {
                mean_diff: d,
                lo: d,
                hi: d,
                level: cfg.ci_level,
                significant: false,
            }
        });
    }
    let refs: Vec<f64> = per_run.iter().map(|r| r.rmse_reference).collect();
    Ok(SweepResult {
        sizes: cfg.sizes.clone(),
        rmse_utility,
        rmse_prior,
        rmse_reference: MeanSd::of(&refs),
        prior_minus_utility,
        runs: cfg.runs,
        seeds,
        per_run,
    })
}
