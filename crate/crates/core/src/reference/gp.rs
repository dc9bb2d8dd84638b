//! Exact Gaussian-process regression with grid-searched hyperparameters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Matern52,
    Rbf,
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern52" => Ok(Kernel::Matern52),
            "rbf" => Ok(Kernel::Rbf),
            other => Err(Error::InvalidConfig(format!("unknown kernel `{other}`"))),
        }
    }
}

impl Kernel {
    pub fn eval(self, r: f64, signal_variance: f64, lengthscale: f64) -> f64 {
        let u = r / lengthscale;
        match self {
            Kernel::Matern52 => {
                let s5 = 5f64.sqrt() * u;
                signal_variance * (1.0 + s5 + 5.0 * u * u / 3.0) * (-s5).exp()
            }
            Kernel::Rbf => signal_variance * (-0.5 * u * u).exp(),
        }
    }
}

/// Hyperparameters on the model's working scale (standardized when enabled).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub kernel: Kernel,
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

/// Cross-validation grid. Entries are multipliers: signal and noise
/// variances scale the working-scale target variance, lengthscales scale
/// the median pairwise distance between working-scale inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub kernel: Kernel,
    pub variance_grid: Vec<f64>,
    pub lengthscale_grid: Vec<f64>,
    pub noise_grid: Vec<f64>,
    pub cv_folds: usize,
    /// Standardize inputs and targets before fitting.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            kernel: Kernel::Matern52,
            variance_grid: vec![0.1, 1.0, 10.0],
            lengthscale_grid: vec![0.1, 0.5, 1.0, 2.0],
            noise_grid: vec![1e-3, 1e-2, 1e-1],
            cv_folds: 5,
            standardize: true,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("variance_grid", &self.variance_grid),
            ("lengthscale_grid", &self.lengthscale_grid),
            ("noise_grid", &self.noise_grid),
        ] {
            if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be nonempty and positive"
                )));
            }
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidConfig("cv_folds must be >= 2".into()));
        }
        Ok(())
    }
}

/// Jitter starts at `1e-10` times the signal variance and grows tenfold up
/// to `1e-4` times it.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

fn cholesky_with_jitter(k: DMatrix<f64>, scale: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut rel = JITTER_START;
    loop {
        let mut attempt = k.clone();
        for i in 0..attempt.nrows() {
            attempt[(i, i)] += rel * scale;
        }
        if let Some(ch) = attempt.cholesky() {
            return Ok(ch);
        }
        if rel >= JITTER_MAX {
            return Err(Error::SingularKernel {
                jitter: rel * scale,
            });
        }
        rel *= 10.0;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Standardizer {
    fn identity(d: usize) -> Self {
        Standardizer {
            x_mean: vec![0.0; d],
            x_scale: vec![1.0; d],
            y_mean: 0.0,
            y_scale: 1.0,
        }
    }

    fn fit(x: &Matrix, y: &[f64]) -> Self {
        let (mut x_mean, mut x_scale) = (Vec::new(), Vec::new());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let (m, s) = mean_sd(&col);
            x_mean.push(m);
            x_scale.push(if s > 0.0 { s } else { 1.0 });
        }
        let (y_mean, y_sd) = mean_sd(y);
        Standardizer {
            x_mean,
            x_scale,
            y_mean,
            y_scale: if y_sd > 0.0 { y_sd } else { 1.0 },
        }
    }

    fn transform_x(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.nrows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.x_mean[j]) / self.x_scale[j];
            }
        }
        out
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn gram(kernel: GpHyper, a: &Matrix, b: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        kernel.kernel.eval(
            dist(a.row(i), b.row(j)),
            kernel.signal_variance,
            kernel.lengthscale,
        )
    })
}

/// Serialized GP state: everything needed to rebuild the posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpState {
    pub hyper: GpHyper,
    pub standardizer: Standardizer,
    pub train_x: Matrix,
    pub train_y: Vec<f64>,
    pub feature_names: Vec<String>,
    /// Held-out MSE (working scale) of the chosen grid cell, when CV ran.
    #[serde(default)]
    pub cv_mse: Option<f64>,
}

/// A fitted GP. Serializes as its [`GpState`]; the Cholesky factor is
/// recomputed on load with the same arithmetic, so predictions match bitwise.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GpState", into = "GpState")]
pub struct GpModel {
    state: GpState,
    work_x: Matrix,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl PartialEq for GpModel {
    fn eq(&self, other: &Self) -> bool {
        self.state == other.state
    }
}

impl From<GpModel> for GpState {
    fn from(m: GpModel) -> Self {
        m.state
    }
}

impl TryFrom<GpState> for GpModel {
    type Error = Error;

    fn try_from(state: GpState) -> Result<Self> {
        let work_x = state.standardizer.transform_x(&state.train_x);
        let work_y: Vec<f64> = state
            .train_y
            .iter()
            .map(|y| (y - state.standardizer.y_mean) / state.standardizer.y_scale)
            .collect();
        let (chol, alpha) = factor(state.hyper, &work_x, &work_y)?;
        Ok(GpModel {
            state,
            work_x,
            chol,
            alpha,
        })
    }
}

fn factor(hyper: GpHyper, x: &Matrix, y: &[f64]) -> Result<(Cholesky<f64, Dyn>, DVector<f64>)> {
    let mut k = gram(hyper, x, x);
    for i in 0..k.nrows() {
        k[(i, i)] += hyper.noise_variance;
    }
    let chol = cholesky_with_jitter(k, hyper.signal_variance)?;
    let alpha = chol.solve(&DVector::from_column_slice(y));
    Ok((chol, alpha))
}

impl GpModel {
    /// Fits with fixed hyperparameters.
    pub fn fit_fixed(train: &Dataset, hyper: GpHyper, standardize: bool) -> Result<GpModel> {
        let y = train
            .target
            .as_regression()
            .ok_or_else(|| Error::TaskMismatch("GP reference needs a regression target".into()))?;
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let standardizer = if standardize {
            Standardizer::fit(&train.features, y)
        } else {
            Standardizer::identity(train.n_features())
        };
        GpModel::try_from(GpState {
            hyper,
            standardizer,
            train_x: train.features.clone(),
            train_y: y.to_vec(),
            feature_names: train.feature_names.clone(),
            cv_mse: None,
        })
    }

    pub fn state(&self) -> &GpState {
        &self.state
    }

    pub fn hyper(&self) -> GpHyper {
        self.state.hyper
    }

    pub fn n_features(&self) -> usize {
        self.state.train_x.ncols()
    }

    /// Latent posterior mean and covariance on the working scale.
    fn latent(&self, points: &Matrix, full_cov: bool) -> Result<(DVector<f64>, DMatrix<f64>)> {
        points.check_cols(self.n_features())?;
        let zs = self.state.standardizer.transform_x(points);
        let kstar = gram(self.state.hyper, &self.work_x, &zs);
        let mean = kstar.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .ok_or(Error::SingularKernel { jitter: 0.0 })?;
        let cov = if full_cov {
            gram(self.state.hyper, &zs, &zs) - v.transpose() * &v
        } else {
            let s = self.state.hyper.signal_variance;
            DMatrix::from_fn(zs.nrows(), 1, |i, _| {
                (s - v.column(i).norm_squared()).max(0.0)
            })
        };
        Ok((mean, cov))
    }

    /// Predictive mean and variance of `y` (latent variance plus noise) on
    /// the original scale.
    pub fn predict(&self, points: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mean, var) = self.latent(points, false)?;
        let st = &self.state.standardizer;
        let noise = self.state.hyper.noise_variance;
        Ok((
            mean.iter().map(|m| m * st.y_scale + st.y_mean).collect(),
            var.iter()
                .map(|v| (v + noise) * st.y_scale * st.y_scale)
                .collect(),
        ))
    }

    /// Noise variance on the original scale; a floor for predictive variance.
    pub fn noise_floor(&self) -> f64 {
        self.state.hyper.noise_variance * self.state.standardizer.y_scale.powi(2)
    }

    /// Joint posterior samples of the latent function at `points`, one
    /// vector per draw. Draw `l` uses the stream `derive_seed(seed, l)`.
    pub fn sample_latent(
        &self,
        points: &Matrix,
        n_draws: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let (mean, cov) = self.latent(points, true)?;
        let sym = (&cov + cov.transpose()) * 0.5;
        let chol = cholesky_with_jitter(sym, self.state.hyper.signal_variance)?;
        let l = chol.l();
        let st = &self.state.standardizer;
        Ok((0..n_draws)
            .map(|d| {
                let mut r = rng::rng(rng::derive_seed(seed, d as u64));
                let z = DVector::from_fn(points.nrows(), |_, _| StandardNormal.sample(&mut r));
                let f = &mean + &l * z;
                f.iter().map(|v| v * st.y_scale + st.y_mean).collect()
            })
            .collect())
    }
}

fn median_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(dist(x.row(i), x.row(j)));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

/// Fits by `cv_folds`-fold cross-validation over the Cartesian grid,
/// minimizing held-out mean squared error; the first best cell in grid
/// order wins ties.
pub fn fit_gp(train: &Dataset, cfg: &GpConfig) -> Result<GpModel> {
    cfg.validate()?;
    let y = train
        .target
        .as_regression()
        .ok_or_else(|| Error::TaskMismatch("GP reference needs a regression target".into()))?;
    if train.len() < cfg.cv_folds {
        return Err(Error::TooFewSamples {
            samples: train.len(),
            folds: cfg.cv_folds,
            min_leaf: 1,
        });
    }
    let standardizer = if cfg.standardize {
        Standardizer::fit(&train.features, y)
    } else {
        Standardizer::identity(train.n_features())
    };
    let work_x = standardizer.transform_x(&train.features);
    let work_y: Vec<f64> = y
        .iter()
        .map(|v| (v - standardizer.y_mean) / standardizer.y_scale)
        .collect();
    let y_var = {
        let v = mean_sd(&work_y).1.powi(2);
        if v > 0.0 {
            v
        } else {
            1.0
        }
    };
    let base_len = median_pairwise_distance(&work_x);

    let mut grid = Vec::new();
    for &v in &cfg.variance_grid {
        for &l in &cfg.lengthscale_grid {
            for &nz in &cfg.noise_grid {
                grid.push(GpHyper {
                    kernel: cfg.kernel,
                    signal_variance: v * y_var,
                    lengthscale: l * base_len,
                    noise_variance: nz * y_var,
                });
            }
        }
    }
    let folds = rng::fold_assignment(train.len(), cfg.cv_folds, cfg.seed);
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&hyper| cv_mse(hyper, &work_x, &work_y, &folds, cfg.cv_folds))
        .collect();
    let (best, best_mse) =
        scores
            .iter()
            .enumerate()
            .fold((None, f64::INFINITY), |(bi, bs), (i, &s)| {
                if s < bs {
                    (Some(i), s)
                } else {
                    (bi, bs)
                }
            });
    let best = best.ok_or(Error::SingularKernel { jitter: JITTER_MAX })?;
    GpModel::try_from(GpState {
        hyper: grid[best],
        standardizer,
        train_x: train.features.clone(),
        train_y: y.to_vec(),
        feature_names: train.feature_names.clone(),
        cv_mse: Some(best_mse),
    })
}

fn cv_mse(hyper: GpHyper, x: &Matrix, y: &[f64], folds: &[usize], k: usize) -> f64 {
    let mut sse = 0.0;
    for fold in 0..k {
        let tr: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
        let te: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
        if te.is_empty() {
            continue;
        }
        let xtr = x.select_rows(&tr);
        let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
        let Ok((_, alpha)) = factor(hyper, &xtr, &ytr) else {
            return f64::INFINITY;
        };
        let kstar = gram(hyper, &xtr, &x.select_rows(&te));
        let pred = kstar.transpose() * alpha;
        sse += te
            .iter()
            .zip(pred.iter())
            .map(|(&i, p)| (y[i] - p).powi(2))
            .sum::<f64>();
    }
    sse / y.len() as f64
}
