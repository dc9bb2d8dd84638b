//! Reference predictive models behind one predictive-summary interface.

mod ensemble;
mod gp;

pub use ensemble::{fit_ensemble, EnsembleConfig, EnsembleModel};
pub use gp::{fit_gp, GpConfig, GpHyper, GpModel, GpState, Kernel, Standardizer};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Task};
use crate::error::{Error, Result};
use crate::json;

/// Predictive mean and variance per point, or class probabilities per point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictiveSummary {
    Regression {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    Classification {
        probs: Vec<Vec<f64>>,
    },
}

impl PredictiveSummary {
    pub fn len(&self) -> usize {
        match self {
            PredictiveSummary::Regression { means, .. } => means.len(),
            PredictiveSummary::Classification { probs } => probs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn means(&self) -> Option<&[f64]> {
        match self {
            PredictiveSummary::Regression { means, .. } => Some(means),
            PredictiveSummary::Classification { .. } => None,
        }
    }

    /// Most probable class per point (0-based; lowest index wins ties).
    pub fn argmax(&self) -> Option<Vec<usize>> {
        match self {
            PredictiveSummary::Classification { probs } => {
                Some(probs.iter().map(|p| argmax(p)).collect())
            }
            PredictiveSummary::Regression { .. } => None,
        }
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// One posterior draw evaluated at a fixed set of query points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub draw_index: usize,
    pub values: DrawValues,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawValues {
    Means(Vec<f64>),
    Probs(Vec<Vec<f64>>),
}

/// Anything that can produce draw-conditioned predictions at query points.
/// Implemented by [`ReferenceModel`]; tests and callers can supply their own.
pub trait DrawSource: Sync {
    fn task(&self) -> Task;

    fn n_features(&self) -> usize;

    fn draws(&self, n_draws: usize, points: &Matrix, seed: u64) -> Result<Vec<PosteriorDraw>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReferenceConfig {
    Gp(GpConfig),
    Ensemble(EnsembleConfig),
}

impl ReferenceConfig {
    pub fn fit(&self, train: &Dataset) -> Result<ReferenceModel> {
        match self {
            ReferenceConfig::Gp(cfg) => fit_gp(train, cfg).map(ReferenceModel::Gp),
            ReferenceConfig::Ensemble(cfg) => {
                fit_ensemble(train, cfg).map(ReferenceModel::Ensemble)
            }
        }
    }

    /// Same configuration with its internal seed replaced.
    pub fn with_seed(&self, seed: u64) -> ReferenceConfig {
        match self {
            ReferenceConfig::Gp(cfg) => ReferenceConfig::Gp(GpConfig {
                seed,
                ..cfg.clone()
            }),
            ReferenceConfig::Ensemble(cfg) => ReferenceConfig::Ensemble(EnsembleConfig {
                bootstrap_seed: seed,
                ..cfg.clone()
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReferenceModel {
    Gp(GpModel),
    Ensemble(EnsembleModel),
}

pub const MODEL_VERSION: u32 = 1;

/// Versioned on-disk form of a fitted reference model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub model: ReferenceModel,
}

impl ReferenceModel {
    pub fn task(&self) -> Task {
        match self {
            ReferenceModel::Gp(_) => Task::Regression,
            ReferenceModel::Ensemble(m) => m.task,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            ReferenceModel::Gp(m) => m.n_features(),
            ReferenceModel::Ensemble(m) => m.n_features,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            ReferenceModel::Gp(m) => &m.state().feature_names,
            ReferenceModel::Ensemble(m) => &m.feature_names,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            ReferenceModel::Gp(_) => 0,
            ReferenceModel::Ensemble(m) => m.n_classes,
        }
    }

    pub fn predict_summary(&self, points: &Matrix) -> Result<PredictiveSummary> {
        points.check_cols(self.n_features())?;
        match self {
            ReferenceModel::Gp(m) => {
                let (means, variances) = m.predict(points)?;
                Ok(PredictiveSummary::Regression { means, variances })
            }
            ReferenceModel::Ensemble(m) => match m.task {
                Task::Regression => {
                    let (means, spread) = m.mean_and_spread(points)?;
                    let variances = spread.iter().map(|v| v + m.noise_variance).collect();
                    Ok(PredictiveSummary::Regression { means, variances })
                }
                Task::Classification => Ok(PredictiveSummary::Classification {
                    probs: m.mean_probs(points)?,
                }),
            },
        }
    }

    /// Point predictions: predictive means, or most probable class (0-based)
    /// cast to `f64`.
    pub fn predict_point(&self, points: &Matrix) -> Result<Vec<f64>> {
        let s = self.predict_summary(points)?;
        Ok(match &s {
            PredictiveSummary::Regression { means, .. } => means.clone(),
            PredictiveSummary::Classification { .. } => s
                .argmax()
                .unwrap_or_default()
                .into_iter()
                .map(|k| k as f64)
                .collect(),
        })
    }

    /// `n_draws` posterior draws at `points`. Ensemble draws are the first
    /// `n_draws` trees in order (`seed` unused); GP draws are joint samples of
    /// the latent function.
    pub fn posterior_draws(
        &self,
        n_draws: usize,
        points: &Matrix,
        seed: u64,
    ) -> Result<Vec<PosteriorDraw>> {
        points.check_cols(self.n_features())?;
        match self {
            ReferenceModel::Gp(m) => Ok(m
                .sample_latent(points, n_draws, seed)?
                .into_iter()
                .enumerate()
                .map(|(draw_index, v)| PosteriorDraw {
                    draw_index,
                    values: DrawValues::Means(v),
                })
                .collect()),
            ReferenceModel::Ensemble(m) => {
                if n_draws > m.trees.len() {
                    return Err(Error::TooManyDraws {
                        requested: n_draws,
                        available: m.trees.len(),
                    });
                }
                m.trees[..n_draws]
                    .iter()
                    .enumerate()
                    .map(|(draw_index, t)| {
                        let values = match m.task {
                            Task::Regression => DrawValues::Means(t.predict_mean(points)?),
                            Task::Classification => DrawValues::Probs(t.predict_proba(points)?),
                        };
                        Ok(PosteriorDraw { draw_index, values })
                    })
                    .collect()
            }
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            version: MODEL_VERSION,
            model: self.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_canonical_string(&self.to_document())
    }

    pub fn from_json(s: &str) -> Result<ReferenceModel> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        Ok(doc.model)
    }

    /// SHA-256 of the canonical model document.
    pub fn fingerprint(&self) -> Result<String> {
        json::fingerprint(&self.to_document())
    }
}

impl DrawSource for ReferenceModel {
    fn task(&self) -> Task {
        ReferenceModel::task(self)
    }

    fn n_features(&self) -> usize {
        ReferenceModel::n_features(self)
    }

    fn draws(&self, n_draws: usize, points: &Matrix, seed: u64) -> Result<Vec<PosteriorDraw>> {
        self.posterior_draws(n_draws, points, seed)
    }
}

#[cfg(test)]
mod tests;
