//! Interpretable proxies for probabilistic reference models.
//!
//! A reference model (exact Gaussian process or bagged tree ensemble) is fit
//! to data first. Its predictive distribution is then projected onto a
//! decision tree by maximizing the expected log-likelihood of the tree under
//! the reference predictive distribution, minus a leaf-count penalty. The
//! same machinery gives global explanations (targets at the training inputs),
//! local explanations (targets sampled around a query point), and per-draw
//! linear explanations that separate epistemic from aleatoric uncertainty.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod json;
pub mod projection;
pub mod proxy_tree;
pub mod reference;
pub mod rng;

pub use data::{Dataset, Matrix, SplitSpec, Target, Task};
pub use error::{Error, Result};
pub use projection::{
    ExplanationReport, LinearProxy, NeighborhoodSpec, ProxyOptions, ProxySize,
    UncertaintyExplanation,
};
pub use proxy_tree::{FitTargets, GrowConfig, ProxyTree, PruneSequence, TargetValues};
pub use reference::{
    DrawSource, EnsembleConfig, GpConfig, PosteriorDraw, PredictiveSummary, ReferenceConfig,
    ReferenceModel,
};
