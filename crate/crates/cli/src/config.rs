use std::path::{Path, PathBuf};

use proxyfit_core::evaluation::{Approach, Weighting};
use proxyfit_core::{
    EnsembleConfig, Error, GpConfig, GrowConfig, ProxyOptions, ProxySize, ReferenceConfig, Task,
};
use serde::{Deserialize, Serialize};

/// Everything a command needs. Loaded from TOML, then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory. Not echoed, so runs into different directories
    /// produce identical files.
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    pub reference: ReferenceConfig,
    pub proxy: ProxyConfig,
    pub neighborhood: NeighborhoodConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: None,
            data: DataConfig::default(),
            reference: ReferenceConfig::Gp(GpConfig::default()),
            proxy: ProxyConfig::default(),
            neighborhood: NeighborhoodConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub target: Option<String>,
    pub task: Task,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            target: None,
            task: Task::Regression,
            train_fraction: 0.75,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Fixed leaf count; cross-validated when absent.
    pub size: Option<usize>,
    pub cv_folds: usize,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        let g = GrowConfig::default();
        ProxyConfig {
            min_leaf: g.min_leaf,
            max_depth: g.max_depth,
            size: None,
            cv_folds: 5,
        }
    }
}

impl ProxyConfig {
    pub fn grow(&self) -> GrowConfig {
        GrowConfig {
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
        }
    }

    pub fn options(&self, cv_seed: u64) -> ProxyOptions {
        ProxyOptions {
            grow: self.grow(),
            size: match self.size {
                Some(leaves) => ProxySize::Fixed { leaves },
                None => ProxySize::Cv {
                    folds: self.cv_folds,
                    seed: cv_seed,
                },
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborhoodConfig {
    pub sd: f64,
    pub samples: usize,
    /// Measure `sd` in units of each feature's training standard deviation.
    pub scaled: bool,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        NeighborhoodConfig {
            sd: 1.0,
            samples: 200,
            scaled: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub runs: usize,
    pub sizes: Vec<usize>,
    pub resamples: usize,
    pub approach: Approach,
    pub weighting: Weighting,
    pub refit_reference: bool,
    pub n_local: usize,
    /// Cap on the number of test rows scored by `fidelity`.
    pub test_points: Option<usize>,
    pub ci_level: f64,
    pub ci_resamples: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            runs: 20,
            sizes: vec![2, 4, 8, 16],
            resamples: 10,
            approach: Approach::Utility,
            weighting: Weighting::default(),
            refit_reference: true,
            n_local: 50,
            test_points: None,
            ci_level: 0.95,
            ci_resamples: 2000,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, Error> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self) -> Result<(), Error> {
        let f = self.data.train_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidConfig(
                "data.train_fraction must be in (0, 1]".into(),
            ));
        }
        self.proxy.grow().validate()?;
        if self.proxy.size == Some(0) {
            return Err(Error::InvalidConfig("proxy.size must be >= 1".into()));
        }
        if self.proxy.cv_folds < 2 {
            return Err(Error::InvalidConfig("proxy.cv_folds must be >= 2".into()));
        }
        match &self.reference {
            ReferenceConfig::Gp(c) => c.validate()?,
            ReferenceConfig::Ensemble(c) => c.validate()?,
        }
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path, Error> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no dataset: set data.path or pass --data".into()))
    }

    pub fn target(&self) -> Result<&str, Error> {
        self.data.target.as_deref().ok_or_else(|| {
            Error::InvalidConfig("no target column: set data.target or pass --target".into())
        })
    }

    pub fn set_reference_kind(&mut self, kind: ReferenceKind) {
        let same = matches!(
            (&self.reference, kind),
            (ReferenceConfig::Gp(_), ReferenceKind::Gp)
                | (ReferenceConfig::Ensemble(_), ReferenceKind::Ensemble)
        );
        if !same {
            self.reference = match kind {
                ReferenceKind::Gp => ReferenceConfig::Gp(GpConfig::default()),
                ReferenceKind::Ensemble => ReferenceConfig::Ensemble(EnsembleConfig::default()),
            };
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReferenceKind {
    Gp,
    Ensemble,
}
