//! Versioned TOML run configuration.
//!
//! ```toml
//! schema = 1
//!
//! [data]
//! kind = "mnist"            # "mnist" | "cifar10" | "synthetic"
//! path = "data/mnist"
//! [data.split]
//! validation = 10000
//! train_limit = 20000       # optional
//!
//! [train]                   # see `TrainConfig`
//! epochs = 20
//! seed = 1
//! ...
//!
//! [prune]                   # optional, see `PruneConfig`
//! retrain_epochs = 5
//!
//! [cost]                    # optional
//! batch = 100               # reuse batch for the model summary
//! [cost.scenario]           # see `CostScenario`
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::CostScenario;
use crate::data::{load_cifar10, load_mnist, synthetic, SplitOptions, Splits};
use crate::error::{Error, Result};
use crate::prune::PruneConfig;
use crate::train::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Mnist {
        path: PathBuf,
    },
    Cifar10 {
        path: PathBuf,
    },
    /// Noisy ±1 class prototypes; for smoke runs without a dataset on disk.
    Synthetic {
        /// Examples before the validation split.
        train: usize,
        test: usize,
        shape: [usize; 3],
        classes: usize,
        #[serde(default = "default_noise")]
        noise: f32,
        #[serde(default)]
        seed: u64,
    },
}

fn default_noise() -> f32 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(flatten)]
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitOptions>,
}

impl DataConfig {
    pub fn split_options(&self) -> SplitOptions {
        self.split.unwrap_or(match self.source {
            DataSource::Mnist { .. } => SplitOptions::MNIST,
            DataSource::Cifar10 { .. } => SplitOptions::CIFAR10,
            DataSource::Synthetic { train, .. } => {
                SplitOptions { validation: train / 5, train_limit: None, validation_limit: None, test_limit: None }
            }
        })
    }

    /// `[C, H, W]` and class count of the examples this source yields.
    pub fn example_shape(&self) -> ([usize; 3], usize) {
        match &self.source {
            DataSource::Mnist { .. } => ([1, 28, 28], 10),
            DataSource::Cifar10 { .. } => ([3, 32, 32], 10),
            DataSource::Synthetic { shape, classes, .. } => (*shape, *classes),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.source {
            DataSource::Mnist { path } | DataSource::Cifar10 { path } => Some(path),
            DataSource::Synthetic { .. } => None,
        }
    }

    pub fn set_path(&mut self, p: PathBuf) {
        if let DataSource::Mnist { path } | DataSource::Cifar10 { path } = &mut self.source {
            *path = p;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic { train, test, classes, noise, .. } = &self.source {
            if *train < 2 || *test == 0 || *classes < 2 {
                return Err(Error::config("synthetic data needs train >= 2, test >= 1, classes >= 2"));
            }
            if !(noise.is_finite() && *noise >= 0.0) {
                return Err(Error::config("synthetic noise must be finite and nonnegative"));
            }
        }
        let split = self.split_options();
        if split.train_limit == Some(0) || split.validation_limit == Some(0) || split.test_limit == Some(0) {
            return Err(Error::config("split limits must be positive"));
        }
        if split.validation == 0 {
            return Err(Error::config("validation split must be nonempty"));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Splits> {
        let split = self.split_options();
        match &self.source {
            DataSource::Mnist { path } => load_mnist(path, &split),
            DataSource::Cifar10 { path } => load_cifar10(path, &split),
            DataSource::Synthetic { train, test, shape, classes, noise, seed } => {
                let all = synthetic(train + test, *shape, *classes, *noise, *seed)?;
                let (train_set, test_set) = all.split_tail(*test)?;
                let (train_set, validation) = train_set.split_tail(split.validation)?;
                let limit = |d: crate::data::Dataset, l: Option<usize>| match l {
                    Some(n) => d.take(n),
                    None => Ok(d),
                };
                Ok(Splits {
                    train: limit(train_set, split.train_limit)?,
                    validation: limit(validation, split.validation_limit)?,
                    test: limit(test_set, split.test_limit)?,
                })
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub scenario: CostScenario,
    /// Reuse batch for the model summary; the training batch when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub data: DataConfig,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune: Option<PruneConfig>,
    #[serde(default)]
    pub cost: CostConfig,
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialization: {e}")))
    }

    /// Prune settings, defaulting to one round with `sigma = eta` and a
    /// retrain as long as the training run.
    pub fn prune_config(&self) -> PruneConfig {
        self.prune.clone().unwrap_or_else(|| PruneConfig::new(self.train.epochs))
    }

    pub fn cost_batch(&self) -> u64 {
        self.cost.batch.unwrap_or(self.train.batch_size as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema {} is not supported (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        self.data.validate()?;
        self.train.validate()?;
        let (shape, classes) = self.data.example_shape();
        if self.train.network.input != shape {
            return Err(Error::Config(format!(
                "network input {:?} does not match data examples {:?}",
                self.train.network.input, shape
            )));
        }
        if self.train.network.classes != classes {
            return Err(Error::Config(format!(
                "network has {} classes, data has {classes}",
                self.train.network.classes
            )));
        }
        let etas = self.train.thresholds.resolve(&self.train.network)?;
        let ternary_etas: Vec<f64> = self
            .train
            .network
            .layers
            .iter()
            .filter(|l| l.is_weight_layer())
            .zip(&etas)
            .filter(|(l, _)| l.is_ternary())
            .map(|(_, &e)| e)
            .collect();
        self.prune_config().resolve(&ternary_etas)?;
        self.cost.scenario.validate()?;
        if self.cost_batch() == 0 {
            return Err(Error::config("cost batch must be at least 1"));
        }
        Ok(())
    }
}
