use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::parse_architecture;
use crate::error::{Error, Result};
use crate::network::NeuronBank;
use crate::neuron::ParamOverrides;
use crate::provenance::Provenance;

/// How static images become `T` input frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// The same analog image at every step; the first convolution does the
    /// spike encoding.
    #[default]
    Direct,
    /// Independent Bernoulli spikes per step with the pixel value as
    /// probability.
    Rate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Use only the first `n` training samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
}

/// Everything that determines a training run.
///
/// ```toml
/// architecture = "c16k3s1-BN-LIF-MPk2s2-FC100-LIF-APk10s10"
/// timesteps = 4
/// epochs = 10
/// seed = 7
///
/// [dataset]
/// train_images = "mnist/train-images-idx3-ubyte.gz"
/// train_labels = "mnist/train-labels-idx1-ubyte.gz"
/// test_images = "mnist/t10k-images-idx3-ubyte.gz"
/// test_labels = "mnist/t10k-labels-idx1-ubyte.gz"
/// train_limit = 2048
///
/// [neurons.sit]
/// d = 0.2
/// ```
///
/// Relative dataset paths are resolved against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: String,
    pub dataset: DatasetConfig,
    #[serde(default = "defaults::timesteps")]
    pub timesteps: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Restart period of the cosine schedule, in epochs.
    #[serde(default = "defaults::schedule_period")]
    pub schedule_period: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Rate of `DP` layers written without an explicit rate.
    #[serde(default = "defaults::dropout")]
    pub dropout: f64,
    /// Cap on mini-batches per epoch.
    #[serde(default = "defaults::max_batches")]
    pub max_batches_per_epoch: usize,
    #[serde(default)]
    pub encoding: Encoding,
    /// Membrane time constant for every model whose override leaves it unset.
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    /// Parameter overrides keyed by registry name (`lif`, `sit`, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub neurons: BTreeMap<String, ParamOverrides>,
}

mod defaults {
    pub fn timesteps() -> usize {
        4
    }
    pub fn batch_size() -> usize {
        16
    }
    pub fn learning_rate() -> f64 {
        0.01
    }
    pub fn schedule_period() -> usize {
        64
    }
    pub fn epochs() -> usize {
        10
    }
    pub fn dropout() -> f64 {
        crate::network::DEFAULT_DROPOUT
    }
    pub fn max_batches() -> usize {
        1024
    }
    pub fn tau() -> f64 {
        2.0
    }
}

impl TrainConfig {
    /// A config with every knob at its default.
    pub fn new(architecture: impl Into<String>, dataset: DatasetConfig) -> Self {
        Self {
            architecture: architecture.into(),
            dataset,
            timesteps: defaults::timesteps(),
            batch_size: defaults::batch_size(),
            learning_rate: defaults::learning_rate(),
            schedule_period: defaults::schedule_period(),
            epochs: defaults::epochs(),
            seed: 0,
            dropout: defaults::dropout(),
            max_batches_per_epoch: defaults::max_batches(),
            encoding: Encoding::Direct,
            tau: defaults::tau(),
            neurons: BTreeMap::new(),
        }
    }

    /// Parses TOML; relative dataset paths are joined onto `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let d = &mut config.dataset;
        for p in [
            &mut d.train_images,
            &mut d.train_labels,
            &mut d.test_images,
            &mut d.test_labels,
        ] {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.timesteps == 0 {
            return bad("timesteps must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.schedule_period == 0 {
            return bad("schedule_period must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.max_batches_per_epoch == 0 {
            return bad("max_batches_per_epoch must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        parse_architecture(&self.architecture)?;
        self.neuron_bank()?;
        Ok(())
    }

    pub fn neuron_bank(&self) -> Result<NeuronBank> {
        NeuronBank::configured(&self.neurons, Some(self.tau))
    }

    /// Canonical JSON form; the config hash is taken over this text.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(&self.canonical(), self.seed)
    }
}
