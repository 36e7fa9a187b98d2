//! Experiment configuration: a TOML file with one section per concern and
//! optional `[[strategy]]` sections for explicitly enumerated strategies.
//!
//! ```toml
//! [dataset]
//! kind = "synthetic"        # or "idx" with train/test file paths
//! classes = 3
//! train-samples = 2000
//! test-samples = 500
//! image-size = 12
//! noise = 1.5
//! seed = 11
//!
//! [network]
//! preset = "desk"           # or "full"
//!
//! [training]
//! batch-size = 64
//! learning-rate = 0.0001
//! seeds = [1, 2, 3]
//! max-epochs = 400
//!
//! [stopping]
//! mode = "risk-band"        # or "pseudo-max"
//! target = 0.70
//! epsilon = 0.04
//!
//! [sweep]
//! regime = "learning-rate"  # or "batch-size"
//! values = [0.003, 0.0003, 0.00003]
//!
//! [ood]
//! transforms = ["x-flip", "pixelate", "color-jitter"]
//! seed = 99
//!
//! [svcca]
//! variance-fraction = 0.99
//! top-t = 20
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rashomon_core::data::{generate_synthetic, Split, SyntheticSpec};
use rashomon_core::experiments::{presets, ExperimentDatasets, SweepValues};
use rashomon_core::multiplicity::RiskBand;
use rashomon_core::nn::{NetworkSpec, Regime, StoppingPolicy, TrainingStrategy};
use rashomon_core::ood::{apply_ood_transform, OodTransform};
use rashomon_core::SvccaConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idx::load_idx;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Idx(#[from] crate::idx::IdxError),
    #[error("dataset: {0}")]
    Data(#[from] rashomon_core::data::DataError),
    #[error("network: {0}")]
    Network(#[from] rashomon_core::nn::NnError),
    #[error("risk band: {0}")]
    Band(#[from] rashomon_core::multiplicity::MultiplicityError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub stopping: StoppingConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default, rename = "strategy")]
    pub strategies: Vec<StrategyConfig>,
    #[serde(default)]
    pub ood: OodConfig,
    #[serde(default)]
    pub svcca: SvccaSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: String,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_train_samples")]
    pub train_samples: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_data_seed")]
    pub seed: u64,
    #[serde(default)]
    pub train_images: Option<PathBuf>,
    #[serde(default)]
    pub train_labels: Option<PathBuf>,
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
}

fn default_classes() -> usize {
    3
}
fn default_train_samples() -> usize {
    2000
}
fn default_test_samples() -> usize {
    500
}
fn default_image_size() -> usize {
    12
}
fn default_noise() -> f64 {
    1.5
}
fn default_data_seed() -> u64 {
    11
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NetworkConfig {
    pub preset: String,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            preset: "desk".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
    pub max_epochs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StoppingConfig {
    pub mode: String,
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SweepConfig {
    pub regime: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StrategyConfig {
    pub regime: String,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OodConfig {
    #[serde(default)]
    pub transforms: Vec<String>,
    #[serde(default = "default_ood_seed")]
    pub seed: u64,
}

fn default_ood_seed() -> u64 {
    99
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SvccaSection {
    #[serde(default = "default_variance_fraction")]
    pub variance_fraction: f64,
    #[serde(default = "default_top_t")]
    pub top_t: usize,
}

fn default_variance_fraction() -> f64 {
    0.99
}
fn default_top_t() -> usize {
    20
}

impl Default for SvccaSection {
    fn default() -> Self {
        SvccaSection {
            variance_fraction: default_variance_fraction(),
            top_t: default_top_t(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })
    }

    /// Laptop-scale preset: synthetic 2000-sample data, the small network,
    /// 3 learning rates x 3 seeds into a common risk band.
    pub fn desk() -> Config {
        Config {
            dataset: DatasetConfig {
                kind: "synthetic".into(),
                classes: 3,
                train_samples: 2000,
                test_samples: 500,
                image_size: 12,
                noise: 1.5,
                seed: 11,
                train_images: None,
                train_labels: None,
                test_images: None,
                test_labels: None,
            },
            network: NetworkConfig {
                preset: "desk".into(),
            },
            training: TrainingConfig {
                batch_size: presets::LR_REGIME_BATCH_SIZE,
                learning_rate: presets::BS_REGIME_LEARNING_RATE,
                seeds: presets::desk_seeds(),
                max_epochs: 400,
            },
            stopping: StoppingConfig {
                mode: "risk-band".into(),
                target: Some(0.70),
                epsilon: 0.04,
            },
            sweep: Some(SweepConfig {
                regime: "learning-rate".into(),
                values: presets::desk_learning_rates(),
            }),
            strategies: Vec::new(),
            ood: OodConfig {
                transforms: vec!["x-flip".into(), "pixelate".into(), "color-jitter".into()],
                seed: 99,
            },
            svcca: SvccaSection::default(),
        }
    }

    /// Full-scale preset: the published 7-value grid with 10 seeds and the
    /// four-conv network, stopping in pseudo-max mode. Swap the dataset
    /// section for IDX paths to run it on real data.
    pub fn paper(regime: Regime) -> Config {
        let mut cfg = Config::desk();
        cfg.network.preset = "full".into();
        cfg.training.seeds = presets::paper_seeds();
        cfg.training.max_epochs = 60;
        cfg.stopping = StoppingConfig {
            mode: "pseudo-max".into(),
            target: None,
            epsilon: default_epsilon(),
        };
        cfg.sweep = Some(match regime {
            Regime::LearningRate => SweepConfig {
                regime: "learning-rate".into(),
                values: presets::paper_learning_rates(),
            },
            Regime::BatchSize => SweepConfig {
                regime: "batch-size".into(),
                values: presets::paper_batch_sizes()
                    .iter()
                    .map(|&b| b as f64)
                    .collect(),
            },
        });
        cfg
    }

    pub fn svcca_config(&self) -> SvccaConfig {
        SvccaConfig {
            variance_fraction: self.svcca.variance_fraction,
            top_t: self.svcca.top_t,
        }
    }

    pub fn stopping_policy(&self) -> Result<StoppingPolicy, ConfigError> {
        match self.stopping.mode.as_str() {
            "pseudo-max" => Ok(StoppingPolicy::PseudoMax),
            "risk-band" => {
                let target = self.stopping.target.ok_or_else(|| {
                    ConfigError::Invalid("risk-band stopping needs a target".into())
                })?;
                Ok(StoppingPolicy::RiskBand(RiskBand::new(
                    target,
                    self.stopping.epsilon,
                )?))
            }
            other => Err(ConfigError::Invalid(format!(
                "unknown stopping mode '{other}'"
            ))),
        }
    }

    fn base_strategy(&self) -> Result<TrainingStrategy, ConfigError> {
        Ok(TrainingStrategy {
            regime: Regime::LearningRate,
            learning_rate: self.training.learning_rate,
            batch_size: self.training.batch_size,
            seeds: self.training.seeds.clone(),
            stopping: self.stopping_policy()?,
            max_epochs: self.training.max_epochs,
        })
    }

    /// The strategy list: explicit `[[strategy]]` sections if present,
    /// otherwise the `[sweep]` grid over the `[training]` base.
    pub fn build_strategies(&self) -> Result<Vec<TrainingStrategy>, ConfigError> {
        let base = self.base_strategy()?;
        if !self.strategies.is_empty() {
            return self
                .strategies
                .iter()
                .map(|s| {
                    let regime = parse_regime(&s.regime)?;
                    Ok(TrainingStrategy {
                        regime,
                        learning_rate: s.learning_rate.unwrap_or(base.learning_rate),
                        batch_size: s.batch_size.unwrap_or(base.batch_size),
                        seeds: s.seeds.clone().unwrap_or_else(|| base.seeds.clone()),
                        stopping: base.stopping,
                        max_epochs: s.max_epochs.unwrap_or(base.max_epochs),
                    })
                })
                .collect();
        }
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("need [sweep] or [[strategy]] sections".into()))?;
        let values = sweep_values(sweep)?;
        Ok((0..values.len())
            .map(|i| values.strategy(&base, i))
            .collect())
    }

    /// Sweep values plus the base strategy, for callers driving
    /// `sweep_regime` directly.
    pub fn build_sweep(&self) -> Result<(SweepValues, TrainingStrategy), ConfigError> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("config has no [sweep] section".into()))?;
        Ok((sweep_values(sweep)?, self.base_strategy()?))
    }

    pub fn build_network(&self) -> Result<NetworkSpec, ConfigError> {
        let (channels, size, classes) = self.input_dims()?;
        let spec = match self.network.preset.as_str() {
            "desk" => NetworkSpec::desk(channels, size.0, size.1, classes)?,
            "full" => NetworkSpec::full(channels, size.0, size.1, classes)?,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown network preset '{other}' (expected 'desk' or 'full')"
                )))
            }
        };
        Ok(spec)
    }

    fn input_dims(&self) -> Result<(usize, (usize, usize), usize), ConfigError> {
        match self.dataset.kind.as_str() {
            "synthetic" => Ok((
                1,
                (self.dataset.image_size, self.dataset.image_size),
                self.dataset.classes,
            )),
            "idx" => {
                // Dimensions come from the files; peek at the test split.
                let ds = self.load_idx_split(Split::Test)?;
                Ok((ds.channels, (ds.height, ds.width), ds.classes))
            }
            other => Err(ConfigError::Invalid(format!(
                "unknown dataset kind '{other}'"
            ))),
        }
    }

    fn load_idx_split(&self, split: Split) -> Result<rashomon_core::data::Dataset, ConfigError> {
        let (images, labels) = match split {
            Split::Train => (&self.dataset.train_images, &self.dataset.train_labels),
            Split::Test => (&self.dataset.test_images, &self.dataset.test_labels),
        };
        let images = images
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("missing {split} image path")))?;
        let labels = labels
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("missing {split} label path")))?;
        Ok(load_idx(images, labels, split)?)
    }

    /// Materializes train/test splits plus the configured OOD variants of
    /// the test split.
    pub fn build_datasets(&self) -> Result<ExperimentDatasets, ConfigError> {
        let (train, test) = match self.dataset.kind.as_str() {
            "synthetic" => {
                let spec = SyntheticSpec {
                    classes: self.dataset.classes,
                    samples: self.dataset.train_samples,
                    image_size: self.dataset.image_size,
                    noise: self.dataset.noise,
                };
                let train = generate_synthetic(&spec, self.dataset.seed, Split::Train)?;
                let test = generate_synthetic(
                    &SyntheticSpec {
                        samples: self.dataset.test_samples,
                        ..spec
                    },
                    self.dataset.seed + 1,
                    Split::Test,
                )?;
                (train, test)
            }
            "idx" => (
                self.load_idx_split(Split::Train)?,
                self.load_idx_split(Split::Test)?,
            ),
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown dataset kind '{other}'"
                )))
            }
        };

        let mut ood = Vec::with_capacity(self.ood.transforms.len());
        for name in &self.ood.transforms {
            let transform = OodTransform::parse(name)?;
            let transformed = apply_ood_transform(&test, &transform, self.ood.seed)?;
            ood.push((transform.label(), transformed));
        }
        Ok(ExperimentDatasets { train, test, ood })
    }
}

pub fn parse_regime(name: &str) -> Result<Regime, ConfigError> {
    match name {
        "learning-rate" => Ok(Regime::LearningRate),
        "batch-size" => Ok(Regime::BatchSize),
        other => Err(ConfigError::Invalid(format!(
            "unknown regime '{other}' (expected 'learning-rate' or 'batch-size')"
        ))),
    }
}

fn sweep_values(sweep: &SweepConfig) -> Result<SweepValues, ConfigError> {
    match parse_regime(&sweep.regime)? {
        Regime::LearningRate => Ok(SweepValues::LearningRate(sweep.values.clone())),
        Regime::BatchSize => {
            let batches: Result<Vec<usize>, _> = sweep
                .values
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && v >= 1.0 {
                        Ok(v as usize)
                    } else {
                        Err(ConfigError::Invalid(format!(
                            "batch size {v} is not a positive integer"
                        )))
                    }
                })
                .collect();
            Ok(SweepValues::BatchSize(batches?))
        }
    }
}
