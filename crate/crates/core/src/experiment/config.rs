use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::data::{downsample_2x2, load_idx, make_synthetic, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::default_tau_grid;
use crate::nn::{NetworkConfig, TrainConfig};

/// Where the train/test data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Four IDX files. Relative paths resolve against the config file's
    /// directory.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_classes")]
        classes: usize,
        /// Halve both image sides by 2x2 averaging (28x28 to 14x14).
        #[serde(default)]
        downsample: bool,
        /// Keep only the first `n` training samples.
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    Synthetic(SyntheticSpec),
}

fn default_classes() -> usize {
    10
}

/// Architecture shared by every network of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkChoice {
    /// Small conv net for images, one hidden dense layer otherwise.
    Desk,
    MnistConv,
    CifarConv,
    Custom(NetworkConfig),
}

impl NetworkChoice {
    /// Concrete configuration for `input_shape` and `classes`, seeded with 0.
    pub fn resolve(&self, input_shape: &[usize], classes: usize) -> Result<NetworkConfig> {
        let cfg = match self {
            Self::Desk => NetworkConfig::desk(input_shape.to_vec(), classes, 0),
            Self::MnistConv => NetworkConfig::mnist_conv(0).with_classes(classes)?,
            Self::CifarConv => NetworkConfig::cifar_conv(0).with_classes(classes)?,
            Self::Custom(c) => c.with_classes(classes)?,
        };
        if cfg.input_shape != input_shape {
            return Err(Error::config(format!(
                "network expects input {:?} but the data has {:?}",
                cfg.input_shape, input_shape
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seeds for every trained network and sampling step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Network that generates the adversaries.
    pub ga: u64,
    /// Baseline with the same architecture as `ga`.
    pub naive: u64,
    /// One seed per pure-ensemble member.
    pub pure: Vec<u64>,
    /// The member trained on family subset `i` (confusing `0..K`,
    /// complements `K..2K`, generalist `2K`) uses `specialist_base + i`.
    pub specialist_base: u64,
    /// Sampling of the training samples the generalist member attacks to
    /// build the confusion matrix.
    pub confusion: u64,
}

impl Seeds {
    fn validate(&self) -> Result<()> {
        if self.naive == self.ga {
            return Err(Error::config("seeds.naive must differ from seeds.ga"));
        }
        if self.pure.is_empty() {
            return Err(Error::config("seeds.pure needs at least one seed"));
        }
        let mut pure = self.pure.clone();
        pure.sort_unstable();
        pure.dedup();
        if pure.len() != self.pure.len() {
            return Err(Error::config("seeds.pure must be pairwise distinct"));
        }
        Ok(())
    }
}

fn default_coverage() -> f64 {
    0.8
}
fn default_per_class() -> usize {
    500
}
fn default_bins() -> usize {
    20
}

/// A full run: data, architecture, training, attacks, ensemble and
/// evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub network: NetworkChoice,
    /// Training for the GA, naive and pure-ensemble networks. The seed field
    /// is ignored; each network gets its own from `seeds`.
    pub train: TrainConfig,
    /// Training for the specialists+1 members; defaults to `train`.
    #[serde(default)]
    pub specialist_train: Option<TrainConfig>,
    #[serde(default)]
    pub attacks: AttackConfig,
    /// Attack at most this many test samples (first ones in order).
    #[serde(default)]
    pub attack_limit: Option<usize>,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    /// Correctly classified training samples attacked per class for the
    /// confusion matrix.
    #[serde(default = "default_per_class")]
    pub confusion_per_class: usize,
    #[serde(default = "default_tau_grid")]
    pub tau_grid: Vec<f64>,
    #[serde(default = "default_bins")]
    pub density_bins: usize,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Laptop-scale synthetic run: 4 Gaussian-blob classes of 8x8 images,
    /// so the specialists+1 ensemble has 9 members.
    pub fn desk_synthetic() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                classes: 4,
                per_class: 250,
                dim: 64,
                separation: 1.0,
                noise: 0.2,
                seed: 4,
            }),
            network: NetworkChoice::Desk,
            train: TrainConfig {
                epochs: 30,
                batch_size: 32,
                learning_rate: 0.05,
                momentum: 0.9,
                decay_epochs: vec![20],
                decay_factor: 10.0,
                seed: 0,
            },
            specialist_train: None,
            attacks: AttackConfig::default(),
            attack_limit: None,
            coverage: default_coverage(),
            confusion_per_class: 100,
            tau_grid: default_tau_grid(),
            density_bins: default_bins(),
            seeds: Seeds {
                ga: 1,
                naive: 2,
                pure: vec![11, 12, 13, 14, 15],
                specialist_base: 100,
                confusion: 5,
            },
            output_dir: PathBuf::from("out/desk-synthetic"),
        }
    }

    /// 14x14 MNIST subset (2000 train / 500 test) from the standard IDX files
    /// in `dir`.
    pub fn desk_mnist(dir: &Path) -> Self {
        Self {
            dataset: DatasetSource::Idx {
                train_images: dir.join("train-images-idx3-ubyte"),
                train_labels: dir.join("train-labels-idx1-ubyte"),
                test_images: dir.join("t10k-images-idx3-ubyte"),
                test_labels: dir.join("t10k-labels-idx1-ubyte"),
                classes: 10,
                downsample: true,
                train_limit: Some(2000),
                test_limit: Some(500),
            },
            confusion_per_class: 50,
            output_dir: PathBuf::from("out/desk-mnist"),
            ..Self::desk_synthetic()
        }
    }

    /// Full-size MNIST with the reference architecture and schedule.
    pub fn full_mnist(dir: &Path) -> Self {
        Self {
            dataset: DatasetSource::Idx {
                train_images: dir.join("train-images-idx3-ubyte"),
                train_labels: dir.join("train-labels-idx1-ubyte"),
                test_images: dir.join("t10k-images-idx3-ubyte"),
                test_labels: dir.join("t10k-labels-idx1-ubyte"),
                classes: 10,
                downsample: false,
                train_limit: None,
                test_limit: None,
            },
            network: NetworkChoice::MnistConv,
            train: TrainConfig::mnist_schedule(0),
            confusion_per_class: 500,
            output_dir: PathBuf::from("out/full-mnist"),
            ..Self::desk_synthetic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.seeds.validate()?;
        self.train.validate()?;
        if let Some(t) = &self.specialist_train {
            t.validate()?;
        }
        self.attacks.validate()?;
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::config("coverage must lie in (0,1]"));
        }
        if self.confusion_per_class == 0 || self.density_bins == 0 {
            return Err(Error::config(
                "confusion_per_class and density_bins must be positive",
            ));
        }
        if self.tau_grid.is_empty() || self.tau_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config(
                "tau_grid must be non-empty and strictly increasing",
            ));
        }
        if self.attack_limit == Some(0) {
            return Err(Error::config("attack_limit must be positive"));
        }
        if let DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            classes,
            ..
        } = &self.dataset
        {
            if *classes < 2 {
                return Err(Error::config("IDX dataset needs at least 2 classes"));
            }
            for p in [train_images, train_labels, test_images, test_labels] {
                if !p.is_file() {
                    return Err(Error::config(format!(
                        "dataset file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates a config file; relative dataset paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut cfg.dataset
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn specialist_train(&self) -> &TrainConfig {
        self.specialist_train.as_ref().unwrap_or(&self.train)
    }

    /// `(train, test)` as described by `dataset`.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => make_synthetic(spec),
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                classes,
                downsample,
                train_limit,
                test_limit,
            } => {
                let prepare =
                    |images: &Path, labels: &Path, limit: &Option<usize>| -> Result<Dataset> {
                        let mut d = load_idx(images, labels, *classes)?;
                        if let Some(n) = limit {
                            d = d.take(*n);
                        }
                        if *downsample {
                            d = downsample_2x2(&d)?;
                        }
                        Ok(d)
                    };
                let train = prepare(train_images, train_labels, train_limit)?;
                let test = prepare(test_images, test_labels, test_limit)?;
                if train.classes() != test.classes() {
                    return Err(Error::config(format!(
                        "train set has {} classes, test set {}",
                        train.classes(),
                        test.classes()
                    )));
                }
                Ok((train, test))
            }
        }
    }
}
