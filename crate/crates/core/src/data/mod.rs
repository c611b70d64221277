//! Labelled image datasets and their sources.

mod idx;
mod synthetic;

pub use idx::{downsample_2x2, encode_idx_images, encode_idx_labels, load_idx};
pub use synthetic::{make_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
}

/// Samples sharing one image shape, labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::config("dataset needs at least one class"));
        }
        if let Some(first) = samples.first() {
            let shape = first.image.shape();
            for s in &samples {
                s.image.check_shape(shape)?;
                if s.label >= classes {
                    return Err(Error::InvalidLabel {
                        label: s.label,
                        classes,
                    });
                }
            }
        }
        Ok(Self { samples, classes })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.samples.first().map(|s| s.image.shape())
    }

    /// Samples whose label is in `classes`, relabelled to their position in
    /// `classes`. Every listed class must have at least one sample.
    pub fn restrict_to(&self, classes: &[usize]) -> Result<Self> {
        let mut counts = vec![0usize; classes.len()];
        let samples = self
            .samples
            .iter()
            .filter_map(|s| {
                classes.iter().position(|&c| c == s.label).map(|pos| {
                    counts[pos] += 1;
                    Sample {
                        image: s.image.clone(),
                        label: pos,
                    }
                })
            })
            .collect();
        if let Some(pos) = counts.iter().position(|&n| n == 0) {
            return Err(Error::NoEligibleSamples {
                class: classes[pos],
            });
        }
        Dataset::new(samples, classes.len())
    }

    /// The first `n` samples (all if fewer).
    pub fn take(&self, n: usize) -> Self {
        Self {
            samples: self.samples.iter().take(n).cloned().collect(),
            classes: self.classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}
