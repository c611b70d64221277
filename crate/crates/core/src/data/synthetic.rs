use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::tensor::Tensor;

/// Gaussian-blob classification problem in `[0,1]^dim`.
///
/// Class centres are `0.5 + separation * z / sqrt(dim)` with `z` standard
/// normal, clipped to `[0.1, 0.9]`, so two centres lie about
/// `separation * sqrt(2)` apart. Samples add isotropic noise of standard
/// deviation `noise` and are clipped to `[0,1]`. A `dim` that is a perfect
/// square yields `[1, s, s]` images, anything else flat vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.per_class < 5 || self.dim == 0 {
            return Err(Error::config(
                "synthetic data needs >= 2 classes, >= 5 samples per class and dim >= 1",
            ));
        }
        if !(self.separation > 0.0) || self.noise < 0.0 {
            return Err(Error::config(
                "synthetic separation must be > 0 and noise >= 0",
            ));
        }
        Ok(())
    }

    pub fn image_shape(&self) -> Vec<usize> {
        let side = (self.dim as f64).sqrt().round() as usize;
        if side * side == self.dim && side > 1 {
            vec![1, side, side]
        } else {
            vec![self.dim]
        }
    }
}

fn centres(spec: &SyntheticSpec, rng: &mut Rng) -> Vec<Vec<f64>> {
    let scale = spec.separation / (spec.dim as f64).sqrt();
    (0..spec.classes)
        .map(|_| {
            (0..spec.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    (0.5 + scale * z).clamp(0.1, 0.9)
                })
                .collect()
        })
        .collect()
}

/// Deterministic `(train, test)` split, 80/20 within every class.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Data);
    let centres = centres(spec, &mut rng);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::config(e.to_string()))?;
    let shape = spec.image_shape();
    let n_train = spec.per_class * 4 / 5;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for i in 0..spec.per_class {
        for (label, c) in centres.iter().enumerate() {
            let data = c
                .iter()
                .map(|&m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            let sample = Sample {
                image: Tensor::new(shape.clone(), data)?,
                label,
            };
            if i < n_train {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok((
        Dataset::new(train, spec.classes)?,
        Dataset::new(test, spec.classes)?,
    ))
}
