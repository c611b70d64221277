//! Adversarial example generators run against a source network.

mod boxmin;
mod deepfool;
mod fgs;
mod store;

pub use boxmin::{box_min_perturbation, BoxMinConfig, BoxMinOutcome};
pub use deepfool::{deepfool, DeepFoolOutcome, DEEPFOOL_STABILITY};
pub use fgs::{fgs, fool_rate, tune_epsilon, TunedEpsilon};
pub use store::{load_adversary_set, save_adversary_set, AdversaryManifest};

use std::fmt;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgs,
    DeepFool,
    BoxMin,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Fgs, AttackKind::DeepFool, AttackKind::BoxMin];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgs => "fgs",
            AttackKind::DeepFool => "deepfool",
            AttackKind::BoxMin => "boxmin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_grid() -> Vec<f64> {
    (0..9).map(|j| 0.005 * f64::from(1u32 << j)).collect()
}
fn default_target_rate() -> f64 {
    1.0
}
fn default_df_iter() -> usize {
    50
}
fn default_overshoot() -> f64 {
    0.02
}

/// Hyper-parameters for all three generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Fixed FGS step; `None` means tune it on the grid.
    #[serde(default)]
    pub fgs_epsilon: Option<f64>,
    #[serde(default = "default_grid")]
    pub fgs_grid: Vec<f64>,
    /// Fool rate the FGS tuner aims for.
    #[serde(default = "default_target_rate")]
    pub target_fool_rate: f64,
    #[serde(default = "default_df_iter")]
    pub deepfool_max_iter: usize,
    #[serde(default = "default_overshoot")]
    pub deepfool_overshoot: f64,
    #[serde(default)]
    pub boxmin: BoxMinConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            fgs_epsilon: None,
            fgs_grid: default_grid(),
            target_fool_rate: default_target_rate(),
            deepfool_max_iter: default_df_iter(),
            deepfool_overshoot: default_overshoot(),
            boxmin: BoxMinConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fgs_epsilon.is_some_and(|e| !(e >= 0.0))
            || self.fgs_grid.iter().any(|&e| !(e >= 0.0))
        {
            return Err(Error::config("FGS epsilon must be >= 0"));
        }
        if self.fgs_grid.is_empty() || self.fgs_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "FGS grid must be non-empty and strictly increasing",
            ));
        }
        if !(0.0..=1.0).contains(&self.target_fool_rate) {
            return Err(Error::config("target fool rate must lie in [0,1]"));
        }
        if self.deepfool_max_iter == 0 || !(self.deepfool_overshoot >= 0.0) {
            return Err(Error::config(
                "DeepFool needs max_iter >= 1 and overshoot >= 0",
            ));
        }
        self.boxmin.validate()
    }
}

/// A clean input, its perturbed counterpart and what the source network
/// made of it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialExample {
    pub original: Tensor,
    pub perturbed: Tensor,
    pub true_label: usize,
    /// Source network's argmax on `perturbed`.
    pub source_prediction: usize,
    pub kind: AttackKind,
    pub distortion: f64,
    /// Whether the attack reached its goal (for FGS/DeepFool: the source
    /// network is fooled; for box-min: the target class is predicted).
    pub success: bool,
    /// Gradient steps the generator used.
    pub iterations: usize,
}

/// All adversaries produced by one generator from one clean set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySet {
    pub kind: AttackKind,
    /// FGS step used, when applicable.
    pub epsilon: Option<f64>,
    pub examples: Vec<AdversarialExample>,
}

impl AdversarySet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples that fool the source network.
    pub fn fooling(&self) -> impl Iterator<Item = &AdversarialExample> {
        self.examples
            .iter()
            .filter(|e| e.source_prediction != e.true_label)
    }

    pub fn fool_rate(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        self.fooling().count() as f64 / self.examples.len() as f64
    }

    pub fn success_rate(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        self.examples.iter().filter(|e| e.success).count() as f64 / self.examples.len() as f64
    }

    pub fn mean_distortion(&self) -> f64 {
        mean(self.examples.iter().map(|e| e.distortion))
    }

    pub fn mean_iterations(&self) -> f64 {
        mean(self.examples.iter().map(|e| e.iterations as f64))
    }

    /// Perturbed inputs labelled with their true class (for evaluation).
    pub fn to_dataset(&self, classes: usize) -> Result<Dataset> {
        let samples = self
            .examples
            .iter()
            .map(|e| Sample {
                image: e.perturbed.clone(),
                label: e.true_label,
            })
            .collect();
        Dataset::new(samples, classes)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Root-mean-square difference `sqrt(sum (x_i - x'_i)^2 / D)`.
pub fn distortion(x: &Tensor, x_adv: &Tensor) -> Result<f64> {
    x_adv.check_shape(x.shape())?;
    let sq: f64 = x
        .data()
        .iter()
        .zip(x_adv.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq / x.len() as f64).sqrt())
}

pub(crate) fn clip_unit(x: &Tensor) -> Tensor {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Samples of `data` that `net` classifies correctly, in dataset order.
pub fn correctly_classified(net: &Network, data: &Dataset) -> Result<Vec<Sample>> {
    let keep = data
        .samples()
        .par_iter()
        .map(|s| net.predict_class(&s.image).map(|c| c == s.label))
        .collect::<Result<Vec<bool>>>()?;
    Ok(data
        .samples()
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| s.clone())
        .collect())
}

/// Runs `kind` on every sample `net` classifies correctly.
///
/// All generated examples are returned with their outcome recorded; use
/// [`AdversarySet::fooling`] for the successful subset. FGS uses
/// `cfg.fgs_epsilon`, or tunes one on the eligible samples when unset.
pub fn generate_adversary_set(
    net: &Network,
    data: &Dataset,
    kind: AttackKind,
    cfg: &AttackConfig,
) -> Result<AdversarySet> {
    cfg.validate()?;
    let eligible = correctly_classified(net, data)?;
    if eligible.is_empty() {
        warn!("no correctly classified samples; {kind} set is empty");
        return Ok(AdversarySet {
            kind,
            epsilon: None,
            examples: vec![],
        });
    }
    let epsilon = match kind {
        AttackKind::Fgs => Some(match cfg.fgs_epsilon {
            Some(e) => e,
            None => tune_epsilon(net, &eligible, cfg.target_fool_rate, &cfg.fgs_grid)?.epsilon,
        }),
        _ => None,
    };
    let examples = eligible
        .par_iter()
        .map(|s| attack_one(net, s, kind, epsilon, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdversarySet {
        kind,
        epsilon,
        examples,
    })
}

fn attack_one(
    net: &Network,
    s: &Sample,
    kind: AttackKind,
    epsilon: Option<f64>,
    cfg: &AttackConfig,
) -> Result<AdversarialExample> {
    let (perturbed, success, iterations) = match kind {
        AttackKind::Fgs => {
            let adv = fgs(net, &s.image, s.label, epsilon.unwrap_or(0.0))?;
            (adv, None, 1)
        }
        AttackKind::DeepFool => {
            let out = deepfool(
                net,
                &s.image,
                s.label,
                cfg.deepfool_max_iter,
                cfg.deepfool_overshoot,
            )?;
            (out.adversary, Some(out.success), out.iterations)
        }
        AttackKind::BoxMin => {
            let out = box_min_perturbation(net, &s.image, s.label, None, &cfg.boxmin)?;
            (out.adversary, Some(out.success), out.iterations)
        }
    };
    let source_prediction = net.predict_class(&perturbed)?;
    Ok(AdversarialExample {
        distortion: distortion(&s.image, &perturbed)?,
        original: s.image.clone(),
        true_label: s.label,
        source_prediction,
        kind,
        success: success.unwrap_or(source_prediction != s.label),
        iterations,
        perturbed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NetworkConfig};
    use proptest::prelude::*;

    #[test]
    fn distortion_values() {
        let x = Tensor::vector(vec![0.2, 0.4, 0.6, 0.8]);
        assert_eq!(distortion(&x, &x).unwrap(), 0.0);
        let y = x.map(|v| v + 0.1);
        assert!((distortion(&x, &y).unwrap() - 0.1).abs() < 1e-12);
        let z = x.map(|v| v + 0.2);
        assert!((distortion(&x, &z).unwrap() - 2.0 * distortion(&x, &y).unwrap()).abs() < 1e-12);
        assert!(distortion(&x, &Tensor::vector(vec![0.0; 3])).is_err());
    }

    proptest! {
        #[test]
        fn distortion_is_symmetric_and_homogeneous(
            a in proptest::collection::vec(0.0f64..1.0, 6),
            b in proptest::collection::vec(0.0f64..1.0, 6),
            s in 0.0f64..4.0,
        ) {
            let x = Tensor::vector(a.clone());
            let y = Tensor::vector(b.clone());
            let d = distortion(&x, &y).unwrap();
            prop_assert!((d - distortion(&y, &x).unwrap()).abs() < 1e-12);
            prop_assert_eq!(d == 0.0, a == b);
            let scaled = Tensor::vector(a.iter().zip(&b).map(|(p, q)| p + s * (q - p)).collect());
            prop_assert!((distortion(&x, &scaled).unwrap() - s * d).abs() < 1e-9);
        }
    }

    #[test]
    fn attack_kind_names_round_trip() {
        for k in AttackKind::ALL {
            assert_eq!(AttackKind::parse(k.name()), Some(k));
            assert_eq!(
                serde_json::to_string(&k).unwrap(),
                format!("\"{}\"", k.name())
            );
        }
    }

    #[test]
    fn uniform_net_only_admits_one_class() {
        // zero weights: always predicts class 0, so only label-0 samples are eligible
        let cfg = NetworkConfig {
            input_shape: vec![2],
            layers: vec![LayerSpec::Dense { units: 4 }, LayerSpec::Softmax],
            classes: 4,
            seed: 0,
        };
        let net = Network::from_params(
            cfg,
            vec![vec![Tensor::zeros(&[4, 2]), Tensor::zeros(&[4])], vec![]],
        )
        .unwrap();
        let samples = (0..40)
            .map(|i| Sample {
                image: Tensor::vector(vec![0.5, 0.5]),
                label: i % 4,
            })
            .collect();
        let data = Dataset::new(samples, 4).unwrap();
        assert_eq!(correctly_classified(&net, &data).unwrap().len(), 10);
    }

    #[test]
    fn generated_examples_start_from_correct_predictions() {
        let cfg = NetworkConfig {
            input_shape: vec![2],
            layers: vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
            classes: 2,
            seed: 0,
        };
        let w = Tensor::new(vec![2, 2], vec![4.0, 0.0, 0.0, 4.0]).unwrap();
        let net = Network::from_params(cfg, vec![vec![w, Tensor::zeros(&[2])], vec![]]).unwrap();
        let samples = (0..12)
            .map(|i| {
                let t = i as f64 / 11.0;
                Sample {
                    image: Tensor::vector(vec![t, 1.0 - t]),
                    label: i % 2,
                }
            })
            .collect();
        let data = Dataset::new(samples, 2).unwrap();
        for kind in [AttackKind::DeepFool, AttackKind::BoxMin] {
            let set = generate_adversary_set(&net, &data, kind, &AttackConfig::default()).unwrap();
            assert!(!set.is_empty());
            for ex in &set.examples {
                assert_eq!(net.predict_class(&ex.original).unwrap(), ex.true_label);
                assert!(ex.distortion > 0.0);
            }
        }
    }
}
