use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_norm_k() -> f64 {
    1.0
}
fn default_norm_alpha() -> f64 {
    1e-4
}
fn default_norm_beta() -> f64 {
    0.75
}
fn default_norm_window() -> usize {
    5
}

/// One entry of a network's layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    /// Stride-1 convolution with "same" zero padding; `size` must be odd.
    Conv2d {
        filters: usize,
        size: usize,
    },
    Relu,
    Maxpool2x2,
    /// Cross-channel response normalisation
    /// `b_c = a_c / (k + alpha * sum_{c' in window(c)} a_{c'}^2)^beta`.
    ResponseNorm {
        #[serde(default = "default_norm_k")]
        k: f64,
        #[serde(default = "default_norm_alpha")]
        alpha: f64,
        #[serde(default = "default_norm_beta")]
        beta: f64,
        #[serde(default = "default_norm_window")]
        window: usize,
    },
    Dropout {
        p: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn response_norm() -> Self {
        LayerSpec::ResponseNorm {
            k: default_norm_k(),
            alpha: default_norm_alpha(),
            beta: default_norm_beta(),
            window: default_norm_window(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Maxpool2x2 => "maxpool2x2",
            LayerSpec::ResponseNorm { .. } => "response_norm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(Error::config("dense layer needs at least one unit"));
                }
                Ok(vec![units])
            }
            LayerSpec::Conv2d { filters, size } => {
                if filters == 0 {
                    return Err(Error::config("conv2d filter count must be positive"));
                }
                if size == 0 || size % 2 == 0 {
                    return Err(Error::config(format!(
                        "conv2d filter size must be odd, got {size}"
                    )));
                }
                match input {
                    [_, h, w] => Ok(vec![filters, *h, *w]),
                    _ => Err(Error::config(format!(
                        "conv2d expects [channels, height, width], got {input:?}"
                    ))),
                }
            }
            LayerSpec::Maxpool2x2 => match input {
                [c, h, w] if *h >= 2 && *w >= 2 => Ok(vec![*c, h / 2, w / 2]),
                _ => Err(Error::config(format!(
                    "maxpool2x2 expects [c, h>=2, w>=2], got {input:?}"
                ))),
            },
            LayerSpec::Dropout { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::config(format!(
                        "dropout probability must lie in (0,1), got {p}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerSpec::ResponseNorm { window, k, .. } => {
                if window == 0 || k <= 0.0 {
                    return Err(Error::config("response norm needs window >= 1 and k > 0"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(Error::config(format!(
                        "softmax expects a flat input, got {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Architecture of a classifier: input shape, layers and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
    pub seed: u64,
}

impl NetworkConfig {
    /// Per-layer input shapes followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!(
                "invalid input shape {:?}",
                self.input_shape
            )));
        }
        if self.classes == 0 {
            return Err(Error::config("class count must be positive"));
        }
        match self.layers.last() {
            Some(LayerSpec::Softmax) => {}
            _ => return Err(Error::config("the final layer must be softmax")),
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Softmax) && i + 1 != self.layers.len() {
                return Err(Error::config("softmax may only appear as the final layer"));
            }
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        let out = shapes.last().unwrap();
        if out != &[self.classes] {
            return Err(Error::config(format!(
                "network produces {out:?} but {} classes were configured",
                self.classes
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    /// Same architecture re-targeted to `classes` outputs: the last dense
    /// layer's width follows the class count.
    pub fn with_classes(&self, classes: usize) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.classes = classes;
        let last_dense = cfg
            .layers
            .iter_mut()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Dense { units } => Some(units),
                _ => None,
            })
            .ok_or_else(|| Error::config("network has no dense layer to re-target"))?;
        *last_dense = classes;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    fn conv_stack(input_shape: Vec<usize>, classes: usize, seed: u64) -> Self {
        let mut layers = Vec::new();
        for filters in [32, 32, 64] {
            layers.push(LayerSpec::Conv2d { filters, size: 5 });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::response_norm());
            layers.push(LayerSpec::Maxpool2x2);
        }
        layers.push(LayerSpec::Dropout { p: 0.5 });
        layers.push(LayerSpec::Dense { units: classes });
        layers.push(LayerSpec::Softmax);
        Self {
            input_shape,
            layers,
            classes,
            seed,
        }
    }

    /// Three conv blocks (32, 32, 64 filters of 5x5, each followed by ReLU,
    /// response normalisation and 2x2 max pooling), dropout 0.5 and one
    /// fully connected layer, for 28x28 grayscale digits.
    pub fn mnist_conv(seed: u64) -> Self {
        Self::conv_stack(vec![1, 28, 28], 10, seed)
    }

    /// The same stack on 32x32 RGB images.
    pub fn cifar_conv(seed: u64) -> Self {
        Self::conv_stack(vec![3, 32, 32], 10, seed)
    }

    /// Laptop-sized network. Image inputs `[c, h, w]` with `h, w >= 2` get
    /// one 16-filter 3x3 convolution block with max pooling; anything else a
    /// 64-unit hidden dense layer. Both end in dropout, dense and softmax.
    pub fn desk(input_shape: Vec<usize>, classes: usize, seed: u64) -> Self {
        let image = input_shape.len() == 3 && input_shape[1] >= 2 && input_shape[2] >= 2;
        let mut layers = if image {
            vec![
                LayerSpec::Conv2d {
                    filters: 16,
                    size: 3,
                },
                LayerSpec::Relu,
                LayerSpec::Maxpool2x2,
            ]
        } else {
            vec![LayerSpec::Dense { units: 64 }, LayerSpec::Relu]
        };
        layers.extend([
            LayerSpec::Dropout { p: 0.5 },
            LayerSpec::Dense { units: classes },
            LayerSpec::Softmax,
        ]);
        Self {
            input_shape,
            layers,
            classes,
            seed,
        }
    }
}

/// SGD hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs at whose start the learning rate is divided by `decay_factor`.
    #[serde(default)]
    pub decay_epochs: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_decay_factor() -> f64 {
    10.0
}

impl TrainConfig {
    /// 150 epochs, batch 128, lr 0.1, momentum 0.9, /10 at epochs 50 and 100.
    pub fn mnist_schedule(seed: u64) -> Self {
        Self {
            epochs: 150,
            batch_size: 128,
            learning_rate: 0.1,
            momentum: 0.9,
            decay_epochs: vec![50, 100],
            decay_factor: 10.0,
            seed,
        }
    }

    /// 150 epochs, batch 128, lr 0.01, momentum 0.9, /10 at epochs 120 and 130.
    pub fn cifar_schedule(seed: u64) -> Self {
        Self {
            learning_rate: 0.01,
            decay_epochs: vec![120, 130],
            ..Self::mnist_schedule(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(
                "learning rate must be > 0 and momentum in [0,1)",
            ));
        }
        if !(self.decay_factor > 0.0) {
            return Err(Error::config("decay factor must be positive"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("decay epochs must be strictly increasing"));
        }
        if self.decay_epochs.last().is_some_and(|&e| e >= self.epochs) {
            return Err(Error::config(
                "decay epochs must be smaller than the epoch count",
            ));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate / self.decay_factor.powi(decays as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_schedule_reaches_one_thousandth() {
        let cfg = TrainConfig::mnist_schedule(0);
        cfg.validate().unwrap();
        assert_eq!(cfg.learning_rate_at(0), 0.1);
        assert!((cfg.learning_rate_at(49) - 0.1).abs() < 1e-15);
        assert!((cfg.learning_rate_at(50) - 0.01).abs() < 1e-15);
        assert!((cfg.learning_rate_at(120) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn decay_epochs_must_increase_and_fit() {
        let mut cfg = TrainConfig::mnist_schedule(0);
        cfg.decay_epochs = vec![100, 50];
        assert!(cfg.validate().is_err());
        cfg.decay_epochs = vec![50, 150];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn conv_presets_have_valid_shapes() {
        let shapes = NetworkConfig::mnist_conv(1).shapes().unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![10]);
        assert!(shapes.contains(&vec![64, 3, 3]));
        NetworkConfig::cifar_conv(1).validate().unwrap();
    }

    #[test]
    fn final_layer_must_be_softmax_with_k_outputs() {
        let mut cfg = NetworkConfig::desk(vec![4], 3, 0);
        cfg.layers.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::desk(vec![4], 3, 0);
        cfg.classes = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn desk_preset_follows_input_rank() {
        let img = NetworkConfig::desk(vec![1, 8, 8], 4, 0);
        assert_eq!(
            img.layers[0],
            LayerSpec::Conv2d {
                filters: 16,
                size: 3
            }
        );
        assert_eq!(img.shapes().unwrap()[3], vec![16, 4, 4]);
        let flat = NetworkConfig::desk(vec![10], 4, 0);
        assert_eq!(flat.layers[0], LayerSpec::Dense { units: 64 });
    }

    #[test]
    fn dropout_probability_bounds() {
        assert!(LayerSpec::Dropout { p: 0.0 }.output_shape(&[3]).is_err());
        assert!(LayerSpec::Dropout { p: 1.0 }.output_shape(&[3]).is_err());
        assert!(LayerSpec::Dropout { p: 0.5 }.output_shape(&[3]).is_ok());
    }

    #[test]
    fn retargeting_changes_last_dense_width() {
        let cfg = NetworkConfig::desk(vec![16], 4, 0).with_classes(2).unwrap();
        assert_eq!(cfg.classes, 2);
        assert_eq!(cfg.layers[3], LayerSpec::Dense { units: 2 });
        assert_eq!(cfg.layers[0], LayerSpec::Dense { units: 64 });
    }

    #[test]
    fn layer_spec_json_shape() {
        let json = serde_json::to_string(&LayerSpec::Conv2d {
            filters: 32,
            size: 5,
        })
        .unwrap();
        assert_eq!(json, r#"{"kind":"conv2d","filters":32,"size":5}"#);
        let norm: LayerSpec = serde_json::from_str(r#"{"kind":"response_norm"}"#).unwrap();
        assert_eq!(norm, LayerSpec::response_norm());
    }
}
