use rayon::prelude::*;

use super::config::{LayerSpec, NetworkConfig};
use super::layers::{self, Cache};
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::tensor::Tensor;
use crate::{argmax, Classifier};

/// Smallest probability any softmax output may take.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax with outputs floored at [`PROB_FLOOR`].
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter()
        .map(|e| (e / sum).max(PROB_FLOOR))
        .collect()
}

/// Whether a forward pass applies dropout.
pub enum Mode<'a> {
    Inference,
    Train(&'a mut Rng),
}

/// Per-layer parameter tensors (weights then bias; empty for parameter-free
/// layers). Used for both parameters and their gradients.
pub type Params = Vec<Vec<Tensor>>;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    spec: LayerSpec,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    params: Vec<Tensor>,
}

/// A layer stack ending in softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
}

/// Activations recorded by a forward pass.
pub(crate) struct Trace {
    inputs: Vec<Tensor>,
    caches: Vec<Cache>,
    pub(crate) logits: Vec<f64>,
}

impl Network {
    /// Builds a network with freshly initialised parameters drawn from the
    /// config seed's init stream.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let shapes = config.shapes()?;
        let mut rng = rng::stream(config.seed, Stream::Init);
        let layers = config
            .layers
            .iter()
            .enumerate()
            .map(|(i, spec)| Layer {
                spec: spec.clone(),
                in_shape: shapes[i].clone(),
                out_shape: shapes[i + 1].clone(),
                params: layers::init_params(spec, &shapes[i], &mut rng),
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// Builds a network from explicit parameters (one entry per layer).
    pub fn from_params(config: NetworkConfig, params: Params) -> Result<Self> {
        let mut net = Self::new(config)?;
        if params.len() != net.layers.len() {
            return Err(Error::ModelFormat(format!(
                "expected parameters for {} layers, got {}",
                net.layers.len(),
                params.len()
            )));
        }
        for (layer, p) in net.layers.iter_mut().zip(params) {
            if p.len() != layer.params.len() {
                return Err(Error::ModelFormat(format!(
                    "{} layer expects {} parameter tensors, got {}",
                    layer.spec.name(),
                    layer.params.len(),
                    p.len()
                )));
            }
            for (dst, src) in layer.params.iter_mut().zip(p) {
                src.check_shape(dst.shape())?;
                if !src.is_finite() {
                    return Err(Error::ModelFormat("non-finite parameter".into()));
                }
                *dst = src;
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.config.input_shape
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn params(&self) -> Params {
        self.layers.iter().map(|l| l.params.clone()).collect()
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| &l.params)
            .map(Tensor::len)
            .sum()
    }

    /// Zero tensors shaped like the parameters.
    pub fn zero_grads(&self) -> Params {
        self.layers
            .iter()
            .map(|l| l.params.iter().map(|p| Tensor::zeros(p.shape())).collect())
            .collect()
    }

    pub(crate) fn trace(&self, x: &Tensor, mode: Mode<'_>) -> Result<Trace> {
        x.check_shape(self.input_shape())?;
        let mut dropout = match mode {
            Mode::Inference => None,
            Mode::Train(rng) => Some(rng),
        };
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            if matches!(layer.spec, LayerSpec::Softmax) {
                break;
            }
            let (out, cache) = layers::forward(
                &layer.spec,
                &layer.params,
                &current,
                &layer.out_shape,
                dropout.as_deref_mut(),
            );
            inputs.push(std::mem::replace(&mut current, out));
            caches.push(cache);
        }
        Ok(Trace {
            inputs,
            caches,
            logits: current.into_data(),
        })
    }

    /// Back-propagates a gradient on the logits. Returns the input gradient
    /// and, when `params` is set, adds parameter gradients into it.
    pub(crate) fn backprop(
        &self,
        trace: &Trace,
        grad_logits: &[f64],
        mut params: Option<&mut Params>,
    ) -> Tensor {
        let mut grad = Tensor::vector(grad_logits.to_vec());
        for (i, layer) in self
            .layers
            .iter()
            .enumerate()
            .take(trace.inputs.len())
            .rev()
        {
            let pg = params.as_deref_mut().map(|p| p[i].as_mut_slice());
            grad = layers::backward(
                &layer.spec,
                &layer.params,
                &trace.inputs[i],
                &trace.caches[i],
                &grad,
                pg,
            );
        }
        grad
    }

    /// Probability vector for `x`. `Mode::Train` applies dropout masks drawn
    /// from the supplied generator (inverted dropout, so inference needs no
    /// rescaling).
    pub fn forward(&self, x: &Tensor, mode: Mode<'_>) -> Result<Vec<f64>> {
        Ok(softmax(&self.trace(x, mode)?.logits))
    }

    /// Inference-mode probabilities.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.forward(x, Mode::Inference)
    }

    /// Pre-softmax outputs in inference mode.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.trace(x, Mode::Inference)?.logits)
    }

    pub fn predict_class(&self, x: &Tensor) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes() {
            return Err(Error::InvalidLabel {
                label: y,
                classes: self.classes(),
            });
        }
        Ok(())
    }

    /// Cross-entropy `-ln h_y(x)` in inference mode.
    pub fn loss(&self, x: &Tensor, y: usize) -> Result<f64> {
        self.check_label(y)?;
        Ok(-self.predict(x)?[y].ln())
    }

    /// Gradient of the mean cross-entropy over `batch` w.r.t. every
    /// parameter, with dropout disabled.
    pub fn param_gradients(&self, batch: &[Sample]) -> Result<Params> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let (grads, _) = self.batch_gradients(batch, None)?;
        Ok(grads)
    }

    /// Mean-loss parameter gradients and summed loss/correct counts for a
    /// batch. With `dropout_seeds`, sample `i` draws its mask from a stream
    /// seeded by `dropout_seeds[i]`.
    pub(crate) fn batch_gradients(
        &self,
        batch: &[Sample],
        dropout_seeds: Option<&[u64]>,
    ) -> Result<(Params, BatchStats)> {
        for s in batch {
            self.check_label(s.label)?;
        }
        let per_sample: Vec<(Params, f64, bool)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng;
                let mode = match dropout_seeds {
                    Some(seeds) => {
                        rng = rng::stream(seeds[i], Stream::Dropout);
                        Mode::Train(&mut rng)
                    }
                    None => Mode::Inference,
                };
                let trace = self.trace(&s.image, mode)?;
                let probs = softmax(&trace.logits);
                let loss = -probs[s.label].ln();
                let correct = argmax(&trace.logits) == s.label;
                let mut grad_logits = probs;
                grad_logits[s.label] -= 1.0;
                let mut grads = self.zero_grads();
                self.backprop(&trace, &grad_logits, Some(&mut grads));
                Ok((grads, loss, correct))
            })
            .collect::<Result<_>>()?;

        let scale = 1.0 / batch.len() as f64;
        let mut total = self.zero_grads();
        let mut stats = BatchStats::default();
        for (grads, loss, correct) in per_sample {
            for (dst_layer, src_layer) in total.iter_mut().zip(grads) {
                for (dst, src) in dst_layer.iter_mut().zip(src_layer) {
                    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                        *d += s * scale;
                    }
                }
            }
            stats.loss_sum += loss;
            stats.correct += correct as usize;
        }
        Ok((total, stats))
    }

    /// Gradient of `loss(x, y)` with respect to `x`, dropout disabled.
    pub fn input_gradient(&self, x: &Tensor, y: usize) -> Result<Tensor> {
        self.check_label(y)?;
        let trace = self.trace(x, Mode::Inference)?;
        let mut grad_logits = softmax(&trace.logits);
        grad_logits[y] -= 1.0;
        Ok(self.backprop(&trace, &grad_logits, None))
    }

    /// Logits at `x` and the gradient of each logit with respect to `x`.
    pub fn logit_jacobian(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<Tensor>)> {
        let trace = self.trace(x, Mode::Inference)?;
        let k = trace.logits.len();
        let rows = (0..k)
            .map(|c| {
                let mut e = vec![0.0; k];
                e[c] = 1.0;
                self.backprop(&trace, &e, None)
            })
            .collect();
        Ok((trace.logits, rows))
    }

    /// Fraction of samples whose argmax prediction equals the label.
    pub fn evaluate_accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let correct: usize = data
            .samples()
            .par_iter()
            .map(|s| {
                self.predict_class(&s.image)
                    .map(|c| (c == s.label) as usize)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(correct as f64 / data.len() as f64)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
}

impl Classifier for Network {
    fn num_classes(&self) -> usize {
        self.classes()
    }

    fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn linear(n_in: usize, k: usize) -> NetworkConfig {
        NetworkConfig {
            input_shape: vec![n_in],
            layers: vec![LayerSpec::Dense { units: k }, LayerSpec::Softmax],
            classes: k,
            seed: 3,
        }
    }

    fn with_weights(n_in: usize, k: usize, w: Vec<f64>, b: Vec<f64>) -> Network {
        Network::from_params(
            linear(n_in, k),
            vec![
                vec![Tensor::new(vec![k, n_in], w).unwrap(), Tensor::vector(b)],
                vec![],
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let net = with_weights(3, 4, vec![0.0; 12], vec![0.0; 4]);
        let p = net.predict(&Tensor::vector(vec![0.3, -2.0, 9.0])).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_dense_softmax() {
        // logits: [1*0.5 + 2*(-1) + 0.1, 3*0.5 + 0*(-1) - 0.2] = [-1.4, 1.3]
        let net = with_weights(2, 2, vec![1.0, 2.0, 3.0, 0.0], vec![0.1, -0.2]);
        let p = net.predict(&Tensor::vector(vec![0.5, -1.0])).unwrap();
        let e0 = (-1.4f64).exp();
        let e1 = 1.3f64.exp();
        assert!((p[0] - e0 / (e0 + e1)).abs() < 1e-12);
        assert!((p[1] - e1 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn loss_values() {
        let uniform = with_weights(2, 10, vec![0.0; 20], vec![0.0; 10]);
        let l = uniform.loss(&Tensor::vector(vec![0.1, 0.2]), 3).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);

        let two = with_weights(1, 2, vec![0.0, 0.0], vec![2.0, 0.0]);
        let l = two.loss(&Tensor::vector(vec![0.0]), 0).unwrap();
        let expected = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        assert!((l - expected).abs() < 1e-12);

        let sure = with_weights(1, 2, vec![0.0, 0.0], vec![100.0, 0.0]);
        assert!(sure.loss(&Tensor::vector(vec![0.0]), 0).unwrap() < 1e-12);
        assert!(sure.loss(&Tensor::vector(vec![0.0]), 2).is_err());
    }

    #[test]
    fn floored_probabilities_keep_loss_finite() {
        let net = with_weights(1, 2, vec![0.0, 0.0], vec![1000.0, 0.0]);
        let p = net.predict(&Tensor::vector(vec![0.0])).unwrap();
        assert_eq!(p[1], PROB_FLOOR);
        let l = net.loss(&Tensor::vector(vec![0.0]), 1).unwrap();
        assert!((l - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = Network::new(linear(3, 2)).unwrap();
        assert!(matches!(
            net.predict(&Tensor::vector(vec![1.0, 2.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn linear_softmax_input_gradient_closed_form() {
        let w = vec![0.5, -1.0, 2.0, 0.3, 0.0, -0.7];
        let b = vec![0.1, 0.2];
        let net = with_weights(3, 2, w.clone(), b);
        let x = Tensor::vector(vec![0.2, 0.4, 0.9]);
        let p = net.predict(&x).unwrap();
        let g = net.input_gradient(&x, 1).unwrap();
        for j in 0..3 {
            let expected = p[0] * w[j] + (p[1] - 1.0) * w[3 + j];
            assert!((g.data()[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn unused_pixel_has_zero_gradient() {
        let net = with_weights(3, 2, vec![0.0, 1.0, -1.0, 0.0, 2.0, 0.5], vec![0.0, 0.0]);
        let g = net
            .input_gradient(&Tensor::vector(vec![0.3, 0.3, 0.3]), 0)
            .unwrap();
        assert_eq!(g.data()[0], 0.0);
        assert_ne!(g.data()[1], 0.0);
    }

    #[test]
    fn zero_input_gives_zero_weight_gradient() {
        let net = Network::new(linear(3, 3)).unwrap();
        let batch = [Sample {
            image: Tensor::vector(vec![0.0; 3]),
            label: 1,
        }];
        let g = net.param_gradients(&batch).unwrap();
        assert!(g[0][0].data().iter().all(|&v| v == 0.0));
        assert!(g[0][1].data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn duplicated_sample_matches_single() {
        let net = Network::new(NetworkConfig::desk(vec![5], 3, 11)).unwrap();
        let s = Sample {
            image: Tensor::vector(vec![0.1, 0.9, 0.4, 0.3, 0.7]),
            label: 2,
        };
        let one = net.param_gradients(std::slice::from_ref(&s)).unwrap();
        let two = net.param_gradients(&[s.clone(), s]).unwrap();
        for (a, b) in one.iter().flatten().zip(two.iter().flatten()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let net = Network::new(linear(2, 2)).unwrap();
        assert!(net.param_gradients(&[]).is_err());
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let cfg = NetworkConfig {
            input_shape: vec![1, 2, 2],
            layers: vec![
                LayerSpec::Maxpool2x2,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
            classes: 2,
            seed: 0,
        };
        let net = Network::new(cfg).unwrap();
        let x = Tensor::new(vec![1, 2, 2], vec![0.1, 0.8, 0.3, 0.2]).unwrap();
        let g = net.input_gradient(&x, 0).unwrap();
        assert_eq!(g.data()[0], 0.0);
        assert_eq!(g.data()[2], 0.0);
        assert_eq!(g.data()[3], 0.0);
        assert_ne!(g.data()[1], 0.0);
    }

    #[test]
    fn same_seed_same_weights_different_seed_different() {
        let a = Network::new(NetworkConfig::desk(vec![6], 3, 5)).unwrap();
        let b = Network::new(NetworkConfig::desk(vec![6], 3, 5)).unwrap();
        let c = Network::new(NetworkConfig::desk(vec![6], 3, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn dropout_only_in_train_mode() {
        let net = Network::new(NetworkConfig::desk(vec![6], 3, 5)).unwrap();
        let x = Tensor::vector(vec![0.5; 6]);
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a, b);
        let mut rng = rng::stream(1, Stream::Dropout);
        let t = net.forward(&x, Mode::Train(&mut rng)).unwrap();
        assert_ne!(a, t);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        use crate::data::{Dataset, Sample};
        // identity weights: class = larger coordinate
        let net = with_weights(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]);
        let s = |a: f64, b: f64, label| Sample {
            image: Tensor::vector(vec![a, b]),
            label,
        };
        let one = Dataset::new(vec![s(1.0, 0.0, 0)], 2).unwrap();
        assert_eq!(net.evaluate_accuracy(&one).unwrap(), 1.0);
        let wrong = Dataset::new(vec![s(1.0, 0.0, 1), s(0.0, 1.0, 0)], 2).unwrap();
        assert_eq!(net.evaluate_accuracy(&wrong).unwrap(), 0.0);
        let four = Dataset::new(
            vec![
                s(1.0, 0.0, 0),
                s(0.0, 1.0, 1),
                s(0.2, 0.9, 1),
                s(0.9, 0.2, 1),
            ],
            2,
        )
        .unwrap();
        assert_eq!(net.evaluate_accuracy(&four).unwrap(), 0.75);
        assert!(net
            .evaluate_accuracy(&Dataset::new(vec![], 2).unwrap())
            .is_err());
    }
}
