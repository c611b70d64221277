use log::debug;
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::config::TrainConfig;
use super::network::Network;
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean train-mode loss over the epoch's mini-batches.
    pub loss: f64,
    /// Train-mode accuracy over the epoch.
    pub accuracy: f64,
}

pub type TrainLog = Vec<EpochStats>;

impl Network {
    /// Mini-batch SGD with momentum on the mean cross-entropy.
    ///
    /// Shuffling and dropout masks come from the `Shuffle` and `Dropout`
    /// streams of `cfg.seed`, so equal seeds reproduce the exact parameter
    /// trajectory.
    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if data.classes() != self.classes() {
            return Err(Error::config(format!(
                "dataset has {} classes, network {}",
                data.classes(),
                self.classes()
            )));
        }
        if let Some(s) = data.samples().first() {
            s.image.check_shape(self.input_shape())?;
        }

        let mut shuffle = rng::stream(cfg.seed, Stream::Shuffle);
        let mut dropout = rng::stream(cfg.seed, Stream::Dropout);
        let mut velocity = self.zero_grads();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut log = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            let lr = cfg.learning_rate_at(epoch);
            order.shuffle(&mut shuffle);
            let mut loss_sum = 0.0;
            let mut correct = 0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<Sample> = chunk.iter().map(|&i| data.samples()[i].clone()).collect();
                let seeds: Vec<u64> = chunk.iter().map(|_| dropout.random()).collect();
                let (grads, stats) = self.batch_gradients(&batch, Some(&seeds))?;
                loss_sum += stats.loss_sum;
                correct += stats.correct;

                for ((p, v), g) in self
                    .params_mut()
                    .zip(velocity.iter_mut().flatten())
                    .zip(grads.iter().flatten())
                {
                    for ((pi, vi), gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                        *vi = cfg.momentum * *vi - lr * gi;
                        *pi += *vi;
                    }
                }
            }
            let loss = loss_sum / data.len() as f64;
            if !loss.is_finite() || !self.params().iter().flatten().all(|p| p.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            let accuracy = correct as f64 / data.len() as f64;
            debug!("epoch {epoch}: lr {lr:.5} loss {loss:.5} acc {accuracy:.4}");
            log.push(EpochStats {
                epoch,
                learning_rate: lr,
                loss,
                accuracy,
            });
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NetworkConfig};
    use crate::tensor::Tensor;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = rng::stream(seed, Stream::Data);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let samples = (0..n)
            .map(|i| {
                let label = i % 2;
                let c = if label == 0 { 0.25 } else { 0.75 };
                let image =
                    Tensor::vector(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
                Sample { image, label }
            })
            .collect();
        Dataset::new(samples, 2).unwrap()
    }

    fn linear(seed: u64) -> NetworkConfig {
        NetworkConfig {
            input_shape: vec![2],
            layers: vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
            classes: 2,
            seed,
        }
    }

    fn sgd(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: 0.5,
            momentum: 0.9,
            decay_epochs: vec![],
            decay_factor: 10.0,
            seed,
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(200, 1);
        let mut net = Network::new(linear(4)).unwrap();
        net.train(&data, &sgd(100, 2)).unwrap();
        assert!(net.evaluate_accuracy(&data).unwrap() >= 0.99);
    }

    #[test]
    fn equal_seeds_give_identical_trajectories() {
        let data = blobs(64, 3);
        let cfg = NetworkConfig::desk(vec![2], 2, 9);
        let mut a = Network::new(cfg.clone()).unwrap();
        let mut b = Network::new(cfg).unwrap();
        let la = a.train(&data, &sgd(5, 7)).unwrap();
        let lb = b.train(&data, &sgd(5, 7)).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn memorisation_loss_drops() {
        let data = blobs(32, 5);
        let mut net = Network::new(NetworkConfig::desk(vec![2], 2, 1)).unwrap();
        let mut cfg = sgd(51, 3);
        cfg.learning_rate = 0.05;
        let log = net.train(&data, &cfg).unwrap();
        assert!(log[50].loss < log[0].loss);
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs(32, 5);
        let mut net = Network::new(linear(1)).unwrap();
        let mut cfg = sgd(50, 3);
        cfg.learning_rate = f64::MAX;
        let r = net.train(&data, &cfg);
        assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
    }

    #[test]
    fn learning_rate_log_follows_decay() {
        let data = blobs(16, 5);
        let mut net = Network::new(linear(1)).unwrap();
        let mut cfg = sgd(4, 3);
        cfg.decay_epochs = vec![1, 3];
        let log = net.train(&data, &cfg).unwrap();
        let expected = [0.5, 0.05, 0.05, 0.005];
        for (e, want) in log.iter().zip(expected) {
            assert!((e.learning_rate - want).abs() < 1e-15);
        }
    }
}
