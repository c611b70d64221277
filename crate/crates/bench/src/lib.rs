//! Shared fixtures for the criterion benchmarks.

use rejectnet_core::data::{make_synthetic, SyntheticSpec};
use rejectnet_core::ensemble::{derive_subsets, ConfusionMatrix, EnsembleSpec};
use rejectnet_core::{Dataset, Network, NetworkConfig, TrainConfig};

/// 8x8 four-class synthetic data.
pub fn synthetic() -> (Dataset, Dataset) {
    make_synthetic(&SyntheticSpec {
        classes: 4,
        per_class: 60,
        dim: 64,
        separation: 1.0,
        noise: 0.2,
        seed: 4,
    })
    .expect("valid synthetic spec")
}

/// The desk network briefly trained on [`synthetic`], so attacks have a
/// meaningful decision boundary to cross.
pub fn trained_desk(train: &Dataset) -> Network {
    let mut net =
        Network::new(NetworkConfig::desk(vec![1, 8, 8], 4, 1)).expect("valid desk network");
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 32,
        learning_rate: 0.05,
        momentum: 0.9,
        decay_epochs: vec![],
        decay_factor: 10.0,
        seed: 1,
    };
    net.train(train, &cfg).expect("training succeeds");
    net
}

/// Ten-class family built from a banded confusion matrix.
pub fn spec10() -> EnsembleSpec {
    let counts = (0..10)
        .map(|i| {
            (0..10)
                .map(|j| {
                    if i == j {
                        0
                    } else {
                        1 + ((i * 7 + j * 3) % 11) as u64
                    }
                })
                .collect()
        })
        .collect();
    let cm = ConfusionMatrix::from_counts(counts).expect("square counts");
    derive_subsets(&cm, 0.8).expect("non-empty rows")
}
