//! Confidence-based rejection of adversarial examples with a specialists+1 ensemble.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a small deterministic neural-network engine (dense/conv layers,
//!   SGD with momentum, input gradients).
//! - [`attacks`]: FGS, DeepFool and box-constrained minimum-perturbation
//!   adversaries plus the RMS distortion measure.
//! - [`ensemble`]: adversarial confusion matrices, class-subset derivation,
//!   specialist training and the voting mechanism.
//! - [`eval`]: thresholded rejection, clean/adversarial error rates, sweeps,
//!   confidence densities and rejection curves.
//! - [`data`] and [`experiment`]: IDX / synthetic datasets and the resumable
//!   end-to-end pipeline.

pub mod attacks;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use attacks::{AdversarialExample, AdversarySet, AttackConfig, AttackKind};
pub use data::{Dataset, Sample};
pub use ensemble::{
    ClassSubset, ConfusionMatrix, EnsembleSpec, PureEnsemble, SpecialistsEnsemble, VoteResult,
};
pub use error::{Error, Result};
pub use eval::{Decision, Verdict};
pub use nn::{LayerSpec, Network, NetworkConfig, TrainConfig};
pub use tensor::Tensor;

/// Anything that maps an input to a probability vector over `K` classes.
///
/// Implemented by single networks and by both ensemble flavours so the
/// evaluation code can treat every framework uniformly.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;

    fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>>;
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::argmax;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, -1.0, 3.0]), 2);
    }
}
