//! Minimal deterministic neural-network engine.

mod config;
mod layers;
mod network;
mod persist;
mod train;

pub use config::{LayerSpec, NetworkConfig, TrainConfig};
pub use network::{softmax, Mode, Network, Params, PROB_FLOOR};
pub use persist::{LayerRecord, ModelDocument, FORMAT_VERSION};
pub use train::{EpochStats, TrainLog};
