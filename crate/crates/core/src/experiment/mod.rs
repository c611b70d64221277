//! Configuration and the resumable end-to-end run: GA network, adversary
//! generation, baselines, specialists+1 ensemble, evaluation and reports.
//!
//! Output directory layout:
//!
//! ```text
//! stages.json                 stage keys and output hashes
//! models/{ga,naive,pure_i}.json and *_train.csv
//! adversaries/{fgs,deepfool,boxmin}/{manifest.json,tensors.bin}
//! ensemble/{confusion.csv,confusion.json,spec.json,member_j.json}
//! logs/<framework>_<set>.csv  per-sample decisions
//! reports/{errors,density,rejection}_<framework>.{csv,svg}, ea_<attack>.svg
//! summary.json, manifest.json
//! ```

mod artifacts;
mod config;
mod pipeline;

pub use artifacts::{sha256_bytes, sha256_file, StageLedger, StageRecord, LEDGER_FILE};
pub use config::{DatasetSource, ExperimentConfig, NetworkChoice, Seeds};
pub use pipeline::{
    run_pipeline, AdversarySummary, AttackSummary, FrameworkSummary, ModelSeeds, Pipeline,
    RunManifest, Stage, StageStatus, Summary, SUMMARY_TAU,
};
