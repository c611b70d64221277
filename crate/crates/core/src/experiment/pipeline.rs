use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifacts::{
    hash_files, read_ledger, sha256_bytes, sha256_file, write_ledger, StageLedger, StageRecord,
};
use super::config::ExperimentConfig;
use crate::attacks::{
    correctly_classified, generate_adversary_set, load_adversary_set, save_adversary_set,
    tune_epsilon, AdversarySet, AttackKind,
};
use crate::data::{Dataset, Sample};
use crate::ensemble::{
    build_confusion_matrix, derive_subsets, load_specialists, member_seed, save_specialists,
    train_generalist_member, train_specialists, ClassSubset, ConfusionMatrix, PureEnsemble,
};
use crate::error::{Error, Result};
use crate::eval::svg::{line_chart, Series};
use crate::eval::{
    density_from_logs, rejection_rate_curve, reports_to_csv, score, sweep_logs, CleanErrorMode,
    DecisionLog,
};
use crate::nn::{Network, NetworkConfig, TrainConfig, TrainLog};
use crate::Classifier;

/// Threshold at which the summary reports its headline numbers.
pub const SUMMARY_TAU: f64 = 0.5;

const FRAMEWORKS: [&str; 3] = ["naive", "pure", "specialists"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    TrainGa,
    GenAdv,
    TrainBaselines,
    BuildEnsemble,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::TrainGa,
        Stage::GenAdv,
        Stage::TrainBaselines,
        Stage::BuildEnsemble,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrainGa => "train-ga",
            Stage::GenAdv => "gen-adv",
            Stage::TrainBaselines => "train-baselines",
            Stage::BuildEnsemble => "build-ensemble",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Stages whose artifacts this one reads.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::TrainGa | Stage::TrainBaselines | Stage::BuildEnsemble => &[],
            Stage::GenAdv => &[Stage::TrainGa],
            Stage::Evaluate => &[Stage::GenAdv, Stage::TrainBaselines, Stage::BuildEnsemble],
            Stage::Report => &[
                Stage::TrainGa,
                Stage::GenAdv,
                Stage::TrainBaselines,
                Stage::BuildEnsemble,
                Stage::Evaluate,
            ],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    /// Key and output hashes matched a previous run.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub kind: AttackKind,
    pub epsilon: Option<f64>,
    pub attempted: usize,
    /// Examples that fool the GA network; these form the transfer set.
    pub fooling: usize,
    pub fool_rate: f64,
    pub success_rate: f64,
    pub mean_distortion: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySummary {
    pub set: String,
    pub count: usize,
    pub ea_tau0: f64,
    pub ea_tau: f64,
    pub rejection_tau: f64,
    /// Fraction of misclassified adversaries with confidence below `tau`.
    pub misclassified_below_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkSummary {
    pub name: String,
    pub clean_error: f64,
    pub ed_capped_tau0: f64,
    pub ed_capped_tau: f64,
    pub ed_literal_tau: f64,
    pub clean_rejection_tau: f64,
    pub adversaries: Vec<AdversarySummary>,
}

impl FrameworkSummary {
    pub fn adversary(&self, set: &str) -> Option<&AdversarySummary> {
        self.adversaries.iter().find(|a| a.set == set)
    }
}

/// Headline numbers of a finished run (`summary.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tau: f64,
    pub classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub ga_test_accuracy: f64,
    pub confusion_epsilon: f64,
    pub ensemble_members: usize,
    pub attacks: Vec<AttackSummary>,
    pub frameworks: Vec<FrameworkSummary>,
}

impl Summary {
    pub fn framework(&self, name: &str) -> Option<&FrameworkSummary> {
        self.frameworks.iter().find(|f| f.name == name)
    }

    pub fn attack(&self, kind: AttackKind) -> Option<&AttackSummary> {
        self.attacks.iter().find(|a| a.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSeeds {
    pub ga: u64,
    pub naive: u64,
    pub pure: Vec<u64>,
    /// Seed of each specialists+1 member, in subset order.
    pub specialists: Vec<u64>,
    pub confusion: u64,
}

/// `manifest.json`: everything needed to reload the models and recompute
/// the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub network: NetworkConfig,
    pub seeds: ModelSeeds,
    pub fgs_epsilon: Option<f64>,
    pub confusion_epsilon: f64,
    pub subsets: Vec<ClassSubset>,
    pub expected_votes: Vec<usize>,
    /// Framework or network name to model file(s).
    pub models: BTreeMap<String, Vec<String>>,
    pub stage_keys: BTreeMap<String, String>,
    /// SHA-256 of every artifact, by relative path.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfusionRecord {
    epsilon: f64,
    counts: Vec<Vec<u64>>,
}

/// Resumable stage runner over one output directory.
pub struct Pipeline {
    cfg: ExperimentConfig,
    root: PathBuf,
    force: bool,
    train: Dataset,
    test: Dataset,
    net_cfg: NetworkConfig,
}

fn write(root: &Path, rel: &str, contents: impl AsRef<[u8]>) -> Result<String> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(rel.to_string())
}

fn train_log_csv(log: &TrainLog) -> String {
    let mut out = String::from("epoch,learning_rate,loss,accuracy\n");
    for e in log {
        writeln!(
            out,
            "{},{},{},{}",
            e.epoch, e.learning_rate, e.loss, e.accuracy
        )
        .unwrap();
    }
    out
}

fn adversary_dir(kind: AttackKind) -> String {
    format!("adversaries/{}", kind.name())
}

fn log_path(framework: &str, set: &str) -> String {
    format!("logs/{framework}_{set}.csv")
}

/// Adversaries that fooled the source network, labelled with their true class.
fn transfer_set(set: &AdversarySet, classes: usize) -> Result<Dataset> {
    let samples = set
        .fooling()
        .map(|e| Sample {
            image: e.perturbed.clone(),
            label: e.true_label,
        })
        .collect();
    Dataset::new(samples, classes)
}

impl Pipeline {
    /// Loads the data and resolves the network. `out` overrides the
    /// configured output directory.
    pub fn new(cfg: ExperimentConfig, out: Option<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let root = out.unwrap_or_else(|| cfg.output_dir.clone());
        let (train, test) = cfg.datasets()?;
        let shape = train
            .image_shape()
            .ok_or(Error::Empty("training set"))?
            .to_vec();
        let net_cfg = cfg.network.resolve(&shape, train.classes())?;
        Ok(Self {
            cfg,
            root,
            force: false,
            train,
            test,
            net_cfg,
        })
    }

    /// Rerun stages even when their artifacts are current.
    pub fn with_force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Every stage up to and including `last`, in order.
    pub fn run_through(&self, last: Stage) -> Result<Vec<(Stage, StageStatus)>> {
        Stage::ALL
            .into_iter()
            .take_while(|&s| s <= last)
            .map(|s| Ok((s, self.run_stage(s)?)))
            .collect()
    }

    pub fn run_all(&self) -> Result<Vec<(Stage, StageStatus)>> {
        self.run_through(Stage::Report)
    }

    /// Runs one stage unless its artifacts are current. Failures are
    /// wrapped in [`Error::Stage`]; files written before the failure stay.
    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus> {
        self.run_stage_inner(stage).map_err(|e| Error::Stage {
            stage: stage.name(),
            source: Box::new(e),
        })
    }

    fn run_stage_inner(&self, stage: Stage) -> Result<StageStatus> {
        let mut ledger = read_ledger(&self.root)?;
        let key = self.stage_key(stage, &ledger)?;
        if !self.force {
            if let Some(rec) = ledger.get(stage.name()) {
                if rec.key == key && rec.outputs_intact(&self.root) {
                    info!("{stage}: up to date, skipping");
                    return Ok(StageStatus::Skipped);
                }
            }
        }
        if ledger.remove(stage.name()).is_some() {
            write_ledger(&self.root, &ledger)?;
        }
        info!("{stage}: running");
        let outputs = match stage {
            Stage::TrainGa => self.train_ga()?,
            Stage::GenAdv => self.gen_adv()?,
            Stage::TrainBaselines => self.train_baselines()?,
            Stage::BuildEnsemble => self.build_ensemble()?,
            Stage::Evaluate => self.evaluate()?,
            Stage::Report => self.report(&ledger, &key)?,
        };
        ledger.insert(
            stage.name().to_string(),
            StageRecord {
                key,
                outputs: hash_files(&self.root, &outputs)?,
            },
        );
        write_ledger(&self.root, &ledger)?;
        Ok(StageStatus::Ran)
    }

    /// Hash of the config slice a stage depends on plus the current hashes
    /// of its prerequisites' outputs.
    fn stage_key(&self, stage: Stage, ledger: &StageLedger) -> Result<String> {
        let c = &self.cfg;
        let section = match stage {
            Stage::TrainGa => {
                json!({"dataset": c.dataset, "network": self.net_cfg, "train": c.train, "seed": c.seeds.ga})
            }
            Stage::GenAdv => {
                json!({"dataset": c.dataset, "attacks": c.attacks, "attack_limit": c.attack_limit})
            }
            Stage::TrainBaselines => json!({
                "dataset": c.dataset, "network": self.net_cfg, "train": c.train,
                "naive": c.seeds.naive, "pure": c.seeds.pure,
            }),
            Stage::BuildEnsemble => json!({
                "dataset": c.dataset, "network": self.net_cfg, "train": c.specialist_train(),
                "attacks": c.attacks, "coverage": c.coverage, "per_class": c.confusion_per_class,
                "base": c.seeds.specialist_base, "confusion": c.seeds.confusion,
            }),
            Stage::Evaluate => {
                json!({"dataset": c.dataset, "tau_grid": c.tau_grid, "bins": c.density_bins})
            }
            Stage::Report => json!({"config": c, "tau": SUMMARY_TAU}),
        };
        let mut inputs = BTreeMap::new();
        for pre in stage.prerequisites() {
            let rec = ledger.get(pre.name()).ok_or_else(|| {
                Error::config(format!("stage {pre} has not completed; run it first"))
            })?;
            let files: Vec<String> = rec.outputs.keys().cloned().collect();
            let hashes = hash_files(&self.root, &files).map_err(|e| {
                Error::config(format!(
                    "artifacts of stage {pre} are unreadable ({e}); rerun it"
                ))
            })?;
            inputs.insert(pre.name(), hashes);
        }
        let doc = json!({"stage": stage.name(), "version": 1, "config": section, "inputs": inputs});
        Ok(sha256_bytes(serde_json::to_string(&doc)?.as_bytes()))
    }

    fn train_generalist(&self, seed: u64) -> Result<(Network, TrainLog)> {
        let mut net = Network::new(self.net_cfg.with_seed(seed))?;
        let log = net.train(
            &self.train,
            &TrainConfig {
                seed,
                ..self.cfg.train.clone()
            },
        )?;
        Ok((net, log))
    }

    fn save_model(&self, name: &str, net: &Network, log: &TrainLog) -> Result<Vec<String>> {
        Ok(vec![
            write(&self.root, &format!("models/{name}.json"), net.to_json()?)?,
            write(
                &self.root,
                &format!("models/{name}_train.csv"),
                train_log_csv(log),
            )?,
        ])
    }

    fn load_model(&self, name: &str) -> Result<Network> {
        Network::load(&self.root.join(format!("models/{name}.json")))
    }

    fn train_ga(&self) -> Result<Vec<String>> {
        let (net, log) = self.train_generalist(self.cfg.seeds.ga)?;
        info!(
            "GA network test accuracy {:.4}",
            net.evaluate_accuracy(&self.test)?
        );
        self.save_model("ga", &net, &log)
    }

    fn gen_adv(&self) -> Result<Vec<String>> {
        let ga = self.load_model("ga")?;
        let ga_hash = sha256_file(&self.root.join("models/ga.json"))?;
        let test = match self.cfg.attack_limit {
            Some(n) => self.test.take(n),
            None => self.test.clone(),
        };
        let mut outputs = Vec::new();
        for kind in AttackKind::ALL {
            let set = generate_adversary_set(&ga, &test, kind, &self.cfg.attacks)?;
            info!(
                "{kind}: {} examples, fool rate {:.4}, mean distortion {:.4}",
                set.len(),
                set.fool_rate(),
                set.mean_distortion()
            );
            let dir = adversary_dir(kind);
            let manifest =
                save_adversary_set(&self.root.join(&dir), &set, &self.cfg.attacks, &ga_hash)?;
            outputs.push(format!("{dir}/manifest.json"));
            outputs.push(format!("{dir}/{}", manifest.tensor_file));
        }
        Ok(outputs)
    }

    fn baseline_seeds(&self) -> Vec<(String, u64)> {
        let s = &self.cfg.seeds;
        std::iter::once(("naive".to_string(), s.naive))
            .chain(
                s.pure
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (format!("pure_{i}"), p)),
            )
            .collect()
    }

    fn train_baselines(&self) -> Result<Vec<String>> {
        let trained = self
            .baseline_seeds()
            .into_par_iter()
            .map(|(name, seed)| {
                let (net, log) = self.train_generalist(seed)?;
                info!(
                    "{name}: test accuracy {:.4}",
                    net.evaluate_accuracy(&self.test)?
                );
                Ok((name, net, log))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut outputs = Vec::new();
        for (name, net, log) in &trained {
            outputs.extend(self.save_model(name, net, log)?);
        }
        Ok(outputs)
    }

    fn build_ensemble(&self) -> Result<Vec<String>> {
        let train_cfg = self.cfg.specialist_train();
        let base = self.cfg.seeds.specialist_base;
        let generalist = train_generalist_member(&self.train, &self.net_cfg, train_cfg, base)?;
        let source = &generalist.net;
        let attacks = &self.cfg.attacks;
        let epsilon = match attacks.fgs_epsilon {
            Some(e) => e,
            None => {
                let eligible = correctly_classified(source, &self.train)?;
                tune_epsilon(
                    source,
                    &eligible,
                    attacks.target_fool_rate,
                    &attacks.fgs_grid,
                )?
                .epsilon
            }
        };
        let cm = build_confusion_matrix(
            source,
            &self.train,
            self.cfg.confusion_per_class,
            epsilon,
            self.cfg.seeds.confusion,
        )?;
        let spec = derive_subsets(&cm, self.cfg.coverage)?;
        let k = cm.classes();
        if spec.len() < 2 * k + 1 {
            warn!(
                "{} duplicate subsets dropped; ensemble has {} members",
                2 * k + 1 - spec.len(),
                spec.len()
            );
        }
        for s in spec.subsets() {
            info!("subset {:?}: {:?}", s.origin, s.classes);
        }
        let ens = train_specialists(
            &spec,
            &self.train,
            &self.net_cfg,
            train_cfg,
            base,
            Some(&generalist),
        )?;
        info!(
            "specialists+1 test accuracy {:.4}",
            accuracy(&ens, &self.test)?
        );
        save_specialists(&ens, &self.root.join("ensemble"))?;

        let record = ConfusionRecord {
            epsilon,
            counts: cm.counts().to_vec(),
        };
        let mut outputs = vec![
            write(&self.root, "ensemble/confusion.csv", cm.to_csv())?,
            write(
                &self.root,
                "ensemble/confusion.json",
                serde_json::to_string_pretty(&record)? + "\n",
            )?,
            "ensemble/spec.json".to_string(),
        ];
        outputs.extend((0..spec.len()).map(|j| format!("ensemble/member_{j}.json")));
        Ok(outputs)
    }

    fn frameworks(&self) -> Result<Vec<(&'static str, Box<dyn Classifier>)>> {
        let naive = self.load_model("naive")?;
        let pure = (0..self.cfg.seeds.pure.len())
            .map(|i| self.load_model(&format!("pure_{i}")))
            .collect::<Result<Vec<_>>>()?;
        let specialists = load_specialists(&self.root.join("ensemble"))?;
        Ok(vec![
            (FRAMEWORKS[0], Box::new(naive)),
            (FRAMEWORKS[1], Box::new(PureEnsemble::new(pure)?)),
            (FRAMEWORKS[2], Box::new(specialists)),
        ])
    }

    /// Non-empty transfer sets, in attack order.
    fn transfer_sets(&self) -> Result<Vec<(String, Dataset)>> {
        let mut out = Vec::new();
        for kind in AttackKind::ALL {
            let (set, _) = load_adversary_set(&self.root.join(adversary_dir(kind)))?;
            let data = transfer_set(&set, self.train.classes())?;
            if data.is_empty() {
                warn!("{kind}: no adversary fooled the GA network; set left out of the evaluation");
                continue;
            }
            out.push((kind.name().to_string(), data));
        }
        Ok(out)
    }

    fn evaluate(&self) -> Result<Vec<String>> {
        let sets = self.transfer_sets()?;
        let grid = &self.cfg.tau_grid;
        let mut outputs = Vec::new();
        for (fw, model) in self.frameworks()? {
            let clean = score(model.as_ref(), &self.test)?;
            outputs.push(write(&self.root, &log_path(fw, "clean"), clean.to_csv())?);
            let mut adv = Vec::new();
            for (name, data) in &sets {
                let log = score(model.as_ref(), data)?;
                outputs.push(write(&self.root, &log_path(fw, name), log.to_csv())?);
                adv.push((name.clone(), log));
            }
            let reports = sweep_logs(fw, &clean, &adv, grid)?;
            outputs.push(write(
                &self.root,
                &format!("reports/errors_{fw}.csv"),
                reports_to_csv(&reports)?,
            )?);
            let density = density_from_logs(&clean, &adv, self.cfg.density_bins)?;
            outputs.push(write(
                &self.root,
                &format!("reports/density_{fw}.csv"),
                density.to_csv(),
            )?);
            outputs.push(write(
                &self.root,
                &format!("reports/rejection_{fw}.csv"),
                rejection_csv(&clean, &adv, grid)?,
            )?);
            info!(
                "{fw}: clean error {:.4}, E_D(capped, {SUMMARY_TAU}) {:.4}",
                clean.error_rate()?,
                clean.error_clean(SUMMARY_TAU, CleanErrorMode::Capped)?
            );
        }
        Ok(outputs)
    }

    fn read_log(&self, framework: &str, set: &str) -> Result<Option<DecisionLog>> {
        let path = self.root.join(log_path(framework, set));
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(DecisionLog::from_csv(&fs::read_to_string(path)?)?))
    }

    fn report(&self, ledger: &StageLedger, own_key: &str) -> Result<Vec<String>> {
        let ga = self.load_model("ga")?;
        let confusion: ConfusionRecord = serde_json::from_str(&fs::read_to_string(
            self.root.join("ensemble/confusion.json"),
        )?)?;
        let specialists = load_specialists(&self.root.join("ensemble"))?;

        let mut attacks = Vec::new();
        for kind in AttackKind::ALL {
            let (set, _) = load_adversary_set(&self.root.join(adversary_dir(kind)))?;
            attacks.push(AttackSummary {
                kind,
                epsilon: set.epsilon,
                attempted: set.len(),
                fooling: set.fooling().count(),
                fool_rate: set.fool_rate(),
                success_rate: set.success_rate(),
                mean_distortion: set.mean_distortion(),
                mean_iterations: set.mean_iterations(),
            });
        }

        let grid = &self.cfg.tau_grid;
        let mut outputs = Vec::new();
        let mut frameworks = Vec::new();
        let mut per_attack: BTreeMap<String, Vec<(String, Vec<(f64, f64)>)>> = BTreeMap::new();
        for fw in FRAMEWORKS {
            let clean = self
                .read_log(fw, "clean")?
                .ok_or_else(|| Error::config(format!("missing clean log for {fw}")))?;
            let mut adversaries = Vec::new();
            let mut chart = vec![(
                "E_D (capped)".to_string(),
                grid.iter()
                    .map(|&t| Ok((t, clean.error_clean(t, CleanErrorMode::Capped)?)))
                    .collect::<Result<Vec<_>>>()?,
            )];
            let mut adv_logs = Vec::new();
            for kind in AttackKind::ALL {
                let Some(log) = self.read_log(fw, kind.name())? else {
                    continue;
                };
                let curve = grid
                    .iter()
                    .map(|&t| Ok((t, log.error_adv(t)?)))
                    .collect::<Result<Vec<_>>>()?;
                chart.push((format!("E_A {}", kind.name()), curve.clone()));
                per_attack
                    .entry(kind.name().to_string())
                    .or_default()
                    .push((fw.to_string(), curve));
                adversaries.push(adversary_summary(kind.name(), &log)?);
                adv_logs.push((kind.name().to_string(), log));
            }
            let series: Vec<Series> = chart
                .iter()
                .map(|(n, p)| Series {
                    name: n,
                    points: p.clone(),
                })
                .collect();
            outputs.push(write(
                &self.root,
                &format!("reports/errors_{fw}.svg"),
                line_chart(
                    &format!("{fw}: error vs threshold"),
                    "tau",
                    "error",
                    &series,
                ),
            )?);

            let density = density_from_logs(&clean, &adv_logs, self.cfg.density_bins)?;
            let centres: Vec<f64> = density
                .edges
                .windows(2)
                .map(|e| (e[0] + e[1]) / 2.0)
                .collect();
            let series: Vec<Series> = density
                .series
                .iter()
                .filter(|s| s.count > 0)
                .map(|s| Series {
                    name: &s.name,
                    points: centres
                        .iter()
                        .copied()
                        .zip(s.density.iter().copied())
                        .collect(),
                })
                .collect();
            outputs.push(write(
                &self.root,
                &format!("reports/density_{fw}.svg"),
                line_chart(
                    &format!("{fw}: confidence density"),
                    "confidence",
                    "fraction",
                    &series,
                ),
            )?);

            let mut rejection = vec![("clean".to_string(), rejection_rate_curve(&clean, grid)?)];
            for (name, log) in &adv_logs {
                rejection.push((name.clone(), rejection_rate_curve(log, grid)?));
            }
            let series: Vec<Series> = rejection
                .iter()
                .map(|(n, p)| Series {
                    name: n,
                    points: p.clone(),
                })
                .collect();
            outputs.push(write(
                &self.root,
                &format!("reports/rejection_{fw}.svg"),
                line_chart(&format!("{fw}: rejection rate"), "tau", "rejected", &series),
            )?);

            frameworks.push(FrameworkSummary {
                name: fw.to_string(),
                clean_error: clean.error_rate()?,
                ed_capped_tau0: clean.error_clean(0.0, CleanErrorMode::Capped)?,
                ed_capped_tau: clean.error_clean(SUMMARY_TAU, CleanErrorMode::Capped)?,
                ed_literal_tau: clean.error_clean(SUMMARY_TAU, CleanErrorMode::Literal)?,
                clean_rejection_tau: clean.rejection_rate(SUMMARY_TAU)?,
                adversaries,
            });
        }
        for (kind, curves) in &per_attack {
            let series: Vec<Series> = curves
                .iter()
                .map(|(n, p)| Series {
                    name: n,
                    points: p.clone(),
                })
                .collect();
            outputs.push(write(
                &self.root,
                &format!("reports/ea_{kind}.svg"),
                line_chart(&format!("E_A on {kind} adversaries"), "tau", "E_A", &series),
            )?);
        }

        let summary = Summary {
            tau: SUMMARY_TAU,
            classes: self.train.classes(),
            train_samples: self.train.len(),
            test_samples: self.test.len(),
            ga_test_accuracy: ga.evaluate_accuracy(&self.test)?,
            confusion_epsilon: confusion.epsilon,
            ensemble_members: specialists.members().len(),
            attacks,
            frameworks,
        };
        outputs.push(write(
            &self.root,
            "summary.json",
            serde_json::to_string_pretty(&summary)? + "\n",
        )?);

        let mut files = BTreeMap::new();
        for rec in ledger.values() {
            files.extend(rec.outputs.clone());
        }
        files.extend(hash_files(&self.root, &outputs)?);
        let mut stage_keys: BTreeMap<String, String> = ledger
            .iter()
            .map(|(name, rec)| (name.clone(), rec.key.clone()))
            .collect();
        stage_keys.insert(Stage::Report.name().to_string(), own_key.to_string());
        let seeds = &self.cfg.seeds;
        let mut models = BTreeMap::new();
        models.insert("ga".to_string(), vec!["models/ga.json".to_string()]);
        models.insert("naive".to_string(), vec!["models/naive.json".to_string()]);
        models.insert(
            "pure".to_string(),
            (0..seeds.pure.len())
                .map(|i| format!("models/pure_{i}.json"))
                .collect(),
        );
        models.insert(
            "specialists".to_string(),
            std::iter::once("ensemble/spec.json".to_string())
                .chain(
                    (0..specialists.members().len()).map(|j| format!("ensemble/member_{j}.json")),
                )
                .collect(),
        );
        let manifest = RunManifest {
            format_version: 1,
            config: self.cfg.clone(),
            network: self.net_cfg.clone(),
            seeds: ModelSeeds {
                ga: seeds.ga,
                naive: seeds.naive,
                pure: seeds.pure.clone(),
                specialists: specialists
                    .spec()
                    .subsets()
                    .iter()
                    .map(|s| member_seed(s, specialists.spec().classes(), seeds.specialist_base))
                    .collect(),
                confusion: seeds.confusion,
            },
            fgs_epsilon: summary.attack(AttackKind::Fgs).and_then(|a| a.epsilon),
            confusion_epsilon: confusion.epsilon,
            subsets: specialists.spec().subsets().to_vec(),
            expected_votes: specialists.spec().expected_votes().to_vec(),
            models,
            stage_keys,
            files,
        };
        outputs.push(write(
            &self.root,
            "manifest.json",
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?);
        Ok(outputs)
    }

    /// Reads `summary.json` of a finished run.
    pub fn summary(&self) -> Result<Summary> {
        Ok(serde_json::from_str(&fs::read_to_string(
            self.root.join("summary.json"),
        )?)?)
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        Ok(serde_json::from_str(&fs::read_to_string(
            self.root.join("manifest.json"),
        )?)?)
    }

    pub fn confusion_matrix(&self) -> Result<ConfusionMatrix> {
        let rec: ConfusionRecord = serde_json::from_str(&fs::read_to_string(
            self.root.join("ensemble/confusion.json"),
        )?)?;
        ConfusionMatrix::from_counts(rec.counts)
    }

    pub fn datasets(&self) -> (&Dataset, &Dataset) {
        (&self.train, &self.test)
    }
}

fn accuracy(framework: &dyn Classifier, data: &Dataset) -> Result<f64> {
    Ok(1.0 - score(framework, data)?.error_rate()?)
}

fn adversary_summary(set: &str, log: &DecisionLog) -> Result<AdversarySummary> {
    let wrong: Vec<f64> = log
        .entries
        .iter()
        .filter(|e| e.argmax != e.label)
        .map(|e| e.confidence)
        .collect();
    let below = if wrong.is_empty() {
        0.0
    } else {
        wrong.iter().filter(|&&c| c < SUMMARY_TAU).count() as f64 / wrong.len() as f64
    };
    Ok(AdversarySummary {
        set: set.to_string(),
        count: log.len(),
        ea_tau0: log.error_adv(0.0)?,
        ea_tau: log.error_adv(SUMMARY_TAU)?,
        rejection_tau: log.rejection_rate(SUMMARY_TAU)?,
        misclassified_below_tau: below,
    })
}

/// `tau,clean,<set>...` rejection rates.
fn rejection_csv(
    clean: &DecisionLog,
    adv: &[(String, DecisionLog)],
    grid: &[f64],
) -> Result<String> {
    let mut curves = vec![rejection_rate_curve(clean, grid)?];
    let mut out = String::from("tau,clean");
    for (name, log) in adv {
        write!(out, ",{name}").unwrap();
        curves.push(rejection_rate_curve(log, grid)?);
    }
    out.push('\n');
    for (i, &tau) in grid.iter().enumerate() {
        write!(out, "{tau}").unwrap();
        for c in &curves {
            write!(out, ",{}", c[i].1).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Runs every stage of `cfg` (skipping current ones) and returns the summary.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Summary> {
    let p = Pipeline::new(cfg.clone(), None)?;
    p.run_all()?;
    p.summary()
}
