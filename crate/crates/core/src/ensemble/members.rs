use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use super::{vote_outputs, ClassSubset, EnsembleSpec, VoteResult};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkConfig, TrainConfig};
use crate::tensor::Tensor;
use crate::Classifier;

/// A network trained on one class subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub subset: ClassSubset,
    pub net: Network,
}

impl Member {
    /// Full `K`-vector output: the member's softmax scattered onto its
    /// subset's classes, zero elsewhere.
    pub fn output(&self, x: &Tensor, classes: usize) -> Result<Vec<f64>> {
        let local = self.net.predict(x)?;
        let mut out = vec![0.0; classes];
        for (&c, p) in self.subset.classes.iter().zip(local) {
            out[c] = p;
        }
        Ok(out)
    }
}

/// Trains a network whose softmax spans only `subset`, on the samples of
/// those classes. A single-class subset needs no training.
pub fn train_specialist(
    subset: &ClassSubset,
    data: &Dataset,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<Member> {
    if subset.is_empty() {
        return Err(Error::config("empty class subset"));
    }
    let local = data.restrict_to(&subset.classes)?;
    let mut net = Network::new(net_cfg.with_classes(subset.len())?)?;
    if subset.len() > 1 {
        net.train(&local, train_cfg)?;
    }
    Ok(Member {
        subset: subset.clone(),
        net,
    })
}

/// Specialists+1 ensemble: one member per subset plus the voting rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialistsEnsemble {
    spec: EnsembleSpec,
    members: Vec<Member>,
}

impl SpecialistsEnsemble {
    pub fn new(spec: EnsembleSpec, members: Vec<Member>) -> Result<Self> {
        if members.len() != spec.len() {
            return Err(Error::config(format!(
                "{} members for {} subsets",
                members.len(),
                spec.len()
            )));
        }
        for (m, s) in members.iter().zip(spec.subsets()) {
            if m.subset.classes != s.classes || m.net.classes() != s.len() {
                return Err(Error::config(format!(
                    "member for {:?} does not match its subset",
                    s.classes
                )));
            }
        }
        Ok(Self { spec, members })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn member_outputs(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        self.members
            .iter()
            .map(|m| m.output(x, self.spec.classes()))
            .collect()
    }

    pub fn vote(&self, x: &Tensor) -> Result<VoteResult> {
        vote_outputs(&self.spec, &self.member_outputs(x)?)
    }
}

impl Classifier for SpecialistsEnsemble {
    fn num_classes(&self) -> usize {
        self.spec.classes()
    }

    fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.vote(x)?.fused)
    }
}

/// Seed of the member trained on `subset`: `base_seed` plus the subset's
/// position in the family before deduplication.
pub fn member_seed(subset: &ClassSubset, classes: usize, base_seed: u64) -> u64 {
    base_seed.wrapping_add(subset.origin.family_index(classes) as u64)
}

fn train_seeded(
    subset: &ClassSubset,
    data: &Dataset,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Member> {
    let tc = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    train_specialist(subset, data, &net_cfg.with_seed(seed), &tc)
}

/// The all-classes member, seeded as [`member_seed`] assigns it.
pub fn train_generalist_member(
    data: &Dataset,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    base_seed: u64,
) -> Result<Member> {
    let subset = ClassSubset::generalist(data.classes());
    let seed = member_seed(&subset, data.classes(), base_seed);
    train_seeded(&subset, data, net_cfg, train_cfg, seed)
}

/// Trains one member per subset of `spec`, seeded by [`member_seed`].
/// A supplied `generalist` is reused for the all-classes subset.
pub fn train_specialists(
    spec: &EnsembleSpec,
    data: &Dataset,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    base_seed: u64,
    generalist: Option<&Member>,
) -> Result<SpecialistsEnsemble> {
    let k = spec.classes();
    let members = spec
        .subsets()
        .par_iter()
        .enumerate()
        .map(|(j, subset)| {
            if let Some(g) = generalist.filter(|g| g.subset.classes == subset.classes) {
                return Ok(Member {
                    subset: subset.clone(),
                    net: g.net.clone(),
                });
            }
            let m = train_seeded(
                subset,
                data,
                net_cfg,
                train_cfg,
                member_seed(subset, k, base_seed),
            )?;
            info!("trained member {j} on classes {:?}", subset.classes);
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    SpecialistsEnsemble::new(spec.clone(), members)
}

pub fn save_specialists(ens: &SpecialistsEnsemble, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("spec.json"),
        serde_json::to_string_pretty(&ens.spec)?,
    )?;
    for (j, m) in ens.members.iter().enumerate() {
        m.net.save(&dir.join(format!("member_{j}.json")))?;
    }
    Ok(())
}

pub fn load_specialists(dir: &Path) -> Result<SpecialistsEnsemble> {
    let spec: EnsembleSpec = serde_json::from_str(&fs::read_to_string(dir.join("spec.json"))?)?;
    let members = spec
        .subsets()
        .iter()
        .enumerate()
        .map(|(j, s)| {
            Ok(Member {
                subset: s.clone(),
                net: Network::load(&dir.join(format!("member_{j}.json")))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SpecialistsEnsemble::new(spec, members)
}

/// Generalists averaged with equal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PureEnsemble {
    members: Vec<Network>,
}

impl PureEnsemble {
    pub fn new(members: Vec<Network>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("pure ensemble"))?;
        if members
            .iter()
            .any(|m| m.classes() != first.classes() || m.input_shape() != first.input_shape())
        {
            return Err(Error::config(
                "pure ensemble members must share input shape and class count",
            ));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Network] {
        &self.members
    }
}

impl Classifier for PureEnsemble {
    fn num_classes(&self) -> usize {
        self.members[0].classes()
    }

    fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut fused = vec![0.0; self.num_classes()];
        for m in &self.members {
            for (f, p) in fused.iter_mut().zip(m.predict(x)?) {
                *f += p;
            }
        }
        let n = self.members.len() as f64;
        fused.iter_mut().for_each(|f| *f /= n);
        Ok(fused)
    }
}

/// Trains one generalist per seed (network and training seed alike).
pub fn build_pure_ensemble(
    data: &Dataset,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<PureEnsemble> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        warn!("pure ensemble seeds {seeds:?} contain duplicates; members will coincide");
    }
    let members = seeds
        .par_iter()
        .map(|&seed| {
            let mut net = Network::new(net_cfg.with_seed(seed))?;
            net.train(
                data,
                &TrainConfig {
                    seed,
                    ..train_cfg.clone()
                },
            )?;
            Ok(net)
        })
        .collect::<Result<Vec<_>>>()?;
    PureEnsemble::new(members)
}
