//! Specialists+1 ensembles built from adversarial confusion matrices.

mod confusion;
mod members;
mod subsets;
mod vote;

pub use confusion::{build_confusion_matrix, ConfusionMatrix};
pub use members::{
    build_pure_ensemble, load_specialists, member_seed, save_specialists, train_generalist_member,
    train_specialist, train_specialists, Member, PureEnsemble, SpecialistsEnsemble,
};
pub use subsets::{
    confusing_subset, derive_subsets, subset_family, ClassSubset, EnsembleSpec, SubsetOrigin,
};
pub use vote::{vote_outputs, VoteResult};
