use serde::{Deserialize, Serialize};

use super::ConfusionMatrix;
use crate::error::{Error, Result};

/// Where a class subset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "lowercase")]
pub enum SubsetOrigin {
    /// Classes that row `row`'s adversaries are mostly fooled into.
    Confusing { row: usize },
    /// Everything not in the confusing subset of `row`.
    Complement { row: usize },
    /// All classes.
    Generalist,
}

impl SubsetOrigin {
    /// Position in the family before deduplication: confusing subsets
    /// `0..K`, complements `K..2K`, generalist `2K`.
    pub fn family_index(self, classes: usize) -> usize {
        match self {
            SubsetOrigin::Confusing { row } => row,
            SubsetOrigin::Complement { row } => classes + row,
            SubsetOrigin::Generalist => 2 * classes,
        }
    }
}

/// A non-empty set of class indices, stored in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSubset {
    #[serde(flatten)]
    pub origin: SubsetOrigin,
    pub classes: Vec<usize>,
}

impl ClassSubset {
    pub fn generalist(classes: usize) -> Self {
        ClassSubset {
            origin: SubsetOrigin::Generalist,
            classes: (0..classes).collect(),
        }
    }

    pub fn contains(&self, class: usize) -> bool {
        self.classes.binary_search(&class).is_ok()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    #[serde(rename = "K")]
    k: usize,
    coverage: f64,
    subsets: Vec<ClassSubset>,
}

/// The deduplicated subset family of a specialists+1 ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDocument", into = "SpecDocument")]
pub struct EnsembleSpec {
    classes: usize,
    coverage: f64,
    subsets: Vec<ClassSubset>,
    expected_votes: Vec<usize>,
}

impl TryFrom<SpecDocument> for EnsembleSpec {
    type Error = Error;

    fn try_from(doc: SpecDocument) -> Result<Self> {
        EnsembleSpec::from_subsets(doc.k, doc.coverage, doc.subsets)
    }
}

impl From<EnsembleSpec> for SpecDocument {
    fn from(spec: EnsembleSpec) -> Self {
        SpecDocument {
            k: spec.classes,
            coverage: spec.coverage,
            subsets: spec.subsets,
        }
    }
}

impl EnsembleSpec {
    /// Validates the subsets and computes every class's expected vote count.
    pub fn from_subsets(
        classes: usize,
        coverage: f64,
        mut subsets: Vec<ClassSubset>,
    ) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::config("ensemble needs at least one subset"));
        }
        for s in &mut subsets {
            s.classes.sort_unstable();
            s.classes.dedup();
            if s.classes.is_empty() || s.classes.iter().any(|&c| c >= classes) {
                return Err(Error::config(format!(
                    "invalid class subset {:?} for K = {classes}",
                    s.classes
                )));
            }
        }
        let expected_votes = (0..classes)
            .map(|k| subsets.iter().filter(|s| s.contains(k)).count())
            .collect();
        Ok(Self {
            classes,
            coverage,
            subsets,
            expected_votes,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn subsets(&self) -> &[ClassSubset] {
        &self.subsets
    }

    /// Number of members `M`.
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// `m_k`: how many subsets contain class `k`.
    pub fn expected_votes(&self) -> &[usize] {
        &self.expected_votes
    }
}

fn check_coverage(coverage: f64) -> Result<()> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::config(format!(
            "coverage must lie in (0, 1], got {coverage}"
        )));
    }
    Ok(())
}

/// Shortest prefix of the off-diagonal classes of `row`, in descending
/// count order (ties to the lower index), whose counts reach `coverage` of
/// the row's off-diagonal total. Returned in ascending class order.
pub fn confusing_subset(cm: &ConfusionMatrix, row: usize, coverage: f64) -> Result<Vec<usize>> {
    check_coverage(coverage)?;
    let total = cm.off_diagonal_sum(row);
    if total == 0 {
        return Err(Error::NoConfusion { row });
    }
    let counts = cm.row(row);
    let mut order: Vec<usize> = (0..cm.classes()).filter(|&j| j != row).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    // relative slack absorbs rounding in coverage * total (e.g. 0.8 * 5)
    let needed = coverage * total as f64 * (1.0 - 1e-12);
    let mut covered = 0u64;
    let mut subset = Vec::new();
    for j in order {
        subset.push(j);
        covered += counts[j];
        if covered as f64 >= needed {
            break;
        }
    }
    subset.sort_unstable();
    Ok(subset)
}

/// The full `2K + 1` family before duplicate removal: the confusing subset
/// of every row, then every complement, then the generalist.
pub fn subset_family(cm: &ConfusionMatrix, coverage: f64) -> Result<Vec<ClassSubset>> {
    let k = cm.classes();
    let confusing = (0..k)
        .map(|i| confusing_subset(cm, i, coverage))
        .collect::<Result<Vec<_>>>()?;
    let mut family: Vec<ClassSubset> = confusing
        .iter()
        .enumerate()
        .map(|(row, classes)| ClassSubset {
            origin: SubsetOrigin::Confusing { row },
            classes: classes.clone(),
        })
        .collect();
    family.extend(confusing.iter().enumerate().map(|(row, u)| ClassSubset {
        origin: SubsetOrigin::Complement { row },
        classes: (0..k).filter(|c| !u.contains(c)).collect(),
    }));
    family.push(ClassSubset {
        origin: SubsetOrigin::Generalist,
        classes: (0..k).collect(),
    });
    Ok(family)
}

/// Subset family with duplicates (equal class sets) removed, keeping the
/// first occurrence.
pub fn derive_subsets(cm: &ConfusionMatrix, coverage: f64) -> Result<EnsembleSpec> {
    let mut kept: Vec<ClassSubset> = Vec::new();
    for s in subset_family(cm, coverage)? {
        if !kept.iter().any(|k| k.classes == s.classes) {
            kept.push(s);
        }
    }
    EnsembleSpec::from_subsets(cm.classes(), coverage, kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_target_row() {
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 10], vec![7, 0]]).unwrap();
        let fam = subset_family(&cm, 0.8).unwrap();
        assert_eq!(fam[0].classes, vec![1]);
        assert_eq!(fam[2].classes, vec![0]);
    }

    #[test]
    fn eighty_percent_prefix() {
        let cm = ConfusionMatrix::from_counts(vec![
            vec![0, 50, 30, 20],
            vec![1, 0, 0, 0],
            vec![1, 0, 0, 0],
            vec![1, 0, 0, 0],
        ])
        .unwrap();
        let fam = subset_family(&cm, 0.8).unwrap();
        assert_eq!(fam[0].classes, vec![1, 2]);
        assert_eq!(fam[4].classes, vec![0, 3]);
        assert_eq!(fam[4].origin, SubsetOrigin::Complement { row: 0 });
    }

    #[test]
    fn diagonal_is_ignored() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1000, 1, 0], vec![1, 0, 0], vec![1, 0, 0]])
            .unwrap();
        assert_eq!(confusing_subset(&cm, 0, 0.8).unwrap(), vec![1]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 5, 5], vec![1, 0, 0], vec![1, 0, 0]])
            .unwrap();
        assert_eq!(confusing_subset(&cm, 0, 0.5).unwrap(), vec![1]);
    }

    #[test]
    fn empty_row_is_an_error() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![1, 0]]).unwrap();
        assert!(matches!(
            derive_subsets(&cm, 0.8),
            Err(Error::NoConfusion { row: 0 })
        ));
        assert!(confusing_subset(&cm, 1, 0.0).is_err());
    }

    #[test]
    fn duplicates_are_dropped_and_votes_recounted() {
        // K = 2: U_1 = {1}, U_2 = {0}, complements {0}, {1} duplicate them
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 4], vec![4, 0]]).unwrap();
        let spec = derive_subsets(&cm, 0.8).unwrap();
        assert_eq!(spec.len(), 3);
        assert_eq!(spec.expected_votes(), &[2, 2]);
    }

    #[test]
    fn json_layout_and_round_trip() {
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 3, 1], vec![2, 0, 2], vec![5, 0, 0]])
            .unwrap();
        let spec = derive_subsets(&cm, 0.8).unwrap();
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["K"], 3);
        assert_eq!(json["coverage"], 0.8);
        assert_eq!(
            json["subsets"][0],
            serde_json::json!({"origin":"confusing","row":0,"classes":[1, 2]})
        );
        assert_eq!(
            json["subsets"].as_array().unwrap().last().unwrap()["origin"],
            "generalist"
        );
        let back: EnsembleSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn family_partitions_and_counts(rows in proptest::collection::vec(proptest::collection::vec(0u64..20, 5), 5)) {
            let mut counts = rows;
            for (i, r) in counts.iter_mut().enumerate() {
                r[(i + 1) % 5] += 1;
            }
            let cm = ConfusionMatrix::from_counts(counts).unwrap();
            let fam = subset_family(&cm, 0.8).unwrap();
            prop_assert_eq!(fam.len(), 11);
            for i in 0..5 {
                let (u, c) = (&fam[i], &fam[i + 5]);
                prop_assert!(u.classes.iter().all(|x| !c.contains(*x)));
                prop_assert_eq!(u.len() + c.len(), 5);
                // shortest prefix: dropping the weakest member loses coverage
                let row = cm.row(i);
                let total = cm.off_diagonal_sum(i) as f64;
                let sum: u64 = u.classes.iter().map(|&j| row[j]).sum();
                let weakest = u.classes.iter().map(|&j| row[j]).min().unwrap();
                prop_assert!(sum as f64 >= 0.8 * total - 1e-9);
                prop_assert!(((sum - weakest) as f64) < 0.8 * total - 1e-9);
            }
            for k in 0..5 {
                prop_assert_eq!(fam.iter().filter(|s| s.contains(k)).count(), 6);
            }
        }
    }
}
