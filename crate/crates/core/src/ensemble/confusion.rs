use std::fmt::Write as _;

use log::warn;
use rand::seq::index;

use crate::attacks::{correctly_classified, fgs};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{self, Stream};

/// `K x K` adversary counts: rows are true classes, columns the class the
/// source network was fooled into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::config(
                "confusion matrix must be square and non-empty",
            ));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i]
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class][predicted] += 1;
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn off_diagonal_sum(&self, i: usize) -> u64 {
        self.row_sum(i) - self.counts[i][i]
    }

    pub fn total(&self) -> u64 {
        (0..self.classes()).map(|i| self.row_sum(i)).sum()
    }

    pub fn diagonal_total(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Header `true\pred,0,1,...` then one row per true class.
    pub fn to_csv(&self) -> String {
        let k = self.classes();
        let mut out = String::from("true\\pred");
        for j in 0..k {
            write!(out, ",{j}").unwrap();
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            write!(out, "{i}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Confusion matrix of FGS adversaries against `source`.
///
/// Up to `per_class` correctly classified training samples per class are
/// drawn uniformly without replacement (`Sampling` stream of `seed`),
/// attacked with step `epsilon`, and every adversary that fools `source`
/// adds one count at `(true class, predicted class)`.
pub fn build_confusion_matrix(
    source: &Network,
    train: &Dataset,
    per_class: usize,
    epsilon: f64,
    seed: u64,
) -> Result<ConfusionMatrix> {
    let k = source.classes();
    let eligible = correctly_classified(source, train)?;
    let mut by_class = vec![Vec::new(); k];
    for s in eligible {
        by_class[s.label].push(s);
    }
    let mut rng = rng::stream(seed, Stream::Sampling);
    let mut cm = ConfusionMatrix::new(k);
    for (class, pool) in by_class.iter().enumerate() {
        if pool.is_empty() {
            return Err(Error::NoEligibleSamples { class });
        }
        if pool.len() < per_class {
            warn!(
                "class {class}: only {} eligible samples (wanted {per_class})",
                pool.len()
            );
        }
        let take = per_class.min(pool.len());
        let mut picks = index::sample(&mut rng, pool.len(), take).into_vec();
        picks.sort_unstable();
        for i in picks {
            let s = &pool[i];
            let adv = fgs(source, &s.image, s.label, epsilon)?;
            let pred = source.predict_class(&adv)?;
            if pred != s.label {
                cm.record(class, pred);
            }
        }
    }
    Ok(cm)
}
