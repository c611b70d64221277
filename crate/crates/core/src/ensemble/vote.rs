use super::EnsembleSpec;
use crate::argmax;
use crate::error::{Error, Result};

/// Outcome of the voting mechanism for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteResult {
    /// Members whose argmax is each class.
    pub votes: Vec<usize>,
    pub winner: usize,
    /// The winner collected its full expected vote count.
    pub agreement: bool,
    /// Members averaged into `fused`.
    pub activated: Vec<usize>,
    pub fused: Vec<f64>,
    pub confidence: f64,
}

/// Combines member outputs (each a `K`-vector, zero outside its subset).
///
/// Each member votes for its argmax class. When the top class `k*`
/// (lowest index on ties) receives exactly its expected count `m_k*`, only
/// the members whose subsets contain `k*` are averaged; otherwise all
/// members are.
pub fn vote_outputs(spec: &EnsembleSpec, outputs: &[Vec<f64>]) -> Result<VoteResult> {
    let k = spec.classes();
    if outputs.len() != spec.len() {
        return Err(Error::config(format!(
            "{} member outputs for {} subsets",
            outputs.len(),
            spec.len()
        )));
    }
    if let Some(bad) = outputs.iter().find(|o| o.len() != k) {
        return Err(Error::ShapeMismatch {
            expected: vec![k],
            got: vec![bad.len()],
        });
    }
    let mut votes = vec![0usize; k];
    for out in outputs {
        votes[argmax(out)] += 1;
    }
    let winner = votes
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > votes[best] { i } else { best });
    let agreement = votes[winner] == spec.expected_votes()[winner];
    let activated: Vec<usize> = if agreement {
        (0..spec.len())
            .filter(|&j| spec.subsets()[j].contains(winner))
            .collect()
    } else {
        (0..spec.len()).collect()
    };
    let mut fused = vec![0.0; k];
    for &j in &activated {
        for (f, v) in fused.iter_mut().zip(&outputs[j]) {
            *f += v;
        }
    }
    let n = activated.len() as f64;
    fused.iter_mut().for_each(|f| *f /= n);
    let confidence = fused.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(VoteResult {
        votes,
        winner,
        agreement,
        activated,
        fused,
        confidence,
    })
}
