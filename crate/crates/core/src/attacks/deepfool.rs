use super::clip_unit;
use crate::argmax;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Added to the logit gap so each step lands just past the linearised
/// boundary instead of exactly on it.
pub const DEEPFOOL_STABILITY: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct DeepFoolOutcome {
    /// `clip(x + (1 + overshoot) * perturbation, 0, 1)`.
    pub adversary: Tensor,
    /// Accumulated perturbation before overshoot and clipping.
    pub perturbation: Tensor,
    pub iterations: usize,
    pub success: bool,
}

/// Multiclass DeepFool on the network's logits.
///
/// Each iteration linearises every logit gap `f_k - f_{k0}` around the
/// current iterate, steps to the nearest linearised boundary and
/// re-evaluates at `clip(x + (1 + overshoot) * r_total)`. `label` must be
/// the network's prediction on `x`.
pub fn deepfool(
    net: &Network,
    x: &Tensor,
    label: usize,
    max_iter: usize,
    overshoot: f64,
) -> Result<DeepFoolOutcome> {
    let original = net.predict_class(x)?;
    if original != label {
        return Err(Error::RejectedInput(format!(
            "DeepFool needs a correctly classified input (label {label}, predicted {original})"
        )));
    }
    let mut r_total = vec![0.0; x.len()];
    let mut current = x.clone();
    let mut iterations = 0;
    let success = loop {
        let (logits, jacobian) = net.logit_jacobian(&current)?;
        if argmax(&logits) != original {
            break true;
        }
        if iterations == max_iter {
            break false;
        }
        let base = jacobian[original].data();
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for (k, row) in jacobian.iter().enumerate() {
            if k == original {
                continue;
            }
            let w: Vec<f64> = row.data().iter().zip(base).map(|(a, b)| a - b).collect();
            let norm_sq: f64 = w.iter().map(|v| v * v).sum();
            if norm_sq == 0.0 {
                continue;
            }
            let gap = (logits[k] - logits[original]).abs();
            let dist = gap / norm_sq.sqrt();
            if best.as_ref().is_none_or(|(d, ..)| dist < *d) {
                best = Some((dist, gap, w));
            }
        }
        let Some((_, gap, w)) = best else {
            // every logit gap is locally flat; no direction to follow
            break false;
        };
        let norm_sq: f64 = w.iter().map(|v| v * v).sum();
        let scale = (gap + DEEPFOOL_STABILITY) / norm_sq;
        for (r, wi) in r_total.iter_mut().zip(&w) {
            *r += scale * wi;
        }
        iterations += 1;
        let stepped = x
            .data()
            .iter()
            .zip(&r_total)
            .map(|(v, r)| v + (1.0 + overshoot) * r)
            .collect();
        current = clip_unit(&Tensor::new(x.shape().to_vec(), stepped)?);
    };
    Ok(DeepFoolOutcome {
        adversary: current,
        perturbation: Tensor::new(x.shape().to_vec(), r_total)?,
        iterations,
        success,
    })
}
