use serde::{Deserialize, Serialize};

use super::{clip_unit, distortion};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;
use crate::{argmax, Classifier};

/// Box-constrained minimum-perturbation search.
///
/// Minimises `c * |r|^2 + loss(x + r, target)` subject to `x + r in [0,1]`
/// by projected gradient descent, bisecting `c` on a log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxMinConfig {
    pub c_min: f64,
    pub c_max: f64,
    /// Bisection rounds over `c`.
    pub search_steps: usize,
    /// Projected-gradient iterations per `c`.
    pub iterations: usize,
    pub step_size: f64,
    /// Target class; `None` picks the runner-up class of the clean input.
    pub target: Option<usize>,
}

impl Default for BoxMinConfig {
    fn default() -> Self {
        Self {
            c_min: 1e-3,
            c_max: 1e2,
            search_steps: 8,
            iterations: 150,
            step_size: 0.05,
            target: None,
        }
    }
}

impl BoxMinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_max > self.c_min) {
            return Err(Error::config(
                "box-min penalty range must satisfy 0 < c_min < c_max",
            ));
        }
        if self.iterations == 0 || !(self.step_size > 0.0) {
            return Err(Error::config(
                "box-min needs iterations >= 1 and a positive step size",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMinOutcome {
    pub adversary: Tensor,
    pub target: usize,
    /// Penalty weight that produced `adversary` (the last one tried on failure).
    pub c: f64,
    pub success: bool,
    /// Total gradient steps across all penalty values.
    pub iterations: usize,
}

struct Descent {
    /// Smallest-distortion iterate classified as the target.
    best: Option<(f64, Tensor)>,
    last: Tensor,
}

fn descend(
    net: &Network,
    x: &Tensor,
    target: usize,
    c: f64,
    cfg: &BoxMinConfig,
) -> Result<Descent> {
    let lr = cfg.step_size;
    let shrink = 1.0 / (1.0 + 2.0 * lr * c);
    let mut point = x.clone();
    let mut best: Option<(f64, Tensor)> = None;
    for _ in 0..cfg.iterations {
        let grad = net.input_gradient(&point, target)?;
        // gradient step on the loss, exact proximal step on c|r|^2, then box projection
        let next = x
            .data()
            .iter()
            .zip(point.data())
            .zip(grad.data())
            .map(|((&x0, &p), &g)| (x0 + (p - x0 - lr * g) * shrink).clamp(0.0, 1.0))
            .collect();
        point = Tensor::new(x.shape().to_vec(), next)?;
        if argmax(&net.logits(&point)?) == target {
            let d = distortion(x, &point)?;
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, point.clone()));
            }
        }
    }
    Ok(Descent { best, last: point })
}

/// Searches the smallest box-constrained perturbation that makes `net`
/// predict `target` (runner-up class by default). `label` must be the
/// network's prediction on `x`.
pub fn box_min_perturbation(
    net: &Network,
    x: &Tensor,
    label: usize,
    target: Option<usize>,
    cfg: &BoxMinConfig,
) -> Result<BoxMinOutcome> {
    cfg.validate()?;
    let probs = net.predict_proba(x)?;
    if argmax(&probs) != label {
        return Err(Error::RejectedInput(format!(
            "box-min needs a correctly classified input (label {label})"
        )));
    }
    let target = match target.or(cfg.target) {
        Some(t) => t,
        None => {
            let mut masked = probs.clone();
            masked[label] = f64::NEG_INFINITY;
            argmax(&masked)
        }
    };
    if target == label || target >= net.classes() {
        return Err(Error::RejectedInput(format!(
            "invalid box-min target {target} for label {label}"
        )));
    }

    let mut iterations = cfg.iterations;
    let first = descend(net, x, target, cfg.c_min, cfg)?;
    let Some((mut best_d, mut best)) = first.best else {
        return Ok(BoxMinOutcome {
            adversary: first.last,
            target,
            c: cfg.c_min,
            success: false,
            iterations,
        });
    };
    let mut best_c = cfg.c_min;
    let (mut lo, mut hi) = (cfg.c_min.ln(), cfg.c_max.ln());
    for _ in 0..cfg.search_steps {
        let mid = 0.5 * (lo + hi);
        let run = descend(net, x, target, mid.exp(), cfg)?;
        iterations += cfg.iterations;
        match run.best {
            Some((d, point)) => {
                lo = mid;
                if d < best_d {
                    best_d = d;
                    best = point;
                    best_c = mid.exp();
                }
            }
            None => hi = mid,
        }
    }
    Ok(BoxMinOutcome {
        adversary: clip_unit(&best),
        target,
        c: best_c,
        success: true,
        iterations,
    })
}
