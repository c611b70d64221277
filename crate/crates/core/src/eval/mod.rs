//! Thresholded rejection and the error measures built on it.
//!
//! A framework's probability vector `h` is accepted as `argmax h` when
//! `max h >= tau` and rejected (class index `K`) otherwise. Clean-set error
//! counts misclassified samples plus correctly classified ones that were
//! rejected; adversary error counts adversaries that are both accepted and
//! misclassified.

mod density;
mod log;
pub mod svg;
mod sweep;

pub use density::{confidence_density, density_from_logs, DensityHistogram, DensitySeries};
pub use log::{score, DecisionLog, LogEntry};
pub use sweep::{
    default_tau_grid, rejection_rate_curve, reports_to_csv, sweep, sweep_logs, ErrorMetric,
    ErrorReport, ErrorRow,
};

use serde::{Deserialize, Serialize};

use crate::argmax;
use crate::data::Dataset;
use crate::error::Result;
use crate::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Class(usize),
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub verdict: Verdict,
    /// `max h`.
    pub confidence: f64,
    /// `argmax h`, regardless of rejection.
    pub argmax: usize,
}

impl Decision {
    /// Class index, with `classes` standing for the reject class.
    pub fn index(&self, classes: usize) -> usize {
        match self.verdict {
            Verdict::Class(c) => c,
            Verdict::Reject => classes,
        }
    }

    pub fn is_reject(&self) -> bool {
        self.verdict == Verdict::Reject
    }
}

/// Accepts `argmax h` when `max h >= tau`, rejects otherwise.
pub fn decide(h: &[f64], tau: f64) -> Decision {
    let top = argmax(h);
    let confidence = h[top];
    let verdict = if confidence >= tau {
        Verdict::Class(top)
    } else {
        Verdict::Reject
    };
    Decision {
        verdict,
        confidence,
        argmax: top,
    }
}

/// How a correctly classified but rejected clean sample is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleanErrorMode {
    /// Sum of both indicators as printed, so such a sample counts twice
    /// and the error can exceed 1.
    Literal,
    /// Indicators combined with `max`: every sample counts at most once.
    #[default]
    Capped,
}

pub fn error_clean(
    framework: &dyn Classifier,
    clean: &Dataset,
    tau: f64,
    mode: CleanErrorMode,
) -> Result<f64> {
    score(framework, clean)?.error_clean(tau, mode)
}

pub fn error_adv(framework: &dyn Classifier, adversaries: &Dataset, tau: f64) -> Result<f64> {
    score(framework, adversaries)?.error_adv(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decide_thresholds() {
        let d = decide(&[0.6, 0.4], 0.5);
        assert_eq!(d.verdict, Verdict::Class(0));
        assert_eq!(d.confidence, 0.6);
        assert!(!decide(&[0.5, 0.5], 0.0).is_reject());
        assert_eq!(decide(&[0.5, 0.5], 0.0).argmax, 0);
        assert!(decide(&[1.0, 0.0], 1.0 + 1e-9).is_reject());
        assert_eq!(decide(&[0.3, 0.7], 0.8).index(2), 2);
        assert_eq!(decide(&[0.3, 0.7], 0.7).index(2), 1);
    }
}
