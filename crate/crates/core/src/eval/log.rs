use std::fmt::Write as _;

use rayon::prelude::*;

use super::CleanErrorMode;
use crate::argmax;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Classifier;

/// What a framework made of one labelled sample; enough to recompute every
/// threshold-dependent rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub label: usize,
    pub argmax: usize,
    pub confidence: f64,
}

/// Per-sample predictions of one framework on one sample set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecisionLog {
    pub entries: Vec<LogEntry>,
}

/// Scores every sample of `data` with `framework`, preserving order.
pub fn score(framework: &dyn Classifier, data: &Dataset) -> Result<DecisionLog> {
    let entries = data
        .samples()
        .par_iter()
        .map(|s| {
            let h = framework.predict_proba(&s.image)?;
            let top = argmax(&h);
            Ok(LogEntry {
                label: s.label,
                argmax: top,
                confidence: h[top],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecisionLog { entries })
}

impl LogEntry {
    /// Rejection rule of [`super::decide`] applied to the logged maximum.
    pub fn rejected(&self, tau: f64) -> bool {
        !(self.confidence >= tau)
    }
}

impl DecisionLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        Ok(())
    }

    /// Clean-set error at threshold `tau`.
    pub fn error_clean(&self, tau: f64, mode: CleanErrorMode) -> Result<f64> {
        self.nonempty()?;
        let total: f64 = self
            .entries
            .iter()
            .map(|e| {
                let rejected = e.rejected(tau);
                let wrong = rejected || e.argmax != e.label;
                let correct_rejected = rejected && e.argmax == e.label;
                match mode {
                    CleanErrorMode::Literal => wrong as u8 as f64 + correct_rejected as u8 as f64,
                    CleanErrorMode::Capped => (wrong || correct_rejected) as u8 as f64,
                }
            })
            .sum();
        Ok(total / self.entries.len() as f64)
    }

    /// Fraction of samples accepted with a wrong class.
    pub fn error_adv(&self, tau: f64) -> Result<f64> {
        self.nonempty()?;
        let n = self
            .entries
            .iter()
            .filter(|e| !e.rejected(tau) && e.argmax != e.label)
            .count();
        Ok(n as f64 / self.entries.len() as f64)
    }

    pub fn rejection_rate(&self, tau: f64) -> Result<f64> {
        self.nonempty()?;
        let n = self.entries.iter().filter(|e| e.rejected(tau)).count();
        Ok(n as f64 / self.entries.len() as f64)
    }

    /// Plain misclassification rate (no rejection).
    pub fn error_rate(&self) -> Result<f64> {
        self.nonempty()?;
        Ok(
            self.entries.iter().filter(|e| e.argmax != e.label).count() as f64
                / self.entries.len() as f64,
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,label,argmax,confidence\n");
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(out, "{i},{},{},{}", e.label, e.argmax, e.confidence).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize| Error::config(format!("malformed decision log line {line}"));
        let mut lines = text.lines();
        if lines.next() != Some("index,label,argmax,confidence") {
            return Err(Error::config("decision log header missing"));
        }
        let entries = lines
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(bad(i + 2));
                }
                Ok(LogEntry {
                    label: f[1].parse().map_err(|_| bad(i + 2))?,
                    argmax: f[2].parse().map_err(|_| bad(i + 2))?,
                    confidence: f[3].parse().map_err(|_| bad(i + 2))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(label: usize, argmax: usize, confidence: f64) -> LogEntry {
        LogEntry {
            label,
            argmax,
            confidence,
        }
    }

    #[test]
    fn clean_error_both_modes() {
        // two correct-accepted, one wrong-accepted, one correct-rejected at tau = 0.5
        let log = DecisionLog {
            entries: vec![
                entry(0, 0, 0.9),
                entry(1, 1, 0.8),
                entry(0, 1, 0.7),
                entry(2, 2, 0.4),
            ],
        };
        assert!((log.error_clean(0.5, CleanErrorMode::Literal).unwrap() - 0.75).abs() < 1e-15);
        assert!((log.error_clean(0.5, CleanErrorMode::Capped).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            log.error_clean(0.0, CleanErrorMode::Capped).unwrap(),
            log.error_rate().unwrap()
        );
    }

    #[test]
    fn all_correct_all_rejected() {
        let log = DecisionLog {
            entries: vec![entry(0, 0, 0.9); 5],
        };
        assert_eq!(log.error_clean(0.95, CleanErrorMode::Literal).unwrap(), 2.0);
        assert_eq!(log.error_clean(0.95, CleanErrorMode::Capped).unwrap(), 1.0);
    }

    #[test]
    fn adversary_error() {
        // one rejected, one misclassified-accepted, one correctly-classified-accepted
        let log = DecisionLog {
            entries: vec![entry(0, 1, 0.3), entry(0, 1, 0.9), entry(2, 2, 0.9)],
        };
        assert!((log.error_adv(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((log.error_adv(0.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(log.error_adv(1.0 + 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets_are_errors() {
        let log = DecisionLog::default();
        assert!(log.error_adv(0.5).is_err());
        assert!(log.error_clean(0.5, CleanErrorMode::Capped).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let log = DecisionLog {
            entries: vec![entry(0, 1, 0.123456789), entry(3, 3, 1.0)],
        };
        assert_eq!(DecisionLog::from_csv(&log.to_csv()).unwrap(), log);
        assert!(DecisionLog::from_csv("nope").is_err());
    }
}
