use std::fmt::Write as _;

use super::{score, DecisionLog};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Classifier;

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySeries {
    pub name: String,
    /// Samples that entered the histogram; zero marks an empty series.
    pub count: usize,
    /// Fraction of the series per bin; sums to 1 unless empty.
    pub density: Vec<f64>,
}

/// Confidence histograms over equal-width bins on `[0, 1]`; every bin is
/// half-open except the last, which also holds confidence 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistogram {
    pub edges: Vec<f64>,
    pub series: Vec<DensitySeries>,
}

fn bin_of(confidence: f64, bins: usize) -> usize {
    ((confidence * bins as f64).floor() as usize).min(bins - 1)
}

fn series(name: &str, confidences: impl Iterator<Item = f64>, bins: usize) -> DensitySeries {
    let mut counts = vec![0usize; bins];
    let mut n = 0;
    for c in confidences {
        counts[bin_of(c, bins)] += 1;
        n += 1;
    }
    let density = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    DensitySeries {
        name: name.to_string(),
        count: n,
        density,
    }
}

impl DensityHistogram {
    fn empty(bins: usize) -> Self {
        Self {
            edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            series: vec![],
        }
    }

    pub fn get(&self, name: &str) -> Option<&DensitySeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Mass of `name` in bins lying entirely below `threshold`.
    pub fn mass_below(&self, name: &str, threshold: f64) -> Option<f64> {
        let s = self.get(name)?;
        Some(
            s.density
                .iter()
                .zip(self.edges.windows(2))
                .filter(|(_, e)| e[1] <= threshold)
                .map(|(d, _)| d)
                .sum(),
        )
    }

    /// `bin_low,bin_high,<series>...`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high");
        for s in &self.series {
            write!(out, ",{}", s.name).unwrap();
        }
        out.push('\n');
        for (i, e) in self.edges.windows(2).enumerate() {
            write!(out, "{},{}", e[0], e[1]).unwrap();
            for s in &self.series {
                write!(out, ",{}", s.density[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Histogram of one framework's confidences on one sample set. With
/// `correct_only`, only correctly classified samples are counted (used for
/// clean sets).
pub fn confidence_density(
    framework: &dyn Classifier,
    samples: &Dataset,
    bins: usize,
    correct_only: bool,
) -> Result<DensityHistogram> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    let log = score(framework, samples)?;
    let mut hist = DensityHistogram::empty(bins);
    let name = if correct_only { "correct" } else { "all" };
    hist.series.push(series(
        name,
        log.entries
            .iter()
            .filter(|e| !correct_only || e.argmax == e.label)
            .map(|e| e.confidence),
        bins,
    ));
    Ok(hist)
}

/// The full density panel for one framework: correctly classified clean
/// samples, then for every adversary set all its examples and, separately,
/// the misclassified ones.
pub fn density_from_logs(
    clean: &DecisionLog,
    adversaries: &[(String, DecisionLog)],
    bins: usize,
) -> Result<DensityHistogram> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    let mut hist = DensityHistogram::empty(bins);
    hist.series.push(series(
        "clean_correct",
        clean
            .entries
            .iter()
            .filter(|e| e.argmax == e.label)
            .map(|e| e.confidence),
        bins,
    ));
    for (name, log) in adversaries {
        hist.series
            .push(series(name, log.entries.iter().map(|e| e.confidence), bins));
        hist.series.push(series(
            &format!("{name}_misclassified"),
            log.entries
                .iter()
                .filter(|e| e.argmax != e.label)
                .map(|e| e.confidence),
            bins,
        ));
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::LogEntry;

    fn log(conf: &[f64]) -> DecisionLog {
        DecisionLog {
            entries: conf
                .iter()
                .map(|&c| LogEntry {
                    label: 0,
                    argmax: 0,
                    confidence: c,
                })
                .collect(),
        }
    }

    #[test]
    fn certain_predictions_fill_top_bin() {
        let h = density_from_logs(&log(&[1.0, 1.0, 1.0]), &[], 20).unwrap();
        let s = h.get("clean_correct").unwrap();
        assert_eq!(s.density[19], 1.0);
        assert_eq!(s.density.iter().sum::<f64>(), 1.0);
        assert_eq!(h.edges.len(), 21);
    }

    #[test]
    fn densities_normalise_and_empty_is_flagged() {
        let adv = DecisionLog {
            entries: vec![
                LogEntry {
                    label: 0,
                    argmax: 0,
                    confidence: 0.3,
                },
                LogEntry {
                    label: 0,
                    argmax: 1,
                    confidence: 0.61,
                },
            ],
        };
        let h =
            density_from_logs(&log(&[0.05, 0.5, 0.55, 0.999]), &[("fgs".into(), adv)], 20).unwrap();
        for s in &h.series {
            assert!((s.density.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(h.get("fgs_misclassified").unwrap().density[12], 1.0);
        assert_eq!(h.mass_below("fgs", 0.5), Some(0.5));

        let empty = density_from_logs(&DecisionLog::default(), &[], 20).unwrap();
        assert_eq!(empty.series[0].count, 0);
        assert!(empty.series[0].density.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn csv_has_one_row_per_bin() {
        let h = density_from_logs(&log(&[0.2]), &[], 4).unwrap();
        assert_eq!(
            h.to_csv(),
            "bin_low,bin_high,clean_correct\n0,0.25,1\n0.25,0.5,0\n0.5,0.75,0\n0.75,1,0\n"
        );
    }
}
