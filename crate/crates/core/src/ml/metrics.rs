use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Label;

pub const N_CLASSES: usize = 4;

/// Counts with rows = actual and columns = predicted, in `Label::ALL` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; N_CLASSES]; N_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<()> {
        if actual >= N_CLASSES || predicted >= N_CLASSES {
            return Err(Error::domain(format!(
                "class index out of range: actual {actual}, predicted {predicted}"
            )));
        }
        self.counts[actual][predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for r in 0..N_CLASSES {
            for c in 0..N_CLASSES {
                self.counts[r][c] += other.counts[r][c];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

/// Confusion over class indices.
pub fn confusion(actual: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch { expected: actual.len(), got: predicted.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (&a, &p) in actual.iter().zip(predicted) {
        cm.record(a, p)?;
    }
    Ok(cm)
}

pub fn confusion_labels(actual: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    let idx = |v: &[Label]| v.iter().map(|l| l.index()).collect::<Vec<_>>();
    confusion(&idx(actual), &idx(predicted))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// `cm[c][c] / row_c`.
    pub recall: [f64; N_CLASSES],
    /// `cm[c][c] / col_c`.
    pub precision: [f64; N_CLASSES],
    /// False where the row sum was zero and the recall was set to 0.
    pub recall_defined: [bool; N_CLASSES],
    pub precision_defined: [bool; N_CLASSES],
    pub macro_recall: f64,
    pub macro_precision: f64,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InsufficientData("empty confusion matrix".into()));
    }
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, false) } else { (num as f64 / den as f64, true) };
    let mut recall = [0.0; N_CLASSES];
    let mut precision = [0.0; N_CLASSES];
    let mut recall_defined = [false; N_CLASSES];
    let mut precision_defined = [false; N_CLASSES];
    for c in 0..N_CLASSES {
        (recall[c], recall_defined[c]) = ratio(cm.counts[c][c], cm.row_sum(c));
        (precision[c], precision_defined[c]) = ratio(cm.counts[c][c], cm.col_sum(c));
    }
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        recall,
        precision,
        recall_defined,
        precision_defined,
        macro_recall: recall.iter().sum::<f64>() / N_CLASSES as f64,
        macro_precision: precision.iter().sum::<f64>() / N_CLASSES as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_identity() {
        let a = [0, 1, 2, 3, 3, 2];
        let cm = confusion(&a, &a).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    assert_eq!(cm.counts[r][c], 0);
                }
            }
        }
        let m = metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.recall.iter().chain(&m.precision).all(|&v| v == 1.0));
    }

    #[test]
    fn uniform_confusion() {
        let cm = ConfusionMatrix::from_counts([[5; 4]; 4]);
        let m = metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 0.25);
        assert!(m.recall.iter().chain(&m.precision).all(|&v| v == 0.25));
    }

    #[test]
    fn all_rest_predictions() {
        let actual: Vec<usize> = (0..400).map(|i| i % 4).collect();
        let cm = confusion(&actual, &vec![0; 400]).unwrap();
        let m = metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 0.25);
        assert_eq!(m.recall[0], 1.0);
        assert!(!m.precision_defined[1] && m.precision[1] == 0.0);
    }

    #[test]
    fn errors() {
        assert!(confusion(&[0, 1], &[0]).is_err());
        assert!(confusion(&[4], &[0]).is_err());
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn accuracy_matches_direct_match_rate() {
        let a: Vec<usize> = (0..97).map(|i| (i * 7) % 4).collect();
        let p: Vec<usize> = (0..97).map(|i| (i * 5 + 1) % 4).collect();
        let direct = a.iter().zip(&p).filter(|(x, y)| x == y).count() as f64 / 97.0;
        assert_eq!(metrics(&confusion(&a, &p).unwrap()).unwrap().accuracy, direct);
    }
}
