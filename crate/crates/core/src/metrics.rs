//! Evaluation metrics: confusion matrix, balanced accuracy, per-class
//! recall, and the evaluation report written after training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::StateLabel;
use crate::util::fmt_f64;

/// 3x3 class confusion counts; rows are true labels, columns predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Fraction of class `class` rows predicted correctly, or `None` when the
    /// class has no rows.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let total = self.row_total(class);
        (total > 0).then(|| self.counts[class][class] as f64 / total as f64)
    }

    /// Plain accuracy: diagonal over total.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..3).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }
}

/// Tally predictions against true labels. Codes must be 0, 1, or 2.
pub fn confusion_matrix(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LabelLengthMismatch {
            true_len: y_true.len(),
            pred_len: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t > 2 {
            return Err(Error::LabelOutOfRange(t));
        }
        if p > 2 {
            return Err(Error::LabelOutOfRange(p));
        }
        cm.counts[t as usize][p as usize] += 1;
    }
    Ok(cm)
}

/// Mean recall over the classes that actually appear. Unlike plain accuracy
/// this does not reward ignoring small classes: with class sizes 100/100/800
/// and only half the big class right, accuracy is 0.6 while balanced
/// accuracy is 5/6.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let recalls: Vec<f64> = (0..3).filter_map(|i| cm.recall(i)).collect();
    if recalls.is_empty() {
        return Err(Error::EmptyConfusion);
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Recall of the drowsy class, the safety-critical one.
pub fn drowsy_recall(cm: &ConfusionMatrix) -> Result<f64> {
    let class = StateLabel::Drowsy.code() as usize;
    cm.recall(class).ok_or(Error::NoDrowsySamples)
}

/// What produced an evaluation: classifier, split, features, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub classifier: String,
    pub paradigm: String,
    pub features: String,
    pub seed: u64,
}

/// Metrics of one train/test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Indexed by class code; `None` where the class has no test rows.
    pub per_class_recall: [Option<f64>; 3],
    pub drowsy_recall: Option<f64>,
    pub num_test_rows: u64,
    pub meta: RunMeta,
}

/// Build the full report for a prediction run.
pub fn evaluate(y_true: &[u8], y_pred: &[u8], meta: RunMeta) -> Result<EvalReport> {
    let confusion = confusion_matrix(y_true, y_pred)?;
    let balanced = balanced_accuracy(&confusion)?;
    let per_class_recall = [confusion.recall(0), confusion.recall(1), confusion.recall(2)];
    Ok(EvalReport {
        confusion,
        accuracy: confusion.accuracy(),
        balanced_accuracy: balanced,
        per_class_recall,
        drowsy_recall: per_class_recall[StateLabel::Drowsy.code() as usize],
        num_test_rows: confusion.total(),
        meta,
    })
}

impl EvalReport {
    /// Plain-text form: `key=value` lines followed by the confusion rows.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| fmt_f64(x)).unwrap_or_else(|| "n/a".into());
        let mut out = String::new();
        out.push_str(&format!("classifier={}\n", self.meta.classifier));
        out.push_str(&format!("paradigm={}\n", self.meta.paradigm));
        out.push_str(&format!("features={}\n", self.meta.features));
        out.push_str(&format!("seed={}\n", self.meta.seed));
        out.push_str(&format!("test_rows={}\n", self.num_test_rows));
        out.push_str(&format!("accuracy={}\n", fmt_f64(self.accuracy)));
        out.push_str(&format!("balanced_accuracy={}\n", fmt_f64(self.balanced_accuracy)));
        for (label, recall) in StateLabel::ALL.iter().zip(self.per_class_recall) {
            out.push_str(&format!("recall_{}={}\n", label.name(), opt(recall)));
        }
        out.push_str("confusion_true_rows_pred_cols=\n");
        for (label, row) in StateLabel::ALL.iter().zip(self.confusion.counts) {
            out.push_str(&format!("{},{},{},{}\n", label.name(), row[0], row[1], row[2]));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
