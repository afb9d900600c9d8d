use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub balanced_accuracy: f64,
    pub ovo_auc: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Binary AUC by midranks: the probability that a random positive scores
/// above a random negative, ties counting one half.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// One-vs-one AUC averaged over class pairs, each pair contributing the mean
/// of its two directed AUCs. A two-class problem reduces to the plain AUC of
/// the second class's score.
fn ovo_auc(y: &[usize], scores: &Matrix, support: &[usize]) -> Result<f64> {
    let present: Vec<usize> = (0..support.len()).filter(|&c| support[c] > 0).collect();
    if present.len() < 2 {
        return Err(invalid("ROC-AUC needs at least two classes present"));
    }
    if support.len() == 2 {
        let s: Vec<f64> = scores.column(1).collect();
        let pos: Vec<bool> = y.iter().map(|&c| c == 1).collect();
        return Ok(binary_auc(&s, &pos).expect("both classes present"));
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for (a, &i) in present.iter().enumerate() {
        for &j in &present[a + 1..] {
            let rows: Vec<usize> = (0..y.len()).filter(|&r| y[r] == i || y[r] == j).collect();
            let pos: Vec<bool> = rows.iter().map(|&r| y[r] == i).collect();
            let si: Vec<f64> = rows.iter().map(|&r| scores.get(r, i)).collect();
            let sj: Vec<f64> = rows.iter().map(|&r| scores.get(r, j)).collect();
            let neg: Vec<bool> = pos.iter().map(|p| !p).collect();
            let aij = binary_auc(&si, &pos).expect("both present");
            let aji = binary_auc(&sj, &neg).expect("both present");
            total += (aij + aji) / 2.0;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Support-weighted precision/recall/F1, balanced accuracy, OVO ROC-AUC and
/// the confusion matrix for labels in `0..n_classes`.
pub fn classification_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    scores: &Matrix,
    n_classes: usize,
) -> Result<ClassificationMetrics> {
    let n = y_true.len();
    if y_pred.len() != n || scores.rows() != n {
        return Err(invalid(format!(
            "lengths differ: {n} true labels, {} predictions, {} score rows",
            y_pred.len(),
            scores.rows()
        )));
    }
    if n == 0 {
        return Err(invalid("no samples to evaluate"));
    }
    if scores.cols() != n_classes {
        return Err(invalid(format!(
            "{} score columns for {n_classes} classes",
            scores.cols()
        )));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(invalid(format!("unknown label {bad} (expected < {n_classes})")));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..n_classes).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let mut warnings = Vec::new();
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let precision = if predicted[c] == 0 {
                if support[c] > 0 {
                    warnings.push(format!("class {c}: no predictions, precision set to 0"));
                }
                0.0
            } else {
                tp / predicted[c] as f64
            };
            let recall = if support[c] == 0 { 0.0 } else { tp / support[c] as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect();
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / n as f64
    };
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let balanced_accuracy = present.iter().map(|m| m.recall).sum::<f64>() / present.len() as f64;
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / n as f64,
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        balanced_accuracy,
        ovo_auc: ovo_auc(y_true, scores, &support)?,
        confusion,
        per_class,
        warnings,
    })
}
