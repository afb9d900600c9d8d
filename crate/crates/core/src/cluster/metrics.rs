use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Cross-tabulation of two labelings over compacted label indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Contingency {
    /// `table[i][j]`: rows with true class `i` and predicted cluster `j`.
    pub table: Vec<Vec<usize>>,
    pub class_sizes: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub n: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

pub fn contingency(labels_true: &[usize], labels_pred: &[usize]) -> Result<Contingency> {
    if labels_true.len() != labels_pred.len() {
        return Err(invalid(format!(
            "label lengths differ: {} vs {}",
            labels_true.len(),
            labels_pred.len()
        )));
    }
    let (t, nc) = compact(labels_true);
    let (p, nk) = compact(labels_pred);
    let mut table = vec![vec![0usize; nk]; nc];
    let mut class_sizes = vec![0usize; nc];
    let mut cluster_sizes = vec![0usize; nk];
    for (&i, &j) in t.iter().zip(&p) {
        table[i][j] += 1;
        class_sizes[i] += 1;
        cluster_sizes[j] += 1;
    }
    Ok(Contingency {
        table,
        class_sizes,
        cluster_sizes,
        n: t.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub rand_index: f64,
    pub adjusted_rand: f64,
    pub adjusted_mutual_info: f64,
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mutual_info(c: &Contingency) -> f64 {
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (c.class_sizes[i] as f64 * c.cluster_sizes[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Expected mutual information under the hypergeometric permutation model.
fn expected_mutual_info(c: &Contingency) -> f64 {
    let n = c.n;
    let mut lnf = vec![0.0f64; n + 1];
    for k in 1..=n {
        lnf[k] = lnf[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &c.class_sizes {
        for &b in &c.cluster_sizes {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lnf[a] + lnf[b] + lnf[n - a] + lnf[n - b] - lnf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let lp = fixed - lnf[nij] - lnf[a - nij] - lnf[b - nij] - lnf[n + nij - a - b];
                emi += term * lp.exp();
            }
        }
    }
    emi
}

fn comb2(k: usize) -> i128 {
    let k = k as i128;
    k * (k - 1) / 2
}

impl ExternalScores {
    pub fn from_contingency(c: &Contingency) -> Self {
        let n = c.n as f64;
        let h_c = entropy(&c.class_sizes, n);
        let h_k = entropy(&c.cluster_sizes, n);
        let mi = mutual_info(c);
        let homogeneity = if h_c == 0.0 { 1.0 } else { (mi / h_c).clamp(0.0, 1.0) };
        let completeness = if h_k == 0.0 { 1.0 } else { (mi / h_k).clamp(0.0, 1.0) };
        let v_measure = if homogeneity + completeness == 0.0 {
            0.0
        } else {
            2.0 * homogeneity * completeness / (homogeneity + completeness)
        };

        // pair counts in exact integers; only the final ratios round
        let sum_ij: i128 = c.table.iter().flatten().map(|&v| comb2(v)).sum();
        let sum_a: i128 = c.class_sizes.iter().map(|&v| comb2(v)).sum();
        let sum_b: i128 = c.cluster_sizes.iter().map(|&v| comb2(v)).sum();
        let total = comb2(c.n);
        let rand_index = if total == 0 {
            1.0
        } else {
            (total + 2 * sum_ij - sum_a - sum_b) as f64 / total as f64
        };
        let num = 2 * (sum_ij * total - sum_a * sum_b);
        let den = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
        let adjusted_rand = if den == 0 { 1.0 } else { num as f64 / den as f64 };

        let emi = expected_mutual_info(c);
        let denom = 0.5 * (h_c + h_k) - emi;
        // both labelings a single cluster or both all singletons
        let adjusted_mutual_info = if denom.abs() <= 1e-12 * (1.0 + h_c.max(h_k)) {
            1.0
        } else {
            (mi - emi) / denom
        };
        Self {
            homogeneity,
            completeness,
            v_measure,
            rand_index,
            adjusted_rand,
            adjusted_mutual_info,
        }
    }
}

/// Homogeneity, completeness, V-measure, Rand index, ARI and AMI.
pub fn external_metrics(labels_true: &[usize], labels_pred: &[usize]) -> Result<ExternalScores> {
    let c = contingency(labels_true, labels_pred)?;
    if c.n < 2 {
        return Err(invalid("external metrics need at least 2 labels"));
    }
    Ok(ExternalScores::from_contingency(&c))
}
