use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{classification_metrics, ClassificationMetrics};
use super::{fit, ModelSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Validation folds whose per-class counts differ from `count / folds` by
/// less than one. Each class is shuffled and dealt round-robin, continuing
/// from where the previous class stopped so fold sizes also stay level.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, seed_: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(crate::error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        if c >= n_classes {
            return Err(crate::error::invalid(format!("label {c} outside 0..{n_classes}")));
        }
        by_class[c].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < folds {
            return Err(Error::ClassTooSmall {
                class: c.to_string(),
                count: members.len(),
                folds,
            });
        }
    }
    let mut rng = seed::rng(seed_);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            out[next].push(i);
            next = (next + 1) % folds;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub balanced_accuracy: f64,
    pub ovo_auc: f64,
}

impl MetricSummary {
    fn of(m: &ClassificationMetrics) -> Self {
        Self {
            accuracy: m.accuracy,
            weighted_precision: m.weighted_precision,
            weighted_recall: m.weighted_recall,
            weighted_f1: m.weighted_f1,
            balanced_accuracy: m.balanced_accuracy,
            ovo_auc: m.ovo_auc,
        }
    }

    fn to_array(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.weighted_precision,
            self.weighted_recall,
            self.weighted_f1,
            self.balanced_accuracy,
            self.ovo_auc,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Self {
            accuracy: a[0],
            weighted_precision: a[1],
            weighted_recall: a[2],
            weighted_f1: a[3],
            balanced_accuracy: a[4],
            ovo_auc: a[5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub metrics: ClassificationMetrics,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub spec: ModelSpec,
    pub classes: Vec<String>,
    pub cv_seed: u64,
    pub folds: Vec<FoldReport>,
    pub mean: MetricSummary,
    /// Population standard deviation across folds.
    pub std: MetricSummary,
    /// Validation confusion matrices summed over folds.
    pub confusion: Vec<Vec<usize>>,
    /// Held-out evaluation of a model refitted on all training rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<ClassificationMetrics>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Scores of `model` widened to all `n_classes` columns.
pub(crate) fn full_scores(model: &super::TrainedModel, x: &Matrix, n_classes: usize) -> Result<Matrix> {
    let s = model.predict_scores(x)?;
    if model.classes.len() == n_classes {
        return Ok(s);
    }
    let mut out = Matrix::zeros(s.rows(), n_classes);
    for i in 0..s.rows() {
        for (c, &label) in model.classes.iter().enumerate() {
            out.set(i, label, s.get(i, c));
        }
    }
    Ok(out)
}

/// Stratified k-fold cross-validation of one model specification.
///
/// Folds run in parallel; results are kept in fold order.
pub fn stratified_kfold_cv(
    spec: &ModelSpec,
    x: &Matrix,
    y: &[usize],
    classes: &[String],
    folds: usize,
    seed_: u64,
) -> Result<ClassificationReport> {
    spec.validate()?;
    let start = Instant::now();
    let k = classes.len();
    let parts = stratified_folds(y, k, folds, seed_).map_err(|e| match e {
        Error::ClassTooSmall { class, count, folds } => Error::ClassTooSmall {
            class: class
                .parse::<usize>()
                .ok()
                .and_then(|c| classes.get(c).cloned())
                .unwrap_or(class),
            count,
            folds,
        },
        other => other,
    })?;
    let reports: Vec<Result<FoldReport>> = parts
        .par_iter()
        .enumerate()
        .map(|(f, val)| {
            let t0 = Instant::now();
            let mut in_val = vec![false; y.len()];
            val.iter().for_each(|&i| in_val[i] = true);
            let train: Vec<usize> = (0..y.len()).filter(|&i| !in_val[i]).collect();
            let ytr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let model = fit(spec, &x.select_rows(&train), &ytr)?;
            let xv = x.select_rows(val);
            let yv: Vec<usize> = val.iter().map(|&i| y[i]).collect();
            let pred = model.predict(&xv)?;
            let scores = full_scores(&model, &xv, k)?;
            Ok(FoldReport {
                fold: f,
                n_train: train.len(),
                n_validation: val.len(),
                metrics: classification_metrics(&yv, &pred, &scores, k)?,
                wall_seconds: t0.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let folds_out: Vec<FoldReport> = reports.into_iter().collect::<Result<_>>()?;
    let arrays: Vec<[f64; 6]> = folds_out
        .iter()
        .map(|f| MetricSummary::of(&f.metrics).to_array())
        .collect();
    let nf = arrays.len() as f64;
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for j in 0..6 {
        mean[j] = arrays.iter().map(|a| a[j]).sum::<f64>() / nf;
        std[j] = (arrays.iter().map(|a| (a[j] - mean[j]).powi(2)).sum::<f64>() / nf).sqrt();
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for f in &folds_out {
        for (r, row) in f.metrics.confusion.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                confusion[r][c] += v;
            }
        }
    }
    Ok(ClassificationReport {
        spec: spec.clone(),
        classes: classes.to_vec(),
        cv_seed: seed_,
        folds: folds_out,
        mean: MetricSummary::from_array(mean),
        std: MetricSummary::from_array(std),
        confusion,
        test: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

impl ClassificationReport {
    /// Refits on all of `(x, y)` and scores the held-out set.
    pub fn evaluate_test(&mut self, x: &Matrix, y: &[usize], x_test: &Matrix, y_test: &[usize]) -> Result<()> {
        let model = fit(&self.spec, x, y)?;
        let pred = model.predict(x_test)?;
        let scores = full_scores(&model, x_test, self.classes.len())?;
        self.test = Some(classification_metrics(y_test, &pred, &scores, self.classes.len())?);
        Ok(())
    }

    /// Summed validation confusion matrix with class-name headers.
    pub fn write_confusion_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        write_confusion(&self.classes, &self.confusion, out)
    }
}

pub(crate) fn write_confusion<W: std::io::Write>(classes: &[String], m: &[Vec<usize>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(classes.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in classes.iter().zip(m) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::Algorithm;
    use crate::synthetic::{gaussian_blobs, BlobSpec};

    #[test]
    fn exact_fold_counts() {
        let mut y = vec![0usize; 60];
        y.extend(vec![1; 30]);
        y.extend(vec![2; 10]);
        let folds = stratified_folds(&y, 3, 5, 1).unwrap();
        for f in &folds {
            let count = |c| f.iter().filter(|&&i| y[i] == c).count();
            assert_eq!([count(0), count(1), count(2)], [12, 6, 2]);
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn small_class_is_named() {
        let y = [0, 0, 0, 1, 1];
        let x = Matrix::zeros(5, 1);
        let err = stratified_kfold_cv(
            &ModelSpec::new(Algorithm::Knn),
            &x,
            &y,
            &["big".into(), "tiny".into()],
            3,
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("tiny"), "{err}");
    }

    #[test]
    fn report_shape() {
        let (x, y) = gaussian_blobs(&BlobSpec::isotropic(vec![50, 30, 20], 3, 6.0, 1.0), 1);
        let classes: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let spec = ModelSpec::new(Algorithm::GaussianNb);
        let r = stratified_kfold_cv(&spec, &x, &y, &classes, 5, 3).unwrap();
        assert_eq!(r.folds.len(), 5);
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, 100);
        assert!(r.mean.weighted_f1 > 0.9);
        let again = stratified_kfold_cv(&spec, &x, &y, &classes, 5, 3).unwrap();
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
        let mut buf = Vec::new();
        r.write_confusion_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("true\\predicted,a,b,c"));
    }
}
