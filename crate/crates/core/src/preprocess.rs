//! Model-ready matrices: split, median imputation, standardization and
//! random oversampling.
//!
//! Transform statistics are always fitted on training rows only and then
//! applied unchanged to the test rows.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ingest::{RecordSet, SubclassLabel};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    EncodedCategorical,
}

impl ColumnKind {
    /// Binary indicator columns keep their 0/1 coding.
    pub fn is_scaled(self) -> bool {
        !matches!(self, ColumnKind::Binary)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Numeric features with per-column metadata. Missing values are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub columns: Vec<ColumnMeta>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, columns: Vec<ColumnMeta>, row_ids: Vec<String>) -> Result<Self> {
        if columns.len() != values.cols() {
            return Err(invalid(format!(
                "{} column descriptions for {} columns",
                columns.len(),
                values.cols()
            )));
        }
        if row_ids.len() != values.rows() {
            return Err(invalid(format!("{} row ids for {} rows", row_ids.len(), values.rows())));
        }
        for (j, c) in columns.iter().enumerate() {
            if c.kind == ColumnKind::Binary && values.column(j).any(|v| !v.is_nan() && v != 0.0 && v != 1.0) {
                return Err(invalid(format!("binary column {} holds a non-0/1 value", c.name)));
            }
        }
        Ok(Self {
            values,
            columns,
            row_ids,
        })
    }

    /// Every value as a continuous column, with generated row ids.
    pub fn continuous(values: Matrix) -> Self {
        let columns = (0..values.cols())
            .map(|j| ColumnMeta::new(format!("x{}", j + 1), ColumnKind::Continuous))
            .collect();
        let row_ids = (0..values.rows()).map(|i| format!("r{i}")).collect();
        Self {
            values,
            columns,
            row_ids,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx),
            columns: self.columns.clone(),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

/// Features plus class indices into `classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledData {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl LabeledData {
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }
}

/// Builds the feature matrix for records whose subclass is in `subclasses`.
///
/// Columns are the descriptor columns (continuous), the four taxa flags and
/// `contains_sugar` (binary), and the parent-class code (encoded
/// categorical). Classes are ordered by subclass name.
pub fn labeled_data(rs: &RecordSet, subclasses: &BTreeSet<SubclassLabel>) -> Result<LabeledData> {
    let present: BTreeSet<SubclassLabel> = rs
        .records
        .iter()
        .filter_map(|r| r.subclass)
        .filter(|s| subclasses.contains(s))
        .collect();
    let classes: Vec<SubclassLabel> = present.into_iter().collect();
    let mut columns: Vec<ColumnMeta> = rs
        .descriptor_columns
        .iter()
        .map(|c| ColumnMeta::new(c.as_str(), ColumnKind::Continuous))
        .collect();
    if rs.has_taxa_source {
        for t in ["taxa_plants", "taxa_marine", "taxa_bacteria", "taxa_fungi"] {
            columns.push(ColumnMeta::new(t, ColumnKind::Binary));
        }
    }
    if rs.has_sugar_source {
        columns.push(ColumnMeta::new("contains_sugar", ColumnKind::Binary));
    }
    let has_parent = !rs.parent_codes.is_empty();
    if has_parent {
        columns.push(ColumnMeta::new("parent_class_code", ColumnKind::EncodedCategorical));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut row_ids = Vec::new();
    for r in &rs.records {
        let Some(label) = r.subclass.and_then(|s| classes.iter().position(|c| *c == s)) else {
            continue;
        };
        data.extend(r.descriptors.iter().map(|v| v.unwrap_or(f64::NAN)));
        if rs.has_taxa_source {
            data.extend(r.taxa.as_array().map(f64::from));
        }
        if rs.has_sugar_source {
            data.push(r.contains_sugar.map_or(f64::NAN, f64::from));
        }
        if has_parent {
            data.push(r.parent_class_code.map_or(f64::NAN, f64::from));
        }
        labels.push(label);
        row_ids.push(r.id.clone());
    }
    let values = Matrix::from_vec(labels.len(), columns.len(), data)?;
    Ok(LabeledData {
        features: FeatureMatrix::new(values, columns, row_ids)?,
        labels,
        classes: classes.iter().map(|c| c.name().to_string()).collect(),
    })
}

/// Fitted per-column statistics, emitted for audit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub columns: Vec<ColumnTransform>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub kind: ColumnKind,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: LabeledData,
    pub test: LabeledData,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub transform: FittedTransform,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Uniformly shuffled split with `round(ratio · n)` training rows.
///
/// Both partitions keep their rows in source order.
pub fn train_test_split(data: &LabeledData, ratio: f64, seed: u64) -> Result<SplitDataset> {
    let n = data.features.n_rows();
    if n < 2 {
        return Err(invalid(format!("cannot split {n} rows")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    if data.labels.len() != n {
        return Err(invalid("labels length differs from row count"));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let mut train_indices = perm[..n_train].to_vec();
    let mut test_indices = perm[n_train..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    let transform = FittedTransform {
        columns: data
            .features
            .columns
            .iter()
            .map(|c| ColumnTransform {
                name: c.name.clone(),
                kind: c.kind,
                median: None,
                mean: None,
                std: None,
            })
            .collect(),
    };
    Ok(SplitDataset {
        train: data.select_rows(&train_indices),
        test: data.select_rows(&test_indices),
        train_indices,
        test_indices,
        transform,
        seed,
        warnings: Vec::new(),
    })
}

/// Median of the non-missing values; the mean of the middle pair for even counts.
pub fn median(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    })
}

/// Per-column fill values fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianImputer {
    pub fill: Vec<f64>,
    /// Columns that were entirely missing at fit time (filled with 0).
    pub empty_columns: Vec<usize>,
}

impl MedianImputer {
    pub fn fit(x: &Matrix) -> Self {
        let mut fill = Vec::with_capacity(x.cols());
        let mut empty_columns = Vec::new();
        for j in 0..x.cols() {
            match median(x.column(j)) {
                Some(m) => fill.push(m),
                None => {
                    fill.push(0.0);
                    empty_columns.push(j);
                }
            }
        }
        Self { fill, empty_columns }
    }

    pub fn apply(&self, x: &mut Matrix) {
        for i in 0..x.rows() {
            for (v, f) in x.row_mut(i).iter_mut().zip(&self.fill) {
                if v.is_nan() {
                    *v = *f;
                }
            }
        }
    }
}

/// Standardization with population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub scaled: Vec<bool>,
}

impl StandardScaler {
    pub fn fit(x: &Matrix, kinds: &[ColumnKind]) -> Self {
        let n = x.rows().max(1) as f64;
        let mean = x.column_means();
        let std = (0..x.cols())
            .map(|j| (x.column(j).map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Self {
            mean,
            std,
            scaled: kinds.iter().map(|k| k.is_scaled()).collect(),
        }
    }

    /// Columns with zero spread are only centered.
    pub fn apply(&self, x: &mut Matrix) {
        for i in 0..x.rows() {
            for (j, v) in x.row_mut(i).iter_mut().enumerate() {
                if !self.scaled[j] {
                    continue;
                }
                *v -= self.mean[j];
                if self.std[j] > 0.0 {
                    *v /= self.std[j];
                }
            }
        }
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.std.len())
            .filter(|&j| self.scaled[j] && self.std[j] == 0.0)
            .collect()
    }
}

fn kinds(fm: &FeatureMatrix) -> Vec<ColumnKind> {
    fm.columns.iter().map(|c| c.kind).collect()
}

/// Fills every missing value in train and test with the train-column median.
pub fn fit_apply_imputer(mut ds: SplitDataset) -> SplitDataset {
    let imputer = MedianImputer::fit(&ds.train.features.values);
    imputer.apply(&mut ds.train.features.values);
    imputer.apply(&mut ds.test.features.values);
    for &j in &imputer.empty_columns {
        let msg = format!(
            "column {} has no training values; imputed with 0",
            ds.transform.columns[j].name
        );
        log::warn!("{msg}");
        ds.warnings.push(msg);
    }
    for (c, f) in ds.transform.columns.iter_mut().zip(&imputer.fill) {
        c.median = Some(*f);
    }
    ds
}

/// Standardizes non-binary columns with train mean and population std.
pub fn fit_apply_scaler(mut ds: SplitDataset) -> SplitDataset {
    let scaler = StandardScaler::fit(&ds.train.features.values, &kinds(&ds.train.features));
    scaler.apply(&mut ds.train.features.values);
    scaler.apply(&mut ds.test.features.values);
    for &j in &scaler.degenerate_columns() {
        let msg = format!(
            "column {} is constant in training data; centered only",
            ds.transform.columns[j].name
        );
        log::warn!("{msg}");
        ds.warnings.push(msg);
    }
    for (j, c) in ds.transform.columns.iter_mut().enumerate() {
        if scaler.scaled[j] {
            c.mean = Some(scaler.mean[j]);
            c.std = Some(scaler.std[j]);
        }
    }
    ds
}

/// Imputes and standardizes a whole matrix with statistics fitted on itself.
///
/// Used where no held-out data exists (the clustering benchmark).
pub fn impute_and_scale(fm: &FeatureMatrix) -> (FeatureMatrix, FittedTransform) {
    let mut out = fm.clone();
    let imputer = MedianImputer::fit(&out.values);
    imputer.apply(&mut out.values);
    let scaler = StandardScaler::fit(&out.values, &kinds(&out));
    scaler.apply(&mut out.values);
    let transform = FittedTransform {
        columns: fm
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| ColumnTransform {
                name: c.name.clone(),
                kind: c.kind,
                median: Some(imputer.fill[j]),
                mean: scaler.scaled[j].then_some(scaler.mean[j]),
                std: scaler.scaled[j].then_some(scaler.std[j]),
            })
            .collect(),
    };
    (out, transform)
}

/// Row indices of a class-balanced resample.
///
/// The first `n` entries are `0..n`; duplicates of minority-class rows,
/// drawn with replacement, follow in ascending class order until every
/// class reaches the majority count.
pub fn random_oversample_indices(labels: &[usize], seed: u64) -> Vec<usize> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = seed::rng(seed);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for members in by_class.iter().filter(|m| !m.is_empty()) {
        for _ in members.len()..target {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    out
}

/// Balances a labeled matrix by duplicating minority-class rows.
pub fn random_oversample(data: &LabeledData, seed: u64) -> LabeledData {
    data.select_rows(&random_oversample_indices(&data.labels, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(rows: &[&[f64]], labels: &[usize], kinds: &[ColumnKind]) -> LabeledData {
        let values = Matrix::from_rows(rows).unwrap();
        let columns = kinds
            .iter()
            .enumerate()
            .map(|(j, k)| ColumnMeta::new(format!("c{j}"), *k))
            .collect();
        let ids = (0..rows.len()).map(|i| format!("m{i}")).collect();
        LabeledData {
            features: FeatureMatrix::new(values, columns, ids).unwrap(),
            labels: labels.to_vec(),
            classes: vec!["a".into(), "b".into()],
        }
    }

    fn single_column(n: usize) -> LabeledData {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        labeled(&refs, &vec![0; n], &[ColumnKind::Continuous])
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = single_column(100);
        let a = train_test_split(&d, 0.75, 7).unwrap();
        assert_eq!((a.train_indices.len(), a.test_indices.len()), (75, 25));
        let b = train_test_split(&d, 0.75, 7).unwrap();
        assert_eq!(a.train_indices, b.train_indices);
        let c = train_test_split(&d, 0.75, 8).unwrap();
        assert_ne!(a.train_indices, c.train_indices);
        let mut all: Vec<usize> = a.train_indices.iter().chain(&a.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(train_test_split(&single_column(1), 0.75, 1).is_err());
        assert!(train_test_split(&d, 1.0, 1).is_err());
    }

    #[test]
    fn split_rounding_full_terpene_set() {
        // 0.75 · 59833 = 44874.75
        let d = single_column(59833);
        let s = train_test_split(&d, 0.75, 42).unwrap();
        assert_eq!(s.train_indices.len(), 44875);
        assert_eq!(s.test_indices.len(), 14958);
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median([1.0, 2.0, f64::NAN, 4.0].into_iter()), Some(2.0));
        assert_eq!(median([1.0, 2.0, 3.0, 4.0].into_iter()), Some(2.5));
        assert_eq!(median([f64::NAN].into_iter()), None);
    }

    fn split_of(train: &[&[f64]], test: &[&[f64]], kinds: &[ColumnKind]) -> SplitDataset {
        let mut rows = train.to_vec();
        rows.extend_from_slice(test);
        let labels = vec![0; rows.len()];
        let d = labeled(&rows, &labels, kinds);
        let train_indices: Vec<usize> = (0..train.len()).collect();
        let test_indices: Vec<usize> = (train.len()..rows.len()).collect();
        let mut s = train_test_split(&d, 0.5, 0).unwrap();
        s.train = d.select_rows(&train_indices);
        s.test = d.select_rows(&test_indices);
        s.train_indices = train_indices;
        s.test_indices = test_indices;
        s
    }

    #[test]
    fn imputer_uses_train_median() {
        let nan = f64::NAN;
        let s = split_of(&[&[1.0], &[2.0], &[nan], &[4.0]], &[&[nan]], &[ColumnKind::Continuous]);
        let s = fit_apply_imputer(s);
        assert_eq!(s.train.features.values.get(2, 0), 2.0);
        assert_eq!(s.test.features.values.get(0, 0), 2.0);

        let s = split_of(&[&[1.0], &[2.0], &[3.0], &[4.0]], &[&[nan]], &[ColumnKind::Continuous]);
        let s = fit_apply_imputer(s);
        assert_eq!(s.test.features.values.get(0, 0), 2.5);
        assert_eq!(s.transform.columns[0].median, Some(2.5));
    }

    #[test]
    fn imputer_identity_without_missing() {
        let s = split_of(
            &[&[1.0, 5.0], &[2.0, 6.0]],
            &[&[3.0, 7.0]],
            &[ColumnKind::Continuous; 2],
        );
        let before = s.clone();
        let s = fit_apply_imputer(s);
        assert_eq!(s.train.features, before.train.features);
        assert_eq!(s.test.features, before.test.features);
    }

    #[test]
    fn all_missing_column_warns() {
        let nan = f64::NAN;
        let s = split_of(&[&[nan], &[nan]], &[&[nan]], &[ColumnKind::Continuous]);
        let s = fit_apply_imputer(s);
        assert_eq!(s.test.features.values.get(0, 0), 0.0);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn scaler_cases() {
        let s = split_of(&[&[0.0], &[2.0]], &[&[4.0]], &[ColumnKind::Continuous]);
        let s = fit_apply_scaler(s);
        assert_eq!(s.train.features.values.column(0).collect::<Vec<_>>(), vec![-1.0, 1.0]);
        assert_eq!(s.test.features.values.get(0, 0), 3.0);

        let s = split_of(&[&[0.0], &[1.0], &[1.0]], &[], &[ColumnKind::Binary]);
        let s = fit_apply_scaler(s);
        assert_eq!(
            s.train.features.values.column(0).collect::<Vec<_>>(),
            vec![0.0, 1.0, 1.0]
        );
        assert_eq!(s.transform.columns[0].mean, None);

        let s = split_of(&[&[5.0], &[5.0], &[5.0]], &[], &[ColumnKind::Continuous]);
        let s = fit_apply_scaler(s);
        assert_eq!(s.train.features.values.column(0).collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn binary_column_validation() {
        let values = Matrix::from_rows(&[[2.0]]).unwrap();
        let r = FeatureMatrix::new(values, vec![ColumnMeta::new("b", ColumnKind::Binary)], vec!["x".into()]);
        assert!(r.is_err());
    }

    #[test]
    fn oversample_counts() {
        let labels: Vec<usize> = [vec![0; 10], vec![1; 4]].concat();
        let idx = random_oversample_indices(&labels, 3);
        assert_eq!(idx.len(), 20);
        assert_eq!(&idx[..14], &(0..14).collect::<Vec<_>>()[..]);
        assert!(idx[14..].iter().all(|&i| labels[i] == 1));

        let balanced = vec![0, 1, 0, 1];
        assert_eq!(random_oversample_indices(&balanced, 3), vec![0, 1, 2, 3]);
    }

    #[test]
    fn oversample_subclass_counts() {
        let labels: Vec<usize> = [vec![0; 13245], vec![1; 11814], vec![2; 5115]].concat();
        let idx = random_oversample_indices(&labels, 42);
        let mut counts = [0usize; 3];
        for &i in &idx {
            counts[labels[i]] += 1;
        }
        assert_eq!(counts, [13245; 3]);
    }

    proptest! {
        #[test]
        fn scaled_columns_are_standard(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let s = split_of(&refs, &[], &[ColumnKind::Continuous; 3]);
            let s = fit_apply_scaler(s);
            let x = &s.train.features.values;
            let n = x.rows() as f64;
            for j in 0..3 {
                let mean = x.column(j).sum::<f64>() / n;
                let std = (x.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                let degenerate = s.transform.columns[j].std == Some(0.0);
                prop_assert!(degenerate || (std - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn transform_ignores_test_rows(
            train in prop::collection::vec(-50f64..50.0, 4..30),
            test_a in prop::collection::vec(-50f64..50.0, 1..10),
            test_b in prop::collection::vec(-50f64..50.0, 1..10),
        ) {
            let tr: Vec<[f64; 1]> = train.iter().map(|v| [*v]).collect();
            let ta: Vec<[f64; 1]> = test_a.iter().map(|v| [*v]).collect();
            let tb: Vec<[f64; 1]> = test_b.iter().map(|v| [*v]).collect();
            fn r(v: &[[f64; 1]]) -> Vec<&[f64]> {
                v.iter().map(|x| x.as_slice()).collect()
            }
            let fit = |test: &Vec<[f64; 1]>| {
                fit_apply_scaler(fit_apply_imputer(split_of(&r(&tr), &r(test), &[ColumnKind::Continuous])))
                    .transform
            };
            prop_assert_eq!(fit(&ta), fit(&tb));
        }

        #[test]
        fn oversample_balances(labels in prop::collection::vec(0usize..4, 2..60), seed in any::<u64>()) {
            let idx = random_oversample_indices(&labels, seed);
            let mut counts = [0usize; 4];
            for &i in &idx { counts[labels[i]] += 1; }
            let max = *counts.iter().max().unwrap();
            prop_assert!(counts.iter().all(|&c| c == 0 || c == max));
            prop_assert_eq!(&idx[..labels.len()], &(0..labels.len()).collect::<Vec<_>>()[..]);
        }
    }
}
