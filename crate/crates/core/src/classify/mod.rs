//! Subclass classifiers, stratified cross-validation, multiclass metrics and
//! randomized hyperparameter search.

mod cv;
mod forest;
mod gbdt;
mod knn;
mod metrics;
mod mlp;
mod naive_bayes;
mod search;
mod space;

pub use cv::{stratified_folds, stratified_kfold_cv, ClassificationReport, FoldReport, MetricSummary};
pub use forest::{DecisionTree, ForestParams, MaxFeatures, RandomForest};
pub use gbdt::{Gbdt, GbdtParams};
pub use knn::{Knn, KnnParams};
pub use metrics::{binary_auc, classification_metrics, ClassMetrics, ClassificationMetrics};
pub use mlp::{Mlp, MlpParams};
pub use naive_bayes::{GaussianNb, NbParams};
pub use search::{randomized_search, SearchCandidate, SearchResult};
pub use space::{declared_space, default_search_space, Domain, ParamSpace};

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Knn,
    GaussianNb,
    RandomForest,
    Gbdt,
    Mlp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Knn,
        Algorithm::GaussianNb,
        Algorithm::RandomForest,
        Algorithm::Gbdt,
        Algorithm::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::GaussianNb => "gaussian_nb",
            Algorithm::RandomForest => "random_forest",
            Algorithm::Gbdt => "gbdt",
            Algorithm::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "rf" => return Ok(Algorithm::RandomForest),
            "nb" => return Ok(Algorithm::GaussianNb),
            "lightgbm" => return Ok(Algorithm::Gbdt),
            _ => {}
        }
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| invalid(format!("unknown algorithm '{s}'")))
    }
}

/// An algorithm plus hyperparameter overrides; unset names take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl ModelSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            params: BTreeMap::new(),
            seed: default_seed(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks every name and value against the algorithm's declared space.
    pub fn validate(&self) -> Result<()> {
        let space = declared_space(self.algorithm);
        for (name, value) in &self.params {
            let domain = space.0.get(name).ok_or_else(|| {
                invalid(format!(
                    "{} has no hyperparameter '{name}' (known: {})",
                    self.algorithm,
                    space.0.keys().cloned().collect::<Vec<_>>().join(", ")
                ))
            })?;
            if !domain.contains(value) {
                return Err(invalid(format!(
                    "{}: {name} = {value} is outside {domain}",
                    self.algorithm
                )));
            }
        }
        Ok(())
    }

    fn typed<P: DeserializeOwned>(&self) -> Result<P> {
        self.validate()?;
        let map: serde_json::Map<String, serde_json::Value> =
            self.params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| invalid(format!("{} hyperparameters: {e}", self.algorithm)))
    }
}

/// Fitted state of one algorithm.
#[derive(Clone, Debug)]
pub enum FittedModel {
    Knn(Knn),
    GaussianNb(GaussianNb),
    RandomForest(RandomForest),
    Gbdt(Gbdt),
    Mlp(Mlp),
}

/// A fitted classifier. Read-only after fit.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub algorithm: Algorithm,
    /// Training labels present, ascending; score column `c` is `classes[c]`.
    pub classes: Vec<usize>,
    pub n_features: usize,
    pub model: FittedModel,
}

pub(crate) fn check_features(x: &Matrix) -> Result<()> {
    if !x.all_finite() {
        return Err(invalid("features contain missing or non-finite values"));
    }
    Ok(())
}

/// Index of the largest value; ties → smallest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// In-place softmax of one row.
pub(crate) fn softmax(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Trains `spec.algorithm` on rows of `x` with labels `y`.
pub fn fit(spec: &ModelSpec, x: &Matrix, y: &[usize]) -> Result<TrainedModel> {
    if x.rows() != y.len() {
        return Err(invalid(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    check_features(x)?;
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(invalid("training labels contain a single class"));
    }
    let compact: Vec<usize> = y
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    let m = classes.len();
    let model = match spec.algorithm {
        Algorithm::Knn => FittedModel::Knn(Knn::fit(&spec.typed()?, x, &compact, m)?),
        Algorithm::GaussianNb => FittedModel::GaussianNb(GaussianNb::fit(&spec.typed()?, x, &compact, m)?),
        Algorithm::RandomForest => {
            FittedModel::RandomForest(RandomForest::fit(&spec.typed()?, x, &compact, m, spec.seed)?)
        }
        Algorithm::Gbdt => FittedModel::Gbdt(Gbdt::fit(&spec.typed()?, x, &compact, m)?),
        Algorithm::Mlp => FittedModel::Mlp(Mlp::fit(&spec.typed()?, x, &compact, m, spec.seed)?),
    };
    Ok(TrainedModel {
        algorithm: spec.algorithm,
        classes,
        n_features: x.cols(),
        model,
    })
}

impl TrainedModel {
    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(invalid(format!(
                "model was trained on {} columns, got {}",
                self.n_features,
                x.cols()
            )));
        }
        check_features(x)
    }

    /// Per-class probabilities, one row per input row, columns in `classes` order.
    pub fn predict_scores(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        Ok(match &self.model {
            FittedModel::Knn(m) => m.scores(x),
            FittedModel::GaussianNb(m) => m.scores(x),
            FittedModel::RandomForest(m) => m.scores(x),
            FittedModel::Gbdt(m) => m.scores(x),
            FittedModel::Mlp(m) => m.scores(x),
        })
    }

    /// Label of the highest score (ties → smallest class).
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let s = self.predict_scores(x)?;
        Ok(s.iter_rows().map(|r| self.classes[argmax(r)]).collect())
    }
}

pub fn predict(model: &TrainedModel, x: &Matrix) -> Result<Vec<usize>> {
    model.predict(x)
}

pub fn predict_scores(model: &TrainedModel, x: &Matrix) -> Result<Matrix> {
    model.predict_scores(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_blobs, BlobSpec};

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(Algorithm::Knn).with("k", 3).validate().is_ok());
        assert!(ModelSpec::new(Algorithm::Knn).with("k", 0).validate().is_err());
        assert!(ModelSpec::new(Algorithm::Knn).with("trees", 3).validate().is_err());
        assert!(ModelSpec::new(Algorithm::Gbdt)
            .with("learning_rate", 2.0)
            .validate()
            .is_err());
        assert!(ModelSpec::new(Algorithm::RandomForest)
            .with("max_depth", serde_json::Value::Null)
            .validate()
            .is_ok());
        assert_eq!("rf".parse::<Algorithm>().unwrap(), Algorithm::RandomForest);
        assert!("svm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn every_model_is_consistent() {
        let (x, y) = gaussian_blobs(&BlobSpec::isotropic(vec![30, 20, 25], 3, 6.0, 1.0), 5);
        let y: Vec<usize> = y.iter().map(|l| l * 2 + 1).collect();
        for alg in Algorithm::ALL {
            let spec = ModelSpec::new(alg).with_seed(3);
            let model = fit(&spec, &x, &y).unwrap();
            assert_eq!(model.classes, vec![1, 3, 5]);
            let s = model.predict_scores(&x).unwrap();
            let p = model.predict(&x).unwrap();
            for (row, label) in s.iter_rows().zip(&p) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{alg}");
                assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                assert_eq!(model.classes[argmax(row)], *label);
            }
            let acc = p.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
            assert!(acc > 0.9, "{alg}: {acc}");
            let again = fit(&spec, &x, &y).unwrap().predict_scores(&x).unwrap();
            assert_eq!(again, s, "{alg} not deterministic");
            assert!(model.predict(&Matrix::zeros(1, 2)).is_err());
        }
    }

    #[test]
    fn fit_errors() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(fit(&ModelSpec::new(Algorithm::GaussianNb), &x, &[1, 1]).is_err());
        let bad = Matrix::from_rows(&[[0.0], [f64::NAN]]).unwrap();
        assert!(fit(&ModelSpec::new(Algorithm::GaussianNb), &bad, &[0, 1]).is_err());
    }
}
