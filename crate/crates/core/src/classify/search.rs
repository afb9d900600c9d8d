use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::stratified_kfold_cv;
use super::space::ParamSpace;
use super::ModelSpec;
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchCandidate {
    pub index: usize,
    pub params: BTreeMap<String, serde_json::Value>,
    /// Mean cross-validated weighted F1.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ModelSpec,
    pub best_score: f64,
    pub trace: Vec<SearchCandidate>,
}

/// Samples `n_iter` points of `space` on top of `base.params` and keeps the
/// one with the highest cross-validated weighted F1 (ties → earliest).
///
/// Every candidate is scored on the same folds.
#[allow(clippy::too_many_arguments)]
pub fn randomized_search(
    base: &ModelSpec,
    space: &ParamSpace,
    x: &Matrix,
    y: &[usize],
    classes: &[String],
    n_iter: usize,
    folds: usize,
    seed_: u64,
) -> Result<SearchResult> {
    if n_iter == 0 {
        return Err(invalid("randomized search needs n_iter ≥ 1"));
    }
    if space.0.is_empty() {
        return Err(invalid("randomized search needs a non-empty space"));
    }
    let mut rng = seed::rng(seed_);
    let specs: Vec<ModelSpec> = (0..n_iter)
        .map(|_| {
            let mut spec = base.clone();
            spec.params.extend(space.sample(&mut rng));
            spec
        })
        .collect();
    let trace: Vec<SearchCandidate> = specs
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let outcome = stratified_kfold_cv(spec, x, y, classes, folds, seed_);
            let (score, error) = match outcome {
                Ok(r) => (Some(r.mean.weighted_f1), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SearchCandidate {
                index,
                params: spec.params.clone(),
                score,
                error,
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for c in &trace {
        if let Some(s) = c.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c.index, s));
            }
        }
    }
    let Some((i, best_score)) = best else {
        return Err(Error::SearchFailed(
            trace
                .iter()
                .map(|c| format!("#{}: {}", c.index, c.error.as_deref().unwrap_or("no score")))
                .collect(),
        ));
    };
    Ok(SearchResult {
        best: specs[i].clone(),
        best_score,
        trace,
    })
}
