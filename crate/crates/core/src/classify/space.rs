use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::Algorithm;
use crate::seed;

/// Range of one hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Domain {
    /// Integers in `[low, high]`; `none` also admits JSON null.
    Int {
        low: i64,
        high: i64,
        #[serde(default)]
        log: bool,
        #[serde(default)]
        none: bool,
    },
    Float {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
    Choice {
        values: Vec<Value>,
    },
}

impl Domain {
    pub fn int(low: i64, high: i64) -> Self {
        Domain::Int {
            low,
            high,
            log: false,
            none: false,
        }
    }

    pub fn float(low: f64, high: f64) -> Self {
        Domain::Float { low, high, log: false }
    }

    pub fn log_float(low: f64, high: f64) -> Self {
        Domain::Float { low, high, log: true }
    }

    pub fn choice(values: impl IntoIterator<Item = Value>) -> Self {
        Domain::Choice {
            values: values.into_iter().collect(),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            Domain::Int { low, high, none, .. } => {
                (v.is_null() && *none) || v.as_i64().is_some_and(|i| (*low..=*high).contains(&i))
            }
            Domain::Float { low, high, .. } => v.as_f64().is_some_and(|f| f >= *low && f <= *high),
            Domain::Choice { values } => values.contains(v),
        }
    }

    /// Uniform draw, log-uniform where `log` is set. For nullable integers
    /// null is one more equally likely outcome.
    pub fn sample(&self, rng: &mut seed::Rng) -> Value {
        match self {
            Domain::Int { low, high, log, none } => {
                if *none && rng.random_range(0..=(high - low + 1)) == 0 {
                    return Value::Null;
                }
                if *log && *low > 0 {
                    let v = rng.random_range((*low as f64).ln()..((*high + 1) as f64).ln()).exp();
                    json!((v.floor() as i64).clamp(*low, *high))
                } else {
                    json!(rng.random_range(*low..=*high))
                }
            }
            Domain::Float { low, high, log } => {
                if low == high {
                    return json!(low);
                }
                if *log && *low > 0.0 {
                    json!(rng.random_range(low.ln()..high.ln()).exp().clamp(*low, *high))
                } else {
                    json!(rng.random_range(*low..*high))
                }
            }
            Domain::Choice { values } => values[rng.random_range(0..values.len())].clone(),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Int { low, high, none, .. } => {
                write!(f, "integers {low}..={high}")?;
                if *none {
                    f.write_str(" or null")?;
                }
                Ok(())
            }
            Domain::Float { low, high, .. } => write!(f, "[{low}, {high}]"),
            Domain::Choice { values } => write!(f, "{}", Value::Array(values.clone())),
        }
    }
}

/// Hyperparameter name → domain. Iteration (and sampling) order is by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSpace(pub BTreeMap<String, Domain>);

impl ParamSpace {
    pub fn sample(&self, rng: &mut seed::Rng) -> BTreeMap<String, Value> {
        self.0.iter().map(|(k, d)| (k.clone(), d.sample(rng))).collect()
    }
}

fn space(entries: Vec<(&str, Domain)>) -> ParamSpace {
    ParamSpace(entries.into_iter().map(|(k, d)| (k.to_string(), d)).collect())
}

/// Every hyperparameter an algorithm accepts, with hard bounds.
pub fn declared_space(algorithm: Algorithm) -> ParamSpace {
    match algorithm {
        Algorithm::Knn => space(vec![("k", Domain::int(1, 10_000))]),
        Algorithm::GaussianNb => space(vec![("var_smoothing", Domain::float(0.0, 1.0))]),
        Algorithm::RandomForest => space(vec![
            ("trees", Domain::int(1, 10_000)),
            (
                "max_depth",
                Domain::Int {
                    low: 1,
                    high: 1_000,
                    log: false,
                    none: true,
                },
            ),
            (
                "max_features",
                Domain::choice([json!("sqrt"), json!("log2"), json!("all")]),
            ),
            ("min_samples_split", Domain::int(2, 1_000_000)),
            ("min_samples_leaf", Domain::int(1, 1_000_000)),
            ("bootstrap", Domain::choice([json!(true), json!(false)])),
        ]),
        Algorithm::Gbdt => space(vec![
            ("rounds", Domain::int(0, 100_000)),
            ("leaves", Domain::int(2, 131_072)),
            ("learning_rate", Domain::float(1e-6, 1.0)),
            ("max_bins", Domain::int(2, 255)),
            ("min_data_in_leaf", Domain::int(1, 1_000_000)),
            ("min_sum_hessian", Domain::float(0.0, 1e6)),
            ("lambda_l2", Domain::float(0.0, 1e6)),
            ("min_gain", Domain::float(0.0, 1e6)),
        ]),
        Algorithm::Mlp => space(vec![
            ("hidden", Domain::int(1, 10_000)),
            ("epochs", Domain::int(1, 100_000)),
            ("learning_rate", Domain::float(1e-8, 10.0)),
            ("momentum", Domain::float(0.0, 0.999)),
            ("batch_size", Domain::int(1, 1_000_000)),
            ("l2", Domain::float(0.0, 10.0)),
        ]),
    }
}

/// Search ranges used when a config names none.
pub fn default_search_space(algorithm: Algorithm) -> ParamSpace {
    match algorithm {
        Algorithm::Knn => space(vec![("k", Domain::int(1, 50))]),
        Algorithm::GaussianNb => space(vec![("var_smoothing", Domain::log_float(1e-12, 1e-6))]),
        Algorithm::RandomForest => space(vec![
            ("trees", Domain::int(50, 500)),
            (
                "max_depth",
                Domain::Int {
                    low: 4,
                    high: 32,
                    log: false,
                    none: true,
                },
            ),
            (
                "max_features",
                Domain::choice([json!("sqrt"), json!("log2"), json!("all")]),
            ),
        ]),
        Algorithm::Gbdt => space(vec![
            ("rounds", Domain::int(50, 500)),
            ("leaves", Domain::int(15, 255)),
            ("learning_rate", Domain::log_float(0.01, 0.3)),
            ("min_data_in_leaf", Domain::int(5, 50)),
        ]),
        Algorithm::Mlp => space(vec![
            ("hidden", Domain::int(32, 256)),
            ("learning_rate", Domain::log_float(1e-3, 1e-1)),
            ("l2", Domain::log_float(1e-6, 1e-2)),
        ]),
    }
}
