use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde_json::Value;

use super::{boosting, forest, linear, Hyperparameters};
use crate::error::{Error, Result};

/// Training rows in canonical order: sorted by stable row key.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major feature values.
    pub values: Vec<f64>,
    /// Class index per row, `0..n_classes`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Stable per-row keys (hashed article ids) that drive row sampling.
    pub row_keys: Vec<u64>,
}

impl TrainingSet {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    /// Same rows with labels replaced, e.g. for a binary sub-problem.
    pub fn relabeled(&self, labels: Vec<usize>, n_classes: usize) -> Self {
        Self {
            labels,
            n_classes,
            ..self.clone()
        }
    }
}

/// A fitted model for `n_classes` classes.
pub trait FittedModel: Send + Sync + fmt::Debug {
    fn n_classes(&self) -> usize;

    /// Class probabilities for one row, length `n_classes`.
    fn predict_proba_row(&self, row: &[f64]) -> Vec<f64>;

    /// Self-describing fitted state, restorable with [`Estimator::restore`].
    fn state(&self) -> Value;
}

/// A classifier family that can be fitted by name.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// `seed` drives every random choice made while fitting.
    fn fit(
        &self,
        data: &TrainingSet,
        params: &Hyperparameters,
        seed: u64,
    ) -> Result<Box<dyn FittedModel>>;

    fn restore(&self, state: &Value) -> Result<Box<dyn FittedModel>>;
}

/// Name-keyed collection of estimators.
#[derive(Clone)]
pub struct ModelRegistry {
    estimators: BTreeMap<&'static str, Arc<dyn Estimator>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            estimators: BTreeMap::new(),
        }
    }

    /// Random forest, first- and second-order gradient boosting, logistic
    /// regression and ridge classifiers.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(forest::RandomForest));
        r.register(Arc::new(boosting::GradientBoosting));
        r.register(Arc::new(boosting::NewtonBoosting));
        r.register(Arc::new(linear::LogisticRegression));
        r.register(Arc::new(linear::RidgeClassifier));
        r
    }

    /// Add or replace an estimator under its own name.
    pub fn register(&mut self, estimator: Arc<dyn Estimator>) -> Option<Arc<dyn Estimator>> {
        self.estimators.insert(estimator.name(), estimator)
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Estimator>> {
        self.estimators
            .get(name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.estimators.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.estimators.contains_key(name)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.estimators.keys()).finish()
    }
}

pub(crate) fn decode_state<T: serde::de::DeserializeOwned>(kind: &str, state: &Value) -> Result<T> {
    serde_json::from_value(state.clone())
        .map_err(|e| Error::ModelFormat(format!("{kind} state: {e}")))
}
