//! Classifiers over the three-level quality scale.
//!
//! Model families implement [`Estimator`] and are looked up by name in a
//! [`ModelRegistry`]. [`TrainedModel`] wraps any family with the shared
//! behaviour: canonical row order, single-class handling, the optional
//! cumulative ordinal decomposition, column checking and serialization.

mod boosting;
mod forest;
mod linear;
mod registry;
mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use registry::{Estimator, FittedModel, ModelRegistry, TrainingSet};

use crate::corpus::GroupedScore;
use crate::error::{Error, Result};
use crate::text::FeatureMatrix;
use crate::util::{mix, stable_hash};

pub const MODEL_FORMAT: &str = "refscore-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Tunable settings. Unset values take the family's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_per_split: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl Hyperparameters {
    /// Values from `patch` override values from `self`.
    pub fn merged(&self, patch: &Hyperparameters) -> Hyperparameters {
        Hyperparameters {
            trees: patch.trees.or(self.trees),
            max_depth: patch.max_depth.or(self.max_depth),
            min_leaf: patch.min_leaf.or(self.min_leaf),
            learning_rate: patch.learning_rate.or(self.learning_rate),
            subsample: patch.subsample.or(self.subsample),
            regularization: patch.regularization.or(self.regularization),
            features_per_split: patch.features_per_split.or(self.features_per_split),
            iterations: patch.iterations.or(self.iterations),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trees", self.trees),
            ("max_depth", self.max_depth),
            ("min_leaf", self.min_leaf),
            ("features_per_split", self.features_per_split),
            ("iterations", self.iterations),
        ];
        for (name, v) in positive {
            if v == Some(0) {
                return Err(Error::invalid("hyperparameters", format!("{name} must be positive")));
            }
        }
        if let Some(t) = self.trees {
            if t > 100_000 {
                return Err(Error::invalid("hyperparameters", "trees must be at most 100000"));
            }
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr <= 1.0) {
                return Err(Error::invalid("hyperparameters", "learning_rate must be in (0, 1]"));
            }
        }
        if let Some(s) = self.subsample {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::invalid("hyperparameters", "subsample must be in (0, 1]"));
            }
        }
        if let Some(r) = self.regularization {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::invalid("hyperparameters", "regularization must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Which family to fit, whether to wrap it ordinally, and its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default)]
    pub ordinal: bool,
    #[serde(default)]
    pub params: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: &str, seed: u64) -> Self {
        Self {
            kind: kind.to_string(),
            ordinal: false,
            params: Hyperparameters::default(),
            seed,
        }
    }

    pub fn ordinal(mut self) -> Self {
        self.ordinal = true;
        self
    }

    pub fn with_params(mut self, params: Hyperparameters) -> Self {
        self.params = params;
        self
    }

    /// Short name: family name, with an `o` suffix for ordinal variants.
    pub fn label(&self) -> String {
        if self.ordinal {
            format!("{}o", self.kind)
        } else {
            self.kind.clone()
        }
    }

    /// Parse a short name such as `rfc` or `xgbo` against a registry.
    pub fn parse(name: &str, registry: &ModelRegistry, seed: u64) -> Result<Self> {
        if registry.contains(name) {
            return Ok(Self::new(name, seed));
        }
        match name.strip_suffix('o') {
            Some(base) if registry.contains(base) => Ok(Self::new(base, seed).ordinal()),
            _ => Err(Error::UnknownModel(name.to_string())),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Probabilities of grouped scores 1, 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities(pub [f64; 3]);

impl ClassProbabilities {
    /// Clamp to non-negative and rescale onto the simplex.
    pub fn normalized(raw: [f64; 3]) -> Self {
        let clamped = raw.map(|p| if p.is_finite() && p > 0.0 { p } else { 0.0 });
        let sum: f64 = clamped.iter().sum();
        if sum > 0.0 {
            Self(clamped.map(|p| p / sum))
        } else {
            Self([1.0 / 3.0; 3])
        }
    }

    /// Most probable class; ties go to the lower class.
    pub fn predicted(&self) -> GroupedScore {
        let mut best = 0;
        for k in 1..3 {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        GroupedScore::from_index(best)
    }

    /// Estimated probability that the prediction is correct.
    pub fn confidence(&self) -> f64 {
        self.0[self.predicted().index()]
    }

    pub fn get(&self, score: GroupedScore) -> f64 {
        self.0[score.index()]
    }
}

/// Class probabilities from the two cumulative estimates P(y > 1) and
/// P(y > 2). P(y > 1) is raised to P(y > 2) when the estimates cross.
pub fn ordinal_probabilities(above_low: f64, above_mid: f64) -> ClassProbabilities {
    let above_mid = above_mid.clamp(0.0, 1.0);
    let above_low = above_low.clamp(0.0, 1.0).max(above_mid);
    ClassProbabilities::normalized([1.0 - above_low, above_low - above_mid, above_mid])
}

#[derive(Debug)]
enum Cumulative {
    Constant(f64),
    Fitted(Box<dyn FittedModel>),
}

impl Cumulative {
    fn probability(&self, row: &[f64]) -> f64 {
        match self {
            Cumulative::Constant(p) => *p,
            Cumulative::Fitted(m) => m.predict_proba_row(row)[1],
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cumulative::Constant(p) => json!({ "constant": p }),
            Cumulative::Fitted(m) => json!({ "state": m.state() }),
        }
    }

    fn from_json(v: &Value, estimator: &dyn Estimator) -> Result<Self> {
        if let Some(p) = v.get("constant").and_then(Value::as_f64) {
            return Ok(Cumulative::Constant(p));
        }
        let state = v
            .get("state")
            .ok_or_else(|| Error::ModelFormat("ordinal part lacks state".into()))?;
        Ok(Cumulative::Fitted(estimator.restore(state)?))
    }
}

#[derive(Debug)]
enum Body {
    Constant(GroupedScore),
    Direct {
        classes: Vec<GroupedScore>,
        model: Box<dyn FittedModel>,
    },
    Ordinal {
        above_low: Cumulative,
        above_mid: Cumulative,
    },
}

/// A fitted classifier bound to its feature columns.
#[derive(Debug)]
pub struct TrainedModel {
    spec: ModelSpec,
    feature_names: Vec<String>,
    body: Body,
}

/// Fit `spec` on `x` with one grouped score per row.
pub fn train(
    registry: &ModelRegistry,
    spec: &ModelSpec,
    x: &FeatureMatrix,
    y: &[GroupedScore],
) -> Result<TrainedModel> {
    let estimator = registry.get(&spec.kind)?;
    spec.params.validate()?;
    if x.n_rows() == 0 {
        return Err(Error::Training("no training rows".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Training(format!(
            "{} feature rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if let Some((r, c)) = (0..x.n_rows())
        .flat_map(|r| (0..x.n_cols()).map(move |c| (r, c)))
        .find(|&(r, c)| !x.get(r, c).is_finite())
    {
        return Err(Error::Training(format!(
            "non-finite value in row {:?}, column {:?}",
            x.row_ids()[r],
            x.column_names()[c]
        )));
    }

    let mut classes: Vec<GroupedScore> = y.to_vec();
    classes.sort();
    classes.dedup();
    let feature_names = x.column_names().to_vec();
    if classes.len() == 1 {
        return Ok(TrainedModel {
            spec: spec.clone(),
            feature_names,
            body: Body::Constant(classes[0]),
        });
    }

    let (base, labels) = canonical_training_set(x, y);
    let body = if spec.ordinal {
        let cumulative = |threshold: u8| -> Result<Cumulative> {
            let binary: Vec<usize> = labels
                .iter()
                .map(|s| usize::from(s.value() > threshold))
                .collect();
            let positives = binary.iter().filter(|&&b| b == 1).count();
            if positives == 0 {
                Ok(Cumulative::Constant(0.0))
            } else if positives == binary.len() {
                Ok(Cumulative::Constant(1.0))
            } else {
                let data = base.relabeled(binary, 2);
                Ok(Cumulative::Fitted(estimator.fit(&data, &spec.params, spec.seed)?))
            }
        };
        Body::Ordinal {
            above_low: cumulative(1)?,
            above_mid: cumulative(2)?,
        }
    } else {
        let index: Vec<usize> = labels
            .iter()
            .map(|s| classes.iter().position(|c| c == s).expect("label is a present class"))
            .collect();
        let data = base.relabeled(index, classes.len());
        Body::Direct {
            model: estimator.fit(&data, &spec.params, spec.seed)?,
            classes,
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_names,
        body,
    })
}

/// Rows sorted by hashed article id so that fitting is independent of the
/// order rows arrive in.
fn canonical_training_set(x: &FeatureMatrix, y: &[GroupedScore]) -> (TrainingSet, Vec<GroupedScore>) {
    let keys: Vec<u64> = x.row_ids().iter().map(|id| stable_hash(id)).collect();
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .cmp(&keys[b])
            .then_with(|| x.row_ids()[a].cmp(&x.row_ids()[b]))
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(x.n_rows() * x.n_cols());
    for &r in &order {
        values.extend_from_slice(x.row(r));
    }
    let labels: Vec<GroupedScore> = order.iter().map(|&r| y[r]).collect();
    (
        TrainingSet {
            n_rows: x.n_rows(),
            n_cols: x.n_cols(),
            values,
            labels: Vec::new(),
            n_classes: 0,
            row_keys: order.iter().map(|&r| keys[r]).collect(),
        },
        labels,
    )
}

impl TrainedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// True when training saw a single class.
    pub fn is_constant(&self) -> bool {
        matches!(self.body, Body::Constant(_))
    }

    fn check_columns(&self, x: &FeatureMatrix) -> Result<()> {
        let got = x.column_names();
        for i in 0..self.feature_names.len().max(got.len()) {
            let expected = self.feature_names.get(i).map(String::as_str).unwrap_or("<none>");
            let found = got.get(i).map(String::as_str).unwrap_or("<none>");
            if expected != found {
                return Err(Error::ColumnMismatch {
                    position: i,
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
        }
        Ok(())
    }

    fn proba_row(&self, row: &[f64]) -> ClassProbabilities {
        match &self.body {
            Body::Constant(c) => {
                let mut p = [0.0; 3];
                p[c.index()] = 1.0;
                ClassProbabilities(p)
            }
            Body::Direct { classes, model } => {
                let raw = model.predict_proba_row(row);
                let mut p = [0.0; 3];
                for (c, v) in classes.iter().zip(raw) {
                    p[c.index()] = v;
                }
                ClassProbabilities::normalized(p)
            }
            Body::Ordinal {
                above_low,
                above_mid,
            } => ordinal_probabilities(above_low.probability(row), above_mid.probability(row)),
        }
    }

    /// Cumulative estimates (P(y > 1), P(y > 2)) after the crossing fix, for
    /// ordinal models.
    pub fn cumulative_row(&self, row: &[f64]) -> Option<(f64, f64)> {
        match &self.body {
            Body::Ordinal {
                above_low,
                above_mid,
            } => {
                let p = ordinal_probabilities(above_low.probability(row), above_mid.probability(row));
                Some((p.0[1] + p.0[2], p.0[2]))
            }
            _ => None,
        }
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<ClassProbabilities>> {
        self.check_columns(x)?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| self.proba_row(x.row(i)))
            .collect())
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<GroupedScore>> {
        Ok(self.predict_proba(x)?.iter().map(ClassProbabilities::predicted).collect())
    }

    pub fn to_json(&self) -> Value {
        let body = match &self.body {
            Body::Constant(c) => json!({ "type": "constant", "class": c.value() }),
            Body::Direct { classes, model } => json!({
                "type": "direct",
                "classes": classes.iter().map(|c| c.value()).collect::<Vec<_>>(),
                "state": model.state(),
            }),
            Body::Ordinal {
                above_low,
                above_mid,
            } => json!({
                "type": "ordinal",
                "above_low": above_low.to_json(),
                "above_mid": above_mid.to_json(),
            }),
        };
        json!({
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "spec": self.spec,
            "feature_names": self.feature_names,
            "body": body,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_json()).expect("model JSON serializes")
    }

    pub fn from_json(registry: &ModelRegistry, v: &Value) -> Result<Self> {
        if v.get("format").and_then(Value::as_str) != Some(MODEL_FORMAT) {
            return Err(Error::ModelFormat("not a refscore model file".into()));
        }
        let version = v.get("version").and_then(Value::as_u64);
        if version != Some(u64::from(MODEL_FORMAT_VERSION)) {
            return Err(Error::ModelFormat(format!("unsupported version {version:?}")));
        }
        let spec: ModelSpec = serde_json::from_value(v["spec"].clone())
            .map_err(|e| Error::ModelFormat(format!("spec: {e}")))?;
        let feature_names: Vec<String> = serde_json::from_value(v["feature_names"].clone())
            .map_err(|e| Error::ModelFormat(format!("feature_names: {e}")))?;
        let estimator = registry.get(&spec.kind)?;
        let b = &v["body"];
        let body = match b.get("type").and_then(Value::as_str) {
            Some("constant") => {
                let c = b["class"]
                    .as_u64()
                    .ok_or_else(|| Error::ModelFormat("constant class missing".into()))?;
                Body::Constant(GroupedScore::new(c as u8)?)
            }
            Some("direct") => {
                let classes: Vec<GroupedScore> = serde_json::from_value(b["classes"].clone())
                    .map_err(|e| Error::ModelFormat(format!("classes: {e}")))?;
                Body::Direct {
                    model: estimator.restore(&b["state"])?,
                    classes,
                }
            }
            Some("ordinal") => Body::Ordinal {
                above_low: Cumulative::from_json(&b["above_low"], estimator.as_ref())?,
                above_mid: Cumulative::from_json(&b["above_mid"], estimator.as_ref())?,
            },
            other => return Err(Error::ModelFormat(format!("unknown body type {other:?}"))),
        };
        Ok(Self {
            spec,
            feature_names,
            body,
        })
    }

    pub fn from_bytes(registry: &ModelRegistry, bytes: &[u8]) -> Result<Self> {
        let v: Value = serde_json::from_slice(bytes)?;
        Self::from_json(registry, &v)
    }
}

/// Grid point with the best mean cross-validated accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    pub best: ModelSpec,
    pub best_index: usize,
    /// Mean fold accuracy per grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Exhaustive search over `grid` (patches applied on top of `spec.params`)
/// with `folds`-fold cross-validation. Ties keep the earlier grid point.
pub fn grid_tune(
    registry: &ModelRegistry,
    spec: &ModelSpec,
    grid: &[Hyperparameters],
    x: &FeatureMatrix,
    y: &[GroupedScore],
    folds: usize,
) -> Result<TuningResult> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    if folds > x.n_rows() {
        return Err(Error::Config(format!(
            "{folds} folds requested for {} rows",
            x.n_rows()
        )));
    }
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by_key(|&r| (mix(spec.seed, &[stable_hash(&x.row_ids()[r])]), r));
    let mut fold_of = vec![0usize; x.n_rows()];
    for (pos, &r) in order.iter().enumerate() {
        fold_of[r] = pos % folds;
    }

    let mut scores = Vec::with_capacity(grid.len());
    for patch in grid {
        let candidate = ModelSpec {
            params: spec.params.merged(patch),
            ..spec.clone()
        };
        candidate.params.validate()?;
        let accs = (0..folds)
            .map(|f| {
                let train_rows: Vec<usize> = (0..x.n_rows()).filter(|&r| fold_of[r] != f).collect();
                let test_rows: Vec<usize> = (0..x.n_rows()).filter(|&r| fold_of[r] == f).collect();
                let xt = x.select_rows(&train_rows);
                let yt: Vec<GroupedScore> = train_rows.iter().map(|&r| y[r]).collect();
                let model = train(registry, &candidate, &xt, &yt)?;
                let pred = model.predict(&x.select_rows(&test_rows))?;
                let correct = pred
                    .iter()
                    .zip(&test_rows)
                    .filter(|(p, &r)| **p == y[r])
                    .count();
                Ok(correct as f64 / test_rows.len() as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        scores.push(accs.iter().sum::<f64>() / accs.len() as f64);
    }
    let mut best_index = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(TuningResult {
        best: ModelSpec {
            params: spec.params.merged(&grid[best_index]),
            ..spec.clone()
        },
        best_index,
        scores,
    })
}

impl FromStr for Hyperparameters {
    type Err = Error;

    /// `key=value` pairs separated by commas, e.g. `trees=50,max_depth=4`.
    fn from_str(s: &str) -> Result<Self> {
        let mut map = serde_json::Map::new();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
            let num: Value = serde_json::from_str(v.trim())
                .map_err(|_| Error::Config(format!("value for {k} is not a number: {v:?}")))?;
            map.insert(k.trim().to_string(), num);
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gs(v: u8) -> GroupedScore {
        GroupedScore::new(v).unwrap()
    }

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        let d = rows.first().map_or(0, Vec::len);
        FeatureMatrix::new(
            (0..d).map(|j| format!("x{j}")).collect(),
            (0..rows.len()).map(|i| format!("A{i:03}")).collect(),
            rows.iter().flatten().copied().collect(),
        )
        .unwrap()
    }

    /// 20 rows: class 1 left of x0 = 5, otherwise x1 decides between 2 and 3.
    fn separable() -> (Vec<Vec<f64>>, Vec<GroupedScore>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..20 {
            let x0 = if i < 10 { i as f64 * 0.5 } else { 6.0 + (i % 5) as f64 };
            let x1 = if i < 10 { ((i * 7) % 10) as f64 } else if i < 15 { 1.0 + (i % 3) as f64 } else { 7.0 + (i % 2) as f64 };
            xs.push(vec![x0, x1]);
            ys.push(gs(if i < 10 { 1 } else if i < 15 { 2 } else { 3 }));
        }
        (xs, ys)
    }

    fn majority_hits(ys: &[GroupedScore]) -> usize {
        GroupedScore::ALL
            .iter()
            .map(|c| ys.iter().filter(|y| *y == c).count())
            .max()
            .unwrap_or(0)
    }

    fn thresholds(xs: &[Vec<f64>], rows: &[usize], f: usize) -> Vec<f64> {
        let mut v: Vec<f64> = rows.iter().map(|&r| xs[r][f]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
    }

    /// Best training hits of any tree of depth at most `depth`, by enumeration.
    fn best_tree_hits(xs: &[Vec<f64>], ys: &[GroupedScore], rows: &[usize], depth: usize) -> usize {
        let labels: Vec<GroupedScore> = rows.iter().map(|&r| ys[r]).collect();
        let mut best = majority_hits(&labels);
        if depth == 0 {
            return best;
        }
        for f in 0..xs[0].len() {
            for t in thresholds(xs, rows, f) {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| xs[i][f] <= t);
                best = best.max(best_tree_hits(xs, ys, &l, depth - 1) + best_tree_hits(xs, ys, &r, depth - 1));
            }
        }
        best
    }

    #[test]
    fn single_class_gives_constant_model() {
        let reg = ModelRegistry::with_builtin();
        let x = matrix(&[vec![1.0], vec![2.0], vec![3.0]]);
        let m = train(&reg, &ModelSpec::new("rfc", 1), &x, &[gs(3); 3]).unwrap();
        assert!(m.is_constant());
        for p in m.predict_proba(&matrix(&[vec![-50.0], vec![9.0]])).unwrap() {
            assert_eq!(p.0, [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn ties_go_to_lower_class() {
        let p = ClassProbabilities([1.0 / 3.0; 3]);
        assert_eq!(p.predicted(), gs(1));
        assert_eq!(ClassProbabilities([0.1, 0.45, 0.45]).predicted(), gs(2));
    }

    #[test]
    fn ordinal_decomposition_arithmetic() {
        let p = ordinal_probabilities(0.8, 0.3);
        for (a, b) in p.0.iter().zip([0.2, 0.5, 0.3]) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = ordinal_probabilities(0.4, 0.6);
        for (a, b) in p.0.iter().zip([0.4, 0.0, 0.6]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let reg = ModelRegistry::with_builtin();
        let spec = ModelSpec::new("rfc", 1);
        let empty = FeatureMatrix::new(vec!["x0".into()], vec![], vec![]).unwrap();
        assert!(matches!(train(&reg, &spec, &empty, &[]), Err(Error::Training(_))));
        let nan = matrix(&[vec![1.0], vec![f64::NAN]]);
        assert!(matches!(train(&reg, &spec, &nan, &[gs(1), gs(2)]), Err(Error::Training(_))));
        assert!(matches!(
            train(&reg, &ModelSpec::new("svm", 1), &matrix(&[vec![1.0]]), &[gs(1)]),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn column_mismatch_names_first_column() {
        let reg = ModelRegistry::with_builtin();
        let (xs, ys) = separable();
        let m = train(&reg, &ModelSpec::new("rid", 1), &matrix(&xs), &ys).unwrap();
        let other = FeatureMatrix::new(vec!["x0".into(), "y1".into()], vec!["A".into()], vec![0.0, 0.0]).unwrap();
        match m.predict_proba(&other) {
            Err(Error::ColumnMismatch { position, expected, found }) => {
                assert_eq!((position, expected.as_str(), found.as_str()), (1, "x1", "y1"));
            }
            other => panic!("expected column mismatch, got {other:?}"),
        }
    }

    #[test]
    fn forest_fits_depth_two_separable_set() {
        let (xs, ys) = separable();
        let all: Vec<usize> = (0..xs.len()).collect();
        assert_eq!(best_tree_hits(&xs, &ys, &all, 2), 20);
        assert!(best_tree_hits(&xs, &ys, &all, 1) < 20);

        let reg = ModelRegistry::with_builtin();
        for depth in [Some(2), Some(3), None] {
            let spec = ModelSpec::new("rfc", 11).with_params(Hyperparameters {
                max_depth: depth,
                ..Default::default()
            });
            let m = train(&reg, &spec, &matrix(&xs), &ys).unwrap();
            assert_eq!(m.predict(&matrix(&xs)).unwrap(), ys, "depth {depth:?}");
        }
    }

    #[test]
    fn boosting_stump_matches_exhaustive_search() {
        let xs: Vec<f64> = vec![0.3, 1.1, 1.9, 2.2, 3.5, 3.6, 4.8, 5.0, 6.1, 7.7, 8.0, 9.4];
        let ys: Vec<GroupedScore> = [1, 1, 2, 1, 2, 2, 3, 2, 3, 3, 2, 3].map(gs).to_vec();
        let n = xs.len() as f64;
        let prior: Vec<f64> = GroupedScore::ALL
            .iter()
            .map(|c| ys.iter().filter(|y| *y == c).count() as f64 / n)
            .collect();
        // Residuals of the prior model, one vector per row.
        let resid: Vec<[f64; 3]> = ys
            .iter()
            .map(|y| {
                let mut r = [0.0; 3];
                for c in 0..3 {
                    r[c] = f64::from(u8::from(y.index() == c)) - prior[c];
                }
                r
            })
            .collect();
        let side_mean = |rows: &[usize]| -> [f64; 3] {
            let mut m = [0.0; 3];
            for &i in rows {
                for c in 0..3 {
                    m[c] += resid[i][c] / rows.len() as f64;
                }
            }
            m
        };
        let sse = |rows: &[usize]| -> f64 {
            let m = side_mean(rows);
            rows.iter().map(|&i| (0..3).map(|c| (resid[i][c] - m[c]).powi(2)).sum::<f64>()).sum()
        };
        let mut best: Option<(f64, f64)> = None;
        for t in thresholds(&xs.iter().map(|v| vec![*v]).collect::<Vec<_>>(), &(0..xs.len()).collect::<Vec<_>>(), 0) {
            let (l, r): (Vec<usize>, Vec<usize>) = (0..xs.len()).partition(|&i| xs[i] <= t);
            let e = sse(&l) + sse(&r);
            if best.is_none_or(|(b, _)| e < b - 1e-12) {
                best = Some((e, t));
            }
        }
        let t = best.unwrap().1;
        let expected = |x: f64| -> [f64; 3] {
            let rows: Vec<usize> = (0..xs.len()).filter(|&i| (xs[i] <= t) == (x <= t)).collect();
            let m = side_mean(&rows);
            let mut s: Vec<f64> = (0..3).map(|c| prior[c].ln() + m[c]).collect();
            boosting::softmax(&mut s);
            [s[0], s[1], s[2]]
        };

        let reg = ModelRegistry::with_builtin();
        let spec = ModelSpec::new("gbc", 0).with_params(Hyperparameters {
            trees: Some(1),
            max_depth: Some(1),
            learning_rate: Some(1.0),
            ..Default::default()
        });
        let x = matrix(&xs.iter().map(|v| vec![*v]).collect::<Vec<_>>());
        let m = train(&reg, &spec, &x, &ys).unwrap();
        let probe: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let got = m
            .predict_proba(&matrix(&probe.iter().map(|v| vec![*v]).collect::<Vec<_>>()))
            .unwrap();
        for (x, p) in probe.iter().zip(got) {
            let e = expected(*x);
            for c in 0..3 {
                assert!((p.0[c] - e[c]).abs() < 1e-12, "x={x} class {c}");
            }
        }
    }

    #[test]
    fn ordinal_on_two_extreme_classes_has_empty_middle() {
        let reg = ModelRegistry::with_builtin();
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 4) as f64]).collect();
        let ys: Vec<GroupedScore> = (0..30).map(|i| gs(if i < 15 { 1 } else { 3 })).collect();
        for kind in ["rfc", "gbc", "xgb"] {
            let m = train(&reg, &ModelSpec::new(kind, 5).ordinal(), &matrix(&xs), &ys).unwrap();
            for p in m.predict_proba(&matrix(&xs)).unwrap() {
                assert!(p.0[1] < 1e-6, "{kind}: {:?}", p.0);
            }
        }
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let reg = ModelRegistry::with_builtin();
        let (xs, ys) = separable();
        for name in ["rfc", "gbc", "xgb", "log", "rid", "rfco", "xgbo"] {
            let spec = ModelSpec::parse(name, &reg, 42).unwrap().with_params(Hyperparameters {
                trees: Some(20),
                ..Default::default()
            });
            let a = train(&reg, &spec, &matrix(&xs), &ys).unwrap().to_bytes();
            let b = train(&reg, &spec, &matrix(&xs), &ys).unwrap().to_bytes();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let reg = ModelRegistry::with_builtin();
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 13 % 17) as f64, (i * 5 % 7) as f64]).collect();
        let ys: Vec<GroupedScore> = (0..40).map(|i| gs(1 + (i * 3 % 7 % 3) as u8)).collect();
        let x = matrix(&xs);
        let rev: Vec<usize> = (0..40).rev().collect();
        let xr = x.select_rows(&rev);
        let yr: Vec<GroupedScore> = rev.iter().map(|&i| ys[i]).collect();
        for kind in ["rfc", "gbc"] {
            let spec = ModelSpec::new(kind, 9).with_params(Hyperparameters {
                trees: Some(15),
                ..Default::default()
            });
            let a = train(&reg, &spec, &x, &ys).unwrap();
            let b = train(&reg, &spec, &xr, &yr).unwrap();
            assert_eq!(a.predict_proba(&x).unwrap(), b.predict_proba(&x).unwrap(), "{kind}");
        }
    }

    #[test]
    fn save_and_load_preserve_predictions() {
        let reg = ModelRegistry::with_builtin();
        let (xs, ys) = separable();
        let x = matrix(&xs);
        for name in ["rfc", "gbco", "xgb", "logo", "rid"] {
            let spec = ModelSpec::parse(name, &reg, 3).unwrap().with_params(Hyperparameters {
                trees: Some(10),
                ..Default::default()
            });
            let m = train(&reg, &spec, &x, &ys).unwrap();
            let back = TrainedModel::from_bytes(&reg, &m.to_bytes()).unwrap();
            assert_eq!(back.spec(), m.spec());
            assert_eq!(back.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap(), "{name}");
            assert_eq!(back.to_bytes(), m.to_bytes());
        }
        assert!(matches!(
            TrainedModel::from_bytes(&reg, br#"{"format":"other"}"#),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn grid_tune_prefers_depth_that_separates() {
        let reg = ModelRegistry::with_builtin();
        // Two interleaved bands: any single threshold leaves errors, two do not.
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        let ys: Vec<GroupedScore> = (0..60).map(|i| gs(if (20..40).contains(&i) { 2 } else { 1 })).collect();
        let all: Vec<usize> = (0..60).collect();
        assert!(best_tree_hits(&xs, &ys, &all, 1) < 60);
        assert_eq!(best_tree_hits(&xs, &ys, &all, 2), 60);

        let spec = ModelSpec::new("rfc", 4).with_params(Hyperparameters {
            trees: Some(10),
            features_per_split: Some(1),
            ..Default::default()
        });
        let grid = [
            Hyperparameters { max_depth: Some(1), ..Default::default() },
            Hyperparameters { max_depth: Some(2), ..Default::default() },
        ];
        let r = grid_tune(&reg, &spec, &grid, &matrix(&xs), &ys, 3).unwrap();
        assert_eq!(r.best_index, 1);
        assert_eq!(r.best.params.max_depth, Some(2));
        assert_eq!(r.best.params.trees, Some(10));

        let single = grid_tune(&reg, &spec, &grid[..1], &matrix(&xs), &ys, 3).unwrap();
        assert_eq!(single.best_index, 0);
        assert!(grid_tune(&reg, &spec, &grid, &matrix(&xs), &ys, 61).is_err());
        assert!(grid_tune(&reg, &spec, &[], &matrix(&xs), &ys, 3).is_err());
    }

    #[test]
    fn parses_names_and_params() {
        let reg = ModelRegistry::with_builtin();
        let s = ModelSpec::parse("xgbo", &reg, 1).unwrap();
        assert_eq!((s.kind.as_str(), s.ordinal, s.label()), ("xgb", true, "xgbo".to_string()));
        assert!(ModelSpec::parse("foo", &reg, 1).is_err());
        let p: Hyperparameters = "trees=50, learning_rate=0.2".parse().unwrap();
        assert_eq!((p.trees, p.learning_rate), (Some(50), Some(0.2)));
        assert!("bogus=1".parse::<Hyperparameters>().is_err());
        assert!(Hyperparameters { learning_rate: Some(0.0), ..Default::default() }.validate().is_err());
    }
}
