use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::registry::{decode_state, Estimator, FittedModel, TrainingSet};
use super::tree::{midpoint, Node, Tree};
use super::Hyperparameters;
use crate::error::{Error, Result};
use crate::util::{mix, poisson_one, rng};

pub const DEFAULT_TREES: usize = 200;
pub const DEFAULT_MIN_LEAF: usize = 2;

const FEATURE_STREAM: u64 = 0x6665_6174;

/// Random forest of Gini trees. Each tree sees a Poisson(1) bootstrap whose
/// counts are keyed by seed, tree number and row key.
#[derive(Debug, Clone, Copy)]
pub struct RandomForest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    n_classes: usize,
    n_features: usize,
    trees: Vec<Tree>,
}

struct Settings {
    max_depth: usize,
    min_leaf: f64,
    features_per_split: usize,
}

impl Estimator for RandomForest {
    fn name(&self) -> &'static str {
        "rfc"
    }

    fn description(&self) -> &'static str {
        "random forest classifier"
    }

    fn fit(&self, data: &TrainingSet, params: &Hyperparameters, seed: u64) -> Result<Box<dyn FittedModel>> {
        let n_trees = params.trees.unwrap_or(DEFAULT_TREES);
        let settings = Settings {
            max_depth: params.max_depth.unwrap_or(usize::MAX),
            min_leaf: params.min_leaf.unwrap_or(DEFAULT_MIN_LEAF) as f64,
            features_per_split: params
                .features_per_split
                .unwrap_or_else(|| ((data.n_cols as f64).sqrt().floor() as usize).max(1))
                .min(data.n_cols.max(1)),
        };
        let columns = Columns::new(data);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| grow(data, &columns, &settings, seed, t as u64))
            .collect();
        Ok(Box::new(ForestModel {
            n_classes: data.n_classes,
            n_features: data.n_cols,
            trees,
        }))
    }

    fn restore(&self, state: &Value) -> Result<Box<dyn FittedModel>> {
        let m: ForestModel = decode_state("rfc", state)?;
        if m.trees.is_empty() {
            return Err(Error::ModelFormat("rfc state has no trees".into()));
        }
        for t in &m.trees {
            t.validate(m.n_features, m.n_classes).map_err(Error::ModelFormat)?;
        }
        Ok(Box::new(m))
    }
}

impl FittedModel for ForestModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.leaf(row)) {
                *acc += v;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }

    fn state(&self) -> Value {
        serde_json::to_value(self).expect("forest serializes")
    }
}

/// Column-major copy of the training values; 0/1 columns are split without
/// sorting.
struct Columns {
    n_rows: usize,
    values: Vec<f64>,
    binary: Vec<bool>,
}

impl Columns {
    fn new(data: &TrainingSet) -> Self {
        let n = data.n_rows;
        let mut values = vec![0.0; n * data.n_cols];
        for r in 0..n {
            for (f, v) in data.row(r).iter().enumerate() {
                values[f * n + r] = *v;
            }
        }
        let binary = (0..data.n_cols)
            .map(|f| values[f * n..(f + 1) * n].iter().all(|&v| v == 0.0 || v == 1.0))
            .collect();
        Self {
            n_rows: n,
            values,
            binary,
        }
    }

    fn column(&self, f: usize) -> &[f64] {
        &self.values[f * self.n_rows..(f + 1) * self.n_rows]
    }
}

fn grow(data: &TrainingSet, columns: &Columns, s: &Settings, seed: u64, tree: u64) -> Tree {
    let mut weights: Vec<f64> = data
        .row_keys
        .iter()
        .map(|&k| f64::from(poisson_one(mix(seed, &[tree, k]))))
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    let mut rows: Vec<usize> = (0..data.n_rows).filter(|&r| weights[r] > 0.0).collect();
    let mut features: Vec<usize> = (0..data.n_cols).collect();
    let mut rng = rng(seed, &[FEATURE_STREAM, tree]);
    let k = data.n_classes;

    let mut nodes: Vec<Node> = vec![Node::Leaf { value: Vec::new() }];
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    while let Some((id, start, end, depth)) = stack.pop() {
        let slice = &mut rows[start..end];
        let mut counts = vec![0.0; k];
        for &r in slice.iter() {
            counts[data.labels[r]] += weights[r];
        }
        let total: f64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let split = if pure || depth >= s.max_depth || total < 2.0 * s.min_leaf {
            None
        } else {
            best_split(data, columns, &weights, slice, &counts, s, &mut features, &mut rng, &mut buf)
        };
        match split {
            None => {
                nodes[id] = Node::Leaf {
                    value: counts.iter().map(|c| c / total).collect(),
                };
            }
            Some((feature, threshold)) => {
                let col = columns.column(feature);
                let mut mid = 0;
                for i in 0..slice.len() {
                    if col[slice[i]] <= threshold {
                        slice.swap(i, mid);
                        mid += 1;
                    }
                }
                let left = nodes.len();
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right: left + 1,
                };
                stack.push((left + 1, start + mid, end, depth + 1));
                stack.push((left, start, start + mid, depth + 1));
            }
        }
    }
    Tree { nodes }
}

/// Lowest weighted Gini split over a random feature subset. Features are
/// drawn until `features_per_split` have been examined and a valid split
/// exists, or all features are exhausted.
#[allow(clippy::too_many_arguments)]
fn best_split(
    data: &TrainingSet,
    columns: &Columns,
    weights: &[f64],
    rows: &[usize],
    counts: &[f64],
    s: &Settings,
    features: &mut [usize],
    rng: &mut impl rand::Rng,
    buf: &mut Vec<(f64, usize)>,
) -> Option<(usize, f64)> {
    let total: f64 = counts.iter().sum();
    let k = counts.len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut left = vec![0.0; k];
    for examined in 0..features.len() {
        if examined >= s.features_per_split && best.is_some() {
            break;
        }
        let j = rng.random_range(examined..features.len());
        features.swap(examined, j);
        let f = features[examined];

        let col = columns.column(f);
        if columns.binary[f] {
            left.iter_mut().for_each(|v| *v = 0.0);
            let mut left_total = 0.0;
            for &r in rows {
                if col[r] == 0.0 {
                    left[data.labels[r]] += weights[r];
                    left_total += weights[r];
                }
            }
            let right_total = total - left_total;
            if left_total == 0.0 || right_total == 0.0 {
                continue;
            }
            if left_total < s.min_leaf || right_total < s.min_leaf {
                // Valid values exist but the split is too small; the feature
                // still counts as examined.
                continue;
            }
            let score = gini_score(&left, counts, left_total, right_total);
            if best.is_none_or(|(b, _, _)| score > b + 1e-12) {
                best = Some((score, f, 0.5));
            }
            continue;
        }
        buf.clear();
        buf.extend(rows.iter().map(|&r| (col[r], r)));
        buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if buf[0].0 == buf[buf.len() - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|v| *v = 0.0);
        let mut left_total = 0.0;
        for i in 0..buf.len() - 1 {
            let (v, r) = buf[i];
            let w = weights[r];
            left[data.labels[r]] += w;
            left_total += w;
            let next = buf[i + 1].0;
            if v == next {
                continue;
            }
            let right_total = total - left_total;
            if left_total < s.min_leaf || right_total < s.min_leaf {
                continue;
            }
            let score = gini_score(&left, counts, left_total, right_total);
            if best.is_none_or(|(b, _, _)| score > b + 1e-12) {
                best = Some((score, f, midpoint(v, next)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Sum of squared class weights over side weight, both sides; larger means
/// lower weighted Gini impurity.
fn gini_score(left: &[f64], counts: &[f64], left_total: f64, right_total: f64) -> f64 {
    let mut score = 0.0;
    for c in 0..left.len() {
        let rc = counts[c] - left[c];
        score += left[c] * left[c] / left_total + rc * rc / right_total;
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(rows: &[([f64; 2], usize)]) -> TrainingSet {
        TrainingSet {
            n_rows: rows.len(),
            n_cols: 2,
            values: rows.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
            labels: rows.iter().map(|(_, y)| *y).collect(),
            n_classes: 2,
            row_keys: (0..rows.len() as u64).map(crate::util::splitmix64).collect(),
        }
    }

    #[test]
    fn single_tree_separates_threshold_data() {
        let rows: Vec<([f64; 2], usize)> = (0..20)
            .map(|i| ([i as f64, (i * 7 % 5) as f64], usize::from(i >= 10)))
            .collect();
        let data = toy(&rows);
        let params = Hyperparameters {
            trees: Some(25),
            features_per_split: Some(2),
            ..Default::default()
        };
        let m = RandomForest.fit(&data, &params, 3).unwrap();
        for (x, y) in &rows {
            let p = m.predict_proba_row(x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(usize::from(p[1] > p[0]), *y);
        }
    }

    #[test]
    fn state_round_trips() {
        let rows: Vec<([f64; 2], usize)> = (0..12).map(|i| ([i as f64, 0.0], i % 2)).collect();
        let data = toy(&rows);
        let params = Hyperparameters {
            trees: Some(3),
            ..Default::default()
        };
        let m = RandomForest.fit(&data, &params, 1).unwrap();
        let back = RandomForest.restore(&m.state()).unwrap();
        assert_eq!(back.state(), m.state());
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let rows: Vec<([f64; 2], usize)> = (0..6).map(|i| ([i as f64, 0.0], usize::from(i == 0))).collect();
        let mut data = toy(&rows);
        data.row_keys = vec![1; 6];
        let settings = Settings {
            max_depth: usize::MAX,
            min_leaf: 2.0,
            features_per_split: 2,
        };
        let weights = vec![1.0; 6];
        let counts = [5.0, 1.0];
        let mut feats = vec![0, 1];
        let mut r = rng(0, &[]);
        let mut buf = Vec::new();
        let rows: Vec<usize> = (0..6).collect();
        // The only pure split isolates a single row; the best allowed split
        // leaves two rows on the left.
        let columns = Columns::new(&data);
        let split = best_split(&data, &columns, &weights, &rows, &counts, &settings, &mut feats, &mut r, &mut buf);
        assert_eq!(split, Some((0, 1.5)));
    }
}
