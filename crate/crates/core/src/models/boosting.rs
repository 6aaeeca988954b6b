use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::registry::{decode_state, Estimator, FittedModel, TrainingSet};
use super::tree::{midpoint, Node, Tree};
use super::Hyperparameters;
use crate::error::{Error, Result};
use crate::util::{mix, unit_interval};

pub const DEFAULT_ROUNDS: usize = 200;
pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_NEWTON_LAMBDA: f64 = 1.0;

const MIN_HESSIAN: f64 = 1e-16;

/// Multinomial gradient boosting with first-order leaves: each leaf moves the
/// class scores by the mean residual of its rows.
#[derive(Debug, Clone, Copy)]
pub struct GradientBoosting;

/// Multinomial gradient boosting with Newton leaves and L2 leaf penalty.
#[derive(Debug, Clone, Copy)]
pub struct NewtonBoosting;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    n_classes: usize,
    n_features: usize,
    init: Vec<f64>,
    /// Leaves hold one score increment per class, already shrunk.
    trees: Vec<Tree>,
}

struct Settings {
    rounds: usize,
    max_depth: usize,
    learning_rate: f64,
    lambda: f64,
    min_leaf: usize,
    subsample: f64,
    newton: bool,
}

impl Estimator for GradientBoosting {
    fn name(&self) -> &'static str {
        "gbc"
    }

    fn description(&self) -> &'static str {
        "gradient boosting classifier"
    }

    fn fit(&self, data: &TrainingSet, params: &Hyperparameters, seed: u64) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(boost(data, &settings(params, false), seed)))
    }

    fn restore(&self, state: &Value) -> Result<Box<dyn FittedModel>> {
        restore("gbc", state)
    }
}

impl Estimator for NewtonBoosting {
    fn name(&self) -> &'static str {
        "xgb"
    }

    fn description(&self) -> &'static str {
        "extreme gradient boosting classifier"
    }

    fn fit(&self, data: &TrainingSet, params: &Hyperparameters, seed: u64) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(boost(data, &settings(params, true), seed)))
    }

    fn restore(&self, state: &Value) -> Result<Box<dyn FittedModel>> {
        restore("xgb", state)
    }
}

fn settings(params: &Hyperparameters, newton: bool) -> Settings {
    Settings {
        rounds: params.trees.or(params.iterations).unwrap_or(DEFAULT_ROUNDS),
        max_depth: params.max_depth.unwrap_or(DEFAULT_DEPTH),
        learning_rate: params.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
        lambda: params
            .regularization
            .unwrap_or(if newton { DEFAULT_NEWTON_LAMBDA } else { 0.0 }),
        min_leaf: params.min_leaf.unwrap_or(1),
        subsample: params.subsample.unwrap_or(1.0),
        newton,
    }
}

fn restore(kind: &str, state: &Value) -> Result<Box<dyn FittedModel>> {
    let m: BoostedModel = decode_state(kind, state)?;
    if m.init.len() != m.n_classes {
        return Err(Error::ModelFormat(format!("{kind} init has wrong length")));
    }
    for t in &m.trees {
        t.validate(m.n_features, m.n_classes).map_err(Error::ModelFormat)?;
    }
    Ok(Box::new(m))
}

pub(crate) fn softmax(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    scores.iter_mut().for_each(|s| *s /= sum);
}

impl FittedModel for BoostedModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let mut f = self.init.clone();
        for t in &self.trees {
            for (acc, v) in f.iter_mut().zip(t.leaf(row)) {
                *acc += v;
            }
        }
        softmax(&mut f);
        f
    }

    fn state(&self) -> Value {
        serde_json::to_value(self).expect("boosted model serializes")
    }
}

/// Gradient and Hessian sums of one node.
#[derive(Debug, Clone)]
struct Stats {
    g: Vec<f64>,
    h: Vec<f64>,
    n: usize,
}

impl Stats {
    fn zero(k: usize) -> Self {
        Self {
            g: vec![0.0; k],
            h: vec![0.0; k],
            n: 0,
        }
    }

    fn add(&mut self, g: &[f64], h: &[f64]) {
        for c in 0..g.len() {
            self.g[c] += g[c];
            self.h[c] += h[c];
        }
        self.n += 1;
    }

    fn score(&self, lambda: f64) -> f64 {
        self.g
            .iter()
            .zip(&self.h)
            .map(|(g, h)| g * g / (h + lambda).max(MIN_HESSIAN))
            .sum()
    }

    fn leaf(&self, lambda: f64, lr: f64) -> Vec<f64> {
        self.g
            .iter()
            .zip(&self.h)
            .map(|(g, h)| -lr * g / (h + lambda).max(MIN_HESSIAN))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn boost(data: &TrainingSet, s: &Settings, seed: u64) -> BoostedModel {
    let n = data.n_rows;
    let k = data.n_classes;
    let mut prior = vec![0.0; k];
    for &y in &data.labels {
        prior[y] += 1.0;
    }
    let init: Vec<f64> = prior
        .iter()
        .map(|c| (c / n as f64).max(MIN_HESSIAN).ln())
        .collect();

    // Row order per feature, fixed for the whole fit. Constant columns can
    // never split and are dropped.
    let sorted: Vec<(usize, Vec<u32>)> = (0..data.n_cols)
        .into_par_iter()
        .filter_map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                data.get(a as usize, f)
                    .total_cmp(&data.get(b as usize, f))
                    .then(a.cmp(&b))
            });
            let lo = data.get(idx[0] as usize, f);
            let hi = data.get(idx[n - 1] as usize, f);
            (lo != hi).then_some((f, idx))
        })
        .collect();

    let mut scores: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
    let mut grad = vec![0.0; n * k];
    let mut hess = vec![1.0; n * k];
    let mut trees = Vec::with_capacity(s.rounds);
    for round in 0..s.rounds {
        for i in 0..n {
            let mut p = scores[i * k..(i + 1) * k].to_vec();
            softmax(&mut p);
            for c in 0..k {
                let y = if data.labels[i] == c { 1.0 } else { 0.0 };
                grad[i * k + c] = p[c] - y;
                if s.newton {
                    hess[i * k + c] = (p[c] * (1.0 - p[c])).max(MIN_HESSIAN);
                }
            }
        }
        let in_sample: Vec<bool> = if s.subsample < 1.0 {
            data.row_keys
                .iter()
                .map(|&key| unit_interval(mix(seed, &[round as u64, key])) < s.subsample)
                .collect()
        } else {
            vec![true; n]
        };
        let tree = grow(data, s, &sorted, &grad, &hess, &in_sample);
        for i in 0..n {
            let leaf = tree.leaf(data.row(i));
            for c in 0..k {
                scores[i * k + c] += leaf[c];
            }
        }
        trees.push(tree);
    }
    BoostedModel {
        n_classes: k,
        n_features: data.n_cols,
        init,
        trees,
    }
}

const NOT_ACTIVE: usize = usize::MAX;

/// Level-wise growth: every open node at a level is split in one pass over
/// each presorted feature.
fn grow(
    data: &TrainingSet,
    s: &Settings,
    sorted: &[(usize, Vec<u32>)],
    grad: &[f64],
    hess: &[f64],
    in_sample: &[bool],
) -> Tree {
    let n = data.n_rows;
    let k = data.n_classes;
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: Vec::new() }];
    // slot of each row among the open nodes at this level
    let mut slot_of: Vec<usize> = in_sample.iter().map(|&b| if b { 0 } else { NOT_ACTIVE }).collect();
    let mut open: Vec<(usize, Stats)> = {
        let mut st = Stats::zero(k);
        for i in (0..n).filter(|&i| in_sample[i]) {
            st.add(&grad[i * k..(i + 1) * k], &hess[i * k..(i + 1) * k]);
        }
        vec![(0, st)]
    };

    for _depth in 0..s.max_depth {
        if open.is_empty() {
            break;
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = sorted
            .par_iter()
            .map(|(f, order)| scan_feature(data, s, *f, order, &open, &slot_of, grad, hess))
            .collect();
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        for cands in &per_feature {
            for (b, c) in best.iter_mut().zip(cands) {
                if let Some(c) = c {
                    if b.is_none_or(|b| c.gain > b.gain) {
                        *b = Some(*c);
                    }
                }
            }
        }

        let mut next_open: Vec<(usize, Stats)> = Vec::new();
        let mut remap: Vec<[usize; 2]> = vec![[NOT_ACTIVE; 2]; open.len()];
        for (slot, (node, stats)) in open.iter().enumerate() {
            match best[slot] {
                None => {
                    nodes[*node] = Node::Leaf {
                        value: stats.leaf(s.lambda, s.learning_rate),
                    };
                }
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: Vec::new() });
                    nodes.push(Node::Leaf { value: Vec::new() });
                    nodes[*node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    remap[slot] = [next_open.len(), next_open.len() + 1];
                    next_open.push((left, Stats::zero(k)));
                    next_open.push((left + 1, Stats::zero(k)));
                }
            }
        }
        for i in 0..n {
            let slot = slot_of[i];
            if slot == NOT_ACTIVE {
                continue;
            }
            slot_of[i] = match best[slot] {
                None => NOT_ACTIVE,
                Some(c) => {
                    let side = usize::from(data.get(i, c.feature) > c.threshold);
                    let new_slot = remap[slot][side];
                    next_open[new_slot]
                        .1
                        .add(&grad[i * k..(i + 1) * k], &hess[i * k..(i + 1) * k]);
                    new_slot
                }
            };
        }
        open = next_open;
    }
    for (node, stats) in open {
        nodes[node] = Node::Leaf {
            value: stats.leaf(s.lambda, s.learning_rate),
        };
    }
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn scan_feature(
    data: &TrainingSet,
    s: &Settings,
    feature: usize,
    order: &[u32],
    open: &[(usize, Stats)],
    slot_of: &[usize],
    grad: &[f64],
    hess: &[f64],
) -> Vec<Option<Candidate>> {
    let k = data.n_classes;
    let m = open.len();
    let mut left: Vec<Stats> = vec![Stats::zero(k); m];
    let mut last = vec![f64::NAN; m];
    let parent: Vec<f64> = open.iter().map(|(_, st)| st.score(s.lambda)).collect();
    let mut best: Vec<Option<Candidate>> = vec![None; m];
    let mut right = Stats::zero(k);
    for &r in order {
        let r = r as usize;
        let slot = slot_of[r];
        if slot == NOT_ACTIVE {
            continue;
        }
        let v = data.get(r, feature);
        let l = &left[slot];
        if l.n >= s.min_leaf && v > last[slot] {
            let total = &open[slot].1;
            if total.n - l.n >= s.min_leaf {
                for c in 0..k {
                    right.g[c] = total.g[c] - l.g[c];
                    right.h[c] = total.h[c] - l.h[c];
                }
                let gain = l.score(s.lambda) + right.score(s.lambda) - parent[slot];
                if gain > 1e-12 && best[slot].is_none_or(|b| gain > b.gain) {
                    best[slot] = Some(Candidate {
                        gain,
                        feature,
                        threshold: midpoint(last[slot], v),
                    });
                }
            }
        }
        left[slot].add(&grad[r * k..(r + 1) * k], &hess[r * k..(r + 1) * k]);
        last[slot] = v;
    }
    best
}
