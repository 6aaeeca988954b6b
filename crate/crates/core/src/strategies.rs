//! Deployment strategies: predicting only the most confident articles, and
//! active learning with least-confident batches routed to human scoring.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::GroupedScore;
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, check_group_size, ExperimentContext, GroupSelection};
use crate::models::{ClassProbabilities, ModelSpec};
use crate::text::InputSet;
use crate::util::{mix, stable_hash};

pub const DEFAULT_THRESHOLD: f64 = 0.85;
pub const DEFAULT_BATCH_FRACTION: f64 = 0.10;
pub const DEFAULT_MAX_BATCHES: usize = 9;
pub const DEFAULT_TRIALS: usize = 10;

const SEED_BATCH_STREAM: u64 = 0x7365_6564;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_predicted: usize,
    pub empirical_accuracy: f64,
    /// Lowest predicted probability inside the prefix.
    pub probability_cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfidenceCurve {
    pub points: Vec<CurvePoint>,
}

/// Prefix accuracies after sorting by predicted probability, highest first,
/// ties by article id. `grid` lists the prefix sizes to report (sizes above
/// the test size are dropped); an empty grid reports every size.
pub fn confidence_curve(
    ids: &[String],
    probabilities: &[ClassProbabilities],
    actual: &[GroupedScore],
    grid: &[usize],
) -> ConfidenceCurve {
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        probabilities[b]
            .confidence()
            .total_cmp(&probabilities[a].confidence())
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let sizes: BTreeSet<usize> = if grid.is_empty() {
        (1..=n).collect()
    } else {
        grid.iter().copied().filter(|&k| k >= 1 && k <= n).collect()
    };
    let mut points = Vec::with_capacity(sizes.len());
    let mut correct = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if probabilities[i].predicted() == actual[i] {
            correct += 1;
        }
        if sizes.contains(&(k + 1)) {
            points.push(CurvePoint {
                n_predicted: k + 1,
                empirical_accuracy: correct as f64 / (k + 1) as f64,
                probability_cutoff: probabilities[i].confidence(),
            });
        }
    }
    ConfidenceCurve { points }
}

/// Pointwise mean over curves, keeping prefix sizes present in all of them.
pub fn average_curves(curves: &[ConfidenceCurve]) -> ConfidenceCurve {
    let Some(first) = curves.first() else {
        return ConfidenceCurve::default();
    };
    let common: Vec<usize> = first
        .points
        .iter()
        .map(|p| p.n_predicted)
        .filter(|n| curves.iter().all(|c| c.points.iter().any(|p| p.n_predicted == *n)))
        .collect();
    let m = curves.len() as f64;
    let points = common
        .into_iter()
        .map(|n| {
            let (mut acc, mut cut) = (0.0, 0.0);
            for c in curves {
                let p = c.points.iter().find(|p| p.n_predicted == n).expect("common size");
                acc += p.empirical_accuracy;
                cut += p.probability_cutoff;
            }
            CurvePoint {
                n_predicted: n,
                empirical_accuracy: acc / m,
                probability_cutoff: cut / m,
            }
        })
        .collect();
    ConfidenceCurve { points }
}

/// Largest prefix size whose accuracy reaches `target`; 0 if none does.
pub fn select_at_threshold(curve: &ConfidenceCurve, target: f64) -> usize {
    curve
        .points
        .iter()
        .filter(|p| p.empirical_accuracy >= target)
        .map(|p| p.n_predicted)
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveLearningParams {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_batch_fraction")]
    pub batch_fraction: f64,
    /// Total batches including the random first one.
    #[serde(default = "default_max_batches")]
    pub max_batches: usize,
    pub seed: u64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_batch_fraction() -> f64 {
    DEFAULT_BATCH_FRACTION
}

fn default_max_batches() -> usize {
    DEFAULT_MAX_BATCHES
}

impl ActiveLearningParams {
    pub fn new(seed: u64) -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            batch_fraction: DEFAULT_BATCH_FRACTION,
            max_batches: DEFAULT_MAX_BATCHES,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("threshold", "must be in [0, 1]"));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::invalid("batch_fraction", "must be in (0, 1]"));
        }
        if self.max_batches == 0 {
            return Err(Error::invalid("max_batches", "must be at least 1"));
        }
        Ok(())
    }

    /// `⌊batch_fraction · n⌋`, at least one article.
    pub fn batch_size(&self, n: usize) -> usize {
        ((self.batch_fraction * n as f64).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRound {
    pub round: usize,
    pub newly_scored: Vec<String>,
    pub n_scored: usize,
    /// Accuracy of the model trained on all scored articles, measured on
    /// the unscored ones. Absent when nothing is left unscored.
    pub accuracy_on_unscored: Option<f64>,
    pub mean_predicted_probability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThresholdMet,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveLearningTrace {
    pub group_id: String,
    pub trial: usize,
    pub threshold: f64,
    pub batch_fraction: f64,
    pub max_batches: usize,
    pub rounds: Vec<ActiveRound>,
    pub stop_reason: StopReason,
    pub human_scored: Vec<String>,
    /// AI-predicted articles with their predicted class.
    pub ai_predicted: Vec<(String, GroupedScore)>,
}

impl ActiveLearningTrace {
    pub fn n_articles(&self) -> usize {
        self.human_scored.len() + self.ai_predicted.len()
    }
}

/// One active-learning trial over the labelled articles of `group`.
///
/// True labels of unscored articles are used only to report accuracy; batch
/// selection depends on predicted probabilities alone.
pub fn active_learning_run(
    ctx: &ExperimentContext,
    group: &GroupSelection,
    input_set: InputSet,
    spec: &ModelSpec,
    params: &ActiveLearningParams,
    trial: usize,
) -> Result<ActiveLearningTrace> {
    params.validate()?;
    if let Some(skip) = check_group_size(ctx, group) {
        return Err(Error::invalid("group", format!("{}: {}", skip.group_id, skip.reason)));
    }
    let rows = ctx.labeled_rows(group);
    let ids = ctx.ids(&rows);
    let labels = ctx.labels(&rows);
    let n = rows.len();
    let batch = params.batch_size(n);
    let trial_seed = mix(params.seed, &[trial as u64]);

    let mut order: Vec<usize> = (0..n).collect();
    let seed_key = mix(trial_seed, &[SEED_BATCH_STREAM]);
    order.sort_by(|&a, &b| {
        mix(seed_key, &[stable_hash(&ids[a])])
            .cmp(&mix(seed_key, &[stable_hash(&ids[b])]))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let mut scored = vec![false; n];
    let mut scored_order: Vec<usize> = Vec::new();
    let mut next: Vec<usize> = order[..batch.min(n)].to_vec();
    let mut rounds = Vec::new();
    let mut batches_used = 0;

    loop {
        next.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        for &i in &next {
            scored[i] = true;
        }
        scored_order.extend(&next);
        batches_used += 1;
        let newly_scored: Vec<String> = next.iter().map(|&i| ids[i].clone()).collect();
        let unscored: Vec<usize> = (0..n).filter(|&i| !scored[i]).collect();
        if unscored.is_empty() {
            rounds.push(ActiveRound {
                round: rounds.len(),
                newly_scored,
                n_scored: n,
                accuracy_on_unscored: None,
                mean_predicted_probability: None,
            });
            return Ok(finish(group, trial, params, rounds, StopReason::BudgetExhausted, &ids, &scored_order, Vec::new()));
        }

        let mut train_idx: Vec<usize> = (0..n).filter(|&i| scored[i]).collect();
        train_idx.sort_unstable();
        let train_rows: Vec<usize> = train_idx.iter().map(|&i| rows[i]).collect();
        let train_labels: Vec<GroupedScore> = train_idx.iter().map(|&i| labels[i]).collect();
        let round_spec = ModelSpec {
            seed: mix(spec.seed, &[trial_seed, rounds.len() as u64]),
            ..spec.clone()
        };
        let pipeline = ctx.fit(&train_rows, &train_labels, input_set, &round_spec)?;
        let unscored_rows: Vec<usize> = unscored.iter().map(|&i| rows[i]).collect();
        let probs = ctx.predict(&pipeline, &unscored_rows)?;
        let predicted: Vec<GroupedScore> = probs.iter().map(ClassProbabilities::predicted).collect();
        let actual: Vec<GroupedScore> = unscored.iter().map(|&i| labels[i]).collect();
        let acc = accuracy(&predicted, &actual);
        let mean_p = probs.iter().map(ClassProbabilities::confidence).sum::<f64>() / probs.len() as f64;
        rounds.push(ActiveRound {
            round: rounds.len(),
            newly_scored,
            n_scored: n - unscored.len(),
            accuracy_on_unscored: Some(acc),
            mean_predicted_probability: Some(mean_p),
        });

        if acc >= params.threshold {
            let ai: Vec<(String, GroupedScore)> = unscored
                .iter()
                .zip(&predicted)
                .map(|(&i, &p)| (ids[i].clone(), p))
                .collect();
            return Ok(finish(group, trial, params, rounds, StopReason::ThresholdMet, &ids, &scored_order, ai));
        }
        if batches_used >= params.max_batches {
            // The remainder goes to human scoring as well.
            scored_order.extend(&unscored);
            return Ok(finish(group, trial, params, rounds, StopReason::BudgetExhausted, &ids, &scored_order, Vec::new()));
        }
        // Least confident first; ties by article id.
        let mut by_conf: Vec<usize> = (0..unscored.len()).collect();
        by_conf.sort_by(|&a, &b| {
            probs[a]
                .confidence()
                .total_cmp(&probs[b].confidence())
                .then_with(|| ids[unscored[a]].cmp(&ids[unscored[b]]))
        });
        next = by_conf.iter().take(batch).map(|&j| unscored[j]).collect();
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    group: &GroupSelection,
    trial: usize,
    params: &ActiveLearningParams,
    rounds: Vec<ActiveRound>,
    stop_reason: StopReason,
    ids: &[String],
    scored_order: &[usize],
    ai_predicted: Vec<(String, GroupedScore)>,
) -> ActiveLearningTrace {
    let mut human_scored: Vec<String> = scored_order.iter().map(|&i| ids[i].clone()).collect();
    human_scored.sort();
    ActiveLearningTrace {
        group_id: group.name.clone(),
        trial,
        threshold: params.threshold,
        batch_fraction: params.batch_fraction,
        max_batches: params.max_batches,
        rounds,
        stop_reason,
        human_scored,
        ai_predicted,
    }
}

/// Independent trials `0..trials`, returned in trial order.
pub fn active_learning_trials(
    ctx: &ExperimentContext,
    group: &GroupSelection,
    input_set: InputSet,
    spec: &ModelSpec,
    params: &ActiveLearningParams,
    trials: usize,
) -> Result<Vec<ActiveLearningTrace>> {
    (0..trials)
        .into_par_iter()
        .map(|t| active_learning_run(ctx, group, input_set, spec, params, t))
        .collect()
}

/// Mean accuracy on unscored articles per round, over the trials that reached
/// that round.
pub fn mean_round_accuracy(traces: &[ActiveLearningTrace]) -> Vec<(usize, f64, usize)> {
    let max_rounds = traces.iter().map(|t| t.rounds.len()).max().unwrap_or(0);
    (0..max_rounds)
        .filter_map(|r| {
            let accs: Vec<f64> = traces
                .iter()
                .filter_map(|t| t.rounds.get(r).and_then(|x| x.accuracy_on_unscored))
                .collect();
            (!accs.is_empty()).then(|| (r, accs.iter().sum::<f64>() / accs.len() as f64, accs.len()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub group_id: String,
    pub n_articles: usize,
    /// Articles predictable at the threshold by the high-probability strategy
    /// (test-set prefix of the averaged confidence curve).
    pub high_probability: usize,
    /// Mean AI-predicted articles over active-learning trials.
    pub active_learning: f64,
    /// Mean human-scored share of the group under active learning.
    pub active_human_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyComparison {
    pub threshold: f64,
    pub rows: Vec<StrategyRow>,
    pub total_high_probability: usize,
    pub total_active_learning: f64,
    /// Whether active learning predicted at least as many articles in total.
    pub active_at_least_high_probability: bool,
}

/// Per-group input for [`compare_strategies`].
#[derive(Debug, Clone)]
pub struct GroupStrategyResults<'a> {
    pub group_id: &'a str,
    pub n_articles: usize,
    pub curve: &'a ConfidenceCurve,
    pub traces: &'a [ActiveLearningTrace],
}

pub fn compare_strategies(groups: &[GroupStrategyResults<'_>], threshold: f64) -> StrategyComparison {
    let rows: Vec<StrategyRow> = groups
        .iter()
        .map(|g| {
            let m = g.traces.len().max(1) as f64;
            StrategyRow {
                group_id: g.group_id.to_string(),
                n_articles: g.n_articles,
                high_probability: select_at_threshold(g.curve, threshold),
                active_learning: g.traces.iter().map(|t| t.ai_predicted.len() as f64).sum::<f64>() / m,
                active_human_share: if g.n_articles == 0 {
                    0.0
                } else {
                    g.traces.iter().map(|t| t.human_scored.len() as f64).sum::<f64>() / m / g.n_articles as f64
                },
            }
        })
        .collect();
    let total_high_probability = rows.iter().map(|r| r.high_probability).sum();
    let total_active_learning = rows.iter().map(|r| r.active_learning).sum::<f64>();
    StrategyComparison {
        threshold,
        total_high_probability,
        total_active_learning,
        active_at_least_high_probability: total_active_learning >= total_high_probability as f64,
        rows,
    }
}

pub fn write_strategies_csv<W: Write>(cmp: &StrategyComparison, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group_id", "n_articles", "high_probability", "active_learning", "active_human_share"])?;
    for r in &cmp.rows {
        w.write_record([
            r.group_id.clone(),
            r.n_articles.to_string(),
            r.high_probability.to_string(),
            r.active_learning.to_string(),
            r.active_human_share.to_string(),
        ])?;
    }
    w.write_record([
        "TOTAL".to_string(),
        cmp.rows.iter().map(|r| r.n_articles).sum::<usize>().to_string(),
        cmp.total_high_probability.to_string(),
        cmp.total_active_learning.to_string(),
        String::new(),
    ])?;
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Plot-ready curve rows: group, input set, model, n, cutoff, accuracy.
pub fn write_curves_csv<'a, W: Write>(
    curves: impl IntoIterator<Item = (&'a str, InputSet, &'a str, &'a ConfidenceCurve)>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group_id", "input_set", "model", "n_predicted", "probability_cutoff", "empirical_accuracy"])?;
    for (g, s, m, c) in curves {
        for p in &c.points {
            w.write_record([
                g.to_string(),
                s.number().to_string(),
                m.to_string(),
                p.n_predicted.to_string(),
                p.probability_cutoff.to_string(),
                p.empirical_accuracy.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gs(v: u8) -> GroupedScore {
        GroupedScore::new(v).unwrap()
    }

    /// Probability `p` on class 3 and the rest split evenly.
    fn probs(p: f64) -> ClassProbabilities {
        let rest = (1.0 - p) / 2.0;
        ClassProbabilities([rest, rest, p])
    }

    fn toy() -> ConfidenceCurve {
        let ids: Vec<String> = ["d", "c", "b", "a"].iter().map(|s| s.to_string()).collect();
        // Confidences 0.6, 0.7, 0.8, 0.9; the 0.7 prediction is wrong.
        let p = [probs(0.6), probs(0.7), probs(0.8), probs(0.9)];
        let actual = [gs(3), gs(1), gs(3), gs(3)];
        confidence_curve(&ids, &p, &actual, &[])
    }

    #[test]
    fn toy_prefix_accuracies() {
        let c = toy();
        let acc: Vec<f64> = c.points.iter().map(|p| p.empirical_accuracy).collect();
        let want = [1.0, 1.0, 2.0 / 3.0, 0.75];
        for (a, w) in acc.iter().zip(want) {
            assert!((a - w).abs() < 1e-12);
        }
        assert_eq!(c.points[0].probability_cutoff, 0.9);
        assert_eq!(c.points[3].probability_cutoff, 0.6);
    }

    #[test]
    fn threshold_selection() {
        let c = toy();
        assert_eq!(select_at_threshold(&c, 0.7), 4);
        assert_eq!(select_at_threshold(&c, 0.8), 2);
        assert_eq!(select_at_threshold(&c, 1.01), 0);
        assert_eq!(select_at_threshold(&c, 0.0), 4);
    }

    #[test]
    fn constant_model_curve_is_flat() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let p = vec![ClassProbabilities([0.0, 1.0, 0.0]); 5];
        let c = confidence_curve(&ids, &p, &[gs(2); 5], &[]);
        assert!(c.points.iter().all(|p| p.empirical_accuracy == 1.0));
    }

    #[test]
    fn grid_limits_sizes_and_ties_use_ids() {
        let ids: Vec<String> = ["b", "a", "c"].iter().map(|s| s.to_string()).collect();
        let p = [probs(0.5); 3];
        // Only "a" is right; it sorts first among equal confidences.
        let actual = [gs(1), gs(3), gs(1)];
        let c = confidence_curve(&ids, &p, &actual, &[1, 3, 10]);
        let n: Vec<usize> = c.points.iter().map(|p| p.n_predicted).collect();
        assert_eq!(n, vec![1, 3]);
        assert_eq!(c.points[0].empirical_accuracy, 1.0);
    }

    #[test]
    fn averaging_uses_common_sizes() {
        let a = ConfidenceCurve {
            points: vec![
                CurvePoint { n_predicted: 1, empirical_accuracy: 1.0, probability_cutoff: 0.9 },
                CurvePoint { n_predicted: 2, empirical_accuracy: 0.5, probability_cutoff: 0.8 },
            ],
        };
        let b = ConfidenceCurve {
            points: vec![CurvePoint { n_predicted: 1, empirical_accuracy: 0.0, probability_cutoff: 0.7 }],
        };
        let m = average_curves(&[a, b]);
        assert_eq!(m.points.len(), 1);
        assert_eq!(m.points[0].empirical_accuracy, 0.5);
        assert!((m.points[0].probability_cutoff - 0.8).abs() < 1e-12);
    }

    #[test]
    fn comparison_totals() {
        let curve = toy();
        let row = GroupStrategyResults {
            group_id: "G1",
            n_articles: 4,
            curve: &curve,
            traces: &[],
        };
        let c = compare_strategies(&[row], 1.01);
        assert_eq!((c.total_high_probability, c.total_active_learning), (0, 0.0));
        let c = compare_strategies(&[GroupStrategyResults { group_id: "G1", n_articles: 4, curve: &curve, traces: &[] }], 0.7);
        assert_eq!(c.total_high_probability, c.rows[0].high_probability);
    }

    #[test]
    fn batch_size_floors() {
        let p = ActiveLearningParams::new(0);
        assert_eq!(p.batch_size(2000), 200);
        assert_eq!(p.batch_size(109), 10);
        assert_eq!(p.batch_size(5), 1);
    }
}
