//! Repeated train/test experiments and their metrics.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GroupedScore};
use crate::error::{Error, Result};
use crate::indicators::{base_features, compute_nlcs, BaseFeatures};
use crate::models::{train, ClassProbabilities, ModelRegistry, ModelSpec, TrainedModel};
use crate::strategies::{average_curves, confidence_curve, ConfidenceCurve};
use crate::text::{
    build_matrix, chi2_select, CleaningRules, FeatureMatrix, InputSet, TextIndex, DEFAULT_TEXT_FEATURES,
};
use crate::util::{mix, stable_hash};

pub const DEFAULT_MIN_GROUP_SIZE: usize = 100;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.5;

const SPLIT_STREAM: u64 = 0x7370_6c74;
const MODEL_STREAM: u64 = 0x6d6f_646c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Stratified,
    Uniform,
}

/// Where the most-common-class share is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineSource {
    #[default]
    Test,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: SplitMode,
}

fn default_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

impl SplitPlan {
    pub fn new(train_fraction: f64, iterations: usize, seed: u64) -> Self {
        Self {
            train_fraction,
            iterations,
            seed,
            mode: SplitMode::Stratified,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction", "must be strictly between 0 and 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Positions into the caller's item list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes present in the data but absent from the training side.
    pub missing_train_classes: Vec<GroupedScore>,
}

/// Train/test partition of `ids`. The order of `ids` does not matter: rows
/// are ranked by a hash of (seed, iteration, id).
pub fn stratified_split(ids: &[String], labels: &[GroupedScore], plan: &SplitPlan, iteration: usize) -> Result<Split> {
    plan.validate()?;
    if ids.len() != labels.len() {
        return Err(Error::invalid("labels", "one label per article is required"));
    }
    let n = ids.len();
    if n < 2 {
        return Err(Error::invalid("articles", "at least two labelled articles are needed to split"));
    }
    let seed = mix(plan.seed, &[SPLIT_STREAM, iteration as u64]);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        mix(seed, &[stable_hash(&ids[a])])
            .cmp(&mix(seed, &[stable_hash(&ids[b])]))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let n_train = ((n as f64 * plan.train_fraction).round() as usize).clamp(1, n - 1);

    let mut in_train = vec![false; n];
    match plan.mode {
        SplitMode::Uniform => order[..n_train].iter().for_each(|&i| in_train[i] = true),
        SplitMode::Stratified => {
            let mut by_class: [Vec<usize>; 3] = Default::default();
            for &i in &order {
                by_class[labels[i].index()].push(i);
            }
            let quotas = largest_remainder(
                &by_class.each_ref().map(|c| c.len() as f64 * n_train as f64 / n as f64),
                n_train,
            );
            for (members, q) in by_class.iter().zip(quotas) {
                members[..q].iter().for_each(|&i| in_train[i] = true);
            }
        }
    }
    let train: Vec<usize> = (0..n).filter(|&i| in_train[i]).collect();
    let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    let missing_train_classes = GroupedScore::ALL
        .into_iter()
        .filter(|c| labels.contains(c) && !train.iter().any(|&i| labels[i] == *c))
        .collect();
    Ok(Split {
        train,
        test,
        missing_train_classes,
    })
}

/// Integer parts of `shares` summing to `total`, remainders to the largest
/// fractional parts (earlier entries win ties).
fn largest_remainder(shares: &[f64; 3], total: usize) -> [usize; 3] {
    let mut out = shares.map(|s| s.floor() as usize);
    let mut left = total.saturating_sub(out.iter().sum());
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    for &i in idx.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Share of the most common class.
pub fn baseline(labels: &[GroupedScore]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("labels", "baseline of an empty label set"));
    }
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    Ok(*counts.iter().max().expect("three classes") as f64 / labels.len() as f64)
}

/// `(accuracy − baseline) / (1 − baseline)`.
pub fn above_baseline(accuracy: f64, baseline: f64) -> Result<f64> {
    if baseline >= 1.0 {
        return Err(Error::UndefinedBaseline);
    }
    Ok((accuracy - baseline) / (1.0 - baseline))
}

/// Product-moment correlation of class values; `None` when undefined.
pub fn pearson(predicted: &[GroupedScore], actual: &[GroupedScore]) -> Option<f64> {
    let p: Vec<f64> = predicted.iter().map(|s| f64::from(s.value())).collect();
    let a: Vec<f64> = actual.iter().map(|s| f64::from(s.value())).collect();
    crate::util::pearson(&p, &a)
}

pub fn accuracy(predicted: &[GroupedScore], actual: &[GroupedScore]) -> f64 {
    if actual.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(actual).filter(|(p, a)| p == a).count() as f64 / actual.len() as f64
}

/// A named set of groups evaluated as one pool of articles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSelection {
    pub name: String,
    pub members: Vec<String>,
}

impl GroupSelection {
    pub fn single(group_id: &str) -> Self {
        Self {
            name: group_id.to_string(),
            members: vec![group_id.to_string()],
        }
    }

    pub fn merged(name: &str, members: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            members: members.iter().map(|m| m.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    #[serde(default = "default_text_features")]
    pub text_features: usize,
    #[serde(default = "default_min_group")]
    pub min_group_size: usize,
    #[serde(default)]
    pub baseline: BaselineSource,
    /// Prefix sizes for confidence curves; empty means every size.
    #[serde(default)]
    pub curve_grid: Vec<usize>,
}

fn default_text_features() -> usize {
    DEFAULT_TEXT_FEATURES
}

fn default_min_group() -> usize {
    DEFAULT_MIN_GROUP_SIZE
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            text_features: DEFAULT_TEXT_FEATURES,
            min_group_size: DEFAULT_MIN_GROUP_SIZE,
            baseline: BaselineSource::Test,
            curve_grid: Vec::new(),
        }
    }
}

/// Everything label-independent that experiments share: the corpus, its
/// base indicators and its text index.
#[derive(Debug)]
pub struct ExperimentContext {
    corpus: Corpus,
    base: Vec<BaseFeatures>,
    text: TextIndex,
    registry: ModelRegistry,
    pub settings: ExperimentSettings,
}

/// A model plus the text features it was trained with.
#[derive(Debug)]
pub struct FittedPipeline {
    pub model: TrainedModel,
    pub input_set: InputSet,
    pub selected: Vec<u32>,
}

impl ExperimentContext {
    pub fn build(
        corpus: Corpus,
        cutoff_year: i32,
        rules: &CleaningRules,
        registry: ModelRegistry,
        settings: ExperimentSettings,
    ) -> Result<Self> {
        let nlcs = compute_nlcs(&corpus);
        let base = base_features(&corpus, &nlcs, cutoff_year, rules)?.rows;
        let text = TextIndex::build(&corpus, rules);
        Ok(Self {
            corpus,
            base,
            text,
            registry,
            settings,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn registry(&self) -> &ModelRegistry {
        &self.registry
    }

    pub fn base_features(&self) -> &[BaseFeatures] {
        &self.base
    }

    pub fn text_index(&self) -> &TextIndex {
        &self.text
    }

    /// Labelled corpus positions of every member group, in corpus order.
    pub fn labeled_rows(&self, group: &GroupSelection) -> Vec<usize> {
        let mut rows: Vec<usize> = group
            .members
            .iter()
            .flat_map(|g| self.corpus.labeled_rows(g))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    pub fn label(&self, row: usize) -> GroupedScore {
        self.corpus.articles()[row]
            .grouped_score()
            .expect("labelled row")
    }

    pub fn labels(&self, rows: &[usize]) -> Vec<GroupedScore> {
        rows.iter().map(|&r| self.label(r)).collect()
    }

    pub fn ids(&self, rows: &[usize]) -> Vec<String> {
        rows.iter()
            .map(|&r| self.corpus.articles()[r].article_id.clone())
            .collect()
    }

    /// Select text features and fit `spec` on `rows` with the given labels.
    pub fn fit(&self, rows: &[usize], labels: &[GroupedScore], input_set: InputSet, spec: &ModelSpec) -> Result<FittedPipeline> {
        let selected = if input_set == InputSet::Text {
            chi2_select(&self.text, rows, labels, self.settings.text_features)
        } else {
            Vec::new()
        };
        let x = build_matrix(&self.corpus, &self.base, Some(&self.text), rows, input_set, &selected)?;
        let model = train(&self.registry, spec, &x, labels)?;
        Ok(FittedPipeline {
            model,
            input_set,
            selected,
        })
    }

    pub fn matrix(&self, pipeline: &FittedPipeline, rows: &[usize]) -> Result<FeatureMatrix> {
        build_matrix(
            &self.corpus,
            &self.base,
            Some(&self.text),
            rows,
            pipeline.input_set,
            &pipeline.selected,
        )
    }

    pub fn predict(&self, pipeline: &FittedPipeline, rows: &[usize]) -> Result<Vec<ClassProbabilities>> {
        pipeline.model.predict_proba(&self.matrix(pipeline, rows)?)
    }
}

/// Seed for the model fitted in one iteration.
pub fn iteration_seed(spec: &ModelSpec, plan: &SplitPlan, iteration: usize) -> u64 {
    mix(spec.seed, &[MODEL_STREAM, plan.seed, iteration as u64])
}

/// Outcome of fitting and scoring one iteration, including the model.
#[derive(Debug)]
pub struct IterationFit {
    pub pipeline: FittedPipeline,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub probabilities: Vec<ClassProbabilities>,
    pub missing_train_classes: Vec<GroupedScore>,
}

pub fn fit_iteration(
    ctx: &ExperimentContext,
    rows: &[usize],
    input_set: InputSet,
    spec: &ModelSpec,
    plan: &SplitPlan,
    iteration: usize,
) -> Result<IterationFit> {
    let ids = ctx.ids(rows);
    let labels = ctx.labels(rows);
    let split = stratified_split(&ids, &labels, plan, iteration)?;
    let train_rows: Vec<usize> = split.train.iter().map(|&i| rows[i]).collect();
    let test_rows: Vec<usize> = split.test.iter().map(|&i| rows[i]).collect();
    let train_labels: Vec<GroupedScore> = split.train.iter().map(|&i| labels[i]).collect();
    let seeded = ModelSpec {
        seed: iteration_seed(spec, plan, iteration),
        ..spec.clone()
    };
    let pipeline = ctx.fit(&train_rows, &train_labels, input_set, &seeded)?;
    let probabilities = ctx.predict(&pipeline, &test_rows)?;
    Ok(IterationFit {
        pipeline,
        train_rows,
        test_rows,
        probabilities,
        missing_train_classes: split.missing_train_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub baseline: f64,
    /// Absent when the baseline is 1.
    pub above_baseline: Option<f64>,
    pub pearson_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Option<Self> {
        let xs: Vec<f64> = xs.into_iter().collect();
        if xs.is_empty() {
            return None;
        }
        Some(Self {
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: xs.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub group_id: String,
    pub members: Vec<String>,
    pub input_set: InputSet,
    pub model: String,
    pub spec: ModelSpec,
    pub plan: SplitPlan,
    pub n_labeled: usize,
    pub iterations: Vec<IterationResult>,
    pub accuracy: Summary,
    pub baseline: Summary,
    pub above_baseline: Option<Summary>,
    pub pearson_r: Option<Summary>,
    /// Test-set confidence curve averaged over iterations.
    pub curve: ConfidenceCurve,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub group_id: String,
    pub n_labeled: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ExperimentOutcome {
    Completed(ExperimentReport),
    Skipped(SkippedGroup),
}

impl ExperimentOutcome {
    pub fn report(&self) -> Option<&ExperimentReport> {
        match self {
            ExperimentOutcome::Completed(r) => Some(r),
            ExperimentOutcome::Skipped(_) => None,
        }
    }
}

/// Skip reason when a group is too small to model.
pub fn check_group_size(ctx: &ExperimentContext, group: &GroupSelection) -> Option<SkippedGroup> {
    let n = ctx.labeled_rows(group).len();
    (n < ctx.settings.min_group_size.max(2)).then(|| SkippedGroup {
        group_id: group.name.clone(),
        n_labeled: n,
        reason: format!(
            "{n} labelled articles, fewer than the minimum of {}",
            ctx.settings.min_group_size
        ),
    })
}

pub fn run_experiment(
    ctx: &ExperimentContext,
    group: &GroupSelection,
    input_set: InputSet,
    spec: &ModelSpec,
    plan: &SplitPlan,
) -> Result<ExperimentOutcome> {
    plan.validate()?;
    if let Some(skip) = check_group_size(ctx, group) {
        return Ok(ExperimentOutcome::Skipped(skip));
    }
    let rows = ctx.labeled_rows(group);
    let all_labels = ctx.labels(&rows);
    let full_baseline = baseline(&all_labels)?;

    let per_iteration: Vec<(IterationResult, ConfidenceCurve)> = (0..plan.iterations)
        .into_par_iter()
        .map(|it| {
            let fit = fit_iteration(ctx, &rows, input_set, spec, plan, it)?;
            let actual = ctx.labels(&fit.test_rows);
            let predicted: Vec<GroupedScore> = fit.probabilities.iter().map(ClassProbabilities::predicted).collect();
            let acc = accuracy(&predicted, &actual);
            let base = match ctx.settings.baseline {
                BaselineSource::Test => baseline(&actual)?,
                BaselineSource::Full => full_baseline,
            };
            let curve = confidence_curve(
                &ctx.ids(&fit.test_rows),
                &fit.probabilities,
                &actual,
                &ctx.settings.curve_grid,
            );
            let warnings = fit
                .missing_train_classes
                .iter()
                .map(|c| format!("class {} has no training articles", c.value()))
                .collect();
            Ok((
                IterationResult {
                    iteration: it,
                    n_train: fit.train_rows.len(),
                    n_test: fit.test_rows.len(),
                    accuracy: acc,
                    baseline: base,
                    above_baseline: above_baseline(acc, base).ok(),
                    pearson_r: pearson(&predicted, &actual),
                    warnings,
                },
                curve,
            ))
        })
        .collect::<Result<_>>()?;
    let (iterations, curves): (Vec<IterationResult>, Vec<ConfidenceCurve>) = per_iteration.into_iter().unzip();

    Ok(ExperimentOutcome::Completed(ExperimentReport {
        group_id: group.name.clone(),
        members: group.members.clone(),
        input_set,
        model: spec.label(),
        spec: spec.clone(),
        plan: plan.clone(),
        n_labeled: rows.len(),
        accuracy: Summary::of(iterations.iter().map(|r| r.accuracy)).expect("at least one iteration"),
        baseline: Summary::of(iterations.iter().map(|r| r.baseline)).expect("at least one iteration"),
        above_baseline: Summary::of(iterations.iter().filter_map(|r| r.above_baseline)),
        pearson_r: Summary::of(iterations.iter().filter_map(|r| r.pearson_r)),
        curve: average_curves(&curves),
        iterations,
    }))
}

/// Out-of-sample predictions for every labelled article of a group: the
/// iteration-0 split is fitted in both directions.
pub fn whole_set_predictions(
    ctx: &ExperimentContext,
    group: &GroupSelection,
    input_set: InputSet,
    spec: &ModelSpec,
    plan: &SplitPlan,
) -> Result<BTreeMap<usize, ClassProbabilities>> {
    let rows = ctx.labeled_rows(group);
    let ids = ctx.ids(&rows);
    let labels = ctx.labels(&rows);
    let split = stratified_split(&ids, &labels, plan, 0)?;
    let mut out = BTreeMap::new();
    for (fold, (fit_idx, pred_idx)) in [(&split.train, &split.test), (&split.test, &split.train)]
        .into_iter()
        .enumerate()
    {
        let fit_rows: Vec<usize> = fit_idx.iter().map(|&i| rows[i]).collect();
        let fit_labels: Vec<GroupedScore> = fit_idx.iter().map(|&i| labels[i]).collect();
        let pred_rows: Vec<usize> = pred_idx.iter().map(|&i| rows[i]).collect();
        let seeded = ModelSpec {
            seed: mix(iteration_seed(spec, plan, 0), &[fold as u64]),
            ..spec.clone()
        };
        let pipeline = ctx.fit(&fit_rows, &fit_labels, input_set, &seeded)?;
        for (r, p) in pred_rows.iter().zip(ctx.predict(&pipeline, &pred_rows)?) {
            out.insert(*r, p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub group_id: String,
    pub input_set: InputSet,
    pub model: String,
    pub mean_accuracy: f64,
    pub mean_baseline: f64,
    pub mean_above_baseline: Option<f64>,
    pub mean_pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub cells: Vec<ComparisonCell>,
    /// Best (input set, model) per group by mean above-baseline accuracy.
    pub best: BTreeMap<String, (InputSet, String)>,
    pub skipped: Vec<SkippedGroup>,
    pub reports: Vec<ExperimentReport>,
}

/// Every (group, input set, model) combination. The best cell per group is
/// the first with the highest mean above-baseline accuracy.
pub fn compare(
    ctx: &ExperimentContext,
    groups: &[GroupSelection],
    input_sets: &[InputSet],
    specs: &[ModelSpec],
    plan: &SplitPlan,
) -> Result<Comparison> {
    let mut cells = Vec::new();
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let mut best: BTreeMap<String, (InputSet, String)> = BTreeMap::new();
    for group in groups {
        let mut best_value = f64::NEG_INFINITY;
        for &input_set in input_sets {
            for spec in specs {
                match run_experiment(ctx, group, input_set, spec, plan)? {
                    ExperimentOutcome::Skipped(s) => {
                        if !skipped.contains(&s) {
                            skipped.push(s);
                        }
                    }
                    ExperimentOutcome::Completed(r) => {
                        let cell = ComparisonCell {
                            group_id: r.group_id.clone(),
                            input_set,
                            model: r.model.clone(),
                            mean_accuracy: r.accuracy.mean,
                            mean_baseline: r.baseline.mean,
                            mean_above_baseline: r.above_baseline.as_ref().map(|s| s.mean),
                            mean_pearson_r: r.pearson_r.as_ref().map(|s| s.mean),
                        };
                        if let Some(v) = cell.mean_above_baseline {
                            if v > best_value {
                                best_value = v;
                                best.insert(group.name.clone(), (input_set, r.model.clone()));
                            }
                        }
                        cells.push(cell);
                        reports.push(r);
                    }
                }
            }
        }
    }
    Ok(Comparison {
        cells,
        best,
        skipped,
        reports,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Flat CSV: one row per group × input set × model × iteration.
pub fn write_iterations_csv<W: Write>(reports: &[ExperimentReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group_id",
        "input_set",
        "model",
        "iteration",
        "n_train",
        "n_test",
        "accuracy",
        "baseline",
        "above_baseline",
        "pearson_r",
    ])?;
    for r in reports {
        for it in &r.iterations {
            w.write_record([
                r.group_id.clone(),
                r.input_set.number().to_string(),
                r.model.clone(),
                it.iteration.to_string(),
                it.n_train.to_string(),
                it.n_test.to_string(),
                it.accuracy.to_string(),
                it.baseline.to_string(),
                opt(it.above_baseline),
                opt(it.pearson_r),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(cells: &[ComparisonCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group_id",
        "input_set",
        "model",
        "mean_accuracy",
        "mean_baseline",
        "mean_above_baseline",
        "mean_pearson_r",
    ])?;
    for c in cells {
        w.write_record([
            c.group_id.clone(),
            c.input_set.number().to_string(),
            c.model.clone(),
            c.mean_accuracy.to_string(),
            c.mean_baseline.to_string(),
            opt(c.mean_above_baseline),
            opt(c.mean_pearson_r),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
