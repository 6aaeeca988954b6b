//! End-to-end run: corpus → experiments → strategies → institutional
//! aggregation, rendered as an in-memory set of output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    aggregate_correlations, institution_correlations, summarize_institutions, write_institutions_csv,
    AggregateCorrelations, ArticleOutcome, InstitutionCorrelations, InstitutionSummary,
};
use crate::corpus::{filter_eligible, ingest, Corpus, Diagnostic, EligibilityFilter, FilterReport, Format};
use crate::error::{Error, Result};
use crate::evaluation::{
    run_experiment, whole_set_predictions, write_comparison_csv, write_iterations_csv, ComparisonCell,
    ExperimentContext, ExperimentOutcome, ExperimentReport, ExperimentSettings, GroupSelection, SplitMode,
    DEFAULT_ITERATIONS, DEFAULT_TRAIN_FRACTION,
};
use crate::models::{Hyperparameters, ModelRegistry, ModelSpec};
use crate::strategies::{
    active_learning_trials, compare_strategies, mean_round_accuracy, write_curves_csv, write_strategies_csv,
    ActiveLearningParams, ActiveLearningTrace, GroupStrategyResults, StrategyComparison, DEFAULT_BATCH_FRACTION,
    DEFAULT_MAX_BATCHES, DEFAULT_THRESHOLD, DEFAULT_TRIALS,
};
use crate::synth::{generate_synthetic, SyntheticSpec};
use crate::text::{CleaningRules, InputSet};

/// Files written by a run, in manifest order.
pub const OUTPUT_FILES: [&str; 11] = [
    "summary.json",
    "experiments.json",
    "experiments.csv",
    "comparison.csv",
    "curves.csv",
    "traces.json",
    "strategies.csv",
    "institutions.csv",
    "institutions.json",
    "errors.json",
    "manifest.json",
];

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// JSONL or CSV file; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    /// Year citations were counted; needed for file corpora.
    pub cutoff_year: Option<i32>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: DEFAULT_TRAIN_FRACTION,
            iterations: DEFAULT_ITERATIONS,
            mode: SplitMode::Stratified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_batch_fraction")]
    pub batch_fraction: f64,
    #[serde(default = "default_max_batches")]
    pub max_batches: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Model used for strategies and aggregation; defaults to the first
    /// entry of `models`.
    pub model: Option<String>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            batch_fraction: DEFAULT_BATCH_FRACTION,
            max_batches: DEFAULT_MAX_BATCHES,
            trials: DEFAULT_TRIALS,
            model: None,
        }
    }
}

fn default_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}
fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
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
fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_input_set() -> InputSet {
    InputSet::Text
}
fn default_models() -> Vec<String> {
    vec!["rfc".to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    /// Groups to run; empty means every group in the corpus.
    #[serde(default)]
    pub groups: Vec<String>,
    #[serde(default = "default_input_set")]
    pub input_set: InputSet,
    /// Model names such as `rfc` or `xgbo`, optionally followed by
    /// `:key=value,...` hyperparameters.
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub filter: Option<EligibilityFilter>,
    /// Abstract cleaning rules file; the built-in list when absent.
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub settings: ExperimentSettings,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Resolve relative paths against `base` and check everything that can
    /// be checked before any work starts.
    pub fn validate(&mut self, base: &Path) -> Result<()> {
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(_), Some(_)) => return Err(Error::Config("corpus: give either path or synthetic, not both".into())),
            (None, None) => return Err(Error::Config("corpus: one of path or synthetic is required".into())),
            (Some(p), None) => {
                let p = base.join(p);
                if !p.is_file() {
                    return Err(Error::Config(format!("corpus file {} does not exist", p.display())));
                }
                if Format::from_path(&p).is_none() {
                    return Err(Error::Config(format!("corpus file {} is neither .jsonl nor .csv", p.display())));
                }
                if self.corpus.cutoff_year.is_none() {
                    return Err(Error::Config("corpus.cutoff_year is required for file corpora".into()));
                }
                self.corpus.path = Some(p);
            }
            (None, Some(s)) => s.validate()?,
        }
        if let Some(r) = &self.rules {
            let r = base.join(r);
            if !r.is_file() {
                return Err(Error::Config(format!("rules file {} does not exist", r.display())));
            }
            self.rules = Some(r);
        }
        if self.models.is_empty() {
            return Err(Error::Config("models: at least one model is required".into()));
        }
        let registry = ModelRegistry::with_builtin();
        for m in &self.models {
            parse_model(m, &registry, 0)?;
        }
        if let Some(m) = &self.strategy.model {
            parse_model(m, &registry, 0)?;
        }
        self.split_plan().validate()?;
        self.strategy_params().validate()?;
        Ok(())
    }

    pub fn split_plan(&self) -> crate::evaluation::SplitPlan {
        crate::evaluation::SplitPlan {
            train_fraction: self.split.train_fraction,
            iterations: self.split.iterations,
            seed: self.seed,
            mode: self.split.mode,
        }
    }

    pub fn strategy_params(&self) -> ActiveLearningParams {
        ActiveLearningParams {
            threshold: self.strategy.threshold,
            batch_fraction: self.strategy.batch_fraction,
            max_batches: self.strategy.max_batches,
            seed: self.seed,
        }
    }

    fn strategy_model(&self) -> &str {
        self.strategy.model.as_deref().unwrap_or(&self.models[0])
    }
}

/// `name` or `name:key=value,...`.
pub fn parse_model(entry: &str, registry: &ModelRegistry, seed: u64) -> Result<ModelSpec> {
    let (name, params) = match entry.split_once(':') {
        Some((n, p)) => (n.trim(), p.parse::<Hyperparameters>()?),
        None => (entry.trim(), Hyperparameters::default()),
    };
    params.validate()?;
    Ok(ModelSpec::parse(name, registry, seed)?.with_params(params))
}

/// A group-level failure; the run continues with other groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupError {
    pub group_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub source: String,
    pub n_articles: usize,
    pub n_rejected_records: usize,
    pub filter: Option<FilterReport>,
    pub measured_rank_correlation: Option<f64>,
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub n_labeled: usize,
    pub status: String,
    /// Best model label by mean above-baseline accuracy.
    pub best_model: Option<String>,
    pub best_above_baseline: Option<f64>,
    pub best_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub input_set: InputSet,
    pub models: Vec<String>,
    pub strategy_model: String,
    pub corpus: CorpusSummary,
    pub groups: Vec<GroupSummary>,
    pub strategies: StrategyComparison,
    pub n_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTraces {
    pub group_id: String,
    /// (round, mean accuracy on unscored articles, trials reaching it).
    pub mean_round_accuracy: Vec<(usize, f64, usize)>,
    pub traces: Vec<ActiveLearningTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstitutionReport {
    /// Outcomes of active-learning trial 0.
    pub summaries: Vec<InstitutionSummary>,
    pub correlations: Vec<InstitutionCorrelations>,
    /// Whole-set predictions against actual scores.
    pub aggregate: Vec<AggregateCorrelations>,
}

/// Everything a run produces, before serialization.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub experiments: Vec<ExperimentOutcome>,
    pub traces: Vec<GroupTraces>,
    pub institutions: InstitutionReport,
    pub errors: Vec<GroupError>,
    pub diagnostics: Vec<Diagnostic>,
}

impl RunResult {
    pub fn reports(&self) -> Vec<&ExperimentReport> {
        self.experiments.iter().filter_map(ExperimentOutcome::report).collect()
    }

    /// Serialized output files except the manifest, keyed by file name.
    pub fn render(&self) -> Result<BTreeMap<String, Vec<u8>>> {
        let reports: Vec<ExperimentReport> = self.reports().into_iter().cloned().collect();
        let mut files = BTreeMap::new();
        files.insert("summary.json".to_string(), json(&self.summary)?);
        files.insert("experiments.json".to_string(), json(&self.experiments)?);

        let mut buf = Vec::new();
        write_iterations_csv(&reports, &mut buf)?;
        files.insert("experiments.csv".to_string(), buf);

        let cells: Vec<ComparisonCell> = reports
            .iter()
            .map(|r| ComparisonCell {
                group_id: r.group_id.clone(),
                input_set: r.input_set,
                model: r.model.clone(),
                mean_accuracy: r.accuracy.mean,
                mean_baseline: r.baseline.mean,
                mean_above_baseline: r.above_baseline.as_ref().map(|s| s.mean),
                mean_pearson_r: r.pearson_r.as_ref().map(|s| s.mean),
            })
            .collect();
        let mut buf = Vec::new();
        write_comparison_csv(&cells, &mut buf)?;
        files.insert("comparison.csv".to_string(), buf);

        let mut buf = Vec::new();
        write_curves_csv(
            reports
                .iter()
                .map(|r| (r.group_id.as_str(), r.input_set, r.model.as_str(), &r.curve)),
            &mut buf,
        )?;
        files.insert("curves.csv".to_string(), buf);

        files.insert("traces.json".to_string(), json(&self.traces)?);
        let mut buf = Vec::new();
        write_strategies_csv(&self.summary.strategies, &mut buf)?;
        files.insert("strategies.csv".to_string(), buf);

        let mut buf = Vec::new();
        write_institutions_csv(&self.institutions.summaries, &mut buf)?;
        files.insert("institutions.csv".to_string(), buf);
        files.insert("institutions.json".to_string(), json(&self.institutions)?);

        #[derive(Serialize)]
        struct Errors<'a> {
            groups: &'a [GroupError],
            rejected_records: &'a [Diagnostic],
        }
        files.insert(
            "errors.json".to_string(),
            json(&Errors {
                groups: &self.errors,
                rejected_records: &self.diagnostics,
            })?,
        );
        Ok(files)
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

struct LoadedCorpus {
    corpus: Corpus,
    cutoff_year: i32,
    summary: CorpusSummary,
    diagnostics: Vec<Diagnostic>,
}

fn load_corpus(config: &RunConfig, rules: &CleaningRules) -> Result<LoadedCorpus> {
    let (corpus, cutoff_year, source, rank, diagnostics) = match (&config.corpus.path, &config.corpus.synthetic) {
        (Some(path), _) => {
            let format = Format::from_path(path)
                .ok_or_else(|| Error::Config(format!("unknown corpus format for {}", path.display())))?;
            let ingested = ingest(path, format)?;
            let cutoff = config
                .corpus
                .cutoff_year
                .ok_or_else(|| Error::Config("corpus.cutoff_year is required for file corpora".into()))?;
            let source = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
            (ingested.corpus, cutoff, source, None, ingested.diagnostics)
        }
        (None, Some(spec)) => {
            let synth = generate_synthetic(spec)?;
            (
                synth.corpus,
                spec.cutoff_year(),
                "synthetic".to_string(),
                Some(synth.measured_rank_correlation),
                Vec::new(),
            )
        }
        (None, None) => return Err(Error::Config("no corpus source".into())),
    };
    let (corpus, filter) = match &config.filter {
        Some(f) => {
            let (c, report) = filter_eligible(&corpus, f, rules)?;
            (c, Some(report))
        }
        None => (corpus, None),
    };
    let summary = CorpusSummary {
        source,
        n_articles: corpus.len(),
        n_rejected_records: diagnostics.len(),
        filter,
        measured_rank_correlation: rank,
        groups: corpus.group_ids(),
    };
    Ok(LoadedCorpus {
        corpus,
        cutoff_year,
        summary,
        diagnostics,
    })
}

/// Run every stage for every selected group. Errors confined to one group
/// are recorded and the remaining groups still run.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    let rules = match &config.rules {
        Some(p) => CleaningRules::load(p)?,
        None => CleaningRules::default(),
    };
    let registry = ModelRegistry::with_builtin();
    let specs: Vec<ModelSpec> = config
        .models
        .iter()
        .map(|m| parse_model(m, &registry, config.seed))
        .collect::<Result<_>>()?;
    let strategy_spec = parse_model(config.strategy_model(), &registry, config.seed)?;
    let plan = config.split_plan();
    let params = config.strategy_params();

    let loaded = load_corpus(config, &rules)?;
    let group_ids = if config.groups.is_empty() {
        loaded.summary.groups.clone()
    } else {
        for g in &config.groups {
            if !loaded.summary.groups.contains(g) {
                return Err(Error::Unknown {
                    what: "group",
                    id: g.clone(),
                });
            }
        }
        config.groups.clone()
    };
    let ctx = ExperimentContext::build(
        loaded.corpus,
        loaded.cutoff_year,
        &rules,
        registry,
        config.settings.clone(),
    )?;

    let mut experiments = Vec::new();
    let mut errors = Vec::new();
    let mut group_summaries = Vec::new();
    let mut all_traces = Vec::new();
    let mut curves = Vec::new();
    let mut outcomes = Vec::new();
    let mut whole_set = Vec::new();

    for g in &group_ids {
        let group = GroupSelection::single(g);
        let n_labeled = ctx.labeled_rows(&group).len();
        let mut fail = |stage: &str, e: Error| {
            errors.push(GroupError {
                group_id: g.clone(),
                stage: stage.to_string(),
                message: e.to_string(),
            })
        };

        let mut summary = GroupSummary {
            group_id: g.clone(),
            n_labeled,
            status: "completed".to_string(),
            best_model: None,
            best_above_baseline: None,
            best_accuracy: None,
        };
        let mut strategy_curve = None;
        let mut skipped = false;
        for spec in &specs {
            match run_experiment(&ctx, &group, config.input_set, spec, &plan) {
                Ok(outcome) => {
                    match &outcome {
                        ExperimentOutcome::Skipped(_) => skipped = true,
                        ExperimentOutcome::Completed(r) => {
                            let v = r.above_baseline.as_ref().map(|s| s.mean);
                            if v.is_some() && v > summary.best_above_baseline.or(Some(f64::NEG_INFINITY)) {
                                summary.best_above_baseline = v;
                                summary.best_model = Some(r.model.clone());
                                summary.best_accuracy = Some(r.accuracy.mean);
                            }
                            if strategy_curve.is_none() && r.spec == strategy_spec {
                                strategy_curve = Some(r.curve.clone());
                            }
                        }
                    }
                    experiments.push(outcome);
                }
                Err(e) => fail("experiment", e),
            }
        }
        if skipped {
            summary.status = "skipped".to_string();
            group_summaries.push(summary);
            continue;
        }
        let curve = match strategy_curve {
            Some(c) => Some(c),
            None => match run_experiment(&ctx, &group, config.input_set, &strategy_spec, &plan) {
                Ok(ExperimentOutcome::Completed(r)) => Some(r.curve),
                Ok(ExperimentOutcome::Skipped(_)) => None,
                Err(e) => {
                    fail("experiment", e);
                    None
                }
            },
        };

        match active_learning_trials(&ctx, &group, config.input_set, &strategy_spec, &params, config.strategy.trials) {
            Ok(traces) => {
                if let Some(first) = traces.first() {
                    outcomes.extend(trace_outcomes(&ctx, first));
                }
                if let Some(c) = curve {
                    curves.push((g.clone(), n_labeled, c, traces.clone()));
                }
                all_traces.push(GroupTraces {
                    group_id: g.clone(),
                    mean_round_accuracy: mean_round_accuracy(&traces),
                    traces,
                });
            }
            Err(e) => fail("active_learning", e),
        }

        match whole_set_predictions(&ctx, &group, config.input_set, &strategy_spec, &plan) {
            Ok(preds) => {
                for (row, p) in preds {
                    let a = &ctx.corpus().articles()[row];
                    whole_set.push(ArticleOutcome {
                        article_id: a.article_id.clone(),
                        institution_id: a.institution_id.clone(),
                        group_id: g.clone(),
                        actual: ctx.label(row),
                        predicted: Some(p.predicted()),
                    });
                }
            }
            Err(e) => fail("whole_set_predictions", e),
        }
        if errors.iter().any(|e| &e.group_id == g) {
            summary.status = "failed".to_string();
        }
        group_summaries.push(summary);
    }

    let strategy_inputs: Vec<GroupStrategyResults<'_>> = curves
        .iter()
        .map(|(g, n, c, t)| GroupStrategyResults {
            group_id: g,
            n_articles: *n,
            curve: c,
            traces: t,
        })
        .collect();
    let strategies = compare_strategies(&strategy_inputs, config.strategy.threshold);

    let summaries = summarize_institutions(&outcomes);
    let correlations = institution_correlations(&summaries, ctx.corpus());
    let aggregate = aggregate_correlations(&whole_set)?;

    Ok(RunResult {
        summary: RunSummary {
            seed: config.seed,
            input_set: config.input_set,
            models: specs.iter().map(ModelSpec::label).collect(),
            strategy_model: strategy_spec.label(),
            corpus: loaded.summary,
            groups: group_summaries,
            strategies,
            n_errors: errors.len(),
        },
        experiments,
        traces: all_traces,
        institutions: InstitutionReport {
            summaries,
            correlations,
            aggregate,
        },
        errors,
        diagnostics: loaded.diagnostics,
    })
}

fn trace_outcomes(ctx: &ExperimentContext, trace: &ActiveLearningTrace) -> Vec<ArticleOutcome> {
    let predicted: BTreeMap<&str, _> = trace.ai_predicted.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let mut out = Vec::new();
    for id in trace.human_scored.iter().chain(trace.ai_predicted.iter().map(|(id, _)| id)) {
        let Some(row) = ctx.corpus().position(id) else {
            continue;
        };
        let a = &ctx.corpus().articles()[row];
        out.push(ArticleOutcome {
            article_id: id.clone(),
            institution_id: a.institution_id.clone(),
            group_id: trace.group_id.clone(),
            actual: ctx.label(row),
            predicted: predicted.get(id.as_str()).copied(),
        });
    }
    out
}
