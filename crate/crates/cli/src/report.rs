//! Human-readable tables and plot-ready CSVs from a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use refscore::evaluation::ExperimentOutcome;
use refscore::pipeline::{GroupTraces, InstitutionReport, RunSummary};

use crate::output::{verify_run_dir, write_atomic, IntegrityError};

pub struct RunDir {
    pub summary: RunSummary,
    pub experiments: Vec<ExperimentOutcome>,
    pub traces: Vec<GroupTraces>,
    pub institutions: InstitutionReport,
}

fn load<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let bytes = fs::read(dir.join(name)).map_err(|e| IntegrityError {
        file: name.to_string(),
        problem: e.to_string(),
    })?;
    Ok(serde_json::from_slice(&bytes).map_err(|e| IntegrityError {
        file: name.to_string(),
        problem: e.to_string(),
    })?)
}

impl RunDir {
    /// Verify the manifest, then parse the JSON artifacts.
    pub fn open(dir: &Path) -> Result<Self> {
        verify_run_dir(dir)?;
        Ok(Self {
            summary: load(dir, "summary.json")?,
            experiments: load(dir, "experiments.json")?,
            traces: load(dir, "traces.json")?,
            institutions: load(dir, "institutions.json")?,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub fn render_text(run: &RunDir) -> String {
    let mut s = String::new();
    let sm = &run.summary;
    let _ = writeln!(
        s,
        "corpus: {} ({} articles), input set {}, seed {}",
        sm.corpus.source, sm.corpus.n_articles, sm.input_set, sm.seed
    );
    if sm.n_errors > 0 {
        let _ = writeln!(s, "errors: {} (see errors.json)", sm.n_errors);
    }

    let _ = writeln!(s, "\naccuracy above baseline");
    let _ = writeln!(s, "{:<12} {:<6} {:>6} {:>8} {:>8} {:>8}", "group", "model", "n", "mean", "min", "max");
    for o in &run.experiments {
        match o {
            ExperimentOutcome::Completed(r) => {
                let ab = r.above_baseline.as_ref();
                let _ = writeln!(
                    s,
                    "{:<12} {:<6} {:>6} {:>8} {:>8} {:>8}",
                    r.group_id,
                    r.model,
                    r.n_labeled,
                    opt(ab.map(|a| a.mean)),
                    opt(ab.map(|a| a.min)),
                    opt(ab.map(|a| a.max))
                );
            }
            ExperimentOutcome::Skipped(k) => {
                let _ = writeln!(s, "{:<12} skipped: {}", k.group_id, k.reason);
            }
        }
    }

    let _ = writeln!(s, "\nraw accuracy");
    let _ = writeln!(s, "{:<12} {:<6} {:>8} {:>8} {:>8}", "group", "model", "accuracy", "baseline", "pearson");
    for r in run.experiments.iter().filter_map(ExperimentOutcome::report) {
        let _ = writeln!(
            s,
            "{:<12} {:<6} {:>8.4} {:>8.4} {:>8}",
            r.group_id,
            r.model,
            r.accuracy.mean,
            r.baseline.mean,
            opt(r.pearson_r.as_ref().map(|p| p.mean))
        );
    }

    let _ = writeln!(s, "\nconfidence curves (accuracy of the n most confident test predictions)");
    for r in run.experiments.iter().filter_map(ExperimentOutcome::report) {
        let pts = &r.curve.points;
        if pts.is_empty() {
            continue;
        }
        let marks: Vec<String> = [4, 2, 1]
            .iter()
            .map(|d| &pts[(pts.len() / d).max(1) - 1])
            .map(|p| format!("n={} {:.4}", p.n_predicted, p.empirical_accuracy))
            .collect();
        let _ = writeln!(s, "{:<12} {:<6} {}", r.group_id, r.model, marks.join("  "));
    }

    let _ = writeln!(s, "\nactive learning (mean accuracy on unscored articles per round)");
    for g in &run.traces {
        let rounds: Vec<String> = g
            .mean_round_accuracy
            .iter()
            .map(|(r, a, n)| format!("{r}:{a:.4}({n})"))
            .collect();
        let _ = writeln!(s, "{:<12} {}", g.group_id, rounds.join(" "));
    }

    let st = &sm.strategies;
    let _ = writeln!(s, "\nstrategies at threshold {:.2}", st.threshold);
    let _ = writeln!(s, "{:<12} {:>6} {:>10} {:>10}", "group", "n", "high_prob", "active");
    for r in &st.rows {
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>10} {:>10.1}",
            r.group_id, r.n_articles, r.high_probability, r.active_learning
        );
    }
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>10} {:>10.1}",
        "TOTAL",
        st.rows.iter().map(|r| r.n_articles).sum::<usize>(),
        st.total_high_probability,
        st.total_active_learning
    );

    let _ = writeln!(s, "\ninstitution score gain (active learning, trial 0)");
    let _ = writeln!(
        s,
        "{:<12} {:<12} {:>5} {:>5} {:>9} {:>9} {:>10}",
        "group", "institution", "n", "ai", "avg_act", "avg_pred", "gain_pct"
    );
    for i in &run.institutions.summaries {
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:>5} {:>5} {:>9.4} {:>9.4} {:>10}",
            i.group_id,
            i.institution_id,
            i.n_articles,
            i.n_ai_predicted,
            i.avg_score_actual,
            i.avg_score_predicted,
            if i.score_gain_absolute {
                format!("{:+.4}abs", i.score_gain_pct)
            } else {
                format!("{:+.4}", i.score_gain_pct)
            }
        );
    }
    let _ = writeln!(s, "\nbias correlations with score gain");
    for c in &run.institutions.correlations {
        let _ = writeln!(
            s,
            "{:<12} institutions={} size={} group_size={} avg_score={}",
            c.group_id,
            c.n_institutions,
            opt(c.r_institution_size),
            opt(c.r_group_size),
            opt(c.r_avg_score)
        );
    }
    let _ = writeln!(s, "\ninstitution-level agreement of whole-set predictions");
    for c in &run.institutions.aggregate {
        let _ = writeln!(
            s,
            "{:<12} institutions={} avg_score_r={} total_score_r={}",
            c.group_id,
            c.n_institutions,
            opt(c.avg_score_r),
            opt(c.total_score_r)
        );
    }
    s
}

/// Plot-ready tables not already present in the run directory.
pub fn write_plot_csvs(run: &RunDir, out: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "group_id",
        "model",
        "n_labeled",
        "mean_accuracy",
        "mean_baseline",
        "mean_above_baseline",
        "min_above_baseline",
        "max_above_baseline",
    ])?;
    for r in run.experiments.iter().filter_map(ExperimentOutcome::report) {
        let ab = r.above_baseline.as_ref();
        w.write_record([
            r.group_id.clone(),
            r.model.clone(),
            r.n_labeled.to_string(),
            r.accuracy.mean.to_string(),
            r.baseline.mean.to_string(),
            fmt(ab.map(|a| a.mean)),
            fmt(ab.map(|a| a.min)),
            fmt(ab.map(|a| a.max)),
        ])?;
    }
    write_atomic(&out.join("group_metrics.csv"), &w.into_inner()?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group_id", "round", "mean_accuracy_on_unscored", "trials"])?;
    for g in &run.traces {
        for (r, a, n) in &g.mean_round_accuracy {
            w.write_record([g.group_id.clone(), r.to_string(), a.to_string(), n.to_string()])?;
        }
    }
    write_atomic(&out.join("active_rounds.csv"), &w.into_inner()?)?;
    Ok(vec!["group_metrics.csv".into(), "active_rounds.csv".into()])
}
