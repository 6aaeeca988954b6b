//! Institution-level funding and score-shift analysis.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GroupedScore};
use crate::error::{Error, Result};
use crate::util::pearson;

/// Funding value of a grouped score: top class 1.0, middle 0.25, lowest 0.
pub fn funding_weight(score: GroupedScore) -> f64 {
    match score.value() {
        3 => 1.0,
        2 => 0.25,
        _ => 0.0,
    }
}

/// Funding weight of a raw class value, rejecting values outside 1..=3.
pub fn funding_weight_of(value: u8) -> Result<f64> {
    Ok(funding_weight(GroupedScore::new(value)?))
}

/// One labelled article after a strategy has run. `predicted` is `None` for
/// human-scored articles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleOutcome {
    pub article_id: String,
    pub institution_id: String,
    pub group_id: String,
    pub actual: GroupedScore,
    pub predicted: Option<GroupedScore>,
}

impl ArticleOutcome {
    /// Score used in the predicted column: the AI score if there is one,
    /// otherwise the human score.
    pub fn effective(&self) -> GroupedScore {
        self.predicted.unwrap_or(self.actual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstitutionSummary {
    pub institution_id: String,
    pub group_id: String,
    pub n_articles: usize,
    pub n_ai_predicted: usize,
    pub avg_score_actual: f64,
    pub avg_score_predicted: f64,
    pub funding_actual: f64,
    pub funding_predicted: f64,
    /// Funding change over AI-predicted articles, percent of their actual
    /// funding (absolute change when that is zero).
    pub score_gain_pct: f64,
    pub score_gain_absolute: bool,
    /// Funding change over all articles, percent of total actual funding
    /// (absolute change when that is zero).
    pub overall_gain_pct: f64,
    pub overall_gain_absolute: bool,
}

fn gain(predicted: f64, actual: f64) -> (f64, bool) {
    if actual > 0.0 {
        ((predicted - actual) / actual * 100.0, false)
    } else {
        (predicted - actual, true)
    }
}

/// One summary per (group, institution), sorted by group then institution.
pub fn summarize_institutions(outcomes: &[ArticleOutcome]) -> Vec<InstitutionSummary> {
    let mut by_key: BTreeMap<(&str, &str), Vec<&ArticleOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_key
            .entry((o.group_id.as_str(), o.institution_id.as_str()))
            .or_default()
            .push(o);
    }
    by_key
        .into_iter()
        .map(|((group, inst), arts)| {
            let n = arts.len() as f64;
            let ai: Vec<&&ArticleOutcome> = arts.iter().filter(|a| a.predicted.is_some()).collect();
            let funding_actual: f64 = arts.iter().map(|a| funding_weight(a.actual)).sum();
            let funding_predicted: f64 = arts.iter().map(|a| funding_weight(a.effective())).sum();
            let ai_actual: f64 = ai.iter().map(|a| funding_weight(a.actual)).sum();
            let ai_predicted: f64 = ai.iter().map(|a| funding_weight(a.effective())).sum();
            let (score_gain_pct, score_gain_absolute) = if ai.is_empty() {
                (0.0, false)
            } else {
                gain(ai_predicted, ai_actual)
            };
            let (overall_gain_pct, overall_gain_absolute) = gain(funding_predicted, funding_actual);
            InstitutionSummary {
                institution_id: inst.to_string(),
                group_id: group.to_string(),
                n_articles: arts.len(),
                n_ai_predicted: ai.len(),
                avg_score_actual: arts.iter().map(|a| f64::from(a.actual.value())).sum::<f64>() / n,
                avg_score_predicted: arts.iter().map(|a| f64::from(a.effective().value())).sum::<f64>() / n,
                funding_actual,
                funding_predicted,
                score_gain_pct,
                score_gain_absolute,
                overall_gain_pct,
                overall_gain_absolute,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstitutionCorrelations {
    pub group_id: String,
    /// Institutions with at least one AI-predicted article.
    pub n_institutions: usize,
    /// Score gain against articles submitted by the institution in all groups.
    pub r_institution_size: Option<f64>,
    /// Score gain against articles submitted to this group.
    pub r_group_size: Option<f64>,
    /// Score gain against actual average grouped score in this group.
    pub r_avg_score: Option<f64>,
}

pub const MIN_CORRELATION_INSTITUTIONS: usize = 3;

/// Bias correlations per group; undefined (`None`) with fewer than three
/// institutions or zero variance.
pub fn institution_correlations(summaries: &[InstitutionSummary], corpus: &Corpus) -> Vec<InstitutionCorrelations> {
    let mut total_size: BTreeMap<&str, f64> = BTreeMap::new();
    for a in corpus.articles() {
        *total_size.entry(a.institution_id.as_str()).or_default() += 1.0;
    }
    let mut by_group: BTreeMap<&str, Vec<&InstitutionSummary>> = BTreeMap::new();
    for s in summaries.iter().filter(|s| s.n_ai_predicted > 0) {
        by_group.entry(s.group_id.as_str()).or_default().push(s);
    }
    let mut groups: Vec<&str> = summaries.iter().map(|s| s.group_id.as_str()).collect();
    groups.sort_unstable();
    groups.dedup();
    groups
        .into_iter()
        .map(|g| {
            let members = by_group.get(g).cloned().unwrap_or_default();
            let gains: Vec<f64> = members.iter().map(|s| s.score_gain_pct).collect();
            let corr = |xs: Vec<f64>| {
                if members.len() < MIN_CORRELATION_INSTITUTIONS {
                    None
                } else {
                    pearson(&gains, &xs)
                }
            };
            InstitutionCorrelations {
                group_id: g.to_string(),
                n_institutions: members.len(),
                r_institution_size: corr(
                    members
                        .iter()
                        .map(|s| total_size.get(s.institution_id.as_str()).copied().unwrap_or(0.0))
                        .collect(),
                ),
                r_group_size: corr(members.iter().map(|s| s.n_articles as f64).collect()),
                r_avg_score: corr(members.iter().map(|s| s.avg_score_actual).collect()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCorrelations {
    pub group_id: String,
    pub n_institutions: usize,
    /// Actual vs predicted average grouped score across institutions.
    pub avg_score_r: Option<f64>,
    /// Actual vs predicted total grouped score across institutions.
    pub total_score_r: Option<f64>,
}

/// Institution-level agreement of whole-set predictions with actual scores.
/// Every outcome is expected to carry a prediction.
pub fn aggregate_correlations(outcomes: &[ArticleOutcome]) -> Result<Vec<AggregateCorrelations>> {
    if let Some(o) = outcomes.iter().find(|o| o.predicted.is_none()) {
        return Err(Error::invalid(
            "predictions",
            format!("article {} has no prediction", o.article_id),
        ));
    }
    let mut by_group: BTreeMap<&str, BTreeMap<&str, (f64, f64, usize)>> = BTreeMap::new();
    for o in outcomes {
        let e = by_group
            .entry(o.group_id.as_str())
            .or_default()
            .entry(o.institution_id.as_str())
            .or_default();
        e.0 += f64::from(o.actual.value());
        e.1 += f64::from(o.effective().value());
        e.2 += 1;
    }
    Ok(by_group
        .into_iter()
        .map(|(g, insts)| {
            let totals_a: Vec<f64> = insts.values().map(|v| v.0).collect();
            let totals_p: Vec<f64> = insts.values().map(|v| v.1).collect();
            let avg_a: Vec<f64> = insts.values().map(|v| v.0 / v.2 as f64).collect();
            let avg_p: Vec<f64> = insts.values().map(|v| v.1 / v.2 as f64).collect();
            AggregateCorrelations {
                group_id: g.to_string(),
                n_institutions: insts.len(),
                avg_score_r: pearson(&avg_a, &avg_p),
                total_score_r: pearson(&totals_a, &totals_p),
            }
        })
        .collect())
}

pub fn write_institutions_csv<W: Write>(summaries: &[InstitutionSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group_id",
        "institution_id",
        "n_articles",
        "n_ai_predicted",
        "avg_score_actual",
        "avg_score_predicted",
        "funding_actual",
        "funding_predicted",
        "score_gain_pct",
        "score_gain_absolute",
        "overall_gain_pct",
        "overall_gain_absolute",
    ])?;
    for s in summaries {
        w.write_record([
            s.group_id.clone(),
            s.institution_id.clone(),
            s.n_articles.to_string(),
            s.n_ai_predicted.to_string(),
            s.avg_score_actual.to_string(),
            s.avg_score_predicted.to_string(),
            s.funding_actual.to_string(),
            s.funding_predicted.to_string(),
            s.score_gain_pct.to_string(),
            s.score_gain_absolute.to_string(),
            s.overall_gain_pct.to_string(),
            s.overall_gain_absolute.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
