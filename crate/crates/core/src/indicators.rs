//! Field- and year-normalized citation indicators and the ten per-article
//! bibliometric inputs.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::{clean_abstract, split_sentences, tokenize, CleaningRules};
use crate::util::{mean, median};

/// Denominator substituted when every article in a field-year is uncited.
pub const ZERO_MEAN_EPSILON: f64 = 1e-9;

pub const BASE_FEATURE_NAMES: [&str; 10] = [
    "f1_nlcs",
    "f2_log_authors",
    "f3_log_institutions",
    "f4_log_countries",
    "f5_log_first_author_outputs",
    "f6_first_author_mnlcs",
    "f7_max_author_mnlcs",
    "f8_pages",
    "f9_readability",
    "f10_journal_mnlcs",
];

/// ln(1 + x) for a non-negative count.
pub fn log1(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid("count", format!("{x} is negative")));
    }
    Ok(x.ln_1p())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlcsTable {
    /// Mean ln(1 + citations) per (narrow field, year).
    pub field_year_means: BTreeMap<(String, i32), f64>,
    /// NLCS per article, aligned with corpus order.
    pub nlcs: Vec<f64>,
    /// Field-years whose mean was zero and were floored to epsilon.
    pub zero_mean_field_years: Vec<(String, i32)>,
}

impl NlcsTable {
    pub fn global_mean(&self) -> f64 {
        mean(&self.nlcs)
    }
}

pub fn compute_nlcs(corpus: &Corpus) -> NlcsTable {
    let logs: Vec<f64> = corpus
        .articles()
        .iter()
        .map(|a| (a.citation_count as f64).ln_1p())
        .collect();
    let mut field_year_means = BTreeMap::new();
    let mut zero_mean_field_years = Vec::new();
    for (key, rows) in corpus.field_year_index() {
        let m = rows.iter().map(|&r| logs[r]).sum::<f64>() / rows.len() as f64;
        if m == 0.0 {
            zero_mean_field_years.push(key.clone());
        }
        field_year_means.insert(key.clone(), m);
    }
    let nlcs = corpus
        .articles()
        .iter()
        .zip(&logs)
        .map(|(a, &log)| {
            let mut fields: Vec<&String> = a.narrow_fields.iter().collect();
            fields.sort();
            fields.dedup();
            let denom = fields
                .iter()
                .map(|f| field_year_means[&((*f).clone(), a.pub_year)])
                .sum::<f64>()
                / fields.len() as f64;
            log / if denom > 0.0 { denom } else { ZERO_MEAN_EPSILON }
        })
        .collect();
    NlcsTable {
        field_year_means,
        nlcs,
        zero_mean_field_years,
    }
}

/// Mean NLCS over every corpus article listing the author in any position.
pub fn author_mnlcs(corpus: &Corpus, nlcs: &NlcsTable, author_id: &str) -> Result<f64> {
    let rows = corpus.author_articles(author_id).ok_or_else(|| Error::Unknown {
        what: "author",
        id: author_id.to_string(),
    })?;
    Ok(rows.iter().map(|&r| nlcs.nlcs[r]).sum::<f64>() / rows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JournalImpact {
    pub value: f64,
    /// The journal had no articles in the window; `value` is the corpus-wide MNLCS.
    pub fallback: bool,
}

/// Journal MNLCS for an article's year. Articles at least three years older
/// than `cutoff_year` use that year alone; younger ones pool the article year
/// and the two years before it.
pub fn journal_mnlcs(
    corpus: &Corpus,
    nlcs: &NlcsTable,
    journal_id: &str,
    article_year: i32,
    cutoff_year: i32,
) -> Result<JournalImpact> {
    if !corpus.has_journal(journal_id) {
        return Err(Error::Unknown {
            what: "journal",
            id: journal_id.to_string(),
        });
    }
    let first_year = if cutoff_year - article_year >= 3 {
        article_year
    } else {
        article_year - 2
    };
    let values: Vec<f64> = (first_year..=article_year)
        .flat_map(|y| corpus.journal_year_articles(journal_id, y))
        .map(|&r| nlcs.nlcs[r])
        .collect();
    Ok(if values.is_empty() {
        JournalImpact {
            value: nlcs.global_mean(),
            fallback: true,
        }
    } else {
        JournalImpact {
            value: mean(&values),
            fallback: false,
        }
    })
}

/// Vowel groups (a, e, i, o, u, y), minus a trailing silent `e`, at least one.
pub fn syllables(word: &str) -> usize {
    let lower = word.to_lowercase();
    let mut count = 0;
    let mut prev_vowel = false;
    for c in lower.chars() {
        let v = matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        if v && !prev_vowel {
            count += 1;
        }
        prev_vowel = v;
    }
    if lower.ends_with('e') && count > 1 {
        count -= 1;
    }
    count.max(1)
}

pub fn flesch_kincaid(words: usize, sentences: usize, syllables: usize) -> f64 {
    0.39 * (words as f64 / sentences as f64) + 11.8 * (syllables as f64 / words as f64) - 15.59
}

/// Flesch-Kincaid grade level using the crate's tokenizer, sentence splitter
/// and syllable heuristic.
pub fn readability(text: &str) -> Result<f64> {
    let mut n_sentences = 0;
    let mut n_words = 0;
    let mut n_syllables = 0;
    for sentence in split_sentences(text) {
        let words = tokenize(sentence);
        if words.is_empty() {
            continue;
        }
        n_sentences += 1;
        n_words += words.len();
        n_syllables += words.iter().map(|w| syllables(w)).sum::<usize>();
    }
    if n_words == 0 {
        return Err(Error::Readability("no words"));
    }
    if n_sentences == 0 {
        return Err(Error::Readability("no sentences"));
    }
    Ok(flesch_kincaid(n_words, n_sentences, n_syllables))
}

/// The ten numeric inputs for one article.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseFeatures {
    pub f1_nlcs: f64,
    pub f2_log_authors: f64,
    pub f3_log_institutions: f64,
    pub f4_log_countries: f64,
    pub f5_log_first_author_outputs: f64,
    pub f6_first_author_mnlcs: f64,
    pub f7_max_author_mnlcs: f64,
    pub f8_pages: f64,
    pub f9_readability: f64,
    pub f10_journal_mnlcs: f64,
}

impl BaseFeatures {
    pub fn as_array(&self) -> [f64; 10] {
        [
            self.f1_nlcs,
            self.f2_log_authors,
            self.f3_log_institutions,
            self.f4_log_countries,
            self.f5_log_first_author_outputs,
            self.f6_first_author_mnlcs,
            self.f7_max_author_mnlcs,
            self.f8_pages,
            self.f9_readability,
            self.f10_journal_mnlcs,
        ]
    }
}

/// Base features plus the articles whose journal impact fell back to the
/// corpus mean.
#[derive(Debug, Clone)]
pub struct BaseFeatureTable {
    pub rows: Vec<BaseFeatures>,
    pub journal_fallbacks: Vec<String>,
}

pub fn base_features(
    corpus: &Corpus,
    nlcs: &NlcsTable,
    cutoff_year: i32,
    rules: &CleaningRules,
) -> Result<BaseFeatureTable> {
    let author_impact: HashMap<&str, f64> = corpus
        .authors()
        .map(|a| Ok((a, author_mnlcs(corpus, nlcs, a)?)))
        .collect::<Result<_>>()?;
    let pages = page_medians(corpus)?;

    let rows: Vec<(BaseFeatures, bool)> = corpus
        .articles()
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let first = a.first_author();
            let first_outputs = corpus.author_articles(first).map_or(0, <[usize]>::len);
            let f7 = a
                .author_ids
                .iter()
                .map(|au| author_impact[au.as_str()])
                .fold(f64::NEG_INFINITY, f64::max);
            let cleaned = clean_abstract(&a.abstract_text, rules);
            let f9 = readability(&cleaned.text).map_err(|e| {
                Error::invalid("abstract_text", format!("{}: {e}", a.article_id))
            })?;
            let journal = journal_mnlcs(corpus, nlcs, &a.journal_id, a.pub_year, cutoff_year)?;
            let f8 = match a.page_count {
                Some(p) => f64::from(p),
                None => pages.for_group(&a.group_id),
            };
            Ok((
                BaseFeatures {
                    f1_nlcs: nlcs.nlcs[i],
                    f2_log_authors: (a.author_ids.len() as f64).ln_1p(),
                    f3_log_institutions: f64::from(a.institution_count).ln_1p(),
                    f4_log_countries: f64::from(a.country_count).ln_1p(),
                    f5_log_first_author_outputs: (first_outputs as f64).ln_1p(),
                    f6_first_author_mnlcs: author_impact[first],
                    f7_max_author_mnlcs: f7,
                    f8_pages: f8,
                    f9_readability: f9,
                    f10_journal_mnlcs: journal.value,
                },
                journal.fallback,
            ))
        })
        .collect::<Result<_>>()?;

    let journal_fallbacks = corpus
        .articles()
        .iter()
        .zip(&rows)
        .filter(|(_, (_, fb))| *fb)
        .map(|(a, _)| a.article_id.clone())
        .collect();
    Ok(BaseFeatureTable {
        rows: rows.into_iter().map(|(f, _)| f).collect(),
        journal_fallbacks,
    })
}

struct PageMedians {
    by_group: HashMap<String, f64>,
    global: f64,
}

impl PageMedians {
    fn for_group(&self, group: &str) -> f64 {
        self.by_group.get(group).copied().unwrap_or(self.global)
    }
}

fn page_medians(corpus: &Corpus) -> Result<PageMedians> {
    let mut per_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for a in corpus.articles() {
        if let Some(p) = a.page_count {
            per_group.entry(&a.group_id).or_default().push(f64::from(p));
            all.push(f64::from(p));
        }
    }
    let needs_fallback = corpus.articles().iter().any(|a| a.page_count.is_none());
    let global = match median(&all) {
        Some(m) => m,
        None if needs_fallback => {
            return Err(Error::invalid("page_count", "no article in the corpus has a page count"))
        }
        None => 1.0,
    };
    Ok(PageMedians {
        by_group: per_group
            .into_iter()
            .filter_map(|(g, v)| median(&v).map(|m| (g.to_string(), m)))
            .collect(),
        global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ArticleRecord;

    fn art(id: &str, fields: &[&str], year: i32, cites: u64) -> ArticleRecord {
        ArticleRecord {
            article_id: id.into(),
            doi: None,
            title: "t".into(),
            abstract_text: "Some words here. More words there.".into(),
            pub_year: year,
            narrow_fields: fields.iter().map(|s| s.to_string()).collect(),
            journal_id: "J".into(),
            author_ids: vec![format!("au-{id}")],
            institution_count: 1,
            country_count: 1,
            page_count: Some(10),
            citation_count: cites,
            group_id: "G".into(),
            institution_id: "I".into(),
            raw_score: Some(3),
        }
    }

    #[test]
    fn log1_values() {
        assert_eq!(log1(0.0).unwrap(), 0.0);
        assert!((log1(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((log1(9.0).unwrap() - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(log1(-1.0).is_err());
    }

    #[test]
    fn two_article_field_year() {
        // integer counts {0, 5}: logs {0, ln 6}, so nlcs {0, 2} as for {0, e-1}
        let c = Corpus::new(vec![art("a", &["F"], 2015, 0), art("b", &["F"], 2015, 5)], None)
            .unwrap();
        let t = compute_nlcs(&c);
        let m = 6f64.ln() / 2.0;
        assert!((t.field_year_means[&("F".into(), 2015)] - m).abs() < 1e-12);
        assert_eq!(t.nlcs[0], 0.0);
        assert!((t.nlcs[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn multi_field_uses_mean_of_field_means() {
        // F1 articles: logs {ln 1, ln 3} ; F2 articles: logs {ln 9}
        let a = art("a", &["F1"], 2016, 0);
        let b = art("b", &["F1", "F2"], 2016, 2);
        let c = art("c", &["F2"], 2016, 8);
        let corpus = Corpus::new(vec![a, b, c], None).unwrap();
        let t = compute_nlcs(&corpus);
        let f1 = (0.0 + 3f64.ln()) / 2.0;
        let f2 = (3f64.ln() + 9f64.ln()) / 2.0;
        assert!((t.nlcs[1] - 3f64.ln() / ((f1 + f2) / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_field_year_is_floored() {
        let c = Corpus::new(vec![art("a", &["F"], 2015, 0), art("b", &["F"], 2015, 0)], None)
            .unwrap();
        let t = compute_nlcs(&c);
        assert_eq!(t.nlcs, vec![0.0, 0.0]);
        assert_eq!(t.zero_mean_field_years, vec![("F".to_string(), 2015)]);
    }

    #[test]
    fn nlcs_monotone_in_citations() {
        let arts: Vec<_> = (0..8u64).map(|i| art(&format!("a{i}"), &["F"], 2017, i * i)).collect();
        let t = compute_nlcs(&Corpus::new(arts, None).unwrap());
        assert!(t.nlcs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn author_means() {
        let mut a = art("a", &["F"], 2015, 0);
        let mut b = art("b", &["F"], 2015, 5);
        a.author_ids = vec!["x".into()];
        b.author_ids = vec!["y".into(), "x".into()];
        let c = Corpus::new(vec![a, b], None).unwrap();
        let t = compute_nlcs(&c);
        assert!((author_mnlcs(&c, &t, "x").unwrap() - 1.0).abs() < 1e-12);
        assert!((author_mnlcs(&c, &t, "y").unwrap() - 2.0).abs() < 1e-12);
        assert!(author_mnlcs(&c, &t, "nobody").is_err());
    }

    #[test]
    fn author_three_article_mean() {
        let t = NlcsTable {
            field_year_means: BTreeMap::new(),
            nlcs: vec![2.0, 2.0, 0.5],
            zero_mean_field_years: vec![],
        };
        let arts: Vec<_> = (0..3)
            .map(|i| {
                let mut a = art(&format!("a{i}"), &["F"], 2015, 1);
                a.author_ids = vec!["z".into()];
                a
            })
            .collect();
        let c = Corpus::new(arts, None).unwrap();
        assert!((author_mnlcs(&c, &t, "z").unwrap() - 1.5).abs() < 1e-12);
    }

    fn table(values: Vec<f64>) -> NlcsTable {
        NlcsTable {
            field_year_means: BTreeMap::new(),
            nlcs: values,
            zero_mean_field_years: vec![],
        }
    }

    #[test]
    fn journal_window_rules() {
        let arts = vec![
            art("a", &["F"], 2016, 1),
            art("b", &["F"], 2017, 1),
            art("c", &["F"], 2018, 1),
        ];
        let c = Corpus::new(arts, None).unwrap();
        let t = table(vec![1.0, 2.0, 3.0]);
        // age 1 pools 2016..=2018
        let v = journal_mnlcs(&c, &t, "J", 2018, 2019).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12 && !v.fallback);
        // age 3 uses the year alone
        let v = journal_mnlcs(&c, &t, "J", 2018, 2021).unwrap();
        assert!((v.value - 3.0).abs() < 1e-12);
        // same-year pair
        let arts = vec![art("a", &["F"], 2014, 1), art("b", &["F"], 2014, 1)];
        let c = Corpus::new(arts, None).unwrap();
        let v = journal_mnlcs(&c, &table(vec![0.5, 1.5]), "J", 2014, 2021).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn journal_fallback_and_unknown() {
        let c = Corpus::new(vec![art("a", &["F"], 2014, 1)], None).unwrap();
        let t = table(vec![0.8]);
        let v = journal_mnlcs(&c, &t, "J", 2016, 2021).unwrap();
        assert!(v.fallback);
        assert!((v.value - 0.8).abs() < 1e-12);
        assert!(journal_mnlcs(&c, &t, "K", 2014, 2021).is_err());
    }

    #[test]
    fn flesch_kincaid_formula() {
        assert!((flesch_kincaid(10, 1, 15) - 6.01).abs() < 1e-9);
        assert!((flesch_kincaid(1, 1, 1) - (-3.40)).abs() < 1e-9);
    }

    #[test]
    fn readability_from_text() {
        // ten words, fifteen syllables: five one-syllable and five two-syllable words
        let text = "Cats run fast and jump over bigger garden window doorways.";
        let words = tokenize(text);
        assert_eq!(words.len(), 10);
        assert_eq!(words.iter().map(|w| syllables(w)).sum::<usize>(), 15);
        assert!((readability(text).unwrap() - 6.01).abs() < 1e-9);
        assert!((readability("Go.").unwrap() - (-3.40)).abs() < 1e-9);
        assert!(readability("  ...  ").is_err());
    }

    #[test]
    fn readability_duplication_and_whitespace_invariant() {
        let text = "Cells divide rapidly. Tumours grow in complicated patterns!";
        let doubled = format!("{text} {text}");
        let spaced = "Cells   divide\trapidly.\n\nTumours grow in  complicated patterns!";
        let r = readability(text).unwrap();
        assert!((readability(&doubled).unwrap() - r).abs() < 1e-12);
        assert!((readability(spaced).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn syllable_heuristic() {
        assert_eq!(syllables("the"), 1);
        assert_eq!(syllables("make"), 1);
        assert_eq!(syllables("window"), 2);
        assert_eq!(syllables("rhythm"), 1);
        assert_eq!(syllables("2020"), 1);
        assert_eq!(syllables("beautiful"), 3);
    }

    #[test]
    fn base_feature_examples() {
        let mut a = art("a", &["F"], 2015, 3);
        a.author_ids = vec!["solo".into()];
        let mut b = art("b", &["F"], 2015, 3);
        b.author_ids = vec!["p".into(), "q".into(), "r".into()];
        b.page_count = None;
        let mut c = art("c", &["F"], 2015, 3);
        c.page_count = Some(20);
        let mut d = art("d", &["F"], 2015, 3);
        d.page_count = Some(30);
        let corpus = Corpus::new(vec![a, b, c, d], None).unwrap();
        let t = compute_nlcs(&corpus);
        let f = base_features(&corpus, &t, 2021, &CleaningRules::default()).unwrap();
        let fa = f.rows[0];
        assert!((fa.f1_nlcs - 1.0).abs() < 1e-12);
        assert_eq!(fa.f6_first_author_mnlcs, 1.0);
        assert_eq!(fa.f7_max_author_mnlcs, 1.0);
        assert!((f.rows[1].f2_log_authors - 4f64.ln()).abs() < 1e-12);
        // group pages {10, 20, 30}
        assert_eq!(f.rows[1].f8_pages, 20.0);
        assert!(f.journal_fallbacks.is_empty());
    }
}
