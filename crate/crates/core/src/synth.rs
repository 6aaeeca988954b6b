//! Synthetic scored corpora with a planted quality signal.
//!
//! Each article draws a latent quality `z ~ N(0, 1)`; star ratings are
//! assigned by ranking `z` against the requested score distribution. The
//! same `signal_strength` couples `z` to citations, journal impact, author
//! track records and the topic vocabulary of the abstract. The citation
//! coupling is calibrated by bisection until the Spearman correlation between
//! star rating and citation count matches `signal_strength`.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{group_score, ArticleRecord, Corpus};
use crate::error::{Error, Result};
use crate::util::{rng, spearman};

/// Allowed gap between requested and measured rank correlation.
pub const SIGNAL_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_articles: usize,
    pub n_fields: usize,
    pub n_journals: usize,
    pub n_authors: usize,
    pub n_institutions: usize,
    pub n_groups: usize,
    /// Rank coupling between latent quality and the observable signals.
    pub signal_strength: f64,
    /// Probabilities of 1*, 2*, 3* and 4*.
    pub score_distribution: [f64; 4],
    pub years: (i32, i32),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_articles: 2000,
            n_fields: 12,
            n_journals: 80,
            n_authors: 1500,
            n_institutions: 40,
            n_groups: 1,
            signal_strength: 0.8,
            score_distribution: [0.05, 0.25, 0.45, 0.25],
            years: (2014, 2020),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_articles", self.n_articles),
            ("n_fields", self.n_fields),
            ("n_journals", self.n_journals),
            ("n_authors", self.n_authors),
            ("n_institutions", self.n_institutions),
            ("n_groups", self.n_groups),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Infeasible(format!("{name} must be at least 1")));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::Infeasible(format!(
                "signal_strength {} is outside [0, 1]",
                self.signal_strength
            )));
        }
        if self.score_distribution.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Infeasible("score_distribution has entries outside [0, 1]".into()));
        }
        let total: f64 = self.score_distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Infeasible(format!("score_distribution sums to {total}, not 1")));
        }
        if self.years.0 > self.years.1 {
            return Err(Error::Infeasible(format!(
                "year range {}..={} is empty",
                self.years.0, self.years.1
            )));
        }
        Ok(())
    }

    /// Year at which citations were counted: the year after the window ends.
    pub fn cutoff_year(&self) -> i32 {
        self.years.1 + 1
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Spearman correlation between star rating and citation count.
    pub measured_rank_correlation: f64,
    /// Calibrated weight of latent quality in the citation model.
    pub citation_coupling: f64,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let n = spec.n_articles;
    let s = spec.signal_strength;
    let noise = (1.0 - s * s).sqrt();
    let mut rng = rng(spec.seed, &[0x5eed]);

    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let raw_scores = assign_scores(&z, &spec.score_distribution);

    let mut journal_impact: Vec<(f64, usize)> = (0..spec.n_journals)
        .map(|j| (rng.sample::<f64, _>(StandardNormal), j))
        .collect();
    journal_impact.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let journals_by_rank: Vec<usize> = journal_impact.iter().map(|(_, j)| *j).collect();

    let mut talent: Vec<(f64, usize)> = (0..spec.n_authors)
        .map(|a| (rng.sample::<f64, _>(StandardNormal), a))
        .collect();
    talent.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let authors_by_rank: Vec<usize> = talent.iter().map(|(_, a)| *a).collect();

    let field_effect: Vec<f64> = (0..spec.n_fields).map(|_| rng.random_range(0.3..1.5)).collect();
    let inst_weights: Vec<f64> = (0..spec.n_institutions).map(|r| 1.0 / (r as f64 + 1.0)).collect();
    let inst_total: f64 = inst_weights.iter().sum();

    let mut drafts = Vec::with_capacity(n);
    for i in 0..n {
        let year = rng.random_range(spec.years.0..=spec.years.1);
        let class = group_score(raw_scores[i])
            .expect("generated scores are 1..=4")
            .expect("generated scores are non-zero")
            .index();

        let j_latent = s * z[i] + noise * rng.sample::<f64, _>(StandardNormal);
        let journal = journals_by_rank[quantile_index(j_latent, spec.n_journals)];
        let home_field = journal % spec.n_fields;
        let mut fields = vec![home_field];
        if spec.n_fields > 1 && rng.random::<f64>() < 0.25 {
            let other = (home_field + 1 + rng.random_range(0..spec.n_fields - 1)) % spec.n_fields;
            fields.push(other);
        }

        let mut n_auth = 1;
        while n_auth < 10 && rng.random::<f64>() < 0.6 {
            n_auth += 1;
        }
        let mut authors: Vec<usize> = Vec::with_capacity(n_auth);
        for _ in 0..n_auth {
            for _attempt in 0..20 {
                let latent = s * z[i] + noise * rng.sample::<f64, _>(StandardNormal);
                let a = authors_by_rank[quantile_index(latent, spec.n_authors)];
                if !authors.contains(&a) {
                    authors.push(a);
                    break;
                }
            }
        }

        let u = rng.random::<f64>() * inst_total;
        let mut acc = 0.0;
        let mut institution = spec.n_institutions - 1;
        for (r, w) in inst_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                institution = r;
                break;
            }
        }
        let mut institution_count = 1u32;
        while institution_count < 12 && rng.random::<f64>() < 0.5 {
            institution_count += 1;
        }
        let mut country_count = 1u32;
        while country_count < institution_count && rng.random::<f64>() < 0.3 {
            country_count += 1;
        }
        let page_count = if rng.random::<f64>() < 0.1 {
            None
        } else {
            Some(4 + (-8.0 * (1.0 - rng.random::<f64>()).ln()) as u32)
        };
        let group = rng.random_range(0..spec.n_groups);
        let citation_noise: f64 = rng.sample(StandardNormal);
        let (title, abstract_text) = write_text(&mut rng, class, s, year);

        drafts.push(Draft {
            year,
            fields,
            journal,
            authors,
            institution,
            institution_count,
            country_count,
            page_count,
            group,
            citation_noise,
            title,
            abstract_text,
        });
    }

    let citations_for = |coupling: f64| -> Vec<u64> {
        let rest = (1.0 - coupling * coupling).max(0.0).sqrt();
        drafts
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let latent = coupling * z[i] + rest * d.citation_noise;
                let age = f64::from(spec.years.1 + 1 - d.year);
                let log_rate = field_effect[d.fields[0]] + 0.15 * age + 1.6 * latent;
                log_rate.exp().floor() as u64
            })
            .collect()
    };
    let scores_f: Vec<f64> = raw_scores.iter().map(|&r| f64::from(r)).collect();
    let measure = |c: &[u64]| -> f64 {
        let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
        spearman(&scores_f, &cf).unwrap_or(0.0)
    };

    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if measure(&citations_for(mid)) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let coupling = {
        let a = measure(&citations_for(lo));
        let b = measure(&citations_for(hi));
        if (a - s).abs() <= (b - s).abs() {
            lo
        } else {
            hi
        }
    };
    let citations = citations_for(coupling);
    let measured = measure(&citations);
    if (measured - s).abs() > SIGNAL_TOLERANCE {
        return Err(Error::Infeasible(format!(
            "rank correlation {measured:.4} cannot be brought within {SIGNAL_TOLERANCE} of {s} \
             with this score distribution and corpus size"
        )));
    }

    let width = n.to_string().len();
    let articles = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| ArticleRecord {
            article_id: format!("S{:0width$}", i + 1),
            doi: Some(format!("10.5555/synth.{}.{}", spec.seed, i + 1)),
            title: d.title,
            abstract_text: d.abstract_text,
            pub_year: d.year,
            narrow_fields: d.fields.iter().map(|f| format!("F{:02}", f + 1)).collect(),
            journal_id: format!("J{:03}", d.journal + 1),
            author_ids: d.authors.iter().map(|a| format!("A{:04}", a + 1)).collect(),
            institution_count: d.institution_count,
            country_count: d.country_count,
            page_count: d.page_count,
            citation_count: citations[i],
            group_id: format!("G{}", d.group + 1),
            institution_id: format!("I{:02}", d.institution + 1),
            raw_score: Some(raw_scores[i]),
        })
        .collect();

    Ok(SyntheticCorpus {
        corpus: Corpus::new(articles, Some(spec.years))?,
        measured_rank_correlation: measured,
        citation_coupling: coupling,
    })
}

struct Draft {
    year: i32,
    fields: Vec<usize>,
    journal: usize,
    authors: Vec<usize>,
    institution: usize,
    institution_count: u32,
    country_count: u32,
    page_count: Option<u32>,
    group: usize,
    citation_noise: f64,
    title: String,
    abstract_text: String,
}

/// Stars 1..=4 by rank of `z`, with counts from the largest-remainder rule.
fn assign_scores(z: &[f64], dist: &[f64; 4]) -> Vec<u8> {
    let n = z.len();
    let exact: Vec<f64> = dist.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remainders: Vec<(f64, usize)> =
        exact.iter().enumerate().map(|(k, e)| (e - e.floor(), k)).collect();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - counts.iter().sum::<usize>();
    for (_, k) in remainders.into_iter().take(short) {
        counts[k] += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let mut scores = vec![0u8; n];
    let mut pos = 0;
    for (k, &c) in counts.iter().enumerate() {
        for &i in &order[pos..pos + c] {
            scores[i] = k as u8 + 1;
        }
        pos += c;
    }
    scores
}

fn quantile_index(latent: f64, n: usize) -> usize {
    ((normal_cdf(latent) * n as f64) as usize).min(n - 1)
}

/// Standard normal CDF (Abramowitz-Stegun 7.1.26 erf, |error| < 1.5e-7).
pub fn normal_cdf(x: f64) -> f64 {
    let t = x.abs() / std::f64::consts::SQRT_2;
    let k = 1.0 / (1.0 + 0.327_591_1 * t);
    let poly = k
        * (0.254_829_592
            + k * (-0.284_496_736 + k * (1.421_413_741 + k * (-1.453_152_027 + k * 1.061_405_429))));
    let erf = 1.0 - poly * (-t * t).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

const TOPICS: [&[&str]; 3] = [
    &[
        "anecdotal", "descriptive", "preliminary", "exploratory", "narrative", "pilot",
        "informal", "tentative", "provisional", "localised", "routine", "incremental",
        "unvalidated", "retrospective", "convenience", "self-reported", "single-centre",
        "commentary", "speculative", "modest",
    ],
    &[
        "systematic", "comparative", "multicentre", "longitudinal", "validated", "controlled",
        "replicated", "robust", "rigorous", "quantitative", "standardised", "calibrated",
        "benchmarked", "representative", "cohort", "multisite", "prospective", "audited",
        "consistent", "careful",
    ],
    &[
        "novel", "breakthrough", "mechanistic", "transformative", "randomised", "definitive",
        "paradigm", "pioneering", "landmark", "unprecedented", "causal", "genome-wide",
        "foundational", "decisive", "generalisable", "large-scale", "international",
        "predictive", "theoretical", "discovery",
    ],
];

const FILLER: &[&str] = &[
    "the", "study", "data", "we", "analysis", "results", "model", "approach", "sample",
    "method", "evidence", "effects", "participants", "framework", "patterns", "outcomes",
    "factors", "using", "between", "across", "within", "response", "levels", "changes",
    "measures", "process", "structure", "conditions", "groups", "time", "role", "impact",
    "values", "relationship", "research", "findings", "design", "population", "literature",
    "context", "practice", "policy", "system", "performance", "quality", "development",
    "variation", "estimates", "associated", "observed", "reported", "examined", "indicate",
    "suggest", "show", "provide", "compared", "including", "based", "related",
];

const OPENERS: &[&str] = &[
    "This", "We", "Our", "These", "The", "Here", "In", "Overall", "Further", "Such",
];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[(rng.next_u32() as usize) % words.len()]
}

/// Share of topic words that follow the article's class at full signal; the
/// rest are drawn from a random tier.
const TOPIC_SIGNAL_SHARE: f64 = 0.15;

fn topic_tier(rng: &mut ChaCha8Rng, class: usize, signal: f64) -> usize {
    if rng.random::<f64>() < signal * TOPIC_SIGNAL_SHARE {
        class
    } else {
        rng.random_range(0..3)
    }
}

fn sentence(rng: &mut ChaCha8Rng, class: usize, signal: f64) -> String {
    let tier = TOPICS[topic_tier(rng, class, signal)];
    let mut words = vec![pick(rng, OPENERS).to_string()];
    let lead = rng.random_range(2..5);
    for _ in 0..lead {
        words.push(pick(rng, FILLER).to_string());
    }
    words.push(pick(rng, tier).to_string());
    words.push(pick(rng, tier).to_string());
    let tail = rng.random_range(3..8);
    for _ in 0..tail {
        words.push(pick(rng, FILLER).to_string());
    }
    format!("{}.", words.join(" "))
}

fn write_text(rng: &mut ChaCha8Rng, class: usize, signal: f64, year: i32) -> (String, String) {
    let tier = TOPICS[topic_tier(rng, class, signal)];
    let mut title_words = vec![capitalize(pick(rng, tier)), pick(rng, tier).to_string()];
    title_words.push(pick(rng, FILLER).to_string());
    title_words.push(pick(rng, FILLER).to_string());
    let title = title_words.join(" ");

    let mut sentences = Vec::new();
    let mut len = 0;
    while len < 520 {
        let s = sentence(rng, class, signal);
        len += s.len() + 1;
        sentences.push(s);
    }
    for _ in 0..rng.random_range(0..3) {
        sentences.push(sentence(rng, class, signal));
    }
    let mut abstract_text = sentences.join(" ");
    if rng.random::<f64>() < 0.3 {
        abstract_text.push_str(&format!(" © {year} Synthetic Press Ltd. All rights reserved."));
    }
    (title, abstract_text)
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(signal: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_articles: 400,
            n_authors: 300,
            n_journals: 20,
            n_institutions: 10,
            signal_strength: signal,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.959_964) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(-1.0) - 0.158_655_25).abs() < 1e-6);
    }

    #[test]
    fn score_counts_follow_distribution() {
        let z: Vec<f64> = (0..103).map(|i| i as f64).collect();
        let s = assign_scores(&z, &[0.05, 0.25, 0.45, 0.25]);
        let counts: Vec<usize> = (1..=4).map(|k| s.iter().filter(|&&x| x == k).count()).collect();
        assert_eq!(counts.iter().sum::<usize>(), 103);
        assert_eq!(counts, vec![5, 26, 46, 26]);
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(0.5, 1);
        s.n_authors = 0;
        assert!(matches!(generate_synthetic(&s), Err(Error::Infeasible(_))));
        let mut s = small(1.5, 1);
        assert!(generate_synthetic(&s).is_err());
        s.signal_strength = 0.5;
        s.score_distribution = [0.5, 0.5, 0.5, 0.0];
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn measured_signal_tracks_request() {
        for &sig in &[0.0, 0.4, 0.8] {
            let out = generate_synthetic(&small(sig, 3)).unwrap();
            assert!((out.measured_rank_correlation - sig).abs() <= SIGNAL_TOLERANCE);
            let scores: Vec<f64> =
                out.corpus.articles().iter().map(|a| f64::from(a.raw_score.unwrap())).collect();
            let cites: Vec<f64> =
                out.corpus.articles().iter().map(|a| a.citation_count as f64).collect();
            let rho = spearman(&scores, &cites).unwrap();
            assert!((rho - out.measured_rank_correlation).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic(&small(0.8, 11)).unwrap();
        let b = generate_synthetic(&small(0.8, 11)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.corpus.write_jsonl(&mut x).unwrap();
        b.corpus.write_jsonl(&mut y).unwrap();
        assert_eq!(x, y);
        let c = generate_synthetic(&small(0.8, 12)).unwrap();
        let mut z = Vec::new();
        c.corpus.write_jsonl(&mut z).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn abstracts_pass_default_filter() {
        let out = generate_synthetic(&small(0.5, 5)).unwrap();
        let rules = crate::text::CleaningRules::default();
        for a in out.corpus.articles() {
            assert!(crate::text::clean_abstract(&a.abstract_text, &rules).char_length >= 500);
        }
    }
}
