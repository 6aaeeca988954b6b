//! Abstract cleaning, tokenization, n-gram extraction and chi-squared text
//! feature selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GroupedScore};
use crate::error::{Error, Result};
use crate::indicators::{BaseFeatures, BASE_FEATURE_NAMES};

/// Cleaning rules that ship with the crate.
pub const DEFAULT_RULES: &str = include_str!("../rules/default_cleaning.rules");

/// Default number of selected text features (10 base + 990 text = 1000 inputs).
pub const DEFAULT_TEXT_FEATURES: usize = 990;

/// Minimum number of training documents an n-gram must occur in to be a candidate.
pub const MIN_NGRAM_DF: usize = 2;

const JOURNAL_PREFIX: &str = "journal:";

const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "cf", "dr", "e.g", "eg", "eq", "fig", "figs", "i.e", "ie", "mr", "mrs", "ms",
    "no", "prof", "vol", "vs",
];

/// Ordered list of boilerplate patterns removed from abstracts.
#[derive(Debug, Clone)]
pub struct CleaningRules {
    rules: Vec<Regex>,
}

impl CleaningRules {
    /// Parse a rule file: one regex per line, `#` comments, blank lines skipped.
    pub fn parse(source: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let re = Regex::new(line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: format!("bad cleaning rule: {e}"),
            })?;
            rules.push(re);
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src)
    }

    pub fn empty() -> Self {
        Self { rules: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Apply every rule in order and collapse whitespace.
    pub fn apply(&self, raw: &str) -> String {
        let mut text = raw.to_string();
        for re in &self.rules {
            if re.is_match(&text) {
                text = re.replace_all(&text, " ").into_owned();
            }
        }
        collapse_whitespace(&text)
    }
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self::parse(DEFAULT_RULES).expect("default cleaning rules are valid")
    }
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// An abstract after boilerplate removal.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanedAbstract {
    /// Cleaned text with original case, whitespace collapsed.
    pub text: String,
    /// Lowercased tokens per sentence.
    pub sentences: Vec<Vec<String>>,
    pub char_length: usize,
}

pub fn clean_abstract(raw: &str, rules: &CleaningRules) -> CleanedAbstract {
    let text = rules.apply(raw);
    let sentences = split_sentences(&text)
        .into_iter()
        .map(|s| tokenize(s).into_iter().map(|t| t.to_lowercase()).collect::<Vec<_>>())
        .filter(|toks: &Vec<String>| !toks.is_empty())
        .collect();
    CleanedAbstract {
        char_length: text.chars().count(),
        text,
        sentences,
    }
}

/// Words: maximal runs of alphanumerics, allowing single internal hyphens or
/// apostrophes between alphanumerics.
pub fn tokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        loop {
            if j < chars.len() && chars[j].1.is_alphanumeric() {
                j += 1;
            } else if j + 1 < chars.len()
                && is_joiner(chars[j].1)
                && chars[j + 1].1.is_alphanumeric()
            {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        out.push(&text[start..end]);
        i = j;
    }
    out
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}' | '\u{2010}' | '\u{2011}')
}

/// Split on `.`, `!` or `?` followed by whitespace and an uppercase letter.
/// A `.` directly after a listed abbreviation does not end a sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            let boundary = j > i + 1
                && j < chars.len()
                && chars[j].1.is_uppercase()
                && !(c == '.' && ends_with_abbreviation(&text[start..pos]));
            if boundary {
                let end = pos + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = chars[j].0;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn ends_with_abbreviation(prefix: &str) -> bool {
    let last = prefix
        .rsplit(|c: char| c.is_whitespace() || c == '(')
        .next()
        .unwrap_or("")
        .to_lowercase();
    ABBREVIATIONS.contains(&last.as_str())
}

/// Sentence-bounded unigrams, bigrams and trigrams from the abstract plus the
/// title (treated as one more sentence).
pub fn extract_ngrams(cleaned: &CleanedAbstract, title: &str) -> BTreeSet<String> {
    let title_tokens: Vec<String> = tokenize(title).into_iter().map(str::to_lowercase).collect();
    let mut out = BTreeSet::new();
    for sentence in cleaned.sentences.iter().chain(std::iter::once(&title_tokens)) {
        for n in 1..=3 {
            for window in sentence.windows(n) {
                out.insert(window.join(" "));
            }
        }
    }
    out
}

pub fn journal_feature(journal_id: &str) -> String {
    format!("{JOURNAL_PREFIX}{journal_id}")
}

pub fn is_journal_feature(name: &str) -> bool {
    name.starts_with(JOURNAL_PREFIX)
}

/// Interned text features for every article of a corpus.
///
/// Feature ids are assigned in lexicographic order of their names, so sorting
/// by id is sorting by name.
#[derive(Debug, Clone)]
pub struct TextIndex {
    names: Vec<String>,
    docs: Vec<Vec<u32>>,
}

impl TextIndex {
    pub fn build(corpus: &Corpus, rules: &CleaningRules) -> Self {
        let per_article: Vec<BTreeSet<String>> = corpus
            .articles()
            .par_iter()
            .map(|a| {
                let cleaned = clean_abstract(&a.abstract_text, rules);
                let mut f = extract_ngrams(&cleaned, &a.title);
                f.insert(journal_feature(&a.journal_id));
                f
            })
            .collect();
        Self::from_feature_sets(per_article)
    }

    pub fn from_feature_sets(sets: Vec<BTreeSet<String>>) -> Self {
        let vocab: BTreeSet<&String> = sets.iter().flatten().collect();
        let names: Vec<String> = vocab.into_iter().cloned().collect();
        let lookup: HashMap<&str, u32> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect();
        let docs = sets
            .iter()
            .map(|s| s.iter().map(|f| lookup[f.as_str()]).collect())
            .collect();
        Self { names, docs }
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| i as u32)
    }

    pub fn doc(&self, row: usize) -> &[u32] {
        &self.docs[row]
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.names.len()
    }
}

/// Chi-squared statistic of a binary feature against the class label, over
/// the full presence x class contingency table. Cells with zero expected count
/// contribute nothing.
pub fn chi2_statistic(present: [u64; 3], class_totals: [u64; 3]) -> f64 {
    let n: u64 = class_totals.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n_present: u64 = present.iter().sum();
    let n = n as f64;
    let rows = [n_present as f64, n - n_present as f64];
    let mut chi2 = 0.0;
    for c in 0..3 {
        let observed = [present[c] as f64, (class_totals[c] - present[c]) as f64];
        for r in 0..2 {
            let expected = rows[r] * class_totals[c] as f64 / n;
            if expected > 0.0 {
                let d = observed[r] - expected;
                chi2 += d * d / expected;
            }
        }
    }
    chi2
}

/// Candidate pool and chi-squared scores over the given training rows.
///
/// N-grams need a document frequency of at least `min_df` among the training
/// rows; every journal feature seen in training is a candidate.
pub fn chi2_scores(
    index: &TextIndex,
    train_rows: &[usize],
    labels: &[GroupedScore],
    min_df: usize,
) -> Vec<(u32, f64)> {
    assert_eq!(train_rows.len(), labels.len(), "chi2_scores: length mismatch");
    let mut class_totals = [0u64; 3];
    let mut counts: HashMap<u32, [u64; 3]> = HashMap::new();
    for (&row, label) in train_rows.iter().zip(labels) {
        let c = label.index();
        class_totals[c] += 1;
        for &f in index.doc(row) {
            counts.entry(f).or_default()[c] += 1;
        }
    }
    let mut scores: Vec<(u32, f64)> = counts
        .into_iter()
        .filter(|(f, cnt)| {
            is_journal_feature(index.name(*f)) || cnt.iter().sum::<u64>() as usize >= min_df
        })
        .map(|(f, cnt)| (f, chi2_statistic(cnt, class_totals)))
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scores
}

/// Top-`k` text features by chi-squared score over training rows only; ties
/// go to the lexicographically smaller name.
pub fn chi2_select(
    index: &TextIndex,
    train_rows: &[usize],
    labels: &[GroupedScore],
    k: usize,
) -> Vec<u32> {
    chi2_scores(index, train_rows, labels, MIN_NGRAM_DF)
        .into_iter()
        .take(k)
        .map(|(f, _)| f)
        .collect()
}

/// Which inputs feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum InputSet {
    /// Nine bibliometric indicators.
    Bibliometric,
    /// Bibliometrics plus journal impact.
    Journal,
    /// Bibliometrics, journal impact and selected text features.
    Text,
}

impl InputSet {
    pub fn base_columns(self) -> usize {
        match self {
            InputSet::Bibliometric => 9,
            InputSet::Journal | InputSet::Text => 10,
        }
    }

    pub fn number(self) -> u8 {
        self.into()
    }
}

impl From<InputSet> for u8 {
    fn from(s: InputSet) -> u8 {
        match s {
            InputSet::Bibliometric => 1,
            InputSet::Journal => 2,
            InputSet::Text => 3,
        }
    }
}

impl TryFrom<u8> for InputSet {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(InputSet::Bibliometric),
            2 => Ok(InputSet::Journal),
            3 => Ok(InputSet::Text),
            other => Err(format!("input set must be 1, 2 or 3, got {other}")),
        }
    }
}

impl fmt::Display for InputSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Dense row-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    column_names: Vec<String>,
    row_ids: Vec<String>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(column_names: Vec<String>, row_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != column_names.len() * row_ids.len() {
            return Err(Error::invalid(
                "values",
                format!(
                    "expected {} x {} cells, got {}",
                    row_ids.len(),
                    column_names.len(),
                    values.len()
                ),
            ));
        }
        Ok(Self {
            column_names,
            row_ids,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    /// Rows picked by position, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let d = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self {
            column_names: self.column_names.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["article_id".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Assemble the matrix for `rows` (corpus positions): base columns for the
/// input set, then one presence column per selected text feature.
pub fn build_matrix(
    corpus: &Corpus,
    base: &[BaseFeatures],
    index: Option<&TextIndex>,
    rows: &[usize],
    input_set: InputSet,
    selected: &[u32],
) -> Result<FeatureMatrix> {
    let n_base = input_set.base_columns();
    let text_cols = if input_set == InputSet::Text { selected } else { &[] };
    let index = match (index, text_cols.is_empty()) {
        (Some(ix), _) => Some(ix),
        (None, true) => None,
        (None, false) => {
            return Err(Error::invalid("selected", "text features selected without a text index"))
        }
    };
    let mut column_names: Vec<String> =
        BASE_FEATURE_NAMES[..n_base].iter().map(|s| s.to_string()).collect();
    let mut col_of: BTreeMap<u32, usize> = BTreeMap::new();
    if let Some(ix) = index {
        for (j, &f) in text_cols.iter().enumerate() {
            column_names.push(ix.name(f).to_string());
            col_of.insert(f, n_base + j);
        }
    }
    let d = column_names.len();
    let mut values = vec![0.0; rows.len() * d];
    let mut row_ids = Vec::with_capacity(rows.len());
    for (out_row, &r) in rows.iter().enumerate() {
        let feats = base.get(r).ok_or_else(|| Error::Unknown {
            what: "base feature row",
            id: r.to_string(),
        })?;
        let article = corpus.article(r).ok_or_else(|| Error::Unknown {
            what: "article row",
            id: r.to_string(),
        })?;
        row_ids.push(article.article_id.clone());
        let dst = &mut values[out_row * d..(out_row + 1) * d];
        dst[..n_base].copy_from_slice(&feats.as_array()[..n_base]);
        if let Some(ix) = index {
            if !col_of.is_empty() {
                for f in ix.doc(r) {
                    if let Some(&c) = col_of.get(f) {
                        dst[c] = 1.0;
                    }
                }
            }
        }
    }
    FeatureMatrix::new(column_names, row_ids, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cleaned(s: &str) -> CleanedAbstract {
        clean_abstract(s, &CleaningRules::default())
    }

    #[test]
    fn copyright_and_heading_removed() {
        let c = cleaned("Results: We find X. © 2017 Elsevier.");
        assert_eq!(c.sentences, vec![vec!["we", "find", "x"]]);
    }

    #[test]
    fn no_rule_match_is_identity_apart_from_case() {
        let raw = "Graphene sheets conduct heat. They also bend.";
        let c = cleaned(raw);
        assert_eq!(c.text, raw);
        assert_eq!(
            c.sentences,
            vec![vec!["graphene", "sheets", "conduct", "heat"], vec!["they", "also", "bend"]]
        );
    }

    #[test]
    fn uppercase_headings_split_into_sentences() {
        let c = cleaned("BACKGROUND: A. METHODS: B.");
        assert_eq!(c.sentences, vec![vec!["a"], vec!["b"]]);
    }

    #[test]
    fn rule_file_parsing() {
        let rules = CleaningRules::parse("# comment\n\nfoo\n  bar  \n").unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules.apply("a foo b bar c"), "a b c");
        assert!(matches!(
            CleaningRules::parse("ok\n(unclosed"),
            Err(Error::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn tokenizer_keeps_internal_joiners() {
        assert_eq!(
            tokenize("state-of-the-art models don't fail -- 3D data, x-"),
            vec!["state-of-the-art", "models", "don't", "fail", "3D", "data", "x"]
        );
    }

    #[test]
    fn sentence_splitter_respects_abbreviations() {
        let s = split_sentences("Shown by Smith et al. Results differ. See Fig. A. done. Next?");
        assert_eq!(
            s,
            vec!["Shown by Smith et al. Results differ.", "See Fig. A. done.", "Next?"]
        );
    }

    #[test]
    fn ngrams_single_sentence() {
        let c = CleanedAbstract {
            text: "the cat sat".into(),
            sentences: vec![vec!["the".into(), "cat".into(), "sat".into()]],
            char_length: 11,
        };
        let got = extract_ngrams(&c, "");
        let want: BTreeSet<String> = ["the", "cat", "sat", "the cat", "cat sat", "the cat sat"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn ngrams_do_not_cross_sentences() {
        let got = extract_ngrams(&cleaned("A b. C d."), "");
        assert!(got.contains("a b"));
        assert!(got.contains("c d"));
        assert!(!got.contains("b c"));
    }

    #[test]
    fn title_only() {
        let got = extract_ngrams(&cleaned(""), "Alpha");
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec!["alpha"]);
    }

    #[test]
    fn ngram_count_for_distinct_tokens() {
        for w in 3..12 {
            let words: Vec<String> = (0..w).map(|i| format!("w{i}")).collect();
            let c = CleanedAbstract {
                text: words.join(" "),
                sentences: vec![words.clone()],
                char_length: 0,
            };
            assert_eq!(extract_ngrams(&c, "").len(), w + (w - 1) + (w - 2));
        }
    }

    #[test]
    fn chi2_zero_under_independence() {
        assert_eq!(chi2_statistic([5, 5, 5], [10, 10, 10]), 0.0);
    }

    #[test]
    fn chi2_toy_matches_hand_table() {
        // Present in both class-3 articles, absent in both class-1 articles.
        // Row totals 2/2, column totals 2/0/2, every expected count 1 in the
        // non-empty columns: four cells of (1-0)^2/1 or (2-1)^2/1.
        let v = chi2_statistic([0, 0, 2], [2, 0, 2]);
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn input_set_serde() {
        let s: InputSet = serde_json::from_str("3").unwrap();
        assert_eq!(s, InputSet::Text);
        assert!(serde_json::from_str::<InputSet>("4").is_err());
        assert_eq!(serde_json::to_string(&InputSet::Journal).unwrap(), "2");
    }
}
