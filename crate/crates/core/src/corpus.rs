//! Article records, corpus indexes, file ingestion and eligibility filtering.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::text::{clean_abstract, CleaningRules};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    #[serde(default)]
    pub doi: Option<String>,
    pub title: String,
    pub abstract_text: String,
    pub pub_year: i32,
    pub narrow_fields: Vec<String>,
    pub journal_id: String,
    pub author_ids: Vec<String>,
    pub institution_count: u32,
    pub country_count: u32,
    #[serde(default)]
    pub page_count: Option<u32>,
    pub citation_count: u64,
    pub group_id: String,
    pub institution_id: String,
    #[serde(default)]
    pub raw_score: Option<u8>,
}

impl ArticleRecord {
    pub fn first_author(&self) -> &str {
        &self.author_ids[0]
    }

    /// Grouped score, or `None` for unscored articles and excluded zeros.
    pub fn grouped_score(&self) -> Option<GroupedScore> {
        self.raw_score.and_then(|s| group_score(s).ok().flatten())
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.article_id.is_empty() {
            return Err(("article_id", "must not be empty".into()));
        }
        if self.narrow_fields.is_empty() {
            return Err(("narrow_fields", "must list at least one field".into()));
        }
        if self.author_ids.is_empty() {
            return Err(("author_ids", "must list at least one author".into()));
        }
        if self.institution_count == 0 {
            return Err(("institution_count", "must be at least 1".into()));
        }
        if self.country_count == 0 {
            return Err(("country_count", "must be at least 1".into()));
        }
        if self.page_count == Some(0) {
            return Err(("page_count", "must be positive when present".into()));
        }
        if let Some(s) = self.raw_score {
            if s > 4 {
                return Err(("raw_score", format!("{s} is outside 0..=4")));
            }
        }
        Ok(())
    }
}

/// Quality class on the three-level scale used for modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GroupedScore(u8);

impl GroupedScore {
    pub const ALL: [GroupedScore; 3] = [GroupedScore(1), GroupedScore(2), GroupedScore(3)];

    pub fn new(value: u8) -> Result<Self> {
        if (1..=3).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::invalid("grouped score", format!("{value} is outside 1..=3")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based class index.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 3, "class index {i} out of range");
        Self(i as u8 + 1)
    }
}

impl From<GroupedScore> for u8 {
    fn from(s: GroupedScore) -> u8 {
        s.0
    }
}

impl TryFrom<u8> for GroupedScore {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Self::new(v).map_err(|e| e.to_string())
    }
}

impl fmt::Display for GroupedScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Map a star rating to the modelling scale: 1*-2* share a class, zeros are
/// excluded (`Ok(None)`).
pub fn group_score(raw_score: u8) -> Result<Option<GroupedScore>> {
    match raw_score {
        0 => Ok(None),
        1 | 2 => Ok(Some(GroupedScore(1))),
        3 => Ok(Some(GroupedScore(2))),
        4 => Ok(Some(GroupedScore(3))),
        other => Err(Error::invalid("raw_score", format!("{other} is outside 0..=4"))),
    }
}

/// Immutable, indexed article collection.
#[derive(Debug, Clone)]
pub struct Corpus {
    articles: Vec<ArticleRecord>,
    window: Option<(i32, i32)>,
    by_id: HashMap<String, usize>,
    field_year: BTreeMap<(String, i32), Vec<usize>>,
    journal_year: BTreeMap<(String, i32), Vec<usize>>,
    by_author: BTreeMap<String, Vec<usize>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.articles == other.articles && self.window == other.window
    }
}

impl Corpus {
    /// Build a corpus. With no explicit window the window spans the articles'
    /// publication years.
    pub fn new(articles: Vec<ArticleRecord>, window: Option<(i32, i32)>) -> Result<Self> {
        let window = match window {
            Some((a, b)) if a > b => {
                return Err(Error::invalid("window", format!("start {a} is after end {b}")))
            }
            Some(w) => Some(w),
            None => {
                let min = articles.iter().map(|a| a.pub_year).min();
                let max = articles.iter().map(|a| a.pub_year).max();
                min.zip(max)
            }
        };
        let mut by_id = HashMap::with_capacity(articles.len());
        let mut field_year: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
        let mut journal_year: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
        let mut by_author: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, a) in articles.iter().enumerate() {
            a.validate()
                .map_err(|(field, message)| Error::InvalidValue { field, message })?;
            if let Some((lo, hi)) = window {
                if a.pub_year < lo || a.pub_year > hi {
                    return Err(Error::invalid(
                        "pub_year",
                        format!("{} of {} is outside {lo}..={hi}", a.pub_year, a.article_id),
                    ));
                }
            }
            if by_id.insert(a.article_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(a.article_id.clone()));
            }
            let fields: HashSet<&String> = a.narrow_fields.iter().collect();
            for f in fields {
                field_year.entry((f.clone(), a.pub_year)).or_default().push(i);
            }
            journal_year
                .entry((a.journal_id.clone(), a.pub_year))
                .or_default()
                .push(i);
            let authors: HashSet<&String> = a.author_ids.iter().collect();
            for au in authors {
                by_author.entry(au.clone()).or_default().push(i);
            }
        }
        Ok(Self {
            articles,
            window,
            by_id,
            field_year,
            journal_year,
            by_author,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), None).expect("empty corpus is valid")
    }

    pub fn articles(&self) -> &[ArticleRecord] {
        &self.articles
    }

    pub fn into_articles(self) -> Vec<ArticleRecord> {
        self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn window(&self) -> Option<(i32, i32)> {
        self.window
    }

    pub fn article(&self, row: usize) -> Option<&ArticleRecord> {
        self.articles.get(row)
    }

    pub fn position(&self, article_id: &str) -> Option<usize> {
        self.by_id.get(article_id).copied()
    }

    pub fn field_year_index(&self) -> &BTreeMap<(String, i32), Vec<usize>> {
        &self.field_year
    }

    pub fn journal_year_articles(&self, journal_id: &str, year: i32) -> &[usize] {
        self.journal_year
            .get(&(journal_id.to_string(), year))
            .map_or(&[], Vec::as_slice)
    }

    pub fn has_journal(&self, journal_id: &str) -> bool {
        self.journal_year
            .range((journal_id.to_string(), i32::MIN)..=(journal_id.to_string(), i32::MAX))
            .next()
            .is_some()
    }

    pub fn author_articles(&self, author_id: &str) -> Option<&[usize]> {
        self.by_author.get(author_id).map(Vec::as_slice)
    }

    pub fn authors(&self) -> impl Iterator<Item = &str> {
        self.by_author.keys().map(String::as_str)
    }

    /// Distinct group ids in sorted order.
    pub fn group_ids(&self) -> Vec<String> {
        let mut g: Vec<String> = self.articles.iter().map(|a| a.group_id.clone()).collect();
        g.sort();
        g.dedup();
        g
    }

    /// Positions of the articles in `group_id` that carry a grouped score.
    pub fn labeled_rows(&self, group_id: &str) -> Vec<usize> {
        self.articles
            .iter()
            .enumerate()
            .filter(|(_, a)| a.group_id == group_id && a.grouped_score().is_some())
            .map(|(i, _)| i)
            .collect()
    }

    /// Same articles with `group_id` rewritten through `mapping`; unmapped
    /// groups keep their id. Used for merged-panel and broad-field runs.
    pub fn regrouped(&self, mapping: &BTreeMap<String, String>) -> Result<Self> {
        let articles = self
            .articles
            .iter()
            .cloned()
            .map(|mut a| {
                if let Some(g) = mapping.get(&a.group_id) {
                    a.group_id = g.clone();
                }
                a
            })
            .collect();
        Self::new(articles, self.window)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for a in &self.articles {
            serde_json::to_writer(&mut out, a)?;
            out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
        }
        Ok(())
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// A rejected record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.field, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub diagnostics: Vec<Diagnostic>,
}

const REQUIRED_FIELDS: &[&str] = &[
    "article_id",
    "title",
    "abstract_text",
    "pub_year",
    "narrow_fields",
    "journal_id",
    "author_ids",
    "institution_count",
    "country_count",
    "citation_count",
    "group_id",
    "institution_id",
];

pub fn ingest(path: &Path, format: Format) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Jsonl => ingest_jsonl(file),
        Format::Csv => ingest_csv(file),
    }
}

pub fn ingest_jsonl<R: Read>(reader: R) -> Result<Ingested> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: format!("invalid JSON: {e}"),
        })?;
        match value {
            Value::Object(map) => rows.push((line_no, map)),
            _ => {
                return Err(Error::Malformed {
                    line: line_no,
                    message: "expected a JSON object".into(),
                })
            }
        }
    }
    assemble(rows)
}

/// CSV columns carry the JSONL field names; list fields are `;`-separated and
/// empty optional cells mean absent.
pub fn ingest_csv<R: Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Malformed {
                line,
                message: e.to_string(),
            }
        })?;
        let line_no = rec.position().map_or(0, |p| p.line() as usize);
        let mut map = Map::new();
        for (h, cell) in headers.iter().zip(rec.iter()) {
            if let Some(v) = csv_cell(h, cell) {
                map.insert(h.to_string(), v);
            }
        }
        rows.push((line_no, map));
    }
    assemble(rows)
}

fn csv_cell(column: &str, cell: &str) -> Option<Value> {
    let cell = cell.trim();
    if cell.is_empty() {
        return None;
    }
    Some(match column {
        "narrow_fields" | "author_ids" => Value::Array(
            cell.split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Value::String(s.to_string()))
                .collect(),
        ),
        "pub_year" | "institution_count" | "country_count" | "page_count" | "citation_count"
        | "raw_score" => match cell.parse::<i64>() {
            Ok(n) => Value::from(n),
            Err(_) => Value::String(cell.to_string()),
        },
        _ => Value::String(cell.to_string()),
    })
}

fn assemble(rows: Vec<(usize, Map<String, Value>)>) -> Result<Ingested> {
    let mut articles = Vec::with_capacity(rows.len());
    let mut diagnostics = Vec::new();
    let mut seen = HashSet::new();
    for (line, map) in rows {
        if let Some(missing) = REQUIRED_FIELDS
            .iter()
            .find(|f| map.get(**f).is_none_or(Value::is_null))
        {
            diagnostics.push(Diagnostic {
                line,
                field: missing.to_string(),
                message: "required field missing".into(),
            });
            continue;
        }
        let record: ArticleRecord = match serde_json::from_value(Value::Object(map)) {
            Ok(r) => r,
            Err(e) => {
                diagnostics.push(Diagnostic {
                    line,
                    field: "record".into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Err((field, message)) = record.validate() {
            diagnostics.push(Diagnostic {
                line,
                field: field.into(),
                message,
            });
            continue;
        }
        if !seen.insert(record.article_id.clone()) {
            return Err(Error::DuplicateId(record.article_id));
        }
        articles.push(record);
    }
    Ok(Ingested {
        corpus: Corpus::new(articles, None)?,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityFilter {
    pub min_abstract_chars: usize,
    pub year_range: Option<(i32, i32)>,
    /// Drop repeated DOIs (or normalized titles) within a group.
    pub dedupe_within_group: bool,
}

impl Default for EligibilityFilter {
    fn default() -> Self {
        Self {
            min_abstract_chars: 500,
            year_range: None,
            dedupe_within_group: true,
        }
    }
}

/// Removal counts; each article is counted under the first criterion it fails.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub retained: usize,
    pub out_of_range: usize,
    pub zero_score: usize,
    pub short_abstract: usize,
    pub duplicate: usize,
}

impl FilterReport {
    pub fn removed(&self) -> usize {
        self.out_of_range + self.zero_score + self.short_abstract + self.duplicate
    }
}

pub fn filter_eligible(
    corpus: &Corpus,
    filter: &EligibilityFilter,
    rules: &CleaningRules,
) -> Result<(Corpus, FilterReport)> {
    let mut report = FilterReport::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut kept = Vec::new();
    for a in corpus.articles() {
        if let Some((lo, hi)) = filter.year_range {
            if a.pub_year < lo || a.pub_year > hi {
                report.out_of_range += 1;
                continue;
            }
        }
        if a.raw_score == Some(0) {
            report.zero_score += 1;
            continue;
        }
        if clean_abstract(&a.abstract_text, rules).char_length < filter.min_abstract_chars {
            report.short_abstract += 1;
            continue;
        }
        if filter.dedupe_within_group && !seen.insert((a.group_id.clone(), dedupe_key(a))) {
            report.duplicate += 1;
            continue;
        }
        kept.push(a.clone());
    }
    report.retained = kept.len();
    let window = filter.year_range.or(corpus.window());
    Ok((Corpus::new(kept, window)?, report))
}

fn dedupe_key(a: &ArticleRecord) -> String {
    match a.doi.as_deref().map(str::trim).filter(|d| !d.is_empty()) {
        Some(doi) => format!("doi:{}", doi.to_lowercase()),
        None => format!(
            "title:{}",
            a.title
                .chars()
                .filter(|c| c.is_alphabetic())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: &str) -> ArticleRecord {
        ArticleRecord {
            article_id: id.into(),
            doi: Some(format!("10.1/{id}")),
            title: "A title".into(),
            abstract_text: "Words. ".repeat(100),
            pub_year: 2015,
            narrow_fields: vec!["F1".into()],
            journal_id: "J1".into(),
            author_ids: vec!["au1".into()],
            institution_count: 1,
            country_count: 1,
            page_count: Some(10),
            citation_count: 3,
            group_id: "G1".into(),
            institution_id: "I1".into(),
            raw_score: Some(3),
        }
    }

    fn jsonl(records: &[ArticleRecord]) -> String {
        records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn grouping_map() {
        assert_eq!(group_score(0).unwrap(), None);
        assert_eq!(group_score(1).unwrap(), Some(GroupedScore(1)));
        assert_eq!(group_score(2).unwrap(), Some(GroupedScore(1)));
        assert_eq!(group_score(3).unwrap(), Some(GroupedScore(2)));
        assert_eq!(group_score(4).unwrap(), Some(GroupedScore(3)));
        assert!(group_score(5).is_err());
    }

    #[test]
    fn grouping_is_order_preserving() {
        let g: Vec<_> = (1..=4).map(|s| group_score(s).unwrap().unwrap()).collect();
        assert!(g.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let ing = ingest_jsonl("".as_bytes()).unwrap();
        assert!(ing.corpus.is_empty());
        assert!(ing.diagnostics.is_empty());
    }

    #[test]
    fn missing_field_is_a_diagnostic() {
        let recs: Vec<_> = ["A1", "A2", "A3", "A4"].iter().map(|i| record(i)).collect();
        let mut lines: Vec<Value> = recs.iter().map(|r| serde_json::to_value(r).unwrap()).collect();
        lines[2].as_object_mut().unwrap().remove("journal_id");
        let text = lines
            .iter()
            .map(Value::to_string)
            .collect::<Vec<_>>()
            .join("\n");
        let ing = ingest_jsonl(text.as_bytes()).unwrap();
        assert_eq!(ing.corpus.len(), 3);
        assert_eq!(
            ing.diagnostics,
            vec![Diagnostic {
                line: 3,
                field: "journal_id".into(),
                message: "required field missing".into()
            }]
        );
    }

    #[test]
    fn invalid_values_are_diagnostics() {
        let mut bad = record("B");
        bad.author_ids.clear();
        let mut worse = record("C");
        worse.raw_score = Some(7);
        let text = jsonl(&[record("A"), bad, worse]);
        let ing = ingest_jsonl(text.as_bytes()).unwrap();
        assert_eq!(ing.corpus.len(), 1);
        let fields: Vec<_> = ing.diagnostics.iter().map(|d| d.field.as_str()).collect();
        assert_eq!(fields, vec!["author_ids", "raw_score"]);
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let text = jsonl(&[record("A1"), record("A1")]);
        assert!(matches!(ingest_jsonl(text.as_bytes()), Err(Error::DuplicateId(id)) if id == "A1"));
    }

    #[test]
    fn malformed_json_names_line() {
        let text = format!("{}\n{{not json", jsonl(&[record("A1")]));
        assert!(matches!(ingest_jsonl(text.as_bytes()), Err(Error::Malformed { line: 2, .. })));
    }

    #[test]
    fn csv_ingest() {
        let text = "article_id,doi,title,abstract_text,pub_year,narrow_fields,journal_id,author_ids,institution_count,country_count,page_count,citation_count,group_id,institution_id,raw_score\n\
                    A1,,T,abs,2016,F1;F2,J,a;b;c,2,1,,5,G,I,4\n\
                    A2,10.1/x,T2,abs,2017,F1,J,a,1,1,12,0,G,I,\n";
        let ing = ingest_csv(text.as_bytes()).unwrap();
        assert!(ing.diagnostics.is_empty(), "{:?}", ing.diagnostics);
        let a = &ing.corpus.articles()[0];
        assert_eq!(a.narrow_fields, vec!["F1", "F2"]);
        assert_eq!(a.author_ids, vec!["a", "b", "c"]);
        assert_eq!(a.page_count, None);
        assert_eq!(a.doi, None);
        assert_eq!(a.raw_score, Some(4));
        let b = &ing.corpus.articles()[1];
        assert_eq!(b.raw_score, None);
        assert_eq!(b.page_count, Some(12));
    }

    #[test]
    fn indexes_cover_every_article() {
        let mut b = record("B");
        b.author_ids = vec!["au1".into(), "au2".into(), "au1".into()];
        b.narrow_fields = vec!["F1".into(), "F2".into()];
        let c = Corpus::new(vec![record("A"), b], None).unwrap();
        assert_eq!(c.author_articles("au1"), Some(&[0usize, 1][..]));
        assert_eq!(c.author_articles("au2"), Some(&[1usize][..]));
        assert_eq!(c.field_year_index()[&("F2".to_string(), 2015)], vec![1]);
        assert_eq!(c.journal_year_articles("J1", 2015), &[0, 1]);
        assert!(c.has_journal("J1"));
        assert!(!c.has_journal("J2"));
    }

    #[test]
    fn filter_counts() {
        let rules = CleaningRules::default();
        let mut short = record("S");
        short.abstract_text = "x".repeat(499);
        let mut old = record("O");
        old.pub_year = 2019;
        let mut zero = record("Z");
        zero.raw_score = Some(0);
        let mut dup = record("D");
        dup.doi = record("A").doi;
        let c = Corpus::new(vec![record("A"), short, old, zero, dup], None).unwrap();
        let f = EligibilityFilter {
            year_range: Some((2014, 2018)),
            ..Default::default()
        };
        let (kept, rep) = filter_eligible(&c, &f, &rules).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(
            rep,
            FilterReport {
                retained: 1,
                out_of_range: 1,
                zero_score: 1,
                short_abstract: 1,
                duplicate: 1
            }
        );
    }

    #[test]
    fn boundary_abstract_length() {
        let rules = CleaningRules::default();
        let mut ok = record("A");
        ok.abstract_text = "x".repeat(500);
        let mut short = record("B");
        short.abstract_text = format!("{} © 2020 Publisher", "x".repeat(499));
        let c = Corpus::new(vec![ok, short], None).unwrap();
        let (kept, rep) = filter_eligible(&c, &EligibilityFilter::default(), &rules).unwrap();
        assert_eq!(kept.articles()[0].article_id, "A");
        assert_eq!(rep.short_abstract, 1);
    }

    #[test]
    fn all_eligible_unchanged() {
        let rules = CleaningRules::default();
        let corpus = Corpus::new(vec![record("A"), record("B")], None).unwrap();
        let (kept, rep) = filter_eligible(&corpus, &EligibilityFilter::default(), &rules).unwrap();
        assert_eq!(kept, corpus);
        assert_eq!(rep.removed(), 0);
    }
}
