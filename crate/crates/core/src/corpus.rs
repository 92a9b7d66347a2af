//! Legal article corpus: ingestion, title normalization and hierarchy labels.
//!
//! Every article carries a hierarchy level in `0..=6`. Levels `0..=4` form the
//! ordered chain of legislative authority (constitution down to departmental and
//! local government rules); judicial interpretations (5) and other normative
//! documents (6) sit outside that order.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_ZH_RULES: &str = include_str!("../assets/hierarchy_rules.zh.json");

/// Stable, opaque article identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArticleId(String);

impl ArticleId {
    pub fn new(id: impl Into<String>) -> Self {
        ArticleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ArticleId {
    fn from(s: &str) -> Self {
        ArticleId(s.to_string())
    }
}

impl From<String> for ArticleId {
    fn from(s: String) -> Self {
        ArticleId(s)
    }
}

impl std::borrow::Borrow<str> for ArticleId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum HierarchyLevel {
    Constitution = 0,
    PrimaryStatute = 1,
    AdministrativeRegulation = 2,
    LocalOrAutonomousRegulation = 3,
    DepartmentalOrLocalGovernmentRule = 4,
    JudicialInterpretation = 5,
    OtherNormative = 6,
}

impl HierarchyLevel {
    pub const ALL: [HierarchyLevel; 7] = [
        HierarchyLevel::Constitution,
        HierarchyLevel::PrimaryStatute,
        HierarchyLevel::AdministrativeRegulation,
        HierarchyLevel::LocalOrAutonomousRegulation,
        HierarchyLevel::DepartmentalOrLocalGovernmentRule,
        HierarchyLevel::JudicialInterpretation,
        HierarchyLevel::OtherNormative,
    ];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: i64) -> Option<Self> {
        usize::try_from(v)
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
    }

    /// Whether the level belongs to the ordered authority chain (0..=4).
    pub fn is_ordered(self) -> bool {
        self.value() <= 4
    }
}

impl From<HierarchyLevel> for u8 {
    fn from(l: HierarchyLevel) -> u8 {
        l.value()
    }
}

impl TryFrom<u8> for HierarchyLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        HierarchyLevel::from_value(v as i64)
            .ok_or_else(|| format!("hierarchy level {v} not in 0..=6"))
    }
}

impl fmt::Display for HierarchyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalArticle {
    pub id: ArticleId,
    pub law_title: String,
    pub article_number: u32,
    pub content: String,
    pub hierarchy_level: HierarchyLevel,
}

/// Strips surrounding quotation brackets and collapses whitespace runs to a
/// single space.
pub fn normalize_title(raw: &str) -> String {
    const PAIRS: [(char, char); 8] = [
        ('《', '》'),
        ('〈', '〉'),
        ('“', '”'),
        ('"', '"'),
        ('「', '」'),
        ('『', '』'),
        ('‘', '’'),
        ('\'', '\''),
    ];

    let mut s = raw.trim();
    loop {
        let stripped = PAIRS.iter().find_map(|&(open, close)| {
            s.strip_prefix(open)
                .and_then(|rest| rest.strip_suffix(close))
                .map(str::trim)
        });
        match stripped {
            Some(inner) => s = inner,
            None => break,
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Deserialize)]
struct RawRule {
    pattern: String,
    level: i64,
}

/// Ordered title-matching rules; first match wins, otherwise `default`.
#[derive(Debug, Clone)]
pub struct HierarchyRuleSet {
    rules: Vec<(Regex, HierarchyLevel)>,
    default: HierarchyLevel,
}

impl Default for HierarchyRuleSet {
    fn default() -> Self {
        HierarchyRuleSet::empty()
    }
}

impl HierarchyRuleSet {
    /// A rule set that labels every title `OtherNormative`.
    pub fn empty() -> Self {
        HierarchyRuleSet {
            rules: Vec::new(),
            default: HierarchyLevel::OtherNormative,
        }
    }

    pub fn new<S: AsRef<str>>(rules: &[(S, HierarchyLevel)]) -> Result<Self> {
        let rules = rules
            .iter()
            .map(|(p, l)| {
                Regex::new(p.as_ref())
                    .map(|re| (re, *l))
                    .map_err(|e| Error::Pattern(format!("hierarchy rule {:?}: {e}", p.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HierarchyRuleSet {
            rules,
            default: HierarchyLevel::OtherNormative,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<RawRule> = serde_json::from_str(text)?;
        let pairs = raw
            .into_iter()
            .map(|r| {
                HierarchyLevel::from_value(r.level)
                    .map(|l| (r.pattern, l))
                    .ok_or_else(|| {
                        Error::Pattern(format!("hierarchy level {} not in 0..=6", r.level))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Shipped rules for Chinese law titles.
    pub fn default_zh() -> Self {
        Self::from_json(DEFAULT_ZH_RULES).expect("bundled hierarchy rules are valid")
    }

    pub fn assign(&self, title: &str) -> HierarchyLevel {
        self.rules
            .iter()
            .find(|(re, _)| re.is_match(title))
            .map(|(_, l)| *l)
            .unwrap_or(self.default)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

pub fn assign_hierarchy(title: &str, rules: &HierarchyRuleSet) -> HierarchyLevel {
    rules.assign(title)
}

/// One line of the corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    pub law_title: String,
    pub article_number: i64,
    pub content: String,
}

/// An immutable article collection with id and `(title, number)` lookups.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    articles: Vec<LegalArticle>,
    by_id: HashMap<ArticleId, usize>,
    by_key: HashMap<(String, u32), usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.articles == other.articles
    }
}

impl Corpus {
    /// Builds a corpus from already-labeled articles, checking uniqueness of
    /// ids and `(title, number)` keys. Titles are normalized on the way in.
    pub fn from_articles(articles: Vec<LegalArticle>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for mut article in articles {
            article.law_title = normalize_title(&article.law_title);
            if article.content.trim().is_empty() {
                return Err(Error::Config(format!(
                    "article {} has empty content",
                    article.id
                )));
            }
            if article.article_number == 0 {
                return Err(Error::Config(format!(
                    "article {} has article_number 0",
                    article.id
                )));
            }
            corpus.push(article)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, article: LegalArticle) -> Result<()> {
        let idx = self.articles.len();
        if self.by_id.contains_key(&article.id) {
            return Err(Error::DuplicateId(article.id.to_string()));
        }
        let key = (article.law_title.clone(), article.article_number);
        if let Some(&prev) = self.by_key.get(&key) {
            return Err(Error::DuplicateKey {
                title: key.0,
                number: key.1,
                first: self.articles[prev].id.to_string(),
                second: article.id.to_string(),
            });
        }
        self.by_id.insert(article.id.clone(), idx);
        self.by_key.insert(key, idx);
        self.articles.push(article);
        Ok(())
    }

    pub fn from_records(
        records: impl IntoIterator<Item = ArticleRecord>,
        rules: &HierarchyRuleSet,
    ) -> Result<Self> {
        let articles = records
            .into_iter()
            .map(|r| record_to_article(r, rules).map_err(Error::Config))
            .collect::<Result<Vec<_>>>()?;
        Self::from_articles(articles)
    }

    /// Reads the line-delimited corpus file. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>, rules: &HierarchyRuleSet) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut corpus = Corpus::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let record: ArticleRecord =
                serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
            let article = record_to_article(record, rules).map_err(malformed)?;
            corpus.push(article)?;
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn articles(&self) -> &[LegalArticle] {
        &self.articles
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LegalArticle> {
        self.articles.iter()
    }

    pub fn get(&self, id: &str) -> Option<&LegalArticle> {
        self.by_id.get(id).map(|&i| &self.articles[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn level_of(&self, id: &str) -> Option<HierarchyLevel> {
        self.get(id).map(|a| a.hierarchy_level)
    }

    /// The `(normalized title, article number) -> article` index.
    pub fn lookup(&self, title: &str, number: u32) -> Option<&LegalArticle> {
        self.by_key
            .get(&(title.to_string(), number))
            .map(|&i| &self.articles[i])
    }

    pub fn index_len(&self) -> usize {
        self.by_key.len()
    }

    pub fn to_records(&self) -> Vec<LegalArticle> {
        self.articles.clone()
    }
}

fn record_to_article(
    r: ArticleRecord,
    rules: &HierarchyRuleSet,
) -> std::result::Result<LegalArticle, String> {
    if r.id.is_empty() {
        return Err("empty id".into());
    }
    if r.article_number < 1 || r.article_number > u32::MAX as i64 {
        return Err(format!(
            "article_number {} must be a positive integer",
            r.article_number
        ));
    }
    if r.content.trim().is_empty() {
        return Err(format!("article {} has empty content", r.id));
    }
    let law_title = normalize_title(&r.law_title);
    let hierarchy_level = rules.assign(&law_title);
    Ok(LegalArticle {
        id: ArticleId(r.id),
        law_title,
        article_number: r.article_number as u32,
        content: r.content,
        hierarchy_level,
    })
}

impl Serialize for Corpus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.articles.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Corpus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let articles = Vec::<LegalArticle>::deserialize(d)?;
        Corpus::from_articles(articles).map_err(serde::de::Error::custom)
    }
}
