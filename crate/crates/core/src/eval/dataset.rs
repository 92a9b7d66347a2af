//! Labeled query files and the deterministic train/dev/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ArticleId, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryText {
    Single(String),
    Turns(Vec<String>),
}

/// How a multi-turn dialogue becomes one retrieval query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueMode {
    #[default]
    LastTurn,
    FullHistory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub query_id: String,
    pub text: QueryText,
    pub gold_ids: BTreeSet<ArticleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

impl LabeledQuery {
    pub fn new(
        query_id: impl Into<String>,
        text: impl Into<String>,
        gold: impl IntoIterator<Item = ArticleId>,
    ) -> Self {
        LabeledQuery {
            query_id: query_id.into(),
            text: QueryText::Single(text.into()),
            gold_ids: gold.into_iter().collect(),
            group_id: None,
        }
    }

    pub fn query_text(&self, mode: DialogueMode) -> String {
        match (&self.text, mode) {
            (QueryText::Single(s), _) => s.clone(),
            (QueryText::Turns(t), DialogueMode::LastTurn) => t.last().cloned().unwrap_or_default(),
            (QueryText::Turns(t), DialogueMode::FullHistory) => t.join("\n"),
        }
    }
}

#[derive(Debug, Deserialize)]
struct QueryRecord {
    query_id: serde_json::Value,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    turns: Option<Vec<String>>,
    gold_ids: Vec<serde_json::Value>,
    #[serde(default)]
    group_id: Option<serde_json::Value>,
}

fn scalar_to_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedQueries {
    pub queries: Vec<LabeledQuery>,
    pub warnings: Vec<String>,
}

/// Reads a line-delimited query file. With a corpus, gold ids it does not
/// contain are dropped with a warning, and queries left without gold are
/// excluded.
pub fn load_queries(path: impl AsRef<Path>, corpus: Option<&Corpus>) -> Result<LoadedQueries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_queries(&text, path, corpus)
}

/// [`load_queries`] over in-memory text; `origin` only labels errors.
pub fn parse_queries(text: &str, origin: &Path, corpus: Option<&Corpus>) -> Result<LoadedQueries> {
    let path = origin;
    let mut out = LoadedQueries::default();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: QueryRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let query_id = scalar_to_string(&rec.query_id)
            .ok_or_else(|| malformed("query_id must be a string or number".into()))?;
        if !seen.insert(query_id.clone()) {
            return Err(malformed(format!("duplicate query_id {query_id}")));
        }
        let text = match (rec.text, rec.turns) {
            (Some(t), None) => QueryText::Single(t),
            (None, Some(turns)) if !turns.is_empty() => QueryText::Turns(turns),
            _ => {
                return Err(malformed(
                    "exactly one of text / non-empty turns is required".into(),
                ))
            }
        };
        let mut gold = BTreeSet::new();
        for g in &rec.gold_ids {
            let id = scalar_to_string(g)
                .ok_or_else(|| malformed("gold ids must be strings or numbers".into()))?;
            match corpus {
                Some(c) if !c.contains(&id) => out.warnings.push(format!(
                    "query {query_id}: gold article {id} not in corpus, excluded"
                )),
                _ => {
                    gold.insert(ArticleId::from(id));
                }
            }
        }
        if gold.is_empty() {
            out.warnings.push(format!(
                "query {query_id}: no usable gold articles, query excluded"
            ));
            continue;
        }
        out.queries.push(LabeledQuery {
            query_id,
            text,
            gold_ids: gold,
            group_id: rec.group_id.as_ref().and_then(scalar_to_string),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 7.0,
            dev: 1.0,
            test: 2.0,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) || parts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(
                "split ratios must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    All,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            other => Err(format!(
                "unknown split {other:?} (expected train, dev, test or all)"
            )),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::All => "all",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<LabeledQuery>,
    pub dev: Vec<LabeledQuery>,
    pub test: Vec<LabeledQuery>,
}

impl Splits {
    pub fn get(&self, split: Split) -> Vec<LabeledQuery> {
        match split {
            Split::Train => self.train.clone(),
            Split::Dev => self.dev.clone(),
            Split::Test => self.test.clone(),
            Split::All => {
                let mut all: Vec<_> = self
                    .train
                    .iter()
                    .chain(&self.dev)
                    .chain(&self.test)
                    .cloned()
                    .collect();
                all.sort_by(|a, b| a.query_id.cmp(&b.query_id));
                all
            }
        }
    }
}

/// Shuffles units (single queries, or whole groups when `group_aware`) with
/// `seed` and walks them in order, assigning each unit to the split whose
/// cumulative boundary has not yet been reached. Each split is returned in
/// query-id order.
pub fn split_dataset(
    queries: &[LabeledQuery],
    ratios: SplitRatios,
    seed: u64,
    group_aware: bool,
) -> Result<Splits> {
    ratios.validate()?;
    let mut sorted: Vec<&LabeledQuery> = queries.iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let mut units: Vec<Vec<&LabeledQuery>> = if group_aware {
        let mut groups: BTreeMap<String, Vec<&LabeledQuery>> = BTreeMap::new();
        let mut singles = Vec::new();
        for q in sorted {
            match &q.group_id {
                Some(g) => groups.entry(g.clone()).or_default().push(q),
                None => singles.push(vec![q]),
            }
        }
        groups.into_values().chain(singles).collect()
    } else {
        sorted.into_iter().map(|q| vec![q]).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);

    let n = queries.len() as f64;
    let total = ratios.train + ratios.dev + ratios.test;
    let train_end = (n * ratios.train / total).round() as usize;
    let dev_end = (n * (ratios.train + ratios.dev) / total).round() as usize;

    let mut splits = Splits::default();
    let mut assigned = 0usize;
    for unit in units {
        let target = if assigned < train_end {
            &mut splits.train
        } else if assigned < dev_end {
            &mut splits.dev
        } else {
            &mut splits.test
        };
        assigned += unit.len();
        target.extend(unit.into_iter().cloned());
    }
    for part in [&mut splits.train, &mut splits.dev, &mut splits.test] {
        part.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    }
    Ok(splits)
}
