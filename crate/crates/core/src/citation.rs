//! Citation extraction, resolution and the article-level citation graph.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_title, ArticleId, Corpus, LegalArticle};
use crate::error::{Error, Result};

const DEFAULT_ZH_PATTERNS: &str = include_str!("../assets/citation_patterns.zh.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CitationKind {
    CrossLaw,
    Internal,
}

/// Capture group reference, by index or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: CitationKind,
    pub regex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_group: Option<GroupRef>,
    pub number_group: GroupRef,
}

#[derive(Debug, Clone)]
struct CompiledPattern {
    kind: CitationKind,
    regex: Regex,
    title_group: Option<usize>,
    number_group: usize,
}

/// Validated, compiled citation patterns in declaration order.
#[derive(Debug, Clone, Default)]
pub struct CitationPatternSet {
    patterns: Vec<CompiledPattern>,
}

fn resolve_group(re: &Regex, group: &GroupRef, spec: &str) -> Result<usize> {
    let idx = match group {
        GroupRef::Index(i) if *i > 0 && *i < re.captures_len() => Some(*i),
        GroupRef::Index(_) => None,
        GroupRef::Name(name) => re.capture_names().position(|n| n == Some(name.as_str())),
    };
    idx.ok_or_else(|| Error::Pattern(format!("pattern {spec:?} lacks capture group {group:?}")))
}

impl CitationPatternSet {
    pub fn new(specs: &[PatternSpec]) -> Result<Self> {
        let patterns = specs
            .iter()
            .map(|spec| {
                let regex = Regex::new(&spec.regex)
                    .map_err(|e| Error::Pattern(format!("{:?}: {e}", spec.regex)))?;
                let number_group = resolve_group(&regex, &spec.number_group, &spec.regex)?;
                let title_group = match (spec.kind, &spec.title_group) {
                    (CitationKind::CrossLaw, Some(g)) => {
                        Some(resolve_group(&regex, g, &spec.regex)?)
                    }
                    (CitationKind::CrossLaw, None) => {
                        return Err(Error::Pattern(format!(
                            "cross_law pattern {:?} requires title_group",
                            spec.regex
                        )))
                    }
                    (CitationKind::Internal, _) => None,
                };
                Ok(CompiledPattern {
                    kind: spec.kind,
                    regex,
                    title_group,
                    number_group,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CitationPatternSet { patterns })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let specs: Vec<PatternSpec> = serde_json::from_str(text)?;
        Self::new(&specs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Shipped patterns for Chinese statute citations (`《X法》第十条`, `本法第三条`).
    pub fn default_zh() -> Self {
        Self::from_json(DEFAULT_ZH_PATTERNS).expect("bundled citation patterns are valid")
    }

    /// `[Title art.N]` cross-law and `[art.N]` internal references.
    pub fn ascii() -> Self {
        Self::new(&[
            PatternSpec {
                kind: CitationKind::CrossLaw,
                regex: r"\[(?P<title>[A-Za-z][A-Za-z ]*?) art\.(?P<number>\d+)\]".into(),
                title_group: Some(GroupRef::Name("title".into())),
                number_group: GroupRef::Name("number".into()),
            },
            PatternSpec {
                kind: CitationKind::Internal,
                regex: r"\[art\.(?P<number>\d+)\]".into(),
                title_group: None,
                number_group: GroupRef::Name("number".into()),
            },
        ])
        .expect("ascii citation patterns are valid")
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationMention {
    pub source_id: ArticleId,
    pub target_title: String,
    pub target_number: u32,
    /// Character (not byte) offsets into the source content, end exclusive.
    pub char_span: (usize, usize),
}

/// Parses an article number written in ASCII digits or Chinese numerals.
pub fn parse_article_number(s: &str) -> Option<u32> {
    if s.bytes().all(|b| b.is_ascii_digit()) {
        return s.parse::<u32>().ok().filter(|&n| n > 0);
    }
    let mut total: u64 = 0;
    let mut digit: u64 = 0;
    for ch in s.chars() {
        let value = match ch {
            '零' | '〇' => Some(0),
            '一' => Some(1),
            '二' | '两' => Some(2),
            '三' => Some(3),
            '四' => Some(4),
            '五' => Some(5),
            '六' => Some(6),
            '七' => Some(7),
            '八' => Some(8),
            '九' => Some(9),
            c if c.is_ascii_digit() => Some(c as u64 - '0' as u64),
            _ => None,
        };
        if let Some(v) = value {
            digit = v;
            continue;
        }
        let unit = match ch {
            '十' => 10,
            '百' => 100,
            '千' => 1000,
            _ => return None,
        };
        if digit == 0 && unit == 10 {
            digit = 1;
        }
        total += digit * unit;
        digit = 0;
    }
    total += digit;
    u32::try_from(total).ok().filter(|&n| n > 0)
}

/// All non-overlapping mentions in content order. Where matches of different
/// patterns overlap, the earliest start wins, then declaration order.
pub fn extract_citations(
    article: &LegalArticle,
    patterns: &CitationPatternSet,
) -> Vec<CitationMention> {
    let content = &article.content;
    let source_title = normalize_title(&article.law_title);

    let mut matches: Vec<(usize, usize, usize, String, u32)> = Vec::new();
    for (pi, pat) in patterns.patterns.iter().enumerate() {
        for caps in pat.regex.captures_iter(content) {
            let whole = caps.get(0).expect("group 0 always present");
            let Some(number) = caps
                .get(pat.number_group)
                .and_then(|m| parse_article_number(m.as_str()))
            else {
                continue;
            };
            let title = match pat.kind {
                CitationKind::Internal => source_title.clone(),
                CitationKind::CrossLaw => match pat.title_group.and_then(|g| caps.get(g)) {
                    Some(m) => normalize_title(m.as_str()),
                    None => continue,
                },
            };
            matches.push((whole.start(), whole.end(), pi, title, number));
        }
    }
    matches.sort_by_key(|m| (m.0, m.2));

    let mut out = Vec::new();
    let mut last_end = 0;
    for (start, end, _, title, number) in matches {
        if start < last_end {
            continue;
        }
        last_end = end;
        let char_start = content[..start].chars().count();
        let char_end = char_start + content[start..end].chars().count();
        out.push(CitationMention {
            source_id: article.id.clone(),
            target_title: title,
            target_number: number,
            char_span: (char_start, char_end),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Resolved(ArticleId),
    Unresolved,
}

pub fn resolve(mention: &CitationMention, corpus: &Corpus) -> Resolution {
    match corpus.lookup(&mention.target_title, mention.target_number) {
        Some(a) => Resolution::Resolved(a.id.clone()),
        None => Resolution::Unresolved,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub extracted: usize,
    pub resolved: usize,
    pub unresolved: usize,
    pub self_loops: usize,
    pub edges: usize,
}

/// Directed article-level citation graph. Edges are deduplicated and never
/// self-loops.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CitationGraph {
    nodes: BTreeSet<ArticleId>,
    out_edges: BTreeMap<ArticleId, BTreeSet<ArticleId>>,
    in_edges: BTreeMap<ArticleId, BTreeSet<ArticleId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub source_id: ArticleId,
    pub target_id: ArticleId,
}

impl CitationGraph {
    pub fn with_nodes(nodes: impl IntoIterator<Item = ArticleId>) -> Self {
        CitationGraph {
            nodes: nodes.into_iter().collect(),
            ..Default::default()
        }
    }

    /// Adds `source -> target`; returns false for self-loops, unknown
    /// endpoints and duplicates.
    pub fn add_edge(&mut self, source: &ArticleId, target: &ArticleId) -> bool {
        if source == target || !self.nodes.contains(source) || !self.nodes.contains(target) {
            return false;
        }
        let fresh = self
            .out_edges
            .entry(source.clone())
            .or_default()
            .insert(target.clone());
        if fresh {
            self.in_edges
                .entry(target.clone())
                .or_default()
                .insert(source.clone());
        }
        fresh
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.values().map(BTreeSet::len).sum()
    }

    pub fn contains_edge(&self, source: &str, target: &str) -> bool {
        self.out_edges
            .get(source)
            .is_some_and(|t| t.contains(target))
    }

    /// Edges in `(source, target)` lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (&ArticleId, &ArticleId)> {
        self.out_edges
            .iter()
            .flat_map(|(s, ts)| ts.iter().map(move |t| (s, t)))
    }

    pub fn out_neighbors(&self, id: &str) -> impl Iterator<Item = &ArticleId> {
        self.out_edges.get(id).into_iter().flatten()
    }

    pub fn in_neighbors(&self, id: &str) -> impl Iterator<Item = &ArticleId> {
        self.in_edges.get(id).into_iter().flatten()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for (s, t) in self.edges() {
            let rec = EdgeRecord {
                source_id: s.clone(),
                target_id: t.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads an edge export back against a known node set.
    pub fn read_jsonl(nodes: impl IntoIterator<Item = ArticleId>, r: impl BufRead) -> Result<Self> {
        let mut graph = CitationGraph::with_nodes(nodes);
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<graph>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EdgeRecord = serde_json::from_str(&line)?;
            if !graph.nodes.contains(&rec.source_id) {
                return Err(Error::UnknownArticle(rec.source_id.to_string()));
            }
            if !graph.nodes.contains(&rec.target_id) {
                return Err(Error::UnknownArticle(rec.target_id.to_string()));
            }
            graph.add_edge(&rec.source_id, &rec.target_id);
        }
        Ok(graph)
    }
}

/// Extracts and resolves every mention in the corpus. Unresolvable mentions
/// are logged and dropped.
pub fn build_graph(corpus: &Corpus, patterns: &CitationPatternSet) -> (CitationGraph, GraphStats) {
    let mut per_article: Vec<(ArticleId, Vec<CitationMention>)> = corpus
        .articles()
        .par_iter()
        .map(|a| (a.id.clone(), extract_citations(a, patterns)))
        .collect();
    per_article.sort_by(|a, b| a.0.cmp(&b.0));

    let mut graph = CitationGraph::with_nodes(corpus.iter().map(|a| a.id.clone()));
    let mut stats = GraphStats::default();
    for (source, mentions) in per_article {
        for m in mentions {
            stats.extracted += 1;
            match resolve(&m, corpus) {
                Resolution::Resolved(target) if target == source => {
                    stats.resolved += 1;
                    stats.self_loops += 1;
                }
                Resolution::Resolved(target) => {
                    stats.resolved += 1;
                    graph.add_edge(&source, &target);
                }
                Resolution::Unresolved => {
                    stats.unresolved += 1;
                    log::debug!(
                        "unresolved citation in {source}: ({}, {})",
                        m.target_title,
                        m.target_number
                    );
                }
            }
        }
    }
    stats.edges = graph.edge_count();
    (graph, stats)
}

/// Undirected neighborhood of `id`: articles it cites plus articles citing it.
pub fn citation_neighbors(graph: &CitationGraph, id: &str) -> BTreeSet<ArticleId> {
    graph
        .out_neighbors(id)
        .chain(graph.in_neighbors(id))
        .filter(|n| n.as_str() != id)
        .cloned()
        .collect()
}
