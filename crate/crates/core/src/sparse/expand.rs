//! Two-stage query expansion: the LLM first writes an IRAC analysis of the
//! query, then lists legal keywords found in that analysis. The keywords are
//! appended once each to the original query text.

use serde::{Deserialize, Serialize};

use crate::providers::ChatProvider;
use crate::templates::PromptTemplates;

const MAX_KEYWORD_CHARS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub original: String,
    pub keywords: Vec<String>,
    pub expanded_text: String,
    /// Raw stage-one output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<String>,
    /// Raw stage-two output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword_output: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExpandedQuery {
    /// The unexpanded query.
    pub fn plain(query: &str) -> Self {
        ExpandedQuery {
            original: query.to_string(),
            keywords: Vec::new(),
            expanded_text: query.to_string(),
            analysis: None,
            keyword_output: None,
            warnings: Vec::new(),
        }
    }

    pub fn with_keywords(query: &str, keywords: Vec<String>) -> Self {
        let keywords = dedup_keywords(keywords, usize::MAX);
        let mut eq = ExpandedQuery::plain(query);
        if !keywords.is_empty() {
            eq.expanded_text = format!("{query} {}", keywords.join(" "));
        }
        eq.keywords = keywords;
        eq
    }
}

fn normalize_keyword(k: &str) -> String {
    k.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn dedup_keywords(keywords: Vec<String>, max: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    keywords
        .into_iter()
        .map(|k| k.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|k| !k.is_empty() && seen.insert(normalize_keyword(k)))
        .take(max)
        .collect()
}

/// Parses the keyword stage output: one keyword per line. Blank lines are
/// ignored. Returns `None` when there is no keyword, a line is longer than 64
/// characters, or a line opens a JSON array/object.
pub fn parse_keywords(output: &str) -> Option<Vec<String>> {
    let lines: Vec<&str> = output
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return None;
    }
    let well_formed = lines.iter().all(|l| {
        l.chars().count() <= MAX_KEYWORD_CHARS && !l.starts_with('[') && !l.starts_with('{')
    });
    well_formed.then(|| lines.into_iter().map(str::to_string).collect())
}

/// Runs both prompt stages. Provider failures and unparseable keyword output
/// degrade to the plain query with a warning.
pub fn irac_expand(
    query: &str,
    llm: &dyn ChatProvider,
    templates: &PromptTemplates,
    max_keywords: usize,
) -> ExpandedQuery {
    let mut eq = ExpandedQuery::plain(query);
    let analysis = match llm.chat(&templates.irac.render(query)) {
        Ok(a) => a,
        Err(e) => {
            eq.warnings.push(format!("IRAC analysis failed: {e}"));
            return eq;
        }
    };
    eq.analysis = Some(analysis.clone());
    let output = match llm.chat(&templates.keywords.render(&analysis)) {
        Ok(o) => o,
        Err(e) => {
            eq.warnings.push(format!("keyword extraction failed: {e}"));
            return eq;
        }
    };
    eq.keyword_output = Some(output.clone());
    let Some(raw) = parse_keywords(&output) else {
        eq.warnings
            .push("keyword output is not one keyword per line".into());
        return eq;
    };
    let keywords = dedup_keywords(raw, max_keywords);
    if !keywords.is_empty() {
        eq.expanded_text = format!("{query} {}", keywords.join(" "));
    }
    eq.keywords = keywords;
    eq
}
