//! A planted 200-article demo corpus with scripted providers.
//!
//! Twenty laws of ten articles each span every hierarchy level and cite each
//! other with the bracketed ASCII syntax. Each of the twenty queries has one
//! gold article. Even queries share rare tokens with their gold article; odd
//! queries use lay wording that only appears in unrelated "distractor"
//! articles, so plain BM25 misses them while the scripted keyword expansion
//! and the canned embeddings (query and gold vectors nearly parallel) find
//! them. Article intents are planted and the scripted chat returns them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::providers::HashEmbedder;
use crate::rerank::IntentLabel;

pub const ARTICLES_PER_LAW: usize = 10;
pub const QUERIES: usize = 20;
pub const EMBED_DIM: usize = 32;

const NAMES: [&str; 20] = [
    "Alpha", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot", "Golf", "Hotel", "India", "Juliett",
    "Kilo", "Lima", "Mike", "November", "Oscar", "Papa", "Quebec", "Romeo", "Sierra", "Tango",
];
const KINDS: [&str; 7] = [
    "Constitution",
    "Act",
    "Regulation",
    "Local Regulation",
    "Rules",
    "Interpretation",
    "Notice",
];
const INTENTS: [IntentLabel; 4] = [
    IntentLabel::Definition,
    IntentLabel::Applicability,
    IntentLabel::Consequence,
    IntentLabel::Procedure,
];
const DISTRACTORS: usize = 6;

fn law_title(law: usize) -> String {
    format!("{} {}", NAMES[law], KINDS[law % KINDS.len()])
}

pub fn article_id(law: usize, art: usize) -> String {
    format!("L{law:02}A{art:02}")
}

fn intent_of(law: usize, art: usize) -> IntentLabel {
    INTENTS[(law + art) % INTENTS.len()]
}

fn intent_phrase(label: IntentLabel) -> &'static str {
    match label {
        IntentLabel::Definition => "in this text the term means",
        IntentLabel::Applicability => "this provision applies where",
        IntentLabel::Consequence => "a violator shall be fined",
        IntentLabel::Procedure => "the applicant shall file forms",
        IntentLabel::Others => "",
    }
}

fn unique_tokens(law: usize, art: usize) -> [String; 2] {
    [format!("u{law:02}{art:02}a"), format!("u{law:02}{art:02}b")]
}

/// The gold article of query `q`.
pub fn gold_of(q: usize) -> (usize, usize) {
    (q, q % ARTICLES_PER_LAW)
}

fn query_text(q: usize) -> String {
    let (law, art) = gold_of(q);
    if q.is_multiple_of(2) {
        format!(
            "question about {} under topic{law:02}",
            unique_tokens(law, art)[0]
        )
    } else {
        format!("question about lay{q:02}x and lay{q:02}y")
    }
}

/// Distractor articles for odd query `q`: articles of another law whose
/// intent differs from the query's and that are nobody's gold.
fn distractors(q: usize) -> Vec<(usize, usize)> {
    let law = (q + 7) % NAMES.len();
    let intent = intent_of(gold_of(q).0, gold_of(q).1);
    (0..ARTICLES_PER_LAW)
        .filter(|&a| gold_of(law) != (law, a) && intent_of(law, a) != intent)
        .take(DISTRACTORS)
        .map(|a| (law, a))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub queries: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn jsonl(rows: impl IntoIterator<Item = serde_json::Value>) -> String {
    rows.into_iter().map(|r| r.to_string() + "\n").collect()
}

/// Writes the corpus, queries, prompt templates, scripted provider tables and
/// a `config.json` referencing them (relative paths) into `dir`.
pub fn write_fixture(dir: &Path) -> Result<FixturePaths> {
    let mut lay: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
    for q in (1..QUERIES).step_by(2) {
        for (i, d) in distractors(q).into_iter().enumerate() {
            let tok = if i % 2 == 0 { "x" } else { "y" };
            lay.entry(d).or_default().push(format!("lay{q:02}{tok}"));
        }
    }

    let mut articles = Vec::new();
    let mut contents = BTreeMap::new();
    for law in 0..NAMES.len() {
        for art in 0..ARTICLES_PER_LAW {
            let [a, b] = unique_tokens(law, art);
            let mut content = format!(
                "{} {a} {b} topic{law:02}",
                intent_phrase(intent_of(law, art))
            );
            if art % 2 == 1 {
                // Internal citation of the previous article (numbers are 1-based).
                content.push_str(&format!(" see [art.{art}]"));
            }
            if art == 0 {
                content.push_str(&format!(
                    " as in [{} art.1]",
                    law_title((law + 1) % NAMES.len())
                ));
            }
            for t in lay.get(&(law, art)).into_iter().flatten() {
                content.push(' ');
                content.push_str(t);
            }
            articles.push(json!({
                "id": article_id(law, art),
                "law_title": law_title(law),
                "article_number": art + 1,
                "content": content,
            }));
            contents.insert((law, art), content);
        }
    }

    let mut rules = Vec::new();
    let mut table = BTreeMap::new();
    let hasher = HashEmbedder::new(EMBED_DIM);
    let mut queries = Vec::new();
    for q in 0..QUERIES {
        let text = query_text(q);
        let gold = gold_of(q);
        let [a, b] = unique_tokens(gold.0, gold.1);
        rules.push(
            json!({"prompt": format!("IRAC::{text}"), "output": format!("ANALYSIS::{q:02}")}),
        );
        rules.push(
            json!({"prompt": format!("KW::ANALYSIS::{q:02}"), "output": format!("{a}\n{b}\n")}),
        );
        rules.push(
            json!({"prompt": format!("QI::{text}"), "output": intent_of(gold.0, gold.1).as_str()}),
        );

        let qv = hasher.vector(&text);
        let noise = hasher.vector(&contents[&gold]);
        let gv: Vec<f64> = qv.iter().zip(&noise).map(|(x, n)| x + 0.1 * n).collect();
        table.insert(text.clone(), qv);
        table.insert(contents[&gold].clone(), gv);
        queries.push(json!({
            "query_id": format!("q{q:02}"),
            "text": text,
            "gold_ids": [article_id(gold.0, gold.1)],
            "group_id": format!("g{:02}", q / 2),
        }));
    }
    for ((law, art), content) in &contents {
        rules.push(
            json!({"prompt": format!("AI::{content}"), "output": intent_of(*law, *art).as_str()}),
        );
    }

    let hierarchy = json!([
        {"pattern": "Constitution$", "level": 0},
        {"pattern": "Interpretation$", "level": 5},
        {"pattern": "Local Regulation$", "level": 3},
        {"pattern": "Regulation$", "level": 2},
        {"pattern": "Rules$", "level": 4},
        {"pattern": "Act$", "level": 1},
    ]);
    let config = json!({
        "corpus": "corpus.jsonl",
        "hierarchy_rules": "hierarchy_rules.json",
        "citation_patterns": "ascii",
        "prompts": {
            "irac": "prompts/irac.txt",
            "keywords": "prompts/keywords.txt",
            "query_intent": "prompts/query_intent.txt",
            "article_intent": "prompts/article_intent.txt",
        },
        "providers": {
            "chat": {"type": "scripted_chat", "model": "scripted-fixture", "rules_file": "chat_rules.json", "fallback": "Others"},
            "embed": {"type": "canned_embed", "dim": EMBED_DIM, "table_file": "embed_table.json"},
            "rerank": {"type": "overlap_rerank"},
        },
        "artifacts_dir": "artifacts",
        "cache_dir": "cache",
        "pool_size": 20,
        "top_k": 10,
        "metric_ks": [1, 3, 5],
        "seed": 7,
    });

    write(&dir.join("corpus.jsonl"), &jsonl(articles))?;
    write(&dir.join("queries.jsonl"), &jsonl(queries))?;
    write(
        &dir.join("hierarchy_rules.json"),
        &serde_json::to_string_pretty(&hierarchy)?,
    )?;
    write(
        &dir.join("chat_rules.json"),
        &serde_json::to_string(&rules)?,
    )?;
    write(
        &dir.join("embed_table.json"),
        &serde_json::to_string(&table)?,
    )?;
    for (name, text) in [
        ("irac", "IRAC::{query}"),
        ("keywords", "KW::{analysis}"),
        ("query_intent", "QI::{text}"),
        ("article_intent", "AI::{text}"),
    ] {
        write(&dir.join("prompts").join(format!("{name}.txt")), text)?;
    }
    let config_path = dir.join("config.json");
    write(&config_path, &serde_json::to_string_pretty(&config)?)?;
    Ok(FixturePaths {
        dir: dir.to_path_buf(),
        config: config_path,
        queries: dir.join("queries.jsonl"),
    })
}
