//! Command implementations and the HTTP service behind the `lexpath` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lexpath_core::artifacts::{build_indexes, Manifest};
use lexpath_core::dense::write_triplets;
use lexpath_core::eval::{load_queries, split_dataset, EvalReport, LabeledQuery, Split};
use lexpath_core::pipeline::{MiningReport, SearchResponse, TuningReport, INTENT_GRID};
use lexpath_core::{Error, Pipeline, PipelineConfig, SearchOptions};

pub mod server;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ARTIFACT: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingArtifact(_) | Error::StaleArtifact(_) => EXIT_ARTIFACT,
        Error::Provider { .. } | Error::Embedding { .. } | Error::ZeroVector(_) => EXIT_PROVIDER,
        _ => EXIT_INPUT,
    }
}

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn load_config(path: &Path) -> CliResult<PipelineConfig> {
    Ok(PipelineConfig::load(path)?)
}

pub fn run_index(cfg: &PipelineConfig) -> CliResult<Manifest> {
    let providers = cfg.build_providers()?;
    build_indexes(cfg, providers.embed.as_ref())
        .map(|i| i.manifest)
        .map_err(|e| CliError {
            code: exit_code(&e.source),
            message: e.to_string(),
        })
}

pub fn render_manifest(m: &Manifest) -> String {
    let mut out = format!(
        "indexed {} articles (embedding dim {})\ncitations: {} extracted, {} resolved, {} unresolved, {} self-loops, {} edges\n",
        m.articles, m.embedding_dim, m.graph.extracted, m.graph.resolved, m.graph.unresolved, m.graph.self_loops, m.graph.edges
    );
    for (name, a) in &m.artifacts {
        let _ = writeln!(
            out,
            "  {name:<16} {:<22} {} ({} bytes)",
            a.file, a.sha256, a.bytes
        );
    }
    out
}

pub fn render_search(r: &SearchResponse) -> String {
    let mut out = String::new();
    if !r.expanded.keywords.is_empty() {
        let _ = writeln!(out, "expanded: {}", r.expanded.expanded_text);
    }
    if let Some(i) = r.query_intent {
        let _ = writeln!(out, "query intent: {i}");
    }
    for h in &r.results {
        let _ = write!(
            out,
            "{:>3}  {:<14} {} art. {:<5} score {:.6}  fused {:.6} (sparse {:.4}, dense {:.4}, pool #{})",
            h.rank, h.article_id, h.law_title, h.article_number, h.score, h.fused, h.norm_sparse, h.norm_dense, h.initial_rank
        );
        if let Some(b) = &h.rerank {
            let _ = write!(
                out,
                "  s_r {:.4} s_p {:.4} s_i {:.0} [{}]",
                b.s_r, b.s_p, b.s_i, b.intent
            );
        }
        out.push('\n');
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn queries_for(pipeline: &Pipeline, path: &Path) -> CliResult<Vec<LabeledQuery>> {
    let loaded = load_queries(path, Some(&pipeline.indexes().corpus))?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    Ok(loaded.queries)
}

pub fn run_mine(pipeline: &Pipeline, queries: &Path, output: &Path) -> CliResult<MiningReport> {
    let queries = queries_for(pipeline, queries)?;
    let report = pipeline.mine(&queries);
    let file = fs::File::create(output).map_err(|e| CliError {
        code: EXIT_INPUT,
        message: format!("{}: {e}", output.display()),
    })?;
    write_triplets(
        &report.triplets,
        &pipeline.indexes().corpus,
        std::io::BufWriter::new(file),
    )?;
    Ok(report)
}

pub fn render_mining(r: &MiningReport) -> String {
    format!(
        "{} triplets, {} hierarchy negatives, {} citation negatives, {} skipped\n",
        r.triplets.len(),
        r.hierarchy_negatives,
        r.citation_negatives,
        r.skipped.len()
    )
}

/// Selects the split after the deterministic, seeded shuffle.
pub fn select_split(
    cfg: &PipelineConfig,
    queries: &[LabeledQuery],
    split: Split,
) -> CliResult<Vec<LabeledQuery>> {
    let splits = split_dataset(queries, cfg.split_ratios, cfg.seed, cfg.group_aware_split)?;
    Ok(splits.get(split))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalFiles {
    pub table: PathBuf,
    pub summary: PathBuf,
    pub per_query: PathBuf,
}

/// Evaluates one split and writes `eval_<split>_<label>.{txt,json,jsonl}`
/// into `out_dir`.
pub fn run_eval(
    pipeline: &Pipeline,
    queries: &Path,
    split: Split,
    opts: SearchOptions,
    out_dir: &Path,
) -> CliResult<(EvalReport, EvalFiles)> {
    let all = queries_for(pipeline, queries)?;
    let selected = select_split(pipeline.config(), &all, split)?;
    let label = opts.label();
    let report = pipeline.evaluate(&label, &selected, opts)?;

    let io = |p: &Path, e: std::io::Error| CliError {
        code: EXIT_INPUT,
        message: format!("{}: {e}", p.display()),
    };
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let stem = format!("eval_{split}_{}", label.replace(',', "_"));
    let files = EvalFiles {
        table: out_dir.join(format!("{stem}.txt")),
        summary: out_dir.join(format!("{stem}.json")),
        per_query: out_dir.join(format!("{stem}.jsonl")),
    };
    fs::write(&files.table, report.render_table()).map_err(|e| io(&files.table, e))?;
    let summary = serde_json::to_string_pretty(&report.summary()).map_err(Error::from)?;
    fs::write(&files.summary, summary + "\n").map_err(|e| io(&files.summary, e))?;
    let mut buf = Vec::new();
    report
        .write_per_query(&mut buf)
        .map_err(|e| io(&files.per_query, e))?;
    fs::write(&files.per_query, buf).map_err(|e| io(&files.per_query, e))?;
    Ok((report, files))
}

/// Grid-searches the intent weight on one split (normally `dev`).
pub fn run_tune(pipeline: &Pipeline, queries: &Path, split: Split) -> CliResult<TuningReport> {
    let all = queries_for(pipeline, queries)?;
    let selected = select_split(pipeline.config(), &all, split)?;
    Ok(pipeline.tune_intent_weight(&selected, &INTENT_GRID)?)
}

pub fn render_tuning(r: &TuningReport) -> String {
    let mut out = format!(
        "{:>8} {:>8} {:>8} {:>10} {:>8}\n",
        "lambda1",
        "lambda2",
        "lambda3",
        format!("Recall@{}", r.k),
        format!("NDCG@{}", r.k)
    );
    for row in &r.rows {
        let w = row.weights;
        let mark = if w == r.best { "  <- best" } else { "" };
        let _ = writeln!(
            out,
            "{:>8.4} {:>8.4} {:>8.4} {:>10.2} {:>8.2}{mark}",
            w.reranker, w.prior, w.intent, row.recall, row.ndcg
        );
    }
    let _ = writeln!(
        out,
        "config: \"weights\": {{\"reranker\": {}, \"prior\": {}, \"intent\": {}}}",
        r.best.reranker, r.best.prior, r.best.intent
    );
    out
}
