use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lexpath_cli::{
    load_config, render_manifest, render_mining, render_search, render_tuning, run_eval, run_index,
    run_mine, run_tune, server, CliError, CliResult, EXIT_INPUT,
};
use lexpath_core::eval::Split;
use lexpath_core::{PathMode, Pipeline, SearchOptions};

#[derive(Parser)]
#[command(
    name = "lexpath",
    version,
    about = "Multi-path legal article retrieval"
)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, short, global = true, default_value = "lexpath.json")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Ablation {
    /// Skip LLM keyword expansion of the sparse query.
    #[arg(long)]
    no_expand: bool,
    /// Return the fused ranking without reranking.
    #[arg(long)]
    no_rerank: bool,
    #[arg(long, conflicts_with = "dense_only")]
    sparse_only: bool,
    #[arg(long)]
    dense_only: bool,
}

impl Ablation {
    fn options(self) -> SearchOptions {
        SearchOptions {
            expand: !self.no_expand,
            rerank: !self.no_rerank,
            mode: if self.sparse_only {
                PathMode::SparseOnly
            } else if self.dense_only {
                PathMode::DenseOnly
            } else {
                PathMode::Both
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the citation graph, sparse and dense indexes.
    Index,
    /// Retrieve articles for a query.
    Search {
        query: String,
        /// Number of results (defaults to the configured top_k).
        #[arg(short)]
        k: Option<usize>,
        #[command(flatten)]
        ablation: Ablation,
        /// Print the full response as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Mine hierarchy- and citation-aware hard negatives.
    Mine {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Evaluate Recall@K / NDCG@K on a split of a labeled query file.
    Eval {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Grid-search the intent rerank weight on a split (default dev).
    Tune {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value = "dev")]
        split: Split,
    },
    /// Serve search, article lookup and mine/eval jobs over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Index => {
            let manifest = run_index(&cfg)?;
            print!("{}", render_manifest(&manifest));
        }
        Command::Search {
            query,
            k,
            ablation,
            json,
        } => {
            let k = k.unwrap_or(cfg.top_k);
            let pipeline = Pipeline::open(cfg)?;
            let resp = pipeline.search(&query, k, ablation.options())?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&resp).map_err(lexpath_core::Error::from)?
                );
            } else {
                print!("{}", render_search(&resp));
            }
        }
        Command::Mine { queries, output } => {
            let pipeline = Pipeline::open(cfg)?;
            let report = run_mine(&pipeline, &queries, &output)?;
            for s in &report.skipped {
                eprintln!("skipped: {s}");
            }
            print!("{}", render_mining(&report));
        }
        Command::Eval {
            queries,
            split,
            out_dir,
            ablation,
        } => {
            let pipeline = Pipeline::open(cfg)?;
            let (report, files) =
                run_eval(&pipeline, &queries, split, ablation.options(), &out_dir)?;
            print!("{}", report.render_table());
            println!("per-query results: {}", files.per_query.display());
        }
        Command::Tune { queries, split } => {
            let pipeline = Pipeline::open(cfg)?;
            print!("{}", render_tuning(&run_tune(&pipeline, &queries, split)?));
        }
        Command::Serve { addr } => {
            let pipeline = Pipeline::open(cfg)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError {
                code: EXIT_INPUT,
                message: e.to_string(),
            })?;
            rt.block_on(server::serve(pipeline, &addr))
                .map_err(|e| CliError {
                    code: EXIT_INPUT,
                    message: format!("{addr}: {e}"),
                })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
