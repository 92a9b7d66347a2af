use lexpath_core::artifacts::build_indexes;
use lexpath_core::eval::load_queries;
use lexpath_core::synthetic::write_fixture;
use lexpath_core::{PathMode, Pipeline, PipelineConfig, SearchOptions};

fn open() -> (
    tempfile::TempDir,
    Pipeline,
    Vec<lexpath_core::eval::LabeledQuery>,
) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path()).unwrap();
    let cfg = PipelineConfig::load(&paths.config).unwrap();
    let providers = cfg.build_providers().unwrap();
    build_indexes(&cfg, providers.embed.as_ref()).unwrap();
    let pipeline = Pipeline::open(cfg).unwrap();
    let queries = load_queries(&paths.queries, Some(&pipeline.indexes().corpus)).unwrap();
    assert!(queries.warnings.is_empty(), "{:?}", queries.warnings);
    (dir, pipeline, queries.queries)
}

#[test]
fn fixture_index_shape() {
    let (_dir, p, queries) = open();
    let m = &p.indexes().manifest;
    assert_eq!(m.articles, 200);
    assert_eq!(m.artifacts.len(), 4);
    assert!(
        m.graph.edges > 0 && m.graph.unresolved == 0,
        "{:?}",
        m.graph
    );
    assert_eq!(queries.len(), 20);
}

#[test]
fn full_beats_bm25_only() {
    let (_dir, p, queries) = open();
    let full = p
        .evaluate("full", &queries, SearchOptions::default())
        .unwrap();
    let bm25 = SearchOptions {
        expand: false,
        rerank: false,
        mode: PathMode::SparseOnly,
    };
    let bm25 = p.evaluate("bm25", &queries, bm25).unwrap();
    println!("{}{}", full.render_table(), bm25.render_table());
    assert_eq!(full.recall[&5], 100.0);
    assert!(bm25.recall[&5] <= 80.0);
}

#[test]
fn k_beyond_corpus_returns_everything() {
    let (_dir, p, _) = open();
    let r = p
        .search("question about lay01x", 500, SearchOptions::default())
        .unwrap();
    assert_eq!(r.results.len(), 200);
    assert_eq!(
        r.results.iter().map(|h| h.rank).collect::<Vec<_>>(),
        (1..=200).collect::<Vec<_>>()
    );
}

#[test]
fn intent_weight_grid_keeps_total_and_matches_direct_eval() {
    use lexpath_core::pipeline::INTENT_GRID;
    use lexpath_core::rerank::RerankWeights;

    let (_dir, p, queries) = open();
    let report = p.tune_intent_weight(&queries, &INTENT_GRID).unwrap();
    assert_eq!(report.k, 5);
    assert_eq!(report.rows.len(), INTENT_GRID.len());
    for (row, l3) in report.rows.iter().zip(INTENT_GRID) {
        let w = row.weights;
        assert_eq!(w.intent, l3);
        assert!((w.reranker + w.prior + w.intent - 1.0).abs() < 1e-12);
        assert!((w.reranker / w.prior - 3.0).abs() < 1e-9, "{w:?}");
    }
    assert!(report.rows.iter().any(|r| r.weights == report.best));

    let no_intent = RerankWeights::new(0.75, 0.25, 0.0).unwrap();
    let direct = p
        .with_weights(no_intent)
        .unwrap()
        .evaluate("direct", &queries, SearchOptions::default())
        .unwrap();
    assert_eq!(report.rows[0].recall, direct.recall[&5]);
    assert_eq!(report.rows[0].ndcg, direct.ndcg[&5]);

    assert!(p.tune_intent_weight(&[], &INTENT_GRID).is_err());
    assert!(p.tune_intent_weight(&queries, &[]).is_err());
}
