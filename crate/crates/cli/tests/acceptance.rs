//! Acceptance suite. Every check compares the engine against an independent
//! brute-force oracle or a hand-traced expectation and prints one PASS/FAIL
//! line with its runtime. Run with `cargo test -p lexpath-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lexpath_core::artifacts::build_indexes;
use lexpath_core::citation::CitationGraph;
use lexpath_core::corpus::{ArticleId, Corpus, HierarchyLevel, LegalArticle};
use lexpath_core::dense::{
    dense_search, mine_struct_negatives, target_levels, DenseIndex, MiningConfig,
};
use lexpath_core::eval::{load_queries, ndcg_at_k, recall_at_k};
use lexpath_core::fusion::{fuse, normalize_score};
use lexpath_core::providers::{
    CachedChat, CachedEmbedder, CachedReranker, CannedEmbedder, ChatProvider, Counting,
    EmbeddingProvider, Providers, RerankProvider, ResponseCache,
};
use lexpath_core::rerank::{final_ranking, IntentLabel, RerankInput, RerankWeights};
use lexpath_core::sparse::{sparse_search, Bm25Params, ExpandedQuery, SparseIndex};
use lexpath_core::synthetic::write_fixture;
use lexpath_core::{Pipeline, PipelineConfig, SearchOptions};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Check {
    ensure((a - b).abs() <= tol, || {
        format!("{what}: {a} vs {b} (tol {tol})")
    })
}

fn id(s: &str) -> ArticleId {
    ArticleId::new(s)
}

fn ids(v: &[&str]) -> Vec<ArticleId> {
    v.iter().map(|s| id(s)).collect()
}

// ---------------------------------------------------------------------------

fn normalization_and_fusion() -> Check {
    close(normalize_score(0.0).unwrap(), 0.5, 1e-12, "normalize(0)")?;
    close(normalize_score(1.0).unwrap(), 0.75, 1e-12, "normalize(1)")?;
    close(normalize_score(-1.0).unwrap(), 0.25, 1e-12, "normalize(-1)")?;
    close(
        fuse(0.8, 0.6, 0.4).unwrap(),
        0.68,
        1e-12,
        "fuse(0.8, 0.6, 0.4)",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = 0;
    while pairs < 1000 {
        let a: f64 = rng.random_range(-100.0..100.0);
        let b: f64 = rng.random_range(-100.0..100.0);
        if (a - b).abs() < 1e-6 {
            continue;
        }
        pairs += 1;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (nl, nh) = (normalize_score(lo).unwrap(), normalize_score(hi).unwrap());
        ensure(nl < nh, || {
            format!("not increasing: n({lo})={nl} >= n({hi})={nh}")
        })?;
        ensure(nl > 0.0 && nh < 1.0, || {
            format!("out of (0,1) at {lo}, {hi}")
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

/// Textbook Okapi BM25, written from scratch over raw token lists.
fn bm25_oracle(docs: &[(String, Vec<String>)], query: &[String]) -> Vec<(String, f64)> {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let avg = docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let mut out = Vec::new();
    for (doc_id, toks) in docs {
        let mut score = 0.0;
        let mut matched = false;
        for q in query {
            let tf = toks.iter().filter(|t| *t == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|(_, t)| t.contains(q)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            let norm = if avg > 0.0 {
                toks.len() as f64 / avg
            } else {
                1.0
            };
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
        }
        if matched && score > 0.0 {
            out.push((doc_id.clone(), score));
        }
    }
    // Insertion sort keeps the oracle independent of the library's comparator.
    let mut ranked: Vec<(String, f64)> = Vec::new();
    for item in out {
        let pos = ranked
            .iter()
            .position(|r| item.1 > r.1 || (item.1 == r.1 && item.0 < r.0))
            .unwrap_or(ranked.len());
        ranked.insert(pos, item);
    }
    ranked
}

fn bm25_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
    for case in 0..50 {
        let n_docs = rng.random_range(1..=10);
        let n_terms = rng.random_range(1..=8);
        let terms = &vocab[..n_terms];
        let docs: Vec<(String, Vec<String>)> = (0..n_docs)
            .map(|d| {
                let len = rng.random_range(0..=12);
                let toks = (0..len)
                    .map(|_| terms[rng.random_range(0..n_terms)].clone())
                    .collect();
                (format!("d{d:02}"), toks)
            })
            .collect();
        let qlen = rng.random_range(1..=4);
        let query: Vec<String> = (0..qlen)
            .map(|_| vocab[rng.random_range(0..8)].clone())
            .collect();

        let ids: Vec<ArticleId> = docs.iter().map(|(d, _)| id(d)).collect();
        let texts: Vec<String> = docs.iter().map(|(_, t)| t.join(" ")).collect();
        let index = SparseIndex::from_documents(
            ids.iter().zip(texts.iter().map(String::as_str)),
            Bm25Params::default(),
        )
        .map_err(|e| e.to_string())?;
        let got = sparse_search(&index, &ExpandedQuery::plain(&query.join(" ")), 100);
        let want = bm25_oracle(&docs, &query);
        let got_ids: Vec<&str> = got.iter().map(|(i, _)| i.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|(i, _)| i.as_str()).collect();
        ensure(got_ids == want_ids, || {
            format!("case {case}: order {got_ids:?} != oracle {want_ids:?}")
        })?;
        for ((_, g), (d, w)) in got.iter().zip(&want) {
            // Same summation order, so the scores agree to the last bit.
            ensure(g == w, || format!("case {case}: {d} score {g} != {w}"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn dense_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..50 {
        let n = rng.random_range(1..=20);
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut index = DenseIndex::new(16);
        for (i, v) in vecs.iter().enumerate() {
            index
                .insert(id(&format!("v{i:02}")), v)
                .map_err(|e| e.to_string())?;
        }
        let q: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let depth = rng.random_range(1..=n);
        let got = dense_search(&index, &q, depth).map_err(|e| e.to_string())?;

        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut want: Vec<(String, f64)> = vecs
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let dot: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
                (format!("v{i:02}"), dot / (norm(v) * norm(&q)))
            })
            .collect();
        want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        want.truncate(depth);
        ensure(got.len() == want.len(), || {
            format!("case {case}: {} hits, want {}", got.len(), want.len())
        })?;
        for ((gi, gs), (wi, ws)) in got.iter().zip(&want) {
            ensure(gi.as_str() == wi, || {
                format!("case {case}: {gi} where oracle has {wi}")
            })?;
            close(*gs, *ws, 1e-9, &format!("case {case} {wi}"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

/// Twelve articles in dense-rank order for the query "q", with levels.
const TRACE_ARTICLES: [(&str, u8); 12] = [
    ("a01", 3),
    ("a02", 2),
    ("a03", 0),
    ("a04", 4),
    ("a05", 3),
    ("a06", 1),
    ("a07", 5),
    ("a08", 0),
    ("a09", 0),
    ("a10", 5),
    ("a11", 6),
    ("a12", 0),
];
const TRACE_EDGES: [(&str, &str); 3] = [("a05", "a12"), ("a11", "a05"), ("a07", "a03")];

fn trace_fixture() -> (Corpus, CitationGraph, DenseIndex, CannedEmbedder) {
    let dim = 16;
    let mut table = HashMap::new();
    let mut q = vec![0.0; dim];
    q[0] = 1.0;
    table.insert("q".to_string(), q);
    let mut articles = Vec::new();
    for (rank, (aid, level)) in TRACE_ARTICLES.iter().enumerate() {
        let content = format!("content of {aid}");
        // cos(q, v) = 0.95 - 0.05 * rank: strictly decreasing with rank.
        let c = 0.95 - 0.05 * rank as f64;
        let mut v = vec![0.0; dim];
        v[0] = c;
        v[1 + rank] = (1.0 - c * c).sqrt();
        table.insert(content.clone(), v);
        articles.push(LegalArticle {
            id: id(aid),
            law_title: format!("Law {aid}"),
            article_number: 1,
            content,
            hierarchy_level: HierarchyLevel::from_value(*level as i64).unwrap(),
        });
    }
    let corpus = Corpus::from_articles(articles).unwrap();
    let mut graph = CitationGraph::with_nodes(corpus.iter().map(|a| a.id.clone()));
    for (s, t) in TRACE_EDGES {
        graph.add_edge(&id(s), &id(t));
    }
    let embedder = CannedEmbedder::new(dim, table).unwrap();
    let mut index = DenseIndex::new(dim);
    for a in corpus.iter() {
        let v = embedder
            .embed(std::slice::from_ref(&a.content))
            .unwrap()
            .remove(0);
        index.insert(a.id.clone(), &v).unwrap();
    }
    (corpus, graph, index, embedder)
}

struct Trace {
    positive: &'static str,
    gold: &'static [&'static str],
    targets: &'static [u8],
    hierarchy: &'static [&'static str],
    citation: &'static [&'static str],
}

// Hand traces with M = 4, candidates a01..a12 in rank order.
//
// a03 (level 0): T={0,1}. Level 0 quota ceil(4/2)=2 takes a08, a09; the other
//   level gets the remaining 2 but level 1 only holds a06; the shortfall is
//   refilled by rank from the target buckets: a12. Citation: a07 cites a03.
// a05 (level 3): T={2,3,4}. Level 3 quota 2 finds only a01; remaining 3 split
//   as 2 to level 2 (a02) and 1 to level 4 (a04). No refill candidates.
//   Citation: a05 cites a12, a11 cites a05.
// a05 with a01 also gold: level 3 is empty, so a02 and a04 only.
// a07 (level 5): T={5}. a10 only. Citation: a07 cites a03.
const TRACES: [Trace; 4] = [
    Trace {
        positive: "a03",
        gold: &["a03"],
        targets: &[0, 1],
        hierarchy: &["a08", "a09", "a06", "a12"],
        citation: &["a07"],
    },
    Trace {
        positive: "a05",
        gold: &["a05"],
        targets: &[2, 3, 4],
        hierarchy: &["a01", "a02", "a04"],
        citation: &["a11", "a12"],
    },
    Trace {
        positive: "a05",
        gold: &["a05", "a01"],
        targets: &[2, 3, 4],
        hierarchy: &["a02", "a04"],
        citation: &["a11", "a12"],
    },
    Trace {
        positive: "a07",
        gold: &["a07"],
        targets: &[5],
        hierarchy: &["a10"],
        citation: &["a03"],
    },
];

fn struct_neg_trace() -> Check {
    let (corpus, graph, index, embedder) = trace_fixture();
    let order: Vec<ArticleId> = dense_search(
        &index,
        embedder.embed(&["q".into()]).unwrap()[0].as_slice(),
        12,
    )
    .map_err(|e| e.to_string())?
    .into_iter()
    .map(|(i, _)| i)
    .collect();
    let expected_order: Vec<ArticleId> = TRACE_ARTICLES.iter().map(|(a, _)| id(a)).collect();
    ensure(order == expected_order, || {
        format!("fixture rank order {order:?}")
    })?;

    let cfg = MiningConfig {
        retrieval_depth: 12,
        negative_budget: 4,
        ..MiningConfig::default()
    };
    for t in &TRACES {
        let gold: BTreeSet<ArticleId> = t.gold.iter().map(|g| id(g)).collect();
        let out = mine_struct_negatives(
            "q",
            &id(t.positive),
            &gold,
            &corpus,
            &graph,
            &index,
            &embedder,
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        let label = format!("positive {} gold {:?}", t.positive, t.gold);
        let targets: Vec<u8> = out.target_levels.iter().map(|l| l.value()).collect();
        ensure(targets == t.targets, || {
            format!("{label}: T={targets:?}, want {:?}", t.targets)
        })?;
        let level = corpus.level_of(t.positive).unwrap();
        let api_targets: Vec<u8> = target_levels(level).iter().map(|l| l.value()).collect();
        ensure(api_targets == t.targets, || {
            format!("{label}: target_levels {api_targets:?}")
        })?;
        let negatives = &out.triplet.negative_ids;
        let (h, c) = negatives.split_at(out.hierarchy_negatives.min(negatives.len()));
        ensure(h == ids(t.hierarchy).as_slice(), || {
            format!("{label}: hierarchy {h:?}, want {:?}", t.hierarchy)
        })?;
        ensure(c == ids(t.citation).as_slice(), || {
            format!("{label}: citation {c:?}, want {:?}", t.citation)
        })?;
        ensure(out.citation_negatives == c.len(), || {
            format!("{label}: citation count {}", out.citation_negatives)
        })?;
        ensure(
            out.triplet.negative_ids.iter().all(|n| !gold.contains(n)),
            || format!("{label}: N and A overlap"),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

const LABELS: [IntentLabel; 5] = [
    IntentLabel::Definition,
    IntentLabel::Applicability,
    IntentLabel::Consequence,
    IntentLabel::Procedure,
    IntentLabel::Others,
];

fn random_pool(rng: &mut ChaCha8Rng) -> Vec<RerankInput> {
    let n = rng.random_range(1..=20);
    (1..=n)
        .map(|r| RerankInput {
            article_id: id(&format!("p{r:02}")),
            initial_rank: r,
            fused: 1.0 - r as f64 / 100.0,
            // A coarse grid makes score ties (and the rank tie-break) common.
            raw_rerank: if rng.random_bool(0.1) {
                None
            } else {
                Some(rng.random_range(-4..=4) as f64 / 2.0)
            },
            intent: LABELS[rng.random_range(0..LABELS.len())],
        })
        .collect()
}

/// Order by brute force: scores from first principles, then a stable
/// selection of the best remaining candidate.
fn rerank_oracle(
    pool: &[RerankInput],
    q: IntentLabel,
    w: (f64, f64, f64),
    intent_on: bool,
) -> Vec<(String, f64)> {
    let size = pool.len() as f64;
    let mut left: Vec<(String, usize, f64)> = pool
        .iter()
        .map(|c| {
            let s_r = c
                .raw_rerank
                .map_or(0.0, |r| 0.5 + r.atan() / std::f64::consts::PI);
            let s_p = (size - c.initial_rank as f64 + 1.0) / size;
            let s_i = if intent_on && c.intent == q && q != IntentLabel::Others {
                1.0
            } else {
                0.0
            };
            (
                c.article_id.to_string(),
                c.initial_rank,
                w.0 * s_r + w.1 * s_p + w.2 * s_i,
            )
        })
        .collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (b, c) = (&left[best], &left[i]);
            if c.2 > b.2 || (c.2 == b.2 && c.1 < b.1) {
                best = i;
            }
        }
        let (cid, _, s) = left.remove(best);
        out.push((cid, s));
    }
    out
}

fn rerank_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let pool = random_pool(&mut rng);
        let n = pool.len();
        let q = LABELS[rng.random_range(0..4)];
        let l3 = [0.2, 0.5, 0.1][case % 3];
        let l1 = rng.random_range(0.0..(1.0 - l3));
        let w = (l1, 1.0 - l3 - l1, l3);
        let weights = RerankWeights::new(w.0, w.1, w.2).map_err(|e| e.to_string())?;
        let got = final_ranking(&pool, q, &weights, n, n).map_err(|e| e.to_string())?;
        let want = rerank_oracle(&pool, q, w, true);
        let got_ids: Vec<String> = got.iter().map(|c| c.article_id.to_string()).collect();
        let want_ids: Vec<String> = want.iter().map(|c| c.0.clone()).collect();
        ensure(got_ids == want_ids, || {
            format!("case {case}: {got_ids:?} != {want_ids:?}")
        })?;
        for (g, (_, s)) in got.iter().zip(&want) {
            close(g.score, *s, 1e-12, &format!("case {case} score"))?;
        }

        // lambda3 = 0: the order ignores intents entirely.
        let no_intent = RerankWeights::new(w.0, 1.0 - w.0, 0.0).map_err(|e| e.to_string())?;
        let base = final_ranking(&pool, q, &no_intent, n, n).map_err(|e| e.to_string())?;
        let base_want = rerank_oracle(&pool, q, (w.0, 1.0 - w.0, 0.0), false);
        let base_ids: Vec<String> = base.iter().map(|c| c.article_id.to_string()).collect();
        let base_want_ids: Vec<String> = base_want.iter().map(|c| c.0.clone()).collect();
        ensure(base_ids == base_want_ids, || {
            format!("case {case}: lambda3=0 order {base_ids:?}")
        })?;
        let mut shuffled = pool.clone();
        for c in &mut shuffled {
            c.intent = LABELS[rng.random_range(0..LABELS.len())];
        }
        let reshuffled =
            final_ranking(&shuffled, q, &no_intent, n, n).map_err(|e| e.to_string())?;
        ensure(
            reshuffled
                .iter()
                .map(|c| c.article_id.to_string())
                .eq(base_ids.iter().cloned()),
            || format!("case {case}: lambda3=0 order depends on intents"),
        )?;

        // Flip one mismatching candidate to the query intent.
        let rank_of = |r: &[lexpath_core::rerank::RerankedCandidate], a: &ArticleId| {
            r.iter().position(|c| &c.article_id == a).unwrap()
        };
        if let Some(i) = (0..n)
            .filter(|&i| pool[i].intent != q)
            .collect::<Vec<_>>()
            .choose(&mut rng)
        {
            let mut flipped = pool.clone();
            flipped[*i].intent = q;
            let after = final_ranking(&flipped, q, &weights, n, n).map_err(|e| e.to_string())?;
            let a = &pool[*i].article_id;
            let (before_rank, after_rank) = (rank_of(&got, a), rank_of(&after, a));
            ensure(after_rank <= before_rank, || {
                format!("case {case}: flipping {a} moved it from {before_rank} to {after_rank}")
            })?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn metric_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let universe: Vec<String> = (0..15).map(|i| format!("m{i:02}")).collect();
    for case in 0..200 {
        let mut pool = universe.clone();
        pool.shuffle(&mut rng);
        let ranked_len = rng.random_range(0..=10);
        let ranked: Vec<ArticleId> = pool[..ranked_len].iter().map(|s| id(s)).collect();
        let mut g = universe.clone();
        g.shuffle(&mut rng);
        let gold_len = rng.random_range(1..=4);
        let gold: BTreeSet<ArticleId> = g[..gold_len].iter().map(|s| id(s)).collect();
        let k = rng.random_range(1..=12);

        let hits: Vec<bool> = ranked.iter().take(k).map(|r| gold.contains(r)).collect();
        let recall = hits.iter().filter(|h| **h).count() as f64 / gold.len() as f64;
        let dcg: f64 = hits
            .iter()
            .enumerate()
            .filter(|(_, h)| **h)
            .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
            .sum();
        let idcg: f64 = (0..k.min(gold.len()))
            .map(|i| 1.0 / ((i + 2) as f64).log2())
            .sum();
        let ndcg = dcg / idcg;

        close(
            recall_at_k(&ranked, &gold, k).unwrap(),
            recall,
            1e-12,
            &format!("case {case} recall"),
        )?;
        close(
            ndcg_at_k(&ranked, &gold, k).unwrap(),
            ndcg,
            1e-12,
            &format!("case {case} ndcg"),
        )?;
    }
    let ranked = ids(&["x", "g", "y"]);
    let gold: BTreeSet<ArticleId> = ids(&["g"]).into_iter().collect();
    close(
        ndcg_at_k(&ranked, &gold, 3).unwrap(),
        1.0 / 3f64.log2(),
        1e-9,
        "gold at rank 2, K=3",
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------

fn lexpath(config: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lexpath"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "lexpath {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

#[derive(serde::Deserialize)]
struct Summary {
    recall: BTreeMap<usize, f64>,
}

#[derive(serde::Deserialize)]
struct PerQuery {
    query_id: String,
    ranked: Vec<String>,
}

const ABLATIONS: [(&str, &[&str], &str); 5] = [
    ("full", &[], "full"),
    ("--no-expand", &["--no-expand"], "no-expand"),
    ("--no-rerank", &["--no-rerank"], "no-rerank"),
    ("--sparse-only", &["--sparse-only"], "sparse-only"),
    ("--dense-only", &["--dense-only"], "dense-only"),
];

/// Runs eval on the whole query set and returns (R@5, per-query rankings).
fn eval_run(
    config: &Path,
    queries: &Path,
    out: &Path,
    flags: &[&str],
    stem: &str,
) -> Result<(f64, Vec<PerQuery>), String> {
    let mut args = vec![
        "eval",
        "--queries",
        queries.to_str().unwrap(),
        "--split",
        "all",
    ];
    args.extend(["--out-dir", out.to_str().unwrap()]);
    args.extend(flags);
    lexpath(config, &args)?;
    let read = |ext: &str| {
        std::fs::read_to_string(out.join(format!("eval_all_{stem}.{ext}")))
            .map_err(|e| e.to_string())
    };
    let summary: Summary = serde_json::from_str(&read("json")?).map_err(|e| e.to_string())?;
    let rankings = read("jsonl")?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect::<Result<Vec<PerQuery>, String>>()?;
    Ok((summary.recall[&5], rankings))
}

fn end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = write_fixture(tmp.path()).map_err(|e| e.to_string())?;
    lexpath(&fx.config, &["index"])?;
    let n_queries = load_queries(&fx.queries, None)
        .map_err(|e| e.to_string())?
        .queries
        .len();
    ensure(n_queries == 20, || format!("{n_queries} queries"))?;

    let mut rankings: Vec<(&str, Vec<Vec<String>>)> = Vec::new();
    for (name, flags, stem) in ABLATIONS {
        let (r5, first) = eval_run(&fx.config, &fx.queries, &tmp.path().join("r1"), flags, stem)?;
        let (_, second) = eval_run(&fx.config, &fx.queries, &tmp.path().join("r2"), flags, stem)?;
        let a: Vec<Vec<String>> = first.into_iter().map(|p| p.ranked).collect();
        let b: Vec<Vec<String>> = second.iter().map(|p| p.ranked.clone()).collect();
        ensure(a == b, || format!("{name}: ranking differs between runs"))?;
        ensure(second.iter().all(|p| !p.query_id.is_empty()), || {
            "empty query id".into()
        })?;
        if name == "full" {
            ensure(r5 == 100.0, || format!("full Recall@5 = {r5}, want 100"))?;
        }
        println!("    {name:<14} Recall@5 {r5:6.2}");
        rankings.push((name, a));
    }
    for i in 0..rankings.len() {
        for j in i + 1..rankings.len() {
            ensure(rankings[i].1 != rankings[j].1, || {
                format!(
                    "{} and {} produce the same ranking",
                    rankings[i].0, rankings[j].0
                )
            })?;
        }
    }

    let flags = ["--sparse-only", "--no-expand", "--no-rerank"];
    let stem = "sparse-only_no-expand_no-rerank";
    let (bm25, _) = eval_run(
        &fx.config,
        &fx.queries,
        &tmp.path().join("r1"),
        &flags,
        stem,
    )?;
    println!("    {:<14} Recall@5 {bm25:6.2}", "bm25-only");
    ensure(bm25 <= 80.0, || {
        format!("BM25-only Recall@5 = {bm25}, want <= 80")
    })?;
    ensure(bm25 < 100.0, || "full does not beat BM25-only".into())
}

// ---------------------------------------------------------------------------

fn index_and_eval(
    config: &Path,
    queries: &Path,
    out: &Path,
) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let manifest = lexpath(config, &["index"])?;
    lexpath(
        config,
        &[
            "eval",
            "--queries",
            queries.to_str().unwrap(),
            "--split",
            "test",
            "--out-dir",
            out.to_str().unwrap(),
        ],
    )?;
    let mut files = BTreeMap::from([("index stdout".to_string(), manifest)]);
    for entry in std::fs::read_dir(out).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        files.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&p).map_err(|e| e.to_string())?,
        );
    }
    let manifest_path = config
        .parent()
        .unwrap()
        .join("artifacts")
        .join("manifest.json");
    files.insert(
        "manifest.json".into(),
        std::fs::read(manifest_path).map_err(|e| e.to_string())?,
    );
    Ok(files)
}

struct Counted {
    chat: Arc<Counting<Arc<dyn ChatProvider>>>,
    embed: Arc<Counting<Arc<dyn EmbeddingProvider>>>,
    rerank: Arc<Counting<Arc<dyn RerankProvider>>>,
}

impl Counted {
    fn calls(&self) -> [usize; 3] {
        [self.chat.calls(), self.embed.calls(), self.rerank.calls()]
    }
}

/// One in-process index + full-split evaluation with call-counting providers
/// behind a fresh on-disk cache handle.
fn counted_run(cfg: &PipelineConfig) -> Result<([usize; 3], String), String> {
    let raw = cfg.build_uncached_providers().map_err(|e| e.to_string())?;
    let counted = Counted {
        chat: Arc::new(Counting::new(raw.chat)),
        embed: Arc::new(Counting::new(raw.embed)),
        rerank: Arc::new(Counting::new(raw.rerank)),
    };
    let cache = Arc::new(
        ResponseCache::on_disk(cfg.cache_dir.as_ref().unwrap()).map_err(|e| e.to_string())?,
    );
    let providers = Providers::new(
        Arc::new(CachedChat::new(counted.chat.clone(), cache.clone())),
        Arc::new(CachedEmbedder::new(counted.embed.clone(), cache.clone())),
        Arc::new(CachedReranker::new(counted.rerank.clone(), cache)),
    );
    let indexes = build_indexes(cfg, providers.embed.as_ref()).map_err(|e| e.to_string())?;
    let queries = load_queries(
        cfg.corpus.with_file_name("queries.jsonl"),
        Some(&indexes.corpus),
    )
    .map_err(|e| e.to_string())?
    .queries;
    let pipeline =
        Pipeline::new(cfg.clone(), Arc::new(indexes), providers).map_err(|e| e.to_string())?;
    let report = pipeline
        .evaluate("full", &queries, SearchOptions::default())
        .map_err(|e| e.to_string())?;
    let json = serde_json::to_string(&report).map_err(|e| e.to_string())?;
    Ok((counted.calls(), json))
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = write_fixture(tmp.path()).map_err(|e| e.to_string())?;
    let first = index_and_eval(&fx.config, &fx.queries, &tmp.path().join("run1"))?;
    let second = index_and_eval(&fx.config, &fx.queries, &tmp.path().join("run2"))?;
    ensure(first.len() >= 4, || {
        format!("only {} report files", first.len())
    })?;
    for (name, bytes) in &first {
        ensure(second.get(name) == Some(bytes), || {
            format!("{name} differs between runs")
        })?;
    }

    let mut cfg = PipelineConfig::load(&fx.config).map_err(|e| e.to_string())?;
    cfg.artifacts_dir = tmp.path().join("artifacts-counted");
    cfg.cache_dir = Some(tmp.path().join("cache-counted"));
    let (cold, report_a) = counted_run(&cfg)?;
    let (warm, report_b) = counted_run(&cfg)?;
    println!("    provider calls (chat, embed, rerank): cold {cold:?}, warm {warm:?}");
    ensure(cold.iter().all(|&c| c > 0), || {
        format!("cold run made no calls on some provider: {cold:?}")
    })?;
    ensure(warm == [0, 0, 0], || {
        format!("warm run reached providers: {warm:?}")
    })?;
    ensure(report_a == report_b, || "in-process reports differ".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "normalization and fusion exactness",
            normalization_and_fusion,
            Duration::from_secs(1),
        ),
        (
            "BM25 oracle equivalence",
            bm25_equivalence,
            Duration::from_secs(5),
        ),
        (
            "dense oracle equivalence",
            dense_equivalence,
            Duration::from_secs(5),
        ),
        (
            "struct-neg mining hand trace",
            struct_neg_trace,
            Duration::from_secs(1),
        ),
        ("rerank oracle", rerank_equivalence, Duration::from_secs(2)),
        ("metric oracles", metric_equivalence, Duration::from_secs(2)),
        (
            "end-to-end distinguishing fixture",
            end_to_end,
            Duration::from_secs(30),
        ),
        (
            "determinism and cache hits",
            determinism,
            Duration::from_secs(60),
        ),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let outcome = outcome.and_then(|()| {
            ensure(took <= budget, || {
                format!("took {took:.2?}, budget {budget:.0?}")
            })
        });
        match outcome {
            Ok(()) => println!("PASS  {name} ({took:.2?})"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name} ({took:.2?}): {e}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
