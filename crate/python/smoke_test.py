"""Smoke test for the lexpath extension module.

Build and install first, e.g.:
    maturin build -m crates/python/Cargo.toml -o dist && pip install dist/lexpath-*.whl
"""

import math
import tempfile

import lexpath


def check_primitives():
    assert abs(lexpath.normalize_score(0.0) - 0.5) < 1e-12
    assert abs(lexpath.normalize_score(1.0) - 0.75) < 1e-12
    assert abs(lexpath.fuse(0.8, 0.6, 0.4) - 0.68) < 1e-12
    assert abs(lexpath.prior_score(1, 20) - 1.0) < 1e-12
    assert lexpath.recall_at_k(["a", "b", "c"], ["b", "z"], 2) == 0.5
    ndcg = lexpath.ndcg_at_k(["x", "g", "y"], ["g"], 3)
    assert abs(ndcg - 1 / math.log2(3)) < 1e-9
    assert lexpath.tokenize("Hello World") == ["hello", "world"]
    assert lexpath.normalize_title("  Civil   Code ") == "Civil Code"
    try:
        lexpath.fuse(0.5, 0.5, 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha outside [0, 1] accepted")


def check_engine(tmp):
    config, queries = lexpath.write_demo_fixture(tmp)
    engine = lexpath.Engine.from_config(config)
    try:
        engine.search("anything")
    except FileNotFoundError:
        pass
    else:
        raise AssertionError("search before indexing should fail")

    manifest = engine.index()
    assert manifest["articles"] == 200, manifest

    hits = engine.search("question about lay01x and lay01y", k=5)["results"]
    assert hits[0]["article_id"] == "L01A01", hits[0]
    sparse = engine.search("question about lay01x and lay01y", k=5, expand=False, rerank=False, mode="sparse")
    assert sparse["results"][0]["article_id"] != "L01A01"

    full = engine.evaluate(queries, split="all")
    bm25 = engine.evaluate(queries, split="all", expand=False, rerank=False, mode="sparse")
    assert full["recall"]["5"] == 100.0, full["recall"]
    assert bm25["recall"]["5"] < full["recall"]["5"], bm25["recall"]

    mined = engine.mine(queries)
    assert len(mined["triplets"]) == 20 and not mined["skipped"]
    print(f"{engine!r}: R@5 full {full['recall']['5']}, bm25-only {bm25['recall']['5']}")


if __name__ == "__main__":
    check_primitives()
    with tempfile.TemporaryDirectory() as tmp:
        check_engine(tmp)
    print("smoke test passed")
