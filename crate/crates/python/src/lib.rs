//! Python bindings: the scoring primitives as functions and an `Engine`
//! class wrapping index / search / eval / mine. Structured results cross
//! the boundary as JSON and come back as plain dicts and lists.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyConnectionError, PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lexpath_core::artifacts::build_indexes;
use lexpath_core::corpus::ArticleId;
use lexpath_core::eval::{load_queries, split_dataset, Split};
use lexpath_core::{Error, PathMode, Pipeline, PipelineConfig, SearchOptions};

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::MissingArtifact(_) | Error::StaleArtifact(_) => PyFileNotFoundError::new_err(msg),
        Error::Provider { .. } | Error::Embedding { .. } => PyConnectionError::new_err(msg),
        Error::Io { .. } => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn to_py<'py, T: serde::Serialize + ?Sized>(
    py: Python<'py>,
    value: &T,
) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn article_ids(v: Vec<String>) -> Vec<ArticleId> {
    v.into_iter().map(ArticleId::new).collect()
}

/// `1/2 + arctan(r)/pi`, mapping any finite score into (0, 1).
#[pyfunction]
fn normalize_score(r: f64) -> PyResult<f64> {
    lexpath_core::fusion::normalize_score(r).map_err(py_err)
}

#[pyfunction]
fn fuse(norm_sparse: f64, norm_dense: f64, alpha: f64) -> PyResult<f64> {
    lexpath_core::fusion::fuse(norm_sparse, norm_dense, alpha).map_err(py_err)
}

#[pyfunction]
fn prior_score(initial_rank: usize, pool_size: usize) -> PyResult<f64> {
    lexpath_core::rerank::prior_score(initial_rank, pool_size).map_err(py_err)
}

#[pyfunction]
fn recall_at_k(ranked: Vec<String>, gold: Vec<String>, k: usize) -> PyResult<f64> {
    let gold: BTreeSet<ArticleId> = article_ids(gold).into_iter().collect();
    lexpath_core::eval::recall_at_k(&article_ids(ranked), &gold, k).map_err(py_err)
}

#[pyfunction]
fn ndcg_at_k(ranked: Vec<String>, gold: Vec<String>, k: usize) -> PyResult<f64> {
    let gold: BTreeSet<ArticleId> = article_ids(gold).into_iter().collect();
    lexpath_core::eval::ndcg_at_k(&article_ids(ranked), &gold, k).map_err(py_err)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    lexpath_core::sparse::tokenize(text)
}

#[pyfunction]
fn normalize_title(raw: &str) -> String {
    lexpath_core::corpus::normalize_title(raw)
}

/// Writes the synthetic demo corpus and returns `(config_path, queries_path)`.
#[pyfunction]
fn write_demo_fixture(dir: PathBuf) -> PyResult<(String, String)> {
    let paths = lexpath_core::synthetic::write_fixture(&dir).map_err(py_err)?;
    Ok((
        paths.config.display().to_string(),
        paths.queries.display().to_string(),
    ))
}

fn search_options(expand: bool, rerank: bool, mode: &str) -> PyResult<SearchOptions> {
    let mode = match mode {
        "both" => PathMode::Both,
        "sparse" => PathMode::SparseOnly,
        "dense" => PathMode::DenseOnly,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be both, sparse or dense, not {other:?}"
            )))
        }
    };
    Ok(SearchOptions {
        expand,
        rerank,
        mode,
    })
}

#[pyclass(module = "lexpath")]
struct Engine {
    cfg: PipelineConfig,
    pipeline: Option<Pipeline>,
}

impl Engine {
    fn pipeline(&mut self) -> PyResult<&Pipeline> {
        if self.pipeline.is_none() {
            self.pipeline = Some(Pipeline::open(self.cfg.clone()).map_err(py_err)?);
        }
        Ok(self.pipeline.as_ref().expect("just opened"))
    }
}

#[pymethods]
impl Engine {
    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let cfg = PipelineConfig::load(&path).map_err(py_err)?;
        Ok(Engine {
            cfg,
            pipeline: None,
        })
    }

    /// Builds and writes all artifacts; returns the manifest.
    fn index<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let providers = self.cfg.build_providers().map_err(py_err)?;
        let indexes = build_indexes(&self.cfg, providers.embed.as_ref()).map_err(|e| {
            let msg = e.to_string();
            match py_err(e.source) {
                err if err.is_instance_of::<PyConnectionError>(py) => {
                    PyConnectionError::new_err(msg)
                }
                _ => PyValueError::new_err(msg),
            }
        })?;
        let manifest = to_py(py, &indexes.manifest)?;
        self.pipeline =
            Some(Pipeline::new(self.cfg.clone(), Arc::new(indexes), providers).map_err(py_err)?);
        Ok(manifest)
    }

    #[pyo3(signature = (query, k=None, expand=true, rerank=true, mode="both"))]
    fn search<'py>(
        &mut self,
        py: Python<'py>,
        query: &str,
        k: Option<usize>,
        expand: bool,
        rerank: bool,
        mode: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = search_options(expand, rerank, mode)?;
        let k = k.unwrap_or(self.cfg.top_k);
        let resp = self.pipeline()?.search(query, k, opts).map_err(py_err)?;
        to_py(py, &resp)
    }

    /// Evaluates one split (`train`, `dev`, `test` or `all`) of a query file.
    #[pyo3(signature = (queries, split="test", expand=true, rerank=true, mode="both"))]
    fn evaluate<'py>(
        &mut self,
        py: Python<'py>,
        queries: PathBuf,
        split: &str,
        expand: bool,
        rerank: bool,
        mode: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = search_options(expand, rerank, mode)?;
        let split: Split = split.parse().map_err(PyValueError::new_err)?;
        let pipeline = self.pipeline()?;
        let cfg = pipeline.config();
        let loaded = load_queries(&queries, Some(&pipeline.indexes().corpus)).map_err(py_err)?;
        let selected = split_dataset(
            &loaded.queries,
            cfg.split_ratios,
            cfg.seed,
            cfg.group_aware_split,
        )
        .map_err(py_err)?
        .get(split);
        let report = pipeline
            .evaluate(&opts.label(), &selected, opts)
            .map_err(py_err)?;
        to_py(py, &report)
    }

    /// Mines hard-negative triplets for every (query, gold article) pair.
    fn mine<'py>(&mut self, py: Python<'py>, queries: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let pipeline = self.pipeline()?;
        let loaded = load_queries(&queries, Some(&pipeline.indexes().corpus)).map_err(py_err)?;
        to_py(py, &pipeline.mine(&loaded.queries))
    }

    fn __repr__(&self) -> String {
        format!(
            "Engine(corpus={:?}, indexed={})",
            self.cfg.corpus.display().to_string(),
            self.pipeline.is_some()
        )
    }
}

#[pymodule]
pub fn lexpath(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_score, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(prior_score, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_title, m)?)?;
    m.add_function(wrap_pyfunction!(write_demo_fixture, m)?)?;
    m.add_class::<Engine>()?;
    Ok(())
}
