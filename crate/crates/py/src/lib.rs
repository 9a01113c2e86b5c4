//! Python bindings for the nuggetrag pipeline and its building blocks.
//!
//! Structured results cross the boundary as plain dicts and lists.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use nuggetrag_core::assemble::{Report, ReportSentence};
use nuggetrag_core::evaluation::{compute_metrics as core_metrics, CoverageJudgment, MetricsReport};
use nuggetrag_core::ingest::{Document, GoldNugget};
use nuggetrag_core::llm::{parse_fielded_output as core_parse, FieldSchema};
use nuggetrag_core::pipeline::{self as core_pipeline, files, PipelineConfig};
use nuggetrag_core::Error;

fn py_err(e: Error) -> PyErr {
    let message = e.to_string();
    match e {
        Error::Io { .. } => PyIOError::new_err(message),
        Error::Transport { .. } | Error::FixtureMiss(_) | Error::Backend(_) => PyRuntimeError::new_err(message),
        _ => PyValueError::new_err(message),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Splits a document into sentence-packed chunks of at most 1000
/// characters. Returns dicts with doc_id, chunk_index, text and char_offset.
#[pyfunction]
fn chunk_document<'py>(py: Python<'py>, doc_id: &str, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let doc = Document {
        doc_id: doc_id.to_string(),
        title: None,
        text: text.to_string(),
    };
    to_py(py, &nuggetrag_core::ingest::chunk_document(&doc))
}

/// Stopped and stemmed canonical form used for duplicate detection.
#[pyfunction]
fn fingerprint(text: &str) -> String {
    nuggetrag_core::text::fingerprint_sentence(text).canonical
}

#[pyfunction]
fn flesch_kincaid_grade(text: &str) -> f64 {
    nuggetrag_core::ranking::flesch_kincaid_grade(text)
}

/// Reciprocal rank fusion of ranked id lists; returns (id, score) pairs,
/// best first.
#[pyfunction]
#[pyo3(signature = (rankings, k = 60.0))]
fn rrf_fuse(rankings: Vec<Vec<String>>, k: f64) -> PyResult<Vec<(String, f64)>> {
    nuggetrag_core::ranking::rrf_fuse(&rankings, k).map_err(py_err)
}

/// Parses `name: value` model output. Raises ValueError when a required
/// field is missing.
#[pyfunction]
#[pyo3(signature = (text, fields, required = Vec::new()))]
fn parse_fielded_output<'py>(
    py: Python<'py>,
    text: &str,
    fields: Vec<String>,
    required: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let names: Vec<&str> = fields.iter().map(String::as_str).collect();
    let req: Vec<&str> = required.iter().map(String::as_str).collect();
    let schema = FieldSchema::new(&names, &req).map_err(py_err)?;
    to_py(py, &core_parse(text, &schema).map_err(py_err)?.fields)
}

/// The five report metrics from per-sentence coverage. `covered[i]` lists
/// the gold ids sentence `i` covers; `supported` counts supported
/// citations.
#[pyfunction]
fn compute_metrics<'py>(
    py: Python<'py>,
    covered: Vec<Vec<String>>,
    supported: usize,
    gold_ids: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = Report {
        request_id: "python".into(),
        verified: false,
        sentences: (0..covered.len())
            .map(|i| ReportSentence {
                text: format!("sentence {i}"),
                doc_id: String::new(),
                nugget_id: format!("n{i}"),
                confidence: 0.0,
                segment: String::new(),
                chunk_index: 0,
            })
            .collect(),
    };
    let judgments: Vec<CoverageJudgment> = covered
        .into_iter()
        .enumerate()
        .map(|(i, ids)| CoverageJudgment {
            sentence_index: i,
            covered_gold_ids: ids.into_iter().collect::<BTreeSet<_>>(),
        })
        .collect();
    let gold: Vec<GoldNugget> = gold_ids
        .into_iter()
        .map(|id| GoldNugget {
            nugget_id: id,
            question: String::new(),
            answers: Vec::new(),
        })
        .collect();
    to_py(
        py,
        &core_metrics(&report, &judgments, supported, &gold).map_err(py_err)?,
    )
}

/// BM25 index over (doc_id, text) pairs.
#[pyclass(frozen)]
struct LexicalIndex {
    inner: nuggetrag_core::retrieval::LexicalIndex,
    len: usize,
}

#[pymethods]
impl LexicalIndex {
    #[new]
    fn new(documents: Vec<(String, String)>) -> Self {
        let docs: Vec<Document> = documents
            .into_iter()
            .map(|(doc_id, text)| Document {
                doc_id,
                title: None,
                text,
            })
            .collect();
        LexicalIndex {
            len: docs.len(),
            inner: nuggetrag_core::retrieval::build_index(&docs),
        }
    }

    #[pyo3(signature = (query, depth = 100))]
    fn search(&self, query: &str, depth: usize) -> Vec<(String, f64)> {
        nuggetrag_core::retrieval::search(&self.inner, query, depth)
    }

    fn idf(&self, term: &str) -> f64 {
        self.inner.idf(term)
    }

    fn __len__(&self) -> usize {
        self.len
    }
}

/// The full pipeline, configured from a TOML file.
#[pyclass(frozen)]
struct Pipeline {
    inner: core_pipeline::Pipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (config, output_dir = None, jobs = None, verify = None))]
    fn new(config: PathBuf, output_dir: Option<PathBuf>, jobs: Option<usize>, verify: Option<bool>) -> PyResult<Self> {
        let mut cfg = PipelineConfig::load(&config).map_err(py_err)?;
        if let Some(dir) = output_dir {
            cfg.output_dir = dir;
        }
        if let Some(j) = jobs {
            cfg.jobs = j;
        }
        if let Some(v) = verify {
            cfg.verify = v;
        }
        Ok(Pipeline {
            inner: core_pipeline::Pipeline::open(cfg).map_err(py_err)?,
        })
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.config.output_dir.clone()
    }

    /// Runs every request and writes the stage files. Returns reports,
    /// metrics (when gold nuggets are configured), failures and the exit
    /// code the CLI would use.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let (artifacts, outcome) = py.detach(|| self.inner.run()).map_err(py_err)?;
        let reports: Vec<&Report> = artifacts.iter().filter_map(|a| a.report.as_ref()).collect();
        let metrics_path = self.inner.path(files::METRICS);
        let metrics: Vec<MetricsReport> = if self.inner.config.gold_path.is_some() {
            nuggetrag_core::jsonl::read(&metrics_path).map_err(py_err)?
        } else {
            Vec::new()
        };
        to_py(
            py,
            &serde_json::json!({
                "reports": reports,
                "metrics": metrics,
                "failures": outcome.failures,
                "exit_code": outcome.exit_code(),
            }),
        )
    }

    /// Checks the run ledger against the closed-form call counts. Returns
    /// the rows, the verdict and the printable table.
    #[pyo3(signature = (expect_warm = false))]
    fn cost_report<'py>(&self, py: Python<'py>, expect_warm: bool) -> PyResult<Bound<'py, PyAny>> {
        let p = &self.inner;
        let records = core_pipeline::read_ledger(&p.path(files::LEDGER)).map_err(py_err)?;
        let stats = core_pipeline::collect_stats(&p.config.output_dir, &p.topics, &p.corpus).map_err(py_err)?;
        let report = core_pipeline::cost_report(&records, &stats, expect_warm);
        to_py(
            py,
            &serde_json::json!({
                "rows": report.rows,
                "pass": report.pass,
                "table": report.to_string(),
            }),
        )
    }
}

#[pymodule]
fn nuggetrag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(chunk_document, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(flesch_kincaid_grade, m)?)?;
    m.add_function(wrap_pyfunction!(rrf_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(parse_fielded_output, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_class::<LexicalIndex>()?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
