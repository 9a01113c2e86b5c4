//! Ledger conformance: observed call counts against the closed forms implied
//! by a run's artifacts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{files, BankRecord, DocList, Tagged};
use crate::error::Result;
use crate::ideation::{DraftNugget, Nugget};
use crate::ingest::{chunk_document, Document, Request};
use crate::jsonl;
use crate::llm::{CallRecord, Stage};
use crate::ranking::judged_dimensions;
use crate::scan::CandidateSentence;

/// Sizes of one request's run, as recorded in the stage files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestStats {
    pub request_id: String,
    /// Documents summarized and ideated from.
    pub pool_docs: usize,
    pub drafts: usize,
    pub pool_nuggets: usize,
    /// Judge dimensions with a request field to judge against.
    pub judged_dimensions: usize,
    pub bank: usize,
    pub scan_chunks: usize,
    pub candidates: usize,
    pub verified: bool,
}

fn read_if_exists<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>> {
    if path.exists() {
        jsonl::read(path).map(Some)
    } else {
        Ok(None)
    }
}

fn count_by_request<T>(records: &[Tagged<T>]) -> HashMap<&str, usize> {
    let mut out = HashMap::new();
    for r in records {
        *out.entry(r.request_id.as_str()).or_default() += 1;
    }
    out
}

/// Reads the stage files in `output_dir` and derives per-request sizes.
pub fn collect_stats(output_dir: &Path, topics: &[Request], corpus: &[Document]) -> Result<Vec<RequestStats>> {
    let pool: Vec<DocList> = jsonl::read(&output_dir.join(files::RETRIEVAL))?;
    let drafts: Vec<Tagged<DraftNugget>> = jsonl::read(&output_dir.join(files::DRAFTS))?;
    let nuggets: Vec<Tagged<Nugget>> = jsonl::read(&output_dir.join(files::NUGGET_POOL))?;
    let bank: Vec<BankRecord> = read_if_exists(&output_dir.join(files::BANK))?.unwrap_or_default();
    let scan_docs: Vec<DocList> = read_if_exists(&output_dir.join(files::SCAN_DOCS))?.unwrap_or_default();
    let candidates: Vec<Tagged<CandidateSentence>> =
        read_if_exists(&output_dir.join(files::CANDIDATES))?.unwrap_or_default();
    let verified = output_dir.join(files::VERIFIED).exists();

    let docs: HashMap<&str, &Document> = corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let requests: HashMap<&str, &Request> = topics.iter().map(|r| (r.request_id.as_str(), r)).collect();
    let drafts = count_by_request(&drafts);
    let nuggets = count_by_request(&nuggets);
    let candidates = count_by_request(&candidates);
    let mut bank_sizes: HashMap<&str, usize> = HashMap::new();
    for b in &bank {
        *bank_sizes.entry(b.request_id.as_str()).or_default() += 1;
    }
    let chunk_counts: HashMap<&str, usize> = scan_docs
        .iter()
        .map(|d| {
            let n = d
                .doc_ids
                .iter()
                .filter_map(|id| docs.get(id.as_str()))
                .map(|doc| chunk_document(doc).len())
                .sum();
            (d.request_id.as_str(), n)
        })
        .collect();

    let mut stats: Vec<RequestStats> = pool
        .iter()
        .map(|p| {
            let id = p.request_id.as_str();
            let get = |m: &HashMap<&str, usize>| m.get(id).copied().unwrap_or(0);
            RequestStats {
                request_id: p.request_id.clone(),
                pool_docs: p.doc_ids.len(),
                drafts: get(&drafts),
                pool_nuggets: get(&nuggets),
                judged_dimensions: requests.get(id).map_or(0, |r| judged_dimensions(r).len()),
                bank: get(&bank_sizes),
                scan_chunks: get(&chunk_counts),
                candidates: get(&candidates),
                verified,
            }
        })
        .collect();
    stats.sort_by(|a, b| a.request_id.cmp(&b.request_id));
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum Expectation {
    Exact(usize),
    AtMost(usize),
    Unchecked,
}

impl Expectation {
    fn admits(self, observed: usize) -> bool {
        match self {
            Expectation::Exact(n) => observed == n,
            Expectation::AtMost(n) => observed <= n,
            Expectation::Unchecked => true,
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Exact(n) => write!(f, "= {n}"),
            Expectation::AtMost(n) => write!(f, "<= {n}"),
            Expectation::Unchecked => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub stage: String,
    pub observed: usize,
    pub network: usize,
    pub expected: Expectation,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub pass: bool,
}

impl CostReport {
    /// Stages whose counts did not conform.
    pub fn failing(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.ok).map(|r| r.stage.as_str()).collect()
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>9} {:>10} {:>9}  status",
            "stage", "observed", "expected", "network"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:>9} {:>10} {:>9}  {}",
                r.stage,
                r.observed,
                r.expected.to_string(),
                r.network,
                if r.ok { "ok" } else { "MISMATCH" }
            )?;
        }
        if self.pass {
            write!(f, "verdict: PASS")
        } else {
            write!(f, "verdict: FAIL ({})", self.failing().join(", "))
        }
    }
}

fn choose2(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Compares ledger counts with the closed forms: D summarize and ideate
/// calls, C(M,2) paraphrase calls, one judge call per pooled nugget and
/// judged dimension, N·D_chunks scan calls and at most 2·S verification
/// calls, all summed over requests. With `expect_warm`, any network call
/// fails its stage.
pub fn cost_report(records: &[CallRecord], stats: &[RequestStats], expect_warm: bool) -> CostReport {
    let mut observed: BTreeMap<Stage, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = observed.entry(r.stage).or_default();
        e.0 += 1;
        if !r.cached {
            e.1 += 1;
        }
    }
    let sum = |f: &dyn Fn(&RequestStats) -> usize| stats.iter().map(f).sum::<usize>();
    let verified = stats.iter().any(|s| s.verified);
    let verify_expectation = if verified {
        Expectation::AtMost(2 * sum(&|s| s.candidates))
    } else {
        Expectation::Exact(0)
    };
    let plan: [(&str, &[Stage], Expectation); 7] = [
        (
            "summarize",
            &[Stage::Summarize],
            Expectation::Exact(sum(&|s| s.pool_docs)),
        ),
        ("ideate", &[Stage::Ideate], Expectation::Exact(sum(&|s| s.pool_docs))),
        (
            "paraphrase",
            &[Stage::Paraphrase],
            Expectation::Exact(sum(&|s| choose2(s.drafts))),
        ),
        (
            "judge_feature",
            &[Stage::JudgeFeature],
            Expectation::Exact(sum(&|s| s.pool_nuggets * s.judged_dimensions)),
        ),
        (
            "scan",
            &[Stage::Scan],
            Expectation::Exact(sum(&|s| s.bank * s.scan_chunks)),
        ),
        (
            "verify",
            &[Stage::VerifySupport, Stage::VerifyCoverage],
            verify_expectation,
        ),
        ("judge_eval", &[Stage::JudgeEval], Expectation::Unchecked),
    ];
    let rows: Vec<CostRow> = plan
        .into_iter()
        .map(|(name, stages, expected)| {
            let (calls, network) = stages
                .iter()
                .map(|s| observed.get(s).copied().unwrap_or_default())
                .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            CostRow {
                stage: name.to_string(),
                observed: calls,
                network,
                expected,
                ok: expected.admits(calls) && !(expect_warm && network > 0),
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.ok);
    CostReport { rows, pass }
}
