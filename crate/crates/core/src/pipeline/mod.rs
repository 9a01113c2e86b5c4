//! Stage orchestration. Every stage reads and writes line-delimited JSON in
//! the output directory, so a run can be resumed or inspected stage by stage.

mod config;
mod cost;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assemble::{assemble_report, select_top_k, verify_candidates, Report};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_report, metrics_table, MetricsReport};
use crate::ideation::{build_nugget_pool, DraftNugget, Nugget, NuggetPool};
use crate::ingest::{
    chunk_document, load_corpus, load_gold_nuggets, load_topics, Chunk, Document, GoldNugget, Request,
};
use crate::jsonl;
use crate::llm::{Backend, CallRecord, Gateway, RemoteBackend, ReplayBackend, ResponseCache, SyntheticBackend};
use crate::ranking::{rank_pool, BankEntry, LinearModelScorer, NuggetBank, NuggetScorer, WeightedMeanScorer};
use crate::retrieval::Retriever;
use crate::scan::{scan_bank, CandidateSentence};

pub use config::{BackendKind, PipelineConfig};
pub use cost::{collect_stats, cost_report, CostReport, CostRow, Expectation, RequestStats};

/// Stage file names inside the output directory.
pub mod files {
    pub const CHUNKS: &str = "chunks.jsonl";
    pub const RETRIEVAL: &str = "retrieval.jsonl";
    pub const DRAFTS: &str = "drafts.jsonl";
    pub const NUGGET_POOL: &str = "nugget_pool.jsonl";
    pub const BANK: &str = "bank.jsonl";
    pub const SCAN_DOCS: &str = "scan_docs.jsonl";
    pub const CANDIDATES: &str = "candidates.jsonl";
    pub const VERIFIED: &str = "verified.jsonl";
    pub const REPORTS: &str = "reports.jsonl";
    pub const METRICS: &str = "metrics.jsonl";
    pub const METRICS_TABLE: &str = "metrics.txt";
    pub const LEDGER: &str = "ledger.jsonl";
    pub const WARNINGS: &str = "warnings.txt";
}

/// A per-request record in a multi-request stage file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tagged<T> {
    pub request_id: String,
    #[serde(flatten)]
    pub item: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocList {
    pub request_id: String,
    pub doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRecord {
    pub request_id: String,
    pub rank: usize,
    #[serde(flatten)]
    pub entry: BankEntry,
}

fn tag<'a, T: Clone>(request_id: &'a str, items: &'a [T]) -> impl Iterator<Item = Tagged<T>> + 'a {
    items.iter().map(move |item| Tagged {
        request_id: request_id.to_string(),
        item: item.clone(),
    })
}

fn group<T>(records: Vec<Tagged<T>>) -> BTreeMap<String, Vec<T>> {
    let mut out: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for r in records {
        out.entry(r.request_id).or_default().push(r.item);
    }
    out
}

fn banks_from_records(records: Vec<BankRecord>) -> BTreeMap<String, NuggetBank> {
    let mut out: BTreeMap<String, Vec<BankRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.request_id.clone()).or_default().push(r);
    }
    out.into_iter()
        .map(|(id, mut rs)| {
            rs.sort_by_key(|r| r.rank);
            let bank = NuggetBank {
                request_id: id.clone(),
                ranked: rs.into_iter().map(|r| r.entry).collect(),
            };
            (id, bank)
        })
        .collect()
}

fn bank_records(bank: &NuggetBank) -> impl Iterator<Item = BankRecord> + '_ {
    bank.ranked.iter().enumerate().map(|(i, e)| BankRecord {
        request_id: bank.request_id.clone(),
        rank: i + 1,
        entry: e.clone(),
    })
}

/// What one request produced, as far as it got.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestArtifacts {
    pub request_id: String,
    pub pool_docs: Vec<String>,
    pub drafts: Vec<DraftNugget>,
    pub nuggets: Vec<Nugget>,
    pub bank: Option<NuggetBank>,
    pub scan_docs: Vec<String>,
    pub candidates: Vec<CandidateSentence>,
    pub verified: Option<Vec<CandidateSentence>>,
    pub report: Option<Report>,
}

/// Result of a multi-request command.
#[derive(Debug, Default)]
pub struct Outcome {
    /// `(request_id, message)` for every request that failed.
    pub failures: Vec<(String, String)>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

fn record_failure(failures: &mut Vec<(String, String)>, request_id: &str, err: &Error) {
    log::error!("{request_id}: {err}");
    failures.push((request_id.to_string(), err.to_string()));
}

pub fn open_backend(cfg: &PipelineConfig) -> Result<Arc<dyn Backend>> {
    Ok(match cfg.backend {
        BackendKind::Synthetic => Arc::new(SyntheticBackend::new()),
        BackendKind::Replay => {
            let path = cfg
                .replay_path
                .as_ref()
                .ok_or_else(|| Error::Invalid("the replay backend needs replay_path".into()))?;
            Arc::new(ReplayBackend::load(path)?)
        }
        BackendKind::Remote => {
            let setting = |value: &Option<String>, var: &str| {
                value
                    .clone()
                    .or_else(|| std::env::var(var).ok())
                    .ok_or_else(|| Error::Invalid(format!("remote backend: set {var} or the config value")))
            };
            Arc::new(RemoteBackend::new(
                setting(&cfg.api_base, "LLM_API_BASE")?,
                setting(&cfg.model, "LLM_MODEL")?,
                std::env::var("LLM_API_KEY").ok(),
            ))
        }
    })
}

fn open_scorer(cfg: &PipelineConfig) -> Result<Box<dyn NuggetScorer>> {
    Ok(match (&cfg.weights_path, &cfg.linear_model_path) {
        (Some(_), Some(_)) => return Err(Error::Invalid("choose weights or a linear model, not both".into())),
        (Some(w), None) => Box::new(WeightedMeanScorer::load_overrides(w)?),
        (None, Some(m)) => Box::new(LinearModelScorer::load(m)?),
        (None, None) => Box::new(WeightedMeanScorer::uniform()),
    })
}

/// Loaded inputs, the model gateway and the worker pool for one invocation.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub gateway: Gateway,
    pub corpus: Vec<Document>,
    pub topics: Vec<Request>,
    doc_index: HashMap<String, usize>,
    scorer: Box<dyn NuggetScorer>,
    workers: rayon::ThreadPool,
}

impl Pipeline {
    pub fn open(config: PipelineConfig) -> Result<Self> {
        Self::with_backend(open_backend(&config)?, config)
    }

    pub fn with_backend(backend: Arc<dyn Backend>, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let corpus = load_corpus(&config.corpus_path)?;
        let topics = load_topics(&config.topics_path)?;
        let mut gateway = Gateway::new(backend);
        if let Some(dir) = &config.cache_dir {
            gateway = gateway.with_cache(ResponseCache::open(dir)?);
        }
        let scorer = open_scorer(&config)?;
        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
        std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
        let doc_index = corpus.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), i)).collect();
        Ok(Pipeline {
            config,
            gateway,
            corpus,
            topics,
            doc_index,
            scorer,
            workers,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn read_stage<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>> {
        jsonl::read(&self.path(name)).map_err(|e| e.context(format!("reading stage file {name}")))
    }

    fn write_stage<T: Serialize>(&self, name: &str, records: &[T]) -> Result<()> {
        jsonl::write(&self.path(name), records)
    }

    pub fn document(&self, doc_id: &str) -> Result<&Document> {
        self.doc_index
            .get(doc_id)
            .map(|&i| &self.corpus[i])
            .ok_or_else(|| Error::Invalid(format!("unknown document {doc_id}")))
    }

    fn documents(&self, ids: &[String]) -> Result<Vec<Document>> {
        ids.iter().map(|id| self.document(id).cloned()).collect()
    }

    fn chunks_of(&self, ids: &[String]) -> Result<Vec<Chunk>> {
        let mut out = Vec::new();
        for id in ids {
            out.extend(chunk_document(self.document(id)?));
        }
        Ok(out)
    }

    pub fn retrieve_pool(&self, req: &Request) -> Result<Vec<String>> {
        let retriever = Retriever::open(&self.config.pool_retrieval, &self.corpus)?;
        retriever.retrieve(req, self.config.pool_depth, None)
    }

    pub fn ideate(&self, req: &Request, pool_docs: &[String]) -> Result<NuggetPool> {
        build_nugget_pool(&self.gateway, req, &self.documents(pool_docs)?, &self.config.ideation())
    }

    pub fn rank(&self, req: &Request, nuggets: &[Nugget]) -> Result<NuggetBank> {
        rank_pool(&self.gateway, req, nuggets, self.scorer.as_ref(), self.config.bank_size)
    }

    /// Documents to scan: the configured retrieval, where the from-nuggets
    /// mode uses the bank nuggets' sources in pool-rank order.
    pub fn scan_documents(&self, req: &Request, bank: &NuggetBank) -> Result<Vec<String>> {
        let mut provenance: BTreeMap<String, usize> = BTreeMap::new();
        for e in &bank.ranked {
            for (doc, &rank) in &e.nugget.provenance {
                provenance
                    .entry(doc.clone())
                    .and_modify(|r| *r = (*r).min(rank))
                    .or_insert(rank);
            }
        }
        let retriever = Retriever::open(&self.config.retrieval, &self.corpus)?;
        retriever.retrieve(req, self.config.depth, Some(&provenance))
    }

    pub fn scan(&self, req: &Request, bank: &NuggetBank, scan_docs: &[String]) -> Result<Vec<CandidateSentence>> {
        scan_bank(&self.gateway, req, bank, &self.chunks_of(scan_docs)?)
    }

    pub fn verify(
        &self,
        bank: &NuggetBank,
        scan_docs: &[String],
        candidates: &[CandidateSentence],
    ) -> Result<Vec<CandidateSentence>> {
        verify_candidates(&self.gateway, candidates, &self.chunks_of(scan_docs)?, bank)
    }

    pub fn assemble(&self, bank: &NuggetBank, candidates: &[CandidateSentence], verified: bool) -> Result<Report> {
        assemble_report(bank, &select_top_k(candidates, self.config.k), verified)
    }

    /// All stages for one request; stops at the first error, keeping what
    /// was produced before it.
    pub fn run_request(&self, req: &Request) -> (RequestArtifacts, Option<Error>) {
        let mut a = RequestArtifacts {
            request_id: req.request_id.clone(),
            ..Default::default()
        };
        let err = self.run_request_into(req, &mut a).err();
        (a, err)
    }

    fn run_request_into(&self, req: &Request, a: &mut RequestArtifacts) -> Result<()> {
        a.pool_docs = self.retrieve_pool(req).map_err(|e| e.context("retrieve"))?;
        let pool = self.ideate(req, &a.pool_docs).map_err(|e| e.context("ideate"))?;
        a.drafts = pool.drafts;
        a.nuggets = pool.nuggets;
        let bank = self.rank(req, &a.nuggets).map_err(|e| e.context("rank"))?;
        let bank = a.bank.insert(bank);
        a.scan_docs = self
            .scan_documents(req, bank)
            .map_err(|e| e.context("retrieve for scan"))?;
        a.candidates = self.scan(req, bank, &a.scan_docs).map_err(|e| e.context("scan"))?;
        let selectable = if self.config.verify {
            let kept = self
                .verify(bank, &a.scan_docs, &a.candidates)
                .map_err(|e| e.context("verify"))?;
            a.verified.insert(kept).as_slice()
        } else {
            a.candidates.as_slice()
        };
        let report = self
            .assemble(bank, selectable, self.config.verify)
            .map_err(|e| e.context("assemble"))?;
        a.report = Some(report);
        Ok(())
    }

    /// Runs every request (concurrently, within the worker pool) and writes
    /// all stage files, the ledger and any warnings.
    pub fn run(&self) -> Result<(Vec<RequestArtifacts>, Outcome)> {
        let results: Vec<(RequestArtifacts, Option<Error>)> = self
            .workers
            .install(|| self.topics.par_iter().map(|r| self.run_request(r)).collect());
        let mut outcome = Outcome::default();
        let mut artifacts = Vec::new();
        for (a, err) in results {
            if let Some(e) = err {
                record_failure(&mut outcome.failures, &a.request_id, &e);
            }
            artifacts.push(a);
        }
        artifacts.sort_by(|x, y| x.request_id.cmp(&y.request_id));
        self.write_artifacts(&artifacts)?;

        if let Some(gold_path) = &self.config.gold_path {
            let reports: Vec<Report> = artifacts.iter().filter_map(|a| a.report.clone()).collect();
            let gold = load_gold_nuggets(gold_path)?;
            let (_, eval) = self.evaluate(&reports, &gold)?;
            outcome.failures.extend(eval.failures);
        }
        self.write_ledger(files::LEDGER)?;
        Ok((artifacts, outcome))
    }

    fn write_artifacts(&self, artifacts: &[RequestArtifacts]) -> Result<()> {
        let pool: Vec<DocList> = artifacts
            .iter()
            .map(|a| DocList {
                request_id: a.request_id.clone(),
                doc_ids: a.pool_docs.clone(),
            })
            .collect();
        self.write_stage(files::RETRIEVAL, &pool)?;
        let drafts: Vec<_> = artifacts.iter().flat_map(|a| tag(&a.request_id, &a.drafts)).collect();
        self.write_stage(files::DRAFTS, &drafts)?;
        let nuggets: Vec<_> = artifacts.iter().flat_map(|a| tag(&a.request_id, &a.nuggets)).collect();
        self.write_stage(files::NUGGET_POOL, &nuggets)?;
        let bank: Vec<BankRecord> = artifacts
            .iter()
            .filter_map(|a| a.bank.as_ref())
            .flat_map(bank_records)
            .collect();
        self.write_stage(files::BANK, &bank)?;
        let scan_docs: Vec<DocList> = artifacts
            .iter()
            .filter(|a| a.bank.is_some())
            .map(|a| DocList {
                request_id: a.request_id.clone(),
                doc_ids: a.scan_docs.clone(),
            })
            .collect();
        self.write_stage(files::SCAN_DOCS, &scan_docs)?;
        let candidates: Vec<_> = artifacts
            .iter()
            .flat_map(|a| tag(&a.request_id, &a.candidates))
            .collect();
        self.write_stage(files::CANDIDATES, &candidates)?;
        if self.config.verify {
            let verified: Vec<_> = artifacts
                .iter()
                .flat_map(|a| tag(&a.request_id, a.verified.as_deref().unwrap_or(&[])))
                .collect();
            self.write_stage(files::VERIFIED, &verified)?;
        } else {
            remove_if_exists(&self.path(files::VERIFIED))?;
        }
        let reports: Vec<&Report> = artifacts.iter().filter_map(|a| a.report.as_ref()).collect();
        self.write_stage(files::REPORTS, &reports)
    }

    /// Writes the sorted call ledger and the warnings gathered so far.
    pub fn write_ledger(&self, name: &str) -> Result<()> {
        self.write_stage(name, &self.gateway.ledger().sorted_records())?;
        let warnings = self.gateway.warnings();
        let path = self.path(files::WARNINGS);
        if warnings.is_empty() {
            remove_if_exists(&path)
        } else {
            std::fs::write(&path, warnings.join("\n") + "\n").map_err(|e| Error::io(&path, e))
        }
    }

    fn for_each_request<T: Send>(
        &self,
        requests: Vec<&Request>,
        f: impl Fn(&Request) -> Result<T> + Sync + Send,
    ) -> (Vec<(String, T)>, Outcome) {
        let results: Vec<(String, Result<T>)> = self
            .workers
            .install(|| requests.par_iter().map(|r| (r.request_id.clone(), f(r))).collect());
        let mut outcome = Outcome::default();
        let mut ok = Vec::new();
        for (id, r) in results {
            match r {
                Ok(v) => ok.push((id, v)),
                Err(e) => record_failure(&mut outcome.failures, &id, &e),
            }
        }
        ok.sort_by(|a, b| a.0.cmp(&b.0));
        (ok, outcome)
    }

    fn requests_in<'a, V>(&'a self, map: &BTreeMap<String, V>) -> Vec<&'a Request> {
        self.topics.iter().filter(|r| map.contains_key(&r.request_id)).collect()
    }

    /// `ingest`: chunk the whole corpus.
    pub fn stage_ingest(&self) -> Result<usize> {
        let chunks: Vec<Chunk> = self.corpus.iter().flat_map(chunk_document).collect();
        self.write_stage(files::CHUNKS, &chunks)?;
        Ok(chunks.len())
    }

    /// `retrieve`: the initial ideation pool per request.
    pub fn stage_retrieve(&self) -> Result<Outcome> {
        let (lists, outcome) = self.for_each_request(self.topics.iter().collect(), |r| self.retrieve_pool(r));
        let records: Vec<DocList> = lists
            .into_iter()
            .map(|(request_id, doc_ids)| DocList { request_id, doc_ids })
            .collect();
        self.write_stage(files::RETRIEVAL, &records)?;
        Ok(outcome)
    }

    /// `ideate`: drafts and the merged nugget pool from the retrieval file.
    pub fn stage_ideate(&self) -> Result<Outcome> {
        let pools: BTreeMap<String, Vec<String>> = self
            .read_stage::<DocList>(files::RETRIEVAL)?
            .into_iter()
            .map(|d| (d.request_id, d.doc_ids))
            .collect();
        let (built, outcome) =
            self.for_each_request(self.requests_in(&pools), |r| self.ideate(r, &pools[&r.request_id]));
        let drafts: Vec<_> = built.iter().flat_map(|(id, p)| tag(id, &p.drafts)).collect();
        let nuggets: Vec<_> = built.iter().flat_map(|(id, p)| tag(id, &p.nuggets)).collect();
        self.write_stage(files::DRAFTS, &drafts)?;
        self.write_stage(files::NUGGET_POOL, &nuggets)?;
        Ok(outcome)
    }

    /// `rank`: the nugget bank from the pool file.
    pub fn stage_rank(&self) -> Result<Outcome> {
        let pools = group(self.read_stage::<Tagged<Nugget>>(files::NUGGET_POOL)?);
        let (banks, outcome) = self.for_each_request(self.requests_in(&pools), |r| self.rank(r, &pools[&r.request_id]));
        let records: Vec<BankRecord> = banks.iter().flat_map(|(_, b)| bank_records(b)).collect();
        self.write_stage(files::BANK, &records)?;
        Ok(outcome)
    }

    /// `scan`: scanned documents and candidate sentences from the bank file.
    pub fn stage_scan(&self) -> Result<Outcome> {
        let banks = banks_from_records(self.read_stage(files::BANK)?);
        let (scanned, outcome) = self.for_each_request(self.requests_in(&banks), |r| {
            let bank = &banks[&r.request_id];
            let docs = self.scan_documents(r, bank)?;
            let candidates = self.scan(r, bank, &docs)?;
            Ok((docs, candidates))
        });
        let docs: Vec<DocList> = scanned
            .iter()
            .map(|(id, (d, _))| DocList {
                request_id: id.clone(),
                doc_ids: d.clone(),
            })
            .collect();
        let candidates: Vec<_> = scanned.iter().flat_map(|(id, (_, c))| tag(id, c)).collect();
        self.write_stage(files::SCAN_DOCS, &docs)?;
        self.write_stage(files::CANDIDATES, &candidates)?;
        Ok(outcome)
    }

    /// `verify`: candidates passing both YES/NO checks.
    pub fn stage_verify(&self) -> Result<Outcome> {
        let banks = banks_from_records(self.read_stage(files::BANK)?);
        let docs: BTreeMap<String, Vec<String>> = self
            .read_stage::<DocList>(files::SCAN_DOCS)?
            .into_iter()
            .map(|d| (d.request_id, d.doc_ids))
            .collect();
        let candidates = group(self.read_stage::<Tagged<CandidateSentence>>(files::CANDIDATES)?);
        let (kept, outcome) = self.for_each_request(self.requests_in(&docs), |r| {
            let bank = banks
                .get(&r.request_id)
                .ok_or_else(|| Error::Invalid(format!("no bank for {}", r.request_id)))?;
            let cands = candidates.get(&r.request_id).map(Vec::as_slice).unwrap_or(&[]);
            self.verify(bank, &docs[&r.request_id], cands)
        });
        let records: Vec<_> = kept.iter().flat_map(|(id, c)| tag(id, c)).collect();
        self.write_stage(files::VERIFIED, &records)?;
        Ok(outcome)
    }

    /// `assemble`: reports from the bank and the (verified, with `verify`)
    /// candidates.
    pub fn stage_assemble(&self) -> Result<Outcome> {
        let banks = banks_from_records(self.read_stage(files::BANK)?);
        let source = if self.config.verify {
            files::VERIFIED
        } else {
            files::CANDIDATES
        };
        let candidates = group(self.read_stage::<Tagged<CandidateSentence>>(source)?);
        let (reports, outcome) = self.for_each_request(self.requests_in(&banks), |r| {
            let cands = candidates.get(&r.request_id).map(Vec::as_slice).unwrap_or(&[]);
            self.assemble(&banks[&r.request_id], cands, self.config.verify)
        });
        let reports: Vec<Report> = reports.into_iter().map(|(_, r)| r).collect();
        self.write_stage(files::REPORTS, &reports)?;
        Ok(outcome)
    }

    /// Scores reports against gold nuggets and writes the metrics file and
    /// table. Reports without gold nuggets fail individually.
    pub fn evaluate(
        &self,
        reports: &[Report],
        gold: &BTreeMap<String, Vec<GoldNugget>>,
    ) -> Result<(Vec<MetricsReport>, Outcome)> {
        let results: Vec<(String, Result<MetricsReport>)> = self.workers.install(|| {
            reports
                .par_iter()
                .map(|r| {
                    let g = gold.get(&r.request_id).map(Vec::as_slice).unwrap_or(&[]);
                    let m = evaluate_report(r, g, &self.corpus, self.config.judge, Some(&self.gateway));
                    (r.request_id.clone(), m)
                })
                .collect()
        });
        let mut outcome = Outcome::default();
        let mut metrics = Vec::new();
        for (id, m) in results {
            match m {
                Ok(m) => metrics.push(m),
                Err(e) => record_failure(&mut outcome.failures, &id, &e),
            }
        }
        metrics.sort_by(|a, b| a.request_id.cmp(&b.request_id));
        self.write_stage(files::METRICS, &metrics)?;
        let table = metrics_table(&metrics);
        let path = self.path(files::METRICS_TABLE);
        std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
        Ok((metrics, outcome))
    }
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

pub fn read_reports(path: &Path) -> Result<Vec<Report>> {
    jsonl::read(path)
}

pub fn read_ledger(path: &Path) -> Result<Vec<CallRecord>> {
    jsonl::read(path)
}
