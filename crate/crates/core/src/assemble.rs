//! Optional YES/NO verification, per-nugget selection, fingerprint dedup and
//! report assembly.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideation::Nugget;
use crate::ingest::Chunk;
use crate::llm::{parse_yes_no, prompts, Gateway, PromptRequest};
use crate::ranking::NuggetBank;
use crate::scan::CandidateSentence;
use crate::text::fingerprint_sentence;

pub const DEFAULT_K: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSentence {
    pub text: String,
    pub doc_id: String,
    pub nugget_id: String,
    pub confidence: f64,
    pub segment: String,
    pub chunk_index: usize,
}

impl From<&CandidateSentence> for ReportSentence {
    fn from(c: &CandidateSentence) -> Self {
        ReportSentence {
            text: c.text.clone(),
            doc_id: c.doc_id.clone(),
            nugget_id: c.nugget_id.clone(),
            confidence: c.confidence,
            segment: c.segment.clone(),
            chunk_index: c.chunk_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub request_id: String,
    pub verified: bool,
    pub sentences: Vec<ReportSentence>,
}

fn ask(gw: &Gateway, prompt: &PromptRequest, what: &str) -> Result<bool> {
    let resp = gw.cached_complete(prompt)?;
    Ok(parse_yes_no(&resp.raw_text).unwrap_or_else(|| {
        gw.warn(format!("{what}: no YES/NO in response, treated as NO"));
        false
    }))
}

/// The evidence passed to judges: the extracted segment, then its chunk.
fn evidence(candidate: &CandidateSentence, chunk: &Chunk) -> String {
    format!("{}\n{}", candidate.segment, chunk.text)
}

/// Is the candidate sentence supported by its cited passage?
pub fn verify_support(gw: &Gateway, candidate: &CandidateSentence, chunk: &Chunk) -> Result<bool> {
    let what = format!(
        "verify_support {} on {}#{}",
        candidate.nugget_id, candidate.doc_id, candidate.chunk_index
    );
    ask(
        gw,
        &prompts::verify_support(&candidate.text, &evidence(candidate, chunk)),
        &what,
    )
}

/// Does the candidate sentence (with its passage) cover the nugget's answer?
pub fn verify_coverage(gw: &Gateway, candidate: &CandidateSentence, nugget: &Nugget) -> Result<bool> {
    let what = format!(
        "verify_coverage {} on {}#{}",
        candidate.nugget_id, candidate.doc_id, candidate.chunk_index
    );
    let evidence = format!("{}\n{}", candidate.text, candidate.segment);
    ask(
        gw,
        &prompts::verify_coverage(&nugget.question, &nugget.answer, &evidence),
        &what,
    )
}

/// Keeps candidates passing both checks. Coverage is only asked once support
/// has passed, so at most two calls are made per candidate.
pub fn verify_candidates(
    gw: &Gateway,
    candidates: &[CandidateSentence],
    chunks: &[Chunk],
    bank: &NuggetBank,
) -> Result<Vec<CandidateSentence>> {
    let chunk_at: HashMap<(&str, usize), &Chunk> =
        chunks.iter().map(|c| ((c.doc_id.as_str(), c.chunk_index), c)).collect();
    let nugget_by_id: HashMap<&str, &Nugget> = bank
        .ranked
        .iter()
        .map(|e| (e.nugget.nugget_id.as_str(), &e.nugget))
        .collect();
    let keep: Vec<bool> = candidates
        .par_iter()
        .map(|c| {
            let chunk = chunk_at.get(&(c.doc_id.as_str(), c.chunk_index)).ok_or_else(|| {
                Error::Invalid(format!("candidate cites unknown chunk {}#{}", c.doc_id, c.chunk_index))
            })?;
            let nugget = nugget_by_id
                .get(c.nugget_id.as_str())
                .ok_or_else(|| Error::Invalid(format!("candidate for unknown nugget {}", c.nugget_id)))?;
            Ok(verify_support(gw, c, chunk)? && verify_coverage(gw, c, nugget)?)
        })
        .collect::<Result<_>>()?;
    Ok(candidates
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(c, _)| c.clone())
        .collect())
}

/// The `k` most confident candidates per nugget, ties by citation.
pub fn select_top_k(candidates: &[CandidateSentence], k: usize) -> BTreeMap<String, Vec<CandidateSentence>> {
    let mut by_nugget: BTreeMap<String, Vec<CandidateSentence>> = BTreeMap::new();
    for c in candidates {
        by_nugget.entry(c.nugget_id.clone()).or_default().push(c.clone());
    }
    for list in by_nugget.values_mut() {
        list.sort_by(crate::scan::candidate_order);
        list.truncate(k);
    }
    by_nugget
}

/// Concatenates selected sentences in bank order, dropping any sentence
/// whose fingerprint was already used.
pub fn assemble_report(
    bank: &NuggetBank,
    selected: &BTreeMap<String, Vec<CandidateSentence>>,
    verified: bool,
) -> Result<Report> {
    let mut seen = HashSet::new();
    let mut sentences = Vec::new();
    for entry in &bank.ranked {
        for c in selected.get(&entry.nugget.nugget_id).into_iter().flatten() {
            if seen.insert(fingerprint_sentence(&c.text).canonical) {
                sentences.push(ReportSentence::from(c));
            }
        }
    }
    if sentences.is_empty() {
        return Err(Error::EmptyReport(bank.request_id.clone()));
    }
    Ok(Report {
        request_id: bank.request_id.clone(),
        verified,
        sentences,
    })
}
