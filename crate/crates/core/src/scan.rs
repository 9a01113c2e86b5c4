//! Scanning: every bank nugget is probed against every retrieved chunk for a
//! supporting passage and a one-sentence answer.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ideation::Nugget;
use crate::ingest::{Chunk, Request};
use crate::llm::{confidence_from_logprobs, prompts, FieldSchema, Gateway};
use crate::ranking::NuggetBank;
use crate::text::{first_sentence, normalize_for_match};

pub const SCAN_FIELDS: [&str; 4] = ["extracted_text_segment", "summary", "reasoning", "confidence"];

/// The parsed outcome of one scan call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub nugget_id: String,
    pub doc_id: String,
    pub chunk_index: usize,
    pub extracted_segment: Option<String>,
    pub summary_sentence: Option<String>,
    pub confidence: f64,
}

/// A cited answer sentence for one nugget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSentence {
    pub nugget_id: String,
    pub text: String,
    pub doc_id: String,
    pub chunk_index: usize,
    pub segment: String,
    pub confidence: f64,
}

/// Canonical candidate order: nugget, confidence descending, then citation.
pub fn candidate_order(a: &CandidateSentence, b: &CandidateSentence) -> Ordering {
    a.nugget_id
        .cmp(&b.nugget_id)
        .then_with(|| b.confidence.total_cmp(&a.confidence))
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.chunk_index.cmp(&b.chunk_index))
}

/// The segment, whitespace-normalized and case-folded, occurs verbatim in
/// the chunk.
pub fn validate_extraction_segment(segment: &str, chunk: &Chunk) -> bool {
    let segment = normalize_for_match(segment);
    !segment.is_empty() && normalize_for_match(&chunk.text).contains(&segment)
}

/// First sentence of a model summary, with terminal punctuation.
fn concise_sentence(summary: &str) -> String {
    let mut s = first_sentence(summary).trim().to_string();
    if !s.ends_with(['.', '!', '?', '"', '\'', ')']) {
        s.push('.');
    }
    s
}

/// Runs one scan prompt and parses the result. Confidence comes from the
/// answer's token log-probabilities; an explicit reported confidence of 0 or
/// a missing segment means "not supported".
pub fn extract(gw: &Gateway, req: &Request, nugget: &Nugget, chunk: &Chunk) -> Result<ExtractionResult> {
    let prompt = prompts::scan(&prompts::ScanInputs {
        title: &req.title,
        background: &req.background,
        problem_statement: &req.problem_statement,
        nugget_text: &nugget.question,
        answer: &nugget.answer,
        source_document: &chunk.text,
    });
    let context = || format!("scan {} on {}#{}", nugget.nugget_id, chunk.doc_id, chunk.chunk_index);
    let parsed = gw
        .cached_complete(&prompt)
        .and_then(|r| r.fielded(&FieldSchema::optional(&SCAN_FIELDS)))
        .map_err(|e| e.context(context()))?;
    let segment = parsed.get("extracted_text_segment").map(str::to_string);
    let summary = parsed.get("summary").map(concise_sentence);
    let reported = parsed.get("confidence");
    let declined = reported.and_then(|c| c.trim().parse::<f64>().ok()) == Some(0.0);
    let confidence = if declined || segment.is_none() {
        0.0
    } else {
        confidence_from_logprobs(&parsed.token_logprobs, reported).map_err(|e| e.context(context()))?
    };
    Ok(ExtractionResult {
        nugget_id: nugget.nugget_id.clone(),
        doc_id: chunk.doc_id.clone(),
        chunk_index: chunk.chunk_index,
        extracted_segment: segment,
        summary_sentence: summary,
        confidence,
    })
}

/// Scans one (nugget, chunk) pair; a candidate comes back only when the
/// chunk supports the nugget and the segment is a faithful copy.
pub fn scan_pair(gw: &Gateway, req: &Request, nugget: &Nugget, chunk: &Chunk) -> Result<Option<CandidateSentence>> {
    let x = extract(gw, req, nugget, chunk)?;
    if x.confidence <= 0.0 {
        return Ok(None);
    }
    let (Some(segment), Some(text)) = (x.extracted_segment, x.summary_sentence) else {
        gw.warn(format!(
            "scan {} on {}#{}: no summary sentence",
            x.nugget_id, x.doc_id, x.chunk_index
        ));
        return Ok(None);
    };
    if !validate_extraction_segment(&segment, chunk) {
        gw.warn(format!(
            "scan {} on {}#{}: segment not found in chunk",
            x.nugget_id, x.doc_id, x.chunk_index
        ));
        return Ok(None);
    }
    Ok(Some(CandidateSentence {
        nugget_id: x.nugget_id,
        text,
        doc_id: x.doc_id,
        chunk_index: x.chunk_index,
        segment,
        confidence: x.confidence,
    }))
}

/// Scans every bank nugget against every chunk (exactly N·D calls) and
/// returns the candidates in canonical order.
pub fn scan_bank(gw: &Gateway, req: &Request, bank: &NuggetBank, chunks: &[Chunk]) -> Result<Vec<CandidateSentence>> {
    let pairs: Vec<(&Nugget, &Chunk)> = bank
        .ranked
        .iter()
        .flat_map(|e| chunks.iter().map(move |c| (&e.nugget, c)))
        .collect();
    let found: Vec<Option<CandidateSentence>> = pairs
        .par_iter()
        .map(|(n, c)| scan_pair(gw, req, n, c))
        .collect::<Result<_>>()?;
    let mut candidates: Vec<CandidateSentence> = found.into_iter().flatten().collect();
    candidates.sort_by(candidate_order);
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Backend, PromptRequest, RawResponse, SyntheticBackend, SCAN_TOKEN_LOGPROB};
    use std::collections::{BTreeMap, BTreeSet};
    use std::sync::Arc;

    fn chunk(doc: &str, index: usize, text: &str) -> Chunk {
        Chunk {
            doc_id: doc.into(),
            chunk_index: index,
            text: text.into(),
            char_offset: 0,
        }
    }

    fn nugget(id: &str, answer: &str) -> Nugget {
        Nugget {
            nugget_id: id.into(),
            question: "What does the document state about Bayer?".into(),
            answer: answer.into(),
            member_drafts: BTreeSet::from([id.to_string()]),
            provenance: BTreeMap::from([("d1".to_string(), 1)]),
            paraphrase_count: 1,
        }
    }

    fn request() -> Request {
        Request {
            request_id: "r".into(),
            title: "Bayer".into(),
            problem_statement: "p".into(),
            background: "b".into(),
            role: None,
            communication_style: None,
            scope: None,
        }
    }

    struct Canned(&'static str);

    impl Backend for Canned {
        fn id(&self) -> &str {
            "canned"
        }
        fn model(&self) -> &str {
            "canned"
        }
        fn complete(&self, _: &PromptRequest) -> Result<RawResponse> {
            Ok(RawResponse {
                raw_text: self.0.into(),
                token_logprobs: vec![-0.5, -1.5],
            })
        }
    }

    #[test]
    fn segment_validation() {
        let c = chunk("d", 0, "Bayer bought Monsanto. Courts ruled.");
        assert!(validate_extraction_segment("Bayer bought Monsanto. Courts ruled.", &c));
        assert!(validate_extraction_segment("bayer  bought\n monsanto", &c));
        assert!(!validate_extraction_segment("Bayer sold Monsanto", &c));
        assert!(!validate_extraction_segment("  ", &c));
    }

    #[test]
    fn synthetic_scan_finds_answer_sentence() {
        let gw = Gateway::new(Arc::new(SyntheticBackend::new()));
        let c = chunk(
            "d1",
            2,
            "Weather was mild. Bayer bought Monsanto in 2018. Nothing else.",
        );
        let cand = scan_pair(&gw, &request(), &nugget("n1", "Bayer bought Monsanto in 2018."), &c)
            .unwrap()
            .unwrap();
        assert_eq!(cand.text, "Bayer bought Monsanto in 2018.");
        assert_eq!(cand.segment, "Bayer bought Monsanto in 2018.");
        assert_eq!((cand.doc_id.as_str(), cand.chunk_index), ("d1", 2));
        assert!((cand.confidence - SCAN_TOKEN_LOGPROB.exp()).abs() < 1e-12);

        let unrelated = chunk("d2", 0, "Coral reefs bleach in warm water.");
        assert!(
            scan_pair(&gw, &request(), &nugget("n1", "Bayer bought Monsanto."), &unrelated)
                .unwrap()
                .is_none()
        );
    }

    #[test]
    fn summary_keeps_first_sentence_and_unfaithful_segments_drop() {
        let gw = Gateway::new(Arc::new(Canned(
            "extracted_text_segment: Bayer bought Monsanto.\nsummary: Bayer bought it. It paid a lot.\nreasoning: r\nconfidence: 0.8",
        )));
        let c = chunk("d", 0, "Bayer bought Monsanto.");
        let cand = scan_pair(&gw, &request(), &nugget("n", "a"), &c).unwrap().unwrap();
        assert_eq!(cand.text, "Bayer bought it.");
        assert!((cand.confidence - (-1.0f64).exp()).abs() < 1e-12);

        let other = chunk("d", 1, "Monsanto was sold.");
        assert!(scan_pair(&gw, &request(), &nugget("n", "a"), &other).unwrap().is_none());
        assert_eq!(gw.warnings().len(), 1);
    }

    #[test]
    fn declined_extraction_has_zero_confidence() {
        let gw = Gateway::new(Arc::new(Canned(
            "extracted_text_segment: None\nsummary: None\nreasoning: None\nconfidence: 0.0",
        )));
        let x = extract(&gw, &request(), &nugget("n", "a"), &chunk("d", 0, "x")).unwrap();
        assert_eq!(x.confidence, 0.0);
        assert_eq!(x.extracted_segment, None);
    }

    #[test]
    fn canonical_order() {
        let mk = |n: &str, c: f64, d: &str, i: usize| CandidateSentence {
            nugget_id: n.into(),
            text: "t.".into(),
            doc_id: d.into(),
            chunk_index: i,
            segment: "t".into(),
            confidence: c,
        };
        let mut v = [
            mk("b", 0.9, "d", 0),
            mk("a", 0.5, "d", 0),
            mk("a", 0.9, "e", 0),
            mk("a", 0.9, "d", 1),
        ];
        v.sort_by(candidate_order);
        let keys: Vec<_> = v
            .iter()
            .map(|c| (c.nugget_id.as_str(), c.doc_id.as_str(), c.chunk_index))
            .collect();
        assert_eq!(keys, [("a", "d", 1), ("a", "e", 0), ("a", "d", 0), ("b", "d", 0)]);
    }
}
