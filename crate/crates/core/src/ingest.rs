//! Corpus, topic, gold-bank and run-file loading, plus sentence-bounded
//! chunking of documents.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text::{normalize_whitespace, sentence_spans};

/// Target chunk size in characters.
pub const CHUNK_CHARS: usize = 1000;
/// Sentences longer than this are hard-split.
pub const MAX_SENTENCE_CHARS: usize = 4000;

/// A user's report request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: String,
    pub title: String,
    pub problem_statement: String,
    pub background: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communication_style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

/// A sentence-aligned slice of a document. `char_offset` counts characters
/// into the whitespace-normalized document text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub char_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldNugget {
    pub nugget_id: String,
    pub question: String,
    pub answers: Vec<String>,
}

/// One line of a TREC-style run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub request_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: Option<String>,
    title: Option<String>,
    text: Option<String>,
}

#[derive(Deserialize)]
struct RawRequest {
    request_id: Option<String>,
    title: Option<String>,
    problem_statement: Option<String>,
    background: Option<String>,
    role: Option<String>,
    communication_style: Option<String>,
    scope: Option<String>,
}

#[derive(Deserialize)]
struct RawGold {
    request_id: Option<String>,
    nugget_id: Option<String>,
    question: Option<String>,
    answers: Option<Vec<String>>,
}

fn parse_line<T: serde::de::DeserializeOwned>(line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::parse(line_no, e.to_string()))
}

fn required(line_no: usize, name: &str, value: Option<String>) -> Result<String> {
    match value {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(Error::parse(line_no, format!("missing {name}"))),
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (n, line) in jsonl::read_lines(path)? {
        let raw: RawDocument = parse_line(n, &line)?;
        let doc = Document {
            doc_id: required(n, "doc_id", raw.doc_id)?,
            title: raw.title,
            text: required(n, "text", raw.text)?,
        };
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::Duplicate {
                kind: "doc_id",
                id: doc.doc_id,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_topics(path: &Path) -> Result<Vec<Request>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in jsonl::read_lines(path)? {
        let raw: RawRequest = parse_line(n, &line)?;
        let req = Request {
            request_id: required(n, "request_id", raw.request_id)?,
            title: required(n, "title", raw.title)?,
            problem_statement: required(n, "problem_statement", raw.problem_statement)?,
            background: required(n, "background", raw.background)?,
            role: raw.role,
            communication_style: raw.communication_style,
            scope: raw.scope,
        };
        if !seen.insert(req.request_id.clone()) {
            return Err(Error::Duplicate {
                kind: "request_id",
                id: req.request_id,
            });
        }
        out.push(req);
    }
    Ok(out)
}

pub fn load_gold_nuggets(path: &Path) -> Result<BTreeMap<String, Vec<GoldNugget>>> {
    let mut banks: BTreeMap<String, Vec<GoldNugget>> = BTreeMap::new();
    for (n, line) in jsonl::read_lines(path)? {
        let raw: RawGold = parse_line(n, &line)?;
        let request_id = required(n, "request_id", raw.request_id)?;
        let nugget = GoldNugget {
            nugget_id: required(n, "nugget_id", raw.nugget_id)?,
            question: required(n, "question", raw.question)?,
            answers: raw.answers.unwrap_or_default(),
        };
        if nugget.answers.is_empty() {
            return Err(Error::parse(n, "empty answers"));
        }
        let bank = banks.entry(request_id).or_default();
        if bank.iter().any(|g| g.nugget_id == nugget.nugget_id) {
            return Err(Error::Duplicate {
                kind: "nugget_id",
                id: nugget.nugget_id,
            });
        }
        bank.push(nugget);
    }
    Ok(banks)
}

/// Parses one run-file line: `request_id Q0 doc_id rank score tag`.
pub fn parse_run_line(line_no: usize, line: &str) -> Result<RunEntry> {
    let cols: Vec<&str> = line.split_whitespace().collect();
    if cols.len() != 6 {
        return Err(Error::parse(line_no, "expected 6 columns"));
    }
    let rank: usize = cols[3]
        .parse()
        .map_err(|_| Error::parse(line_no, format!("non-integer rank `{}`", cols[3])))?;
    if rank == 0 {
        return Err(Error::parse(line_no, "rank must be >= 1"));
    }
    let score: f64 = cols[4]
        .parse()
        .map_err(|_| Error::parse(line_no, format!("non-numeric score `{}`", cols[4])))?;
    Ok(RunEntry {
        request_id: cols[0].to_string(),
        doc_id: cols[2].to_string(),
        rank,
        score,
    })
}

pub fn load_run_file(path: &Path) -> Result<Vec<RunEntry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in jsonl::read_lines(path)? {
        let entry = parse_run_line(n, &line)?;
        if !seen.insert((entry.request_id.clone(), entry.doc_id.clone())) {
            return Err(Error::parse(
                n,
                format!("duplicate doc_id {} for {}", entry.doc_id, entry.request_id),
            ));
        }
        out.push(entry);
    }
    Ok(out)
}

/// Greedily packs whole sentences into chunks of at most [`CHUNK_CHARS`]
/// characters. A longer sentence becomes its own chunk, and one longer than
/// [`MAX_SENTENCE_CHARS`] is cut at the last space before every
/// [`CHUNK_CHARS`] boundary.
pub fn chunk_document(doc: &Document) -> Vec<Chunk> {
    let text = normalize_whitespace(&doc.text);
    let mut pieces: Vec<(usize, usize)> = Vec::new(); // byte ranges
    let mut current: Option<(usize, usize, usize)> = None; // start, end, chars

    let flush = |current: &mut Option<(usize, usize, usize)>, pieces: &mut Vec<(usize, usize)>| {
        if let Some((s, e, _)) = current.take() {
            pieces.push((s, e));
        }
    };

    for span in sentence_spans(&text) {
        let len = text[span.clone()].chars().count();
        if len > CHUNK_CHARS {
            flush(&mut current, &mut pieces);
            if len > MAX_SENTENCE_CHARS {
                pieces.extend(hard_split(&text, span.start, span.end));
            } else {
                pieces.push((span.start, span.end));
            }
            continue;
        }
        match current {
            Some((s, _, chars)) if chars + 1 + len <= CHUNK_CHARS => {
                current = Some((s, span.end, chars + 1 + len));
            }
            _ => {
                flush(&mut current, &mut pieces);
                current = Some((span.start, span.end, len));
            }
        }
    }
    flush(&mut current, &mut pieces);

    let mut chunks = Vec::with_capacity(pieces.len());
    let mut char_pos = 0usize;
    let mut byte_pos = 0usize;
    for (i, (s, e)) in pieces.into_iter().enumerate() {
        char_pos += text[byte_pos..s].chars().count();
        byte_pos = s;
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            chunk_index: i,
            text: text[s..e].to_string(),
            char_offset: char_pos,
        });
    }
    chunks
}

fn hard_split(text: &str, start: usize, end: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut s = start;
    while s < end {
        let rest = &text[s..end];
        // Byte index just past the first CHUNK_CHARS characters.
        let Some((limit, _)) = rest.char_indices().nth(CHUNK_CHARS) else {
            out.push((s, end));
            break;
        };
        // A space exactly at `limit` still keeps the piece within bounds.
        let space = if rest[limit..].starts_with(' ') {
            Some(limit)
        } else {
            rest[..limit].rfind(' ')
        };
        match space {
            Some(cut) if cut > 0 => {
                out.push((s, s + cut));
                s += cut + 1;
            }
            _ => {
                out.push((s, s + limit));
                s += limit;
            }
        }
    }
    out
}

/// Chunks every document, keyed by doc id.
pub fn chunk_corpus(docs: &[Document]) -> BTreeMap<String, Vec<Chunk>> {
    docs.iter().map(|d| (d.doc_id.clone(), chunk_document(d))).collect()
}
