//! Document supply: a BM25 lexical index, imported run files, and the
//! "from nuggets" mode that reuses the documents nuggets came from.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{load_run_file, Document, Request, RunEntry};
use crate::text::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DEFAULT_DEPTH: usize = 100;

/// Inverted index over lowercased, punctuation-stripped tokens. Stopwords
/// are kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    pub postings: BTreeMap<String, Vec<(String, usize)>>,
    pub doc_lengths: BTreeMap<String, usize>,
    pub avg_doc_length: f64,
    pub doc_count: usize,
}

/// Indexes the title (when present) followed by the body.
pub fn build_index(corpus: &[Document]) -> LexicalIndex {
    let mut postings: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    for doc in corpus {
        let mut tokens = doc.title.as_deref().map(tokenize).unwrap_or_default();
        tokens.extend(tokenize(&doc.text));
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push((doc.doc_id.clone(), count));
        }
        doc_lengths.insert(doc.doc_id.clone(), tokens.len());
    }
    let doc_count = doc_lengths.len();
    let avg_doc_length = if doc_count == 0 {
        0.0
    } else {
        doc_lengths.values().sum::<usize>() as f64 / doc_count as f64
    };
    LexicalIndex {
        postings,
        doc_lengths,
        avg_doc_length,
        doc_count,
    }
}

impl LexicalIndex {
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        let n = self.doc_count as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

/// BM25 (k1 = 1.2, b = 0.75) over the distinct query terms. Results are
/// sorted by score descending, then doc id ascending.
pub fn search(index: &LexicalIndex, query: &str, depth: usize) -> Vec<(String, f64)> {
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for term in &terms {
        let Some(posting) = index.postings.get(term) else {
            continue;
        };
        let idf = index.idf(term);
        for (doc_id, tf) in posting {
            let tf = *tf as f64;
            let len = index.doc_lengths[doc_id] as f64;
            let norm = 1.0 - BM25_B + BM25_B * len / index.avg_doc_length;
            *scores.entry(doc_id).or_default() += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
        }
    }
    let mut ranked: Vec<(String, f64)> = scores.into_iter().map(|(d, s)| (d.to_string(), s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(depth);
    ranked
}

/// Where scanned documents come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RetrievalMode {
    FromNuggets,
    RunFile(PathBuf),
    Lexical,
}

impl FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "from-nuggets" => Ok(RetrievalMode::FromNuggets),
            "lexical" => Ok(RetrievalMode::Lexical),
            _ => match s.strip_prefix("run:") {
                Some(path) if !path.is_empty() => Ok(RetrievalMode::RunFile(path.into())),
                _ => Err(Error::Invalid(format!(
                    "retrieval mode `{s}` is not from-nuggets, run:<path> or lexical"
                ))),
            },
        }
    }
}

impl TryFrom<String> for RetrievalMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RetrievalMode> for String {
    fn from(m: RetrievalMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrievalMode::FromNuggets => f.write_str("from-nuggets"),
            RetrievalMode::RunFile(p) => write!(f, "run:{}", p.display()),
            RetrievalMode::Lexical => f.write_str("lexical"),
        }
    }
}

/// Lexical query for a request: its title followed by its problem statement.
pub fn request_query(req: &Request) -> String {
    format!("{} {}", req.title, req.problem_statement)
}

/// A retrieval mode with its resources loaded.
#[derive(Debug, Clone)]
pub enum Retriever {
    FromNuggets,
    RunFile(Vec<RunEntry>),
    Lexical(LexicalIndex),
}

impl Retriever {
    pub fn open(mode: &RetrievalMode, corpus: &[Document]) -> Result<Self> {
        Ok(match mode {
            RetrievalMode::FromNuggets => Retriever::FromNuggets,
            RetrievalMode::RunFile(path) => {
                Retriever::RunFile(load_run_file(path).map_err(|e| e.context(format!("run file {}", path.display())))?)
            }
            RetrievalMode::Lexical => Retriever::Lexical(build_index(corpus)),
        })
    }

    /// Ranked doc ids for `req`, at most `depth` of them. `provenance` maps
    /// each nugget source document to its rank in the ideation pool and is
    /// required by the from-nuggets mode.
    pub fn retrieve(
        &self,
        req: &Request,
        depth: usize,
        provenance: Option<&BTreeMap<String, usize>>,
    ) -> Result<Vec<String>> {
        match self {
            Retriever::FromNuggets => {
                let prov = provenance
                    .ok_or_else(|| Error::Invalid("from-nuggets retrieval needs nugget provenance".into()))?;
                let mut docs: Vec<(&String, usize)> = prov.iter().map(|(d, r)| (d, *r)).collect();
                docs.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
                Ok(docs.into_iter().take(depth).map(|(d, _)| d.clone()).collect())
            }
            Retriever::RunFile(entries) => {
                let mut mine: Vec<&RunEntry> = entries.iter().filter(|e| e.request_id == req.request_id).collect();
                if mine.is_empty() {
                    return Err(Error::Invalid(format!(
                        "run file has no entries for request {}",
                        req.request_id
                    )));
                }
                mine.sort_by_key(|e| e.rank);
                Ok(mine.into_iter().take(depth).map(|e| e.doc_id.clone()).collect())
            }
            Retriever::Lexical(index) => Ok(search(index, &request_query(req), depth)
                .into_iter()
                .map(|(d, _)| d)
                .collect()),
        }
    }
}
