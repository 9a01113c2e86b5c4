//! Nugget pool construction: query-focused summaries, Q&A draft nuggets,
//! pairwise paraphrase detection and confidence-ordered cluster merging.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Document, Request};
use crate::llm::{parse_yes_no, prompts, FieldSchema, Gateway};
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdeationConfig {
    pub max_nuggets_per_doc: usize,
    pub pool_target: usize,
    pub paraphrase_floor: f64,
    pub summary_max_chars: usize,
}

impl Default for IdeationConfig {
    fn default() -> Self {
        IdeationConfig {
            max_nuggets_per_doc: 5,
            pool_target: 50,
            paraphrase_floor: 0.5,
            summary_max_chars: 1200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftNugget {
    pub draft_id: String,
    pub question: String,
    pub answer: String,
    pub source_doc: String,
    /// 1-based rank of the source document in the ideation pool.
    pub source_rank: usize,
}

/// Paraphrase judgment between two drafts, with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseEdge {
    pub a: String,
    pub b: String,
    pub confidence: f64,
}

/// A canonical nugget: a cluster of paraphrased drafts represented by the
/// draft from the best-ranked source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nugget {
    pub nugget_id: String,
    pub question: String,
    pub answer: String,
    pub member_drafts: BTreeSet<String>,
    /// Source documents mapped to their ideation-pool rank.
    pub provenance: BTreeMap<String, usize>,
    pub paraphrase_count: usize,
}

impl Nugget {
    /// Best (smallest) pool rank among the source documents.
    pub fn source_rank(&self) -> usize {
        self.provenance.values().copied().min().unwrap_or(usize::MAX)
    }
}

/// Pool order: most paraphrased first, then best source rank, then id.
pub fn pool_order(a: &Nugget, b: &Nugget) -> Ordering {
    b.paraphrase_count
        .cmp(&a.paraphrase_count)
        .then_with(|| a.source_rank().cmp(&b.source_rank()))
        .then_with(|| a.nugget_id.cmp(&b.nugget_id))
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => s[..i].to_string(),
        None => s.to_string(),
    }
}

pub fn summarize_document(gw: &Gateway, req: &Request, doc: &Document, cfg: &IdeationConfig) -> Result<String> {
    let prompt = prompts::summarize(&req.title, &req.problem_statement, &req.background, &doc.text);
    let resp = gw
        .cached_complete(&prompt)
        .map_err(|e| e.context(format!("summarize {}", doc.doc_id)))?;
    let parsed = resp.fielded(&FieldSchema::optional(&["summary"]))?;
    let summary = match parsed.get("summary") {
        Some(s) => s.to_string(),
        None => resp.raw_text.trim().to_string(),
    };
    Ok(truncate_chars(&normalize_whitespace(&summary), cfg.summary_max_chars))
}

/// Largest numbered question/answer pair read from ideation output.
const MAX_EMITTED_PAIRS: usize = 20;

fn ideation_schema() -> FieldSchema {
    let names: Vec<String> = (1..=MAX_EMITTED_PAIRS)
        .flat_map(|i| [format!("question_{i}"), format!("answer_{i}")])
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    FieldSchema::optional(&refs)
}

pub fn draft_id(source_rank: usize, index: usize) -> String {
    format!("d{source_rank:04}-{index:02}")
}

pub fn generate_draft_nuggets(
    gw: &Gateway,
    req: &Request,
    doc: &Document,
    source_rank: usize,
    summary: &str,
    cfg: &IdeationConfig,
) -> Result<Vec<DraftNugget>> {
    let prompt = prompts::ideate(
        &req.title,
        &req.problem_statement,
        &req.background,
        summary,
        cfg.max_nuggets_per_doc,
    );
    let resp = gw
        .cached_complete(&prompt)
        .map_err(|e| e.context(format!("ideate {}", doc.doc_id)))?;
    let parsed = resp.fielded(&ideation_schema())?;
    let drafts: Vec<DraftNugget> = (1..=MAX_EMITTED_PAIRS)
        .filter_map(|i| {
            let q = parsed.get(&format!("question_{i}"))?;
            let a = parsed.get(&format!("answer_{i}"))?;
            Some((normalize_whitespace(q), normalize_whitespace(a)))
        })
        .take(cfg.max_nuggets_per_doc)
        .enumerate()
        .map(|(j, (question, answer))| DraftNugget {
            draft_id: draft_id(source_rank, j + 1),
            question,
            answer,
            source_doc: doc.doc_id.clone(),
            source_rank,
        })
        .collect();
    if drafts.is_empty() {
        gw.warn(format!("{}: no parseable nuggets for {}", req.request_id, doc.doc_id));
    }
    Ok(drafts)
}

/// Parses a paraphrase verdict into a confidence that the pair is a
/// paraphrase: the reported confidence for YES, its complement for NO.
fn paraphrase_confidence(raw: &str) -> Option<f64> {
    let parsed = crate::llm::parse_fielded_output(raw, &FieldSchema::optional(&["answer", "confidence"])).ok()?;
    let verdict = parse_yes_no(parsed.get("answer")?)?;
    let value: f64 = parsed.get("confidence")?.trim().parse().ok()?;
    if !value.is_finite() {
        return None;
    }
    let value = value.clamp(0.0, 1.0);
    Some(if verdict { value } else { 1.0 - value })
}

/// One paraphrase call per unordered draft pair, in `(i < j)` order. Edges
/// below `floor` are dropped.
pub fn detect_paraphrases(gw: &Gateway, drafts: &[DraftNugget], floor: f64) -> Result<Vec<ParaphraseEdge>> {
    let pairs: Vec<(usize, usize)> = (0..drafts.len())
        .flat_map(|i| (i + 1..drafts.len()).map(move |j| (i, j)))
        .collect();
    let judged: Vec<Option<ParaphraseEdge>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (&drafts[i], &drafts[j]);
            let resp = gw.cached_complete(&prompts::paraphrase(&x.question, &y.question))?;
            let Some(confidence) = paraphrase_confidence(&resp.raw_text) else {
                gw.warn(format!(
                    "unparseable paraphrase verdict for {} / {}",
                    x.draft_id, y.draft_id
                ));
                return Ok(None);
            };
            let (a, b) = if x.draft_id <= y.draft_id { (x, y) } else { (y, x) };
            Ok((confidence >= floor).then(|| ParaphraseEdge {
                a: a.draft_id.clone(),
                b: b.draft_id.clone(),
                confidence,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(judged.into_iter().flatten().collect())
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when both were already in one set.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Merges clusters along edges in descending confidence (ties by `(a, b)`)
/// until `target` clusters remain or the edges run out.
pub fn merge_paraphrases(drafts: &[DraftNugget], edges: &[ParaphraseEdge], target: usize) -> Vec<Nugget> {
    let target = target.max(1);
    let index: HashMap<&str, usize> = drafts
        .iter()
        .enumerate()
        .map(|(i, d)| (d.draft_id.as_str(), i))
        .collect();
    let mut ordered: Vec<&ParaphraseEdge> = edges.iter().collect();
    ordered.sort_by(|x, y| {
        y.confidence
            .total_cmp(&x.confidence)
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });

    let mut sets = DisjointSets::new(drafts.len());
    let mut clusters = drafts.len();
    for e in ordered {
        if clusters <= target {
            break;
        }
        let (Some(&a), Some(&b)) = (index.get(e.a.as_str()), index.get(e.b.as_str())) else {
            continue;
        };
        if sets.union(a, b) {
            clusters -= 1;
        }
    }

    let mut members: BTreeMap<usize, Vec<&DraftNugget>> = BTreeMap::new();
    for (i, d) in drafts.iter().enumerate() {
        members.entry(sets.find(i)).or_default().push(d);
    }
    let mut nuggets: Vec<Nugget> = members
        .into_values()
        .map(|group| {
            let rep = group
                .iter()
                .min_by(|x, y| (x.source_rank, &x.draft_id).cmp(&(y.source_rank, &y.draft_id)))
                .expect("clusters are non-empty");
            let mut provenance = BTreeMap::new();
            for d in &group {
                provenance
                    .entry(d.source_doc.clone())
                    .and_modify(|r: &mut usize| *r = (*r).min(d.source_rank))
                    .or_insert(d.source_rank);
            }
            Nugget {
                nugget_id: format!("n{}", rep.draft_id),
                question: rep.question.clone(),
                answer: rep.answer.clone(),
                member_drafts: group.iter().map(|d| d.draft_id.clone()).collect(),
                provenance,
                paraphrase_count: group.len(),
            }
        })
        .collect();
    nuggets.sort_by(pool_order);
    nuggets
}

/// Everything ideation produced for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct NuggetPool {
    pub drafts: Vec<DraftNugget>,
    pub edges: Vec<ParaphraseEdge>,
    pub nuggets: Vec<Nugget>,
}

/// Summarize, draft, detect paraphrases and merge over the ordered pool
/// documents (rank 1 first).
pub fn build_nugget_pool(gw: &Gateway, req: &Request, docs: &[Document], cfg: &IdeationConfig) -> Result<NuggetPool> {
    let per_doc: Vec<Vec<DraftNugget>> = docs
        .par_iter()
        .enumerate()
        .map(|(i, doc)| {
            let summary = summarize_document(gw, req, doc, cfg)?;
            generate_draft_nuggets(gw, req, doc, i + 1, &summary, cfg)
        })
        .collect::<Result<_>>()?;
    let drafts: Vec<DraftNugget> = per_doc.into_iter().flatten().collect();
    if drafts.is_empty() {
        return Err(Error::NoNuggets(req.request_id.clone()));
    }
    let edges = detect_paraphrases(gw, &drafts, cfg.paraphrase_floor)?;
    let nuggets = merge_paraphrases(&drafts, &edges, cfg.pool_target);
    Ok(NuggetPool { drafts, edges, nuggets })
}
