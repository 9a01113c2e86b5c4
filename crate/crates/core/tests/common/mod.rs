//! Fixtures and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;
use std::path::{Path, PathBuf};

use nuggetrag_core::assemble::{Report, ReportSentence};
use nuggetrag_core::evaluation::{CoverageJudgment, MetricCounts};
use nuggetrag_core::ideation::{DraftNugget, ParaphraseEdge};
use nuggetrag_core::ingest::{Chunk, Document, GoldNugget};
use nuggetrag_core::pipeline::{files, read_reports, Outcome, Pipeline, PipelineConfig, RequestArtifacts, Tagged};
use nuggetrag_core::scan::CandidateSentence;
use nuggetrag_core::text::fingerprint_sentence;

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

/// The toy configuration with its output redirected.
pub fn toy_config(output_dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&toy_dir().join("config.toml")).expect("toy config");
    cfg.output_dir = output_dir.to_path_buf();
    cfg
}

/// Runs the toy fixture with the synthetic backend into `output_dir`.
pub fn run_toy(
    output_dir: &Path,
    configure: impl FnOnce(&mut PipelineConfig),
) -> (Pipeline, Vec<RequestArtifacts>, Outcome) {
    let mut cfg = toy_config(output_dir);
    configure(&mut cfg);
    let p = Pipeline::open(cfg).expect("open pipeline");
    let (artifacts, outcome) = p.run().expect("run");
    (p, artifacts, outcome)
}

/// Stage files every run writes.
pub const RUN_FILES: [&str; 11] = [
    files::RETRIEVAL,
    files::DRAFTS,
    files::NUGGET_POOL,
    files::BANK,
    files::SCAN_DOCS,
    files::CANDIDATES,
    files::REPORTS,
    files::METRICS,
    files::METRICS_TABLE,
    files::LEDGER,
    files::WARNINGS,
];

pub fn read_bytes(dir: &Path, name: &str) -> Option<Vec<u8>> {
    std::fs::read(dir.join(name)).ok()
}

/// Names of the files whose bytes differ between two output directories.
pub fn differing_files(a: &Path, b: &Path, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| read_bytes(a, n) != read_bytes(b, n))
        .map(|n| n.to_string())
        .collect()
}

/// Every report sentence cites one corpus document, names a real chunk of
/// it, and its stored segment validates against that chunk.
pub fn check_citation_integrity(output_dir: &Path, corpus: &[Document]) -> Result<usize, String> {
    let docs = doc_ids(corpus);
    let reports = read_reports(&output_dir.join(files::REPORTS)).map_err(|e| e.to_string())?;
    if reports.is_empty() {
        return Err("no reports".into());
    }
    let mut checked = 0;
    for r in &reports {
        for (i, s) in r.sentences.iter().enumerate() {
            let at = format!("{} sentence {i}", r.request_id);
            if s.doc_id.is_empty() || s.doc_id.contains([',', ' ']) {
                return Err(format!("{at}: citation `{}` is not a single document", s.doc_id));
            }
            let doc = docs
                .get(s.doc_id.as_str())
                .ok_or(format!("{at}: unknown document {}", s.doc_id))?;
            let chunks = nuggetrag_core::ingest::chunk_document(doc);
            let chunk = chunks
                .get(s.chunk_index)
                .ok_or(format!("{at}: {} has no chunk {}", s.doc_id, s.chunk_index))?;
            if !nuggetrag_core::scan::validate_extraction_segment(&s.segment, chunk) {
                return Err(format!("{at}: segment does not validate against its chunk"));
            }
            if s.text.trim().is_empty() {
                return Err(format!("{at}: empty sentence"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Per report: at most `k` sentences per nugget and so at most
/// `k * bank_size` in all, only bank nuggets, and no repeated fingerprint.
pub fn check_structure(output_dir: &Path, bank_size: usize, k: usize) -> Result<(), String> {
    let reports = read_reports(&output_dir.join(files::REPORTS)).map_err(|e| e.to_string())?;
    let bank: Vec<nuggetrag_core::pipeline::BankRecord> =
        nuggetrag_core::jsonl::read(&output_dir.join(files::BANK)).map_err(|e| e.to_string())?;
    for r in &reports {
        let bank_ids: BTreeSet<&str> = bank
            .iter()
            .filter(|b| b.request_id == r.request_id)
            .map(|b| b.entry.nugget.nugget_id.as_str())
            .collect();
        if bank_ids.len() > bank_size {
            return Err(format!(
                "{}: bank of {} exceeds {bank_size}",
                r.request_id,
                bank_ids.len()
            ));
        }
        if r.sentences.len() > k * bank_size {
            return Err(format!(
                "{}: {} sentences exceed {}",
                r.request_id,
                r.sentences.len(),
                k * bank_size
            ));
        }
        let mut per_nugget: HashMap<&str, usize> = HashMap::new();
        let mut prints = BTreeSet::new();
        for s in &r.sentences {
            if !bank_ids.contains(s.nugget_id.as_str()) {
                return Err(format!(
                    "{}: sentence for non-bank nugget {}",
                    r.request_id, s.nugget_id
                ));
            }
            let n = per_nugget.entry(&s.nugget_id).or_default();
            *n += 1;
            if *n > k {
                return Err(format!(
                    "{}: nugget {} has more than {k} sentences",
                    r.request_id, s.nugget_id
                ));
            }
            if !prints.insert(fingerprint_sentence(&s.text)) {
                return Err(format!("{}: duplicate fingerprint for `{}`", r.request_id, s.text));
            }
        }
    }
    Ok(())
}

/// Filtered sentences all come from the Base candidate set, and no Filtered
/// report is longer than its Base report. Returns (base, filtered) sentence
/// totals.
pub fn check_monotonicity(base_dir: &Path, filtered_dir: &Path) -> Result<(usize, usize), String> {
    let base = read_reports(&base_dir.join(files::REPORTS)).map_err(|e| e.to_string())?;
    let filtered = read_reports(&filtered_dir.join(files::REPORTS)).map_err(|e| e.to_string())?;
    let candidates: Vec<Tagged<CandidateSentence>> =
        nuggetrag_core::jsonl::read(&base_dir.join(files::CANDIDATES)).map_err(|e| e.to_string())?;
    let pool: BTreeSet<(String, String, String, usize, String)> = candidates
        .into_iter()
        .map(|c| {
            (
                c.request_id,
                c.item.nugget_id,
                c.item.doc_id,
                c.item.chunk_index,
                c.item.text,
            )
        })
        .collect();
    if base.len() != filtered.len() {
        return Err(format!("{} base reports vs {} filtered", base.len(), filtered.len()));
    }
    let (mut nb, mut nf) = (0, 0);
    for (b, f) in base.iter().zip(&filtered) {
        if b.request_id != f.request_id || b.verified || !f.verified {
            return Err(format!("mismatched report pair {} / {}", b.request_id, f.request_id));
        }
        for s in &f.sentences {
            let key = (
                f.request_id.clone(),
                s.nugget_id.clone(),
                s.doc_id.clone(),
                s.chunk_index,
                s.text.clone(),
            );
            if !pool.contains(&key) {
                return Err(format!(
                    "{}: filtered sentence `{}` is not a base candidate",
                    f.request_id, s.text
                ));
            }
        }
        if f.sentences.len() > b.sentences.len() {
            return Err(format!(
                "{}: filtered has {} sentences, base {}",
                f.request_id,
                f.sentences.len(),
                b.sentences.len()
            ));
        }
        nb += b.sentences.len();
        nf += f.sentences.len();
    }
    Ok((nb, nf))
}

// ---------------------------------------------------------------- metrics

pub struct MetricFixture {
    pub name: &'static str,
    pub report: Report,
    pub judgments: Vec<CoverageJudgment>,
    pub supported: usize,
    pub gold: Vec<GoldNugget>,
    /// recall, density, novelty, relevant, support
    pub expected: [f64; 5],
    pub counts: MetricCounts,
}

fn placeholder_report(n: usize) -> Report {
    Report {
        request_id: "r".into(),
        verified: false,
        sentences: (0..n)
            .map(|i| ReportSentence {
                text: format!("Sentence {i}."),
                doc_id: format!("d{i}"),
                nugget_id: format!("n{i}"),
                confidence: 0.9,
                segment: format!("Sentence {i}."),
                chunk_index: 0,
            })
            .collect(),
    }
}

fn gold_bank(n: usize) -> Vec<GoldNugget> {
    (0..n)
        .map(|i| GoldNugget {
            nugget_id: format!("g{}", (b'A' + i as u8) as char),
            question: format!("q{i}?"),
            answers: vec![format!("answer {i}")],
        })
        .collect()
}

fn judgments(cover: &[&[&str]]) -> Vec<CoverageJudgment> {
    cover
        .iter()
        .enumerate()
        .map(|(i, ids)| CoverageJudgment {
            sentence_index: i,
            covered_gold_ids: ids.iter().map(|s| format!("g{s}")).collect::<BTreeSet<_>>(),
        })
        .collect()
}

fn counts(
    gold: usize,
    covered: usize,
    sentences: usize,
    novel: usize,
    relevant: usize,
    supported: usize,
) -> MetricCounts {
    MetricCounts {
        gold,
        covered,
        sentences,
        novel_sentences: novel,
        relevant_sentences: relevant,
        citations: sentences,
        supported_citations: supported,
    }
}

/// (report, gold) cases with values worked out by hand from the metric
/// definitions.
pub fn metric_fixtures() -> Vec<MetricFixture> {
    vec![
        MetricFixture {
            name: "worked example: A A B - C - - - - -",
            report: placeholder_report(10),
            judgments: judgments(&[&["A"], &["A"], &["B"], &[], &["C"], &[], &[], &[], &[], &[]]),
            supported: 10,
            gold: gold_bank(8),
            expected: [0.375, 0.3, 0.3, 0.4, 1.0],
            counts: counts(8, 3, 10, 3, 4, 10),
        },
        MetricFixture {
            name: "zero coverage, no support",
            report: placeholder_report(4),
            judgments: judgments(&[&[], &[], &[], &[]]),
            supported: 0,
            gold: gold_bank(3),
            expected: [0.0, 0.0, 0.0, 0.0, 0.0],
            counts: counts(3, 0, 4, 0, 0, 0),
        },
        MetricFixture {
            name: "zero coverage, half supported",
            report: placeholder_report(4),
            judgments: Vec::new(),
            supported: 2,
            gold: gold_bank(3),
            expected: [0.0, 0.0, 0.0, 0.0, 0.5],
            counts: counts(3, 0, 4, 0, 0, 2),
        },
        MetricFixture {
            name: "perfect: distinct coverage, all supported",
            report: placeholder_report(3),
            judgments: judgments(&[&["A"], &["B"], &["C"]]),
            supported: 3,
            gold: gold_bank(3),
            expected: [1.0, 1.0, 1.0, 1.0, 1.0],
            counts: counts(3, 3, 3, 3, 3, 3),
        },
        MetricFixture {
            name: "multi-id sentence then repeat",
            report: placeholder_report(2),
            judgments: judgments(&[&["A", "B"], &["B"]]),
            supported: 1,
            gold: gold_bank(4),
            expected: [0.5, 1.0, 0.5, 1.0, 0.5],
            counts: counts(4, 2, 2, 1, 2, 1),
        },
        MetricFixture {
            name: "one nugget repeated five times",
            report: placeholder_report(5),
            judgments: judgments(&[&["A"], &["A"], &["A"], &["A"], &["A"]]),
            supported: 5,
            gold: gold_bank(2),
            expected: [0.5, 0.2, 0.2, 1.0, 1.0],
            counts: counts(2, 1, 5, 1, 5, 5),
        },
        MetricFixture {
            name: "late novelty: - B - A B",
            report: placeholder_report(5),
            judgments: judgments(&[&[], &["B"], &[], &["A"], &["B"]]),
            supported: 4,
            gold: gold_bank(5),
            expected: [0.4, 0.4, 0.4, 0.6, 0.8],
            counts: counts(5, 2, 5, 2, 3, 4),
        },
    ]
}

// ---------------------------------------------------------------- BM25

pub const BM25_CORPUS: [(&str, &str); 3] = [
    ("d1", "The quick brown fox jumps over the lazy dog."),
    ("d2", "The fox and the hound, the fox again."),
    ("d3", "A quick brown dog outpaces a quick red fox; quick!"),
];

/// Scores frozen from an independent computation of the same formula.
pub const BM25_FROZEN: [(&str, &[(&str, f64)]); 4] = [
    (
        "quick fox dog",
        &[
            ("d3", 1.2986952880528726),
            ("d1", 1.073538651115994),
            ("d2", 0.18952842824125787),
        ],
    ),
    ("the hound", &[("d2", 1.784126615971158), ("d1", 0.6462549902128865)]),
    (
        "lazy lazy dog",
        &[("d1", 1.4508328822574619), ("d3", 0.4495686888437472)],
    ),
    ("zebra", &[]),
];

pub fn bm25_docs() -> Vec<Document> {
    BM25_CORPUS
        .iter()
        .map(|(id, text)| Document {
            doc_id: id.to_string(),
            title: None,
            text: text.to_string(),
        })
        .collect()
}

fn simple_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Brute-force BM25 straight from the definition, rescanning every document
/// for every term.
pub fn brute_force_bm25(docs: &[Document], query: &str) -> Vec<(String, f64)> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| simple_tokens(&d.text)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = simple_tokens(query).into_iter().collect();
    let mut out = Vec::new();
    for (d, t) in docs.iter().zip(&toks) {
        let mut score = 0.0;
        let mut matched = false;
        for term in &terms {
            let tf = t.iter().filter(|x| *x == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = toks.iter().filter(|x| x.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * t.len() as f64 / avg));
        }
        if matched {
            out.push((d.doc_id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

// ---------------------------------------------------------------- chunker

/// Checks the chunk contract for one document; returns a description of the
/// first violation.
pub fn check_chunks(doc_text: &str, chunks: &[Chunk]) -> Result<(), String> {
    let normalized: Vec<char> = doc_text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .collect();
    let mut pos = 0usize;
    for (i, c) in chunks.iter().enumerate() {
        if c.chunk_index != i {
            return Err(format!("chunk {i} has index {}", c.chunk_index));
        }
        let len = c.text.chars().count();
        if len == 0 {
            return Err(format!("chunk {i} is empty"));
        }
        let gap = c
            .char_offset
            .checked_sub(pos)
            .ok_or(format!("chunk {i} overlaps its predecessor"))?;
        let expected_gap = if i == 0 { 0..=0 } else { 0..=1 };
        if !expected_gap.contains(&gap) || (gap == 1 && normalized[pos] != ' ') {
            return Err(format!("chunk {i} leaves gap {gap} at {pos}"));
        }
        let slice: String = normalized[c.char_offset..c.char_offset + len].iter().collect();
        if slice != c.text {
            return Err(format!("chunk {i} text differs from the document at {}", c.char_offset));
        }
        if len > 1000 {
            let sentences = nuggetrag_core::text::split_sentences(&c.text).len();
            if sentences > 1 {
                return Err(format!("chunk {i} has {len} chars and {sentences} sentences"));
            }
            if len > 4000 {
                return Err(format!("chunk {i} exceeds the hard-split bound"));
            }
        }
        pos = c.char_offset + len;
    }
    if pos != normalized.len() {
        return Err(format!("chunks cover {pos} of {} chars", normalized.len()));
    }
    Ok(())
}

// ---------------------------------------------------------------- parsing

/// Fuzz input alphabet: field names, separators, nulls and noise.
pub const FUZZ_PIECES: [&str; 22] = [
    "summary",
    "confidence",
    "extracted_text_segment",
    "reasoning",
    ":",
    ": ",
    "\n",
    "\r\n",
    "None",
    "null",
    "**",
    "- ",
    "#",
    " ",
    "0.7",
    "SUMMARY",
    "é",
    "\u{0}",
    "::",
    "`",
    "summary:",
    "\t",
];

pub fn doc_ids(docs: &[Document]) -> HashMap<&str, &Document> {
    docs.iter().map(|d| (d.doc_id.as_str(), d)).collect()
}

/// `n` model-output-like strings from a fixed seed: runs of schema words,
/// separators, null markers and arbitrary text.
pub fn fuzz_inputs(n: usize) -> Vec<String> {
    use proptest::strategy::ValueTree;

    let piece = prop_oneof![
        6 => proptest::sample::select(FUZZ_PIECES.to_vec()).prop_map(str::to_string),
        2 => "[a-zA-Z0-9 .,]{0,24}",
        1 => any::<String>(),
    ];
    let input = proptest::collection::vec(piece, 0..48).prop_map(|p| p.concat());
    let mut runner = seeded_runner(7);
    (0..n)
        .map(|_| input.new_tree(&mut runner).expect("strategy").current())
        .collect()
}

pub const FUZZ_CASES: usize = 10_000;

pub const METRIC_TOL: f64 = 1e-9;

/// Runs one metric fixture; returns the first mismatch.
pub fn check_metric_fixture(f: &MetricFixture) -> Result<(), String> {
    let m = nuggetrag_core::evaluation::compute_metrics(&f.report, &f.judgments, f.supported, &f.gold)
        .map_err(|e| format!("{}: {e}", f.name))?;
    let got = [
        m.nugget_recall,
        m.nugget_density,
        m.sentence_novelty,
        m.relevant_sentences,
        m.citation_support,
    ];
    let names = ["recall", "density", "novelty", "relevant", "support"];
    for ((name, g), e) in names.iter().zip(got).zip(f.expected) {
        if (g - e).abs() > METRIC_TOL {
            return Err(format!("{}: {name} {g} != {e}", f.name));
        }
    }
    if m.counts != f.counts {
        return Err(format!("{}: counts {:?} != {:?}", f.name, m.counts, f.counts));
    }
    Ok(())
}

// ---------------------------------------------------------------- component checks

pub const ORACLE_TOL: f64 = 1e-9;

/// BM25 against the brute-force reference and the frozen scores.
pub fn check_bm25() -> Result<(), String> {
    let docs = bm25_docs();
    let index = nuggetrag_core::retrieval::build_index(&docs);
    for (query, frozen) in BM25_FROZEN {
        let got = nuggetrag_core::retrieval::search(&index, query, 100);
        let reference = brute_force_bm25(&docs, query);
        if got.len() != reference.len() || got.len() != frozen.len() {
            return Err(format!("`{query}`: {} hits, reference {}", got.len(), reference.len()));
        }
        for ((g, r), f) in got.iter().zip(&reference).zip(frozen.iter()) {
            if g.0 != r.0 || g.0 != f.0 {
                return Err(format!("`{query}`: order {} vs {} / {}", g.0, r.0, f.0));
            }
            if (g.1 - r.1).abs() > ORACLE_TOL || (g.1 - f.1).abs() > ORACLE_TOL {
                return Err(format!("`{query}` {}: {} vs {} / {}", g.0, g.1, r.1, f.1));
            }
        }
    }
    Ok(())
}

type RrfCase = (Vec<Vec<&'static str>>, Vec<(&'static str, f64)>);

/// Hand-worked fusions with k = 60: (lists, expected order with scores).
pub fn rrf_cases() -> Vec<RrfCase> {
    vec![
        (
            vec![vec!["a", "b", "c"], vec!["c", "a", "d"]],
            vec![
                ("a", 1.0 / 61.0 + 1.0 / 62.0),
                ("c", 1.0 / 63.0 + 1.0 / 61.0),
                ("b", 1.0 / 62.0),
                ("d", 1.0 / 63.0),
            ],
        ),
        (
            vec![vec!["x"], vec!["y", "z", "x"]],
            vec![("x", 0.032266458495966696), ("y", 1.0 / 61.0), ("z", 1.0 / 62.0)],
        ),
        // Equal totals fall back to id order.
        (
            vec![vec!["q", "p"], vec!["p", "q"]],
            vec![("p", 1.0 / 61.0 + 1.0 / 62.0), ("q", 1.0 / 61.0 + 1.0 / 62.0)],
        ),
        (vec![vec!["only"]], vec![("only", 1.0 / 61.0)]),
    ]
}

pub fn check_rrf() -> Result<(), String> {
    for (lists, expected) in rrf_cases() {
        let lists: Vec<Vec<String>> = lists
            .iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect();
        let got = nuggetrag_core::ranking::rrf_fuse(&lists, 60.0).map_err(|e| e.to_string())?;
        if got.len() != expected.len() {
            return Err(format!("{lists:?}: {} fused ids", got.len()));
        }
        for ((id, score), (eid, escore)) in got.iter().zip(&expected) {
            if id != eid || (score - escore).abs() > ORACLE_TOL {
                return Err(format!("{lists:?}: got {id} {score}, want {eid} {escore}"));
            }
        }
    }
    Ok(())
}

pub fn merge_edge(a: &str, b: &str, confidence: f64) -> ParaphraseEdge {
    ParaphraseEdge {
        a: a.into(),
        b: b.into(),
        confidence,
    }
}

/// Five drafts; by source rank b comes first, then c, a, e, d.
pub fn merge_drafts() -> Vec<DraftNugget> {
    [("a", 3), ("b", 1), ("c", 2), ("d", 5), ("e", 4)]
        .into_iter()
        .map(|(id, rank)| DraftNugget {
            draft_id: id.into(),
            question: format!("question {id}?"),
            answer: format!("answer {id}."),
            source_doc: format!("doc{rank}"),
            source_rank: rank,
        })
        .collect()
}

pub struct MergeCase {
    pub name: &'static str,
    pub edges: Vec<ParaphraseEdge>,
    pub target: usize,
    /// nugget id -> member drafts
    pub expected: Vec<(&'static str, &'static [&'static str])>,
}

/// Greedy merges traced by hand on the five drafts.
pub fn merge_cases() -> Vec<MergeCase> {
    let chain = || {
        vec![
            merge_edge("a", "b", 0.9),
            merge_edge("b", "c", 0.8),
            merge_edge("d", "e", 0.7),
            merge_edge("c", "d", 0.6),
        ]
    };
    vec![
        MergeCase {
            // (a,b) -> 4 clusters, (b,c) -> 3, (d,e) -> 2 = target.
            name: "chain, target 2",
            edges: chain(),
            target: 2,
            expected: vec![("nb", &["a", "b", "c"]), ("ne", &["d", "e"])],
        },
        MergeCase {
            name: "chain, target 1",
            edges: chain(),
            target: 1,
            expected: vec![("nb", &["a", "b", "c", "d", "e"])],
        },
        MergeCase {
            // Equal confidences: (a,b) sorts before (a,c) and (c,d).
            name: "ties, target 4",
            edges: vec![
                merge_edge("c", "d", 0.9),
                merge_edge("a", "c", 0.9),
                merge_edge("a", "b", 0.9),
            ],
            target: 4,
            expected: vec![("nb", &["a", "b"]), ("nc", &["c"]), ("nd", &["d"]), ("ne", &["e"])],
        },
        MergeCase {
            // The closing triangle edge merges nothing; edges run out at 2.
            name: "triangle, target 1",
            edges: vec![
                merge_edge("a", "b", 0.9),
                merge_edge("a", "c", 0.85),
                merge_edge("b", "c", 0.8),
                merge_edge("d", "e", 0.4),
            ],
            target: 1,
            expected: vec![("nb", &["a", "b", "c"]), ("ne", &["d", "e"])],
        },
        MergeCase {
            name: "no edges",
            edges: Vec::new(),
            target: 3,
            expected: vec![
                ("na", &["a"]),
                ("nb", &["b"]),
                ("nc", &["c"]),
                ("nd", &["d"]),
                ("ne", &["e"]),
            ],
        },
    ]
}

pub fn check_merge_case(c: &MergeCase) -> Result<(), String> {
    let got: BTreeMap<String, BTreeSet<String>> =
        nuggetrag_core::ideation::merge_paraphrases(&merge_drafts(), &c.edges, c.target)
            .into_iter()
            .map(|n| (n.nugget_id, n.member_drafts))
            .collect();
    let want: BTreeMap<String, BTreeSet<String>> = c
        .expected
        .iter()
        .map(|(id, m)| (id.to_string(), m.iter().map(|s| s.to_string()).collect()))
        .collect();
    if got != want {
        return Err(format!("{}: got {got:?}", c.name));
    }
    Ok(())
}

fn chunk_word() -> impl Strategy<Value = String> {
    prop_oneof![
        20 => "[a-z]{1,12}",
        4 => "[A-Z][a-z]{0,10}",
        4 => Just("Dr.".to_string()),
        4 => Just("U.S.".to_string()),
        4 => Just("e.g.".to_string()),
        4 => "[a-z]{1,8}[.!?]",
        4 => "[0-9]{1,4}",
        4 => "[a-zé]{1,5}",
        // Long unbroken runs force oversize sentences and hard splits.
        1 => ("[a-z]{3}", 400usize..1700).prop_map(|(w, n)| w.repeat(n)),
    ]
}

/// Document text with abbreviations, messy whitespace and occasional
/// sentences far beyond the chunk limit.
pub fn document_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        (
            chunk_word(),
            prop_oneof![Just(" "), Just("  "), Just("\n"), Just("\t ")],
        ),
        1..400,
    )
    .prop_map(|parts| parts.into_iter().map(|(w, s)| w + s).collect())
}

fn seeded_runner(seed: u8) -> proptest::test_runner::TestRunner {
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

/// `n` randomized documents from a fixed seed.
pub fn random_documents(n: usize) -> Vec<String> {
    use proptest::strategy::ValueTree;
    let strategy = document_text();
    let mut runner = seeded_runner(11);
    (0..n)
        .map(|_| strategy.new_tree(&mut runner).expect("strategy").current())
        .collect()
}

pub fn check_chunker(docs: &[String]) -> Result<(), String> {
    for (i, text) in docs.iter().enumerate() {
        let doc = Document {
            doc_id: format!("rand-{i}"),
            title: None,
            text: text.clone(),
        };
        check_chunks(text, &nuggetrag_core::ingest::chunk_document(&doc)).map_err(|e| format!("doc {i}: {e}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- parser checks

pub struct ParserCase {
    pub name: &'static str,
    pub input: &'static str,
    pub required: &'static [&'static str],
    /// Ok: exact parsed fields; Err: exact missing fields.
    pub expected: Result<&'static [(&'static str, &'static str)], &'static [&'static str]>,
}

pub fn parser_cases() -> Vec<ParserCase> {
    vec![
        ParserCase {
            name: "first occurrence wins",
            input: "summary: first\nsummary: second",
            required: &[],
            expected: Ok(&[("summary", "first")]),
        },
        ParserCase {
            name: "a None value still claims the field",
            input: "summary: None\nsummary: second",
            required: &[],
            expected: Ok(&[]),
        },
        ParserCase {
            name: "null is absent",
            input: "extracted_text_segment: null\nconfidence: 0",
            required: &[],
            expected: Ok(&[("confidence", "0")]),
        },
        ParserCase {
            name: "markup and case",
            input: "Here is my answer.\n## Extracted_Text_Segment: Bayer paid $10.9 billion.\n**Summary:** Bayer settled.\n**Confidence**: 0.8",
            required: &[],
            expected: Ok(&[
                ("confidence", "0.8"),
                ("extracted_text_segment", "Bayer paid $10.9 billion."),
                ("summary", "Bayer settled."),
            ]),
        },
        ParserCase {
            name: "values run to the next header",
            input: "summary: line one\nline two\nnote: not a field\nreasoning: r",
            required: &[],
            expected: Ok(&[("reasoning", "r"), ("summary", "line one\nline two\nnote: not a field")]),
        },
        ParserCase {
            name: "empty input misses required fields",
            input: "",
            required: &["summary"],
            expected: Err(&["summary"]),
        },
        ParserCase {
            name: "None for a required field",
            input: "reasoning: none given\nsummary: None\n",
            required: &["summary"],
            expected: Err(&["summary"]),
        },
    ]
}

pub fn check_parser_case(c: &ParserCase) -> Result<(), String> {
    use nuggetrag_core::llm::{parse_fielded_output, FieldSchema};
    let schema = FieldSchema::new(&nuggetrag_core::scan::SCAN_FIELDS, c.required).map_err(|e| e.to_string())?;
    match (parse_fielded_output(c.input, &schema), c.expected) {
        (Ok(r), Ok(fields)) => {
            let want: BTreeMap<String, String> = fields.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
            if r.fields != want {
                return Err(format!("{}: got {:?}", c.name, r.fields));
            }
        }
        (Err(nuggetrag_core::Error::MissingFields(m)), Err(want)) if m == want => {}
        (got, _) => return Err(format!("{}: unexpected {got:?}", c.name)),
    }
    Ok(())
}

/// Invariants for one arbitrary model output: no panic, only
/// `MissingFields` errors, schema fields only, no null values, and a later
/// repeat of a header never changes an earlier value.
pub fn check_parser_input(input: &str) -> Result<(), String> {
    use nuggetrag_core::llm::{parse_fielded_output, FieldSchema};
    use nuggetrag_core::scan::SCAN_FIELDS;
    let optional = FieldSchema::optional(&SCAN_FIELDS);
    let required = FieldSchema::new(&SCAN_FIELDS, &["summary", "extracted_text_segment"]).unwrap();
    let outcome = std::panic::catch_unwind(|| {
        let loose = parse_fielded_output(input, &optional);
        let strict = parse_fielded_output(input, &required);
        let extended = parse_fielded_output(&format!("{input}\nsummary: later\nconfidence: 0.5"), &optional);
        (loose, strict, extended)
    });
    let (loose, strict, extended) = outcome.map_err(|_| "panicked".to_string())?;
    let loose = loose.map_err(|e| format!("optional schema failed: {e}"))?;
    for (name, value) in &loose.fields {
        if !SCAN_FIELDS.contains(&name.as_str()) {
            return Err(format!("stray field {name}"));
        }
        let v = value.trim();
        if v.is_empty() || v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("null") {
            return Err(format!("null value kept for {name}"));
        }
    }
    match strict {
        Ok(r) if r.fields == loose.fields => {}
        Ok(_) => return Err("required schema parsed differently".into()),
        Err(nuggetrag_core::Error::MissingFields(m)) => {
            if m.is_empty() || m.iter().any(|f| loose.fields.contains_key(f)) {
                return Err(format!("wrong missing list {m:?}"));
            }
        }
        Err(e) => return Err(format!("unexpected error {e}")),
    }
    let extended = extended.map_err(|e| e.to_string())?;
    for (name, value) in &loose.fields {
        if extended.get(name) != Some(value.as_str()) {
            return Err(format!("{name} changed after a later header"));
        }
    }
    Ok(())
}
