//! Report scoring against gold nugget banks: nugget recall, nugget density,
//! sentence novelty, relevant sentences and citation support.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assemble::Report;
use crate::error::{Error, Result};
use crate::ingest::{Document, GoldNugget};
use crate::llm::{parse_yes_no, prompts, Gateway};
use crate::text::{fingerprint_tokens, is_token_subsequence, normalize_for_match};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageJudgment {
    pub sentence_index: usize,
    pub covered_gold_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub gold: usize,
    pub covered: usize,
    pub sentences: usize,
    pub novel_sentences: usize,
    pub relevant_sentences: usize,
    pub citations: usize,
    pub supported_citations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub request_id: String,
    pub nugget_recall: f64,
    pub nugget_density: f64,
    pub sentence_novelty: f64,
    pub relevant_sentences: f64,
    pub citation_support: f64,
    pub counts: MetricCounts,
}

/// How coverage and citation support are decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Oracle,
    Llm,
}

impl FromStr for JudgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(JudgeMode::Oracle),
            "llm" => Ok(JudgeMode::Llm),
            _ => Err(Error::Invalid(format!("judge `{s}` is not oracle or llm"))),
        }
    }
}

impl fmt::Display for JudgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JudgeMode::Oracle => "oracle",
            JudgeMode::Llm => "llm",
        })
    }
}

/// `claim`'s fingerprint is a contiguous run of `text`'s fingerprint.
pub fn fingerprint_covers(text: &str, claim: &str) -> bool {
    is_token_subsequence(&fingerprint_tokens(claim), &fingerprint_tokens(text))
}

/// A sentence covers a gold nugget when any of its answers appears in the
/// sentence after stopping and stemming.
pub fn oracle_coverage_judge(report: &Report, gold: &[GoldNugget]) -> Vec<CoverageJudgment> {
    report
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| CoverageJudgment {
            sentence_index: i,
            covered_gold_ids: gold
                .iter()
                .filter(|g| g.answers.iter().any(|a| fingerprint_covers(&s.text, a)))
                .map(|g| g.nugget_id.clone())
                .collect(),
        })
        .collect()
}

/// One YES/NO judge call per (sentence, gold nugget) pair.
pub fn llm_coverage_judge(gw: &Gateway, report: &Report, gold: &[GoldNugget]) -> Result<Vec<CoverageJudgment>> {
    let pairs: Vec<(usize, &GoldNugget)> = (0..report.sentences.len())
        .flat_map(|i| gold.iter().map(move |g| (i, g)))
        .collect();
    let verdicts: Vec<bool> = pairs
        .par_iter()
        .map(|&(i, g)| {
            let prompt = prompts::judge_coverage(&g.question, &g.answers, &report.sentences[i].text);
            let resp = gw.cached_complete(&prompt).map_err(|e| {
                e.context(format!(
                    "judge sentence {i} of {} against {}",
                    report.request_id, g.nugget_id
                ))
            })?;
            Ok(parse_yes_no(&resp.raw_text).unwrap_or(false))
        })
        .collect::<Result<_>>()?;
    let mut judgments: Vec<CoverageJudgment> = (0..report.sentences.len())
        .map(|i| CoverageJudgment {
            sentence_index: i,
            covered_gold_ids: BTreeSet::new(),
        })
        .collect();
    for (&(i, g), yes) in pairs.iter().zip(verdicts) {
        if yes {
            judgments[i].covered_gold_ids.insert(g.nugget_id.clone());
        }
    }
    Ok(judgments)
}

/// Number of report sentences whose citation supports them. In oracle mode
/// the stored segment must occur in the cited document and the sentence must
/// be a fingerprint run of the segment; in LLM mode a judge reads the cited
/// document. Unknown documents count as unsupported.
pub fn judge_citation_support(
    report: &Report,
    corpus: &[Document],
    mode: JudgeMode,
    gw: Option<&Gateway>,
) -> Result<usize> {
    let docs: HashMap<&str, &Document> = corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let gw = match (mode, gw) {
        (JudgeMode::Llm, None) => return Err(Error::Invalid("llm citation judge needs a gateway".into())),
        (_, gw) => gw,
    };
    let supported: Vec<bool> = report
        .sentences
        .par_iter()
        .map(|s| {
            let Some(doc) = docs.get(s.doc_id.as_str()) else {
                if let Some(gw) = gw {
                    gw.warn(format!(
                        "{}: citation to unknown document {}",
                        report.request_id, s.doc_id
                    ));
                } else {
                    log::warn!("{}: citation to unknown document {}", report.request_id, s.doc_id);
                }
                return Ok(false);
            };
            match (mode, gw) {
                (JudgeMode::Llm, Some(gw)) => {
                    let resp = gw.cached_complete(&prompts::judge_support(&s.text, &doc.text))?;
                    Ok(parse_yes_no(&resp.raw_text).unwrap_or(false))
                }
                _ => {
                    let segment = normalize_for_match(&s.segment);
                    Ok(!segment.is_empty()
                        && normalize_for_match(&doc.text).contains(&segment)
                        && !fingerprint_tokens(&s.text).is_empty()
                        && fingerprint_covers(&s.segment, &s.text))
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(supported.into_iter().filter(|s| *s).count())
}

/// The five ratios from per-sentence coverage and the supported-citation
/// count. Coverage is a set union over gold ids; novelty is judged in report
/// order.
pub fn compute_metrics(
    report: &Report,
    judgments: &[CoverageJudgment],
    support_count: usize,
    gold: &[GoldNugget],
) -> Result<MetricsReport> {
    if gold.is_empty() {
        return Err(Error::NoGold);
    }
    if report.sentences.is_empty() {
        return Err(Error::EmptyReport(report.request_id.clone()));
    }
    let n = report.sentences.len();
    if support_count > n {
        return Err(Error::Invalid(format!(
            "{support_count} supported citations for {n} sentences"
        )));
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.nugget_id.as_str()).collect();
    let mut by_index: Vec<Option<&CoverageJudgment>> = vec![None; n];
    for j in judgments {
        if j.sentence_index >= n {
            return Err(Error::Invalid(format!(
                "judgment for sentence {} of {n}",
                j.sentence_index
            )));
        }
        if let Some(id) = j.covered_gold_ids.iter().find(|id| !gold_ids.contains(id.as_str())) {
            return Err(Error::Invalid(format!("judgment names unknown gold nugget {id}")));
        }
        by_index[j.sentence_index] = Some(j);
    }

    let mut covered: BTreeSet<&str> = BTreeSet::new();
    let mut novel = 0;
    let mut relevant = 0;
    for ids in by_index.iter().map(|j| j.map(|j| &j.covered_gold_ids)) {
        let Some(ids) = ids.filter(|ids| !ids.is_empty()) else {
            continue;
        };
        relevant += 1;
        let before = covered.len();
        covered.extend(ids.iter().map(String::as_str));
        if covered.len() > before {
            novel += 1;
        }
    }
    let counts = MetricCounts {
        gold: gold.len(),
        covered: covered.len(),
        sentences: n,
        novel_sentences: novel,
        relevant_sentences: relevant,
        citations: n,
        supported_citations: support_count,
    };
    let nf = n as f64;
    Ok(MetricsReport {
        request_id: report.request_id.clone(),
        nugget_recall: counts.covered as f64 / counts.gold as f64,
        nugget_density: counts.covered as f64 / nf,
        sentence_novelty: novel as f64 / nf,
        relevant_sentences: relevant as f64 / nf,
        citation_support: support_count as f64 / nf,
        counts,
    })
}

/// Judges and scores one report.
pub fn evaluate_report(
    report: &Report,
    gold: &[GoldNugget],
    corpus: &[Document],
    mode: JudgeMode,
    gw: Option<&Gateway>,
) -> Result<MetricsReport> {
    let judgments = match (mode, gw) {
        (JudgeMode::Llm, Some(gw)) => llm_coverage_judge(gw, report, gold)?,
        (JudgeMode::Llm, None) => return Err(Error::Invalid("llm judge needs a gateway".into())),
        (JudgeMode::Oracle, _) => oracle_coverage_judge(report, gold),
    };
    let support = judge_citation_support(report, corpus, mode, gw)?;
    compute_metrics(report, &judgments, support, gold)
}

/// Unweighted mean of each metric over topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub topics: usize,
    pub nugget_recall: f64,
    pub nugget_density: f64,
    pub sentence_novelty: f64,
    pub relevant_sentences: f64,
    pub citation_support: f64,
}

pub fn macro_average(reports: &[MetricsReport]) -> Option<MacroAverage> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(MacroAverage {
        topics: reports.len(),
        nugget_recall: mean(|m| m.nugget_recall),
        nugget_density: mean(|m| m.nugget_density),
        sentence_novelty: mean(|m| m.sentence_novelty),
        relevant_sentences: mean(|m| m.relevant_sentences),
        citation_support: mean(|m| m.citation_support),
    })
}

/// Plain-text table of per-topic metrics followed by the macro average.
pub fn metrics_table(reports: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "topic", "recall", "density", "novelty", "relevant", "support"
    );
    let row = |name: &str, r: f64, d: f64, n: f64, rel: f64, s: f64| {
        format!("{name:<12} {r:>8.3} {d:>8.3} {n:>8.3} {rel:>8.3} {s:>8.3}\n")
    };
    for m in reports {
        out.push_str(&row(
            &m.request_id,
            m.nugget_recall,
            m.nugget_density,
            m.sentence_novelty,
            m.relevant_sentences,
            m.citation_support,
        ));
    }
    if let Some(a) = macro_average(reports) {
        out.push_str(&row(
            "macro",
            a.nugget_recall,
            a.nugget_density,
            a.sentence_novelty,
            a.relevant_sentences,
            a.citation_support,
        ));
    }
    out
}
