//! Deterministic rule-based stand-in for a language model.
//!
//! Reads the input fields of a prompt (everything from the last `task:` line)
//! and answers with simple lexical rules:
//!
//! * `summarize`: the first two sentences of the document.
//! * `ideate`: for each of the first three summary sentences that contain a
//!   proper-noun-like token, the question "What does the document state
//!   about <token>?" answered by that sentence.
//! * `paraphrase`: YES iff both questions have the same set of
//!   stopped/stemmed tokens.
//! * `judge_feature`: the share of question tokens found in the request field.
//! * `scan`: the first sentence covering at least half of the answer's
//!   tokens, with a log-probability of -0.1 per output token.
//! * `verify_support`: YES iff the normalized claim is a substring of the
//!   normalized evidence.
//! * `verify_coverage`, `judge_coverage`, `judge_support`: YES iff the
//!   claim's (or any answer's) fingerprint is a contiguous token run of the
//!   evidence's fingerprint.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::text::{fingerprint_tokens, is_stopword, is_token_subsequence, normalize_for_match, split_sentences};

use super::{parse_fielded_output, Backend, FieldSchema, PromptRequest, RawResponse};

const INPUT_FIELDS: &[&str] = &[
    "task",
    "title",
    "problem_statement",
    "background",
    "document",
    "summary",
    "max_pairs",
    "question_a",
    "question_b",
    "dimension",
    "request_field",
    "question",
    "answer",
    "answers",
    "nugget_text",
    "source_document",
    "claim",
    "evidence",
];

/// Log-probability assigned to every token of a synthetic scan answer.
pub const SCAN_TOKEN_LOGPROB: f64 = -0.1;

#[derive(Debug, Default, Clone)]
pub struct SyntheticBackend;

impl SyntheticBackend {
    pub fn new() -> Self {
        SyntheticBackend
    }
}

struct Inputs(super::FieldedResponse);

impl Inputs {
    fn get(&self, name: &str) -> &str {
        self.0.get(name).unwrap_or("")
    }
}

fn text(raw_text: String) -> RawResponse {
    RawResponse {
        raw_text,
        token_logprobs: Vec::new(),
    }
}

fn yes_no(yes: bool) -> RawResponse {
    text(if yes { "YES" } else { "NO" }.to_string())
}

/// First capitalized token that is not a stopword, preferring one that does
/// not open the sentence.
pub(crate) fn proper_noun_token(sentence: &str) -> Option<String> {
    let words: Vec<&str> = sentence
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect();
    let is_candidate = |w: &str| w.chars().next().is_some_and(char::is_uppercase) && !is_stopword(&w.to_lowercase());
    words
        .iter()
        .skip(1)
        .find(|w| is_candidate(w))
        .or_else(|| words.first().filter(|w| is_candidate(w)))
        .map(|w| w.to_string())
}

fn token_set(text: &str) -> BTreeSet<String> {
    fingerprint_tokens(text).into_iter().collect()
}

fn fingerprint_contains(claim: &str, evidence: &str) -> bool {
    is_token_subsequence(&fingerprint_tokens(claim), &fingerprint_tokens(evidence))
}

impl SyntheticBackend {
    fn summarize(&self, inputs: &Inputs) -> RawResponse {
        let sentences = split_sentences(inputs.get("document"));
        let summary = sentences.iter().take(2).cloned().collect::<Vec<_>>().join(" ");
        text(format!("summary: {summary}"))
    }

    fn ideate(&self, inputs: &Inputs) -> RawResponse {
        let pairs: Vec<(String, String)> = split_sentences(inputs.get("summary"))
            .into_iter()
            .filter_map(|s| proper_noun_token(&s).map(|t| (t, s)))
            .take(3)
            .collect();
        let mut out = String::new();
        for (i, (token, sentence)) in pairs.iter().enumerate() {
            let n = i + 1;
            out.push_str(&format!(
                "question_{n}: What does the document state about {token}?\nanswer_{n}: {sentence}\n"
            ));
        }
        text(out)
    }

    fn paraphrase(&self, inputs: &Inputs) -> RawResponse {
        let same = token_set(inputs.get("question_a")) == token_set(inputs.get("question_b"));
        let verdict = if same { "YES" } else { "NO" };
        text(format!("answer: {verdict}\nconfidence: 1.0"))
    }

    fn judge_feature(&self, inputs: &Inputs) -> RawResponse {
        let q = token_set(inputs.get("question"));
        let field = token_set(inputs.get("request_field"));
        let score = if q.is_empty() {
            0.0
        } else {
            q.intersection(&field).count() as f64 / q.len() as f64
        };
        text(format!("score: {score}"))
    }

    fn scan(&self, inputs: &Inputs) -> RawResponse {
        let answer = token_set(inputs.get("answer"));
        let hit = (!answer.is_empty())
            .then(|| {
                split_sentences(inputs.get("source_document")).into_iter().find(|s| {
                    let overlap = token_set(s).intersection(&answer).count();
                    2 * overlap >= answer.len()
                })
            })
            .flatten();
        match hit {
            Some(sentence) => {
                let tokens = sentence.split_whitespace().count();
                RawResponse {
                    raw_text: format!(
                        "extracted_text_segment: {sentence}\nsummary: {sentence}\nreasoning: The passage restates the answer.\nconfidence: 0.9"
                    ),
                    token_logprobs: vec![SCAN_TOKEN_LOGPROB; tokens],
                }
            }
            None => text("confidence: 0.0".to_string()),
        }
    }
}

impl Backend for SyntheticBackend {
    fn id(&self) -> &str {
        "synthetic"
    }

    fn model(&self) -> &str {
        "synthetic-v1"
    }

    fn complete(&self, req: &PromptRequest) -> Result<RawResponse> {
        let start = req
            .user_text
            .rfind("\ntask:")
            .map(|i| i + 1)
            .or_else(|| req.user_text.starts_with("task:").then_some(0))
            .ok_or_else(|| Error::Backend("synthetic backend needs a `task:` block".into()))?;
        let schema = FieldSchema::optional(INPUT_FIELDS);
        let inputs = Inputs(parse_fielded_output(&req.user_text[start..], &schema)?);
        let resp = match inputs.get("task") {
            "summarize" => self.summarize(&inputs),
            "ideate" => self.ideate(&inputs),
            "paraphrase" => self.paraphrase(&inputs),
            "judge_feature" => self.judge_feature(&inputs),
            "scan" => self.scan(&inputs),
            "verify_support" => yes_no(
                !inputs.get("claim").trim().is_empty()
                    && normalize_for_match(inputs.get("evidence")).contains(&normalize_for_match(inputs.get("claim"))),
            ),
            "verify_coverage" | "judge_support" => {
                yes_no(fingerprint_contains(inputs.get("claim"), inputs.get("evidence")))
            }
            "judge_coverage" => {
                let evidence = inputs.get("evidence");
                let covered = inputs
                    .get("answers")
                    .lines()
                    .map(|l| l.trim().trim_start_matches("- "))
                    .any(|a| fingerprint_contains(a, evidence));
                yes_no(covered)
            }
            other => return Err(Error::Backend(format!("unknown synthetic task `{other}`"))),
        };
        Ok(resp)
    }
}
