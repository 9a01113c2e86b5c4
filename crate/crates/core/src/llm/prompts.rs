//! Versioned prompt templates. Each template ends with a block of
//! `name: value` input fields introduced by a `task:` line.

use std::collections::HashMap;

use crate::text::normalize_whitespace;

use super::{PromptRequest, Stage};

pub const TEMPLATE_VERSION: &str = "v1";

struct Template {
    system: &'static str,
    user: &'static str,
}

fn split(raw: &'static str) -> Template {
    let body = raw.strip_prefix("### system\n").expect("template starts with system");
    let (system, user) = body.split_once("### user\n").expect("template has user part");
    Template {
        system: system.trim_end(),
        user,
    }
}

/// Replaces `{name}` placeholders in one pass; unknown names stay as-is.
fn render(template: &str, values: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if values.contains_key(&after[..close]) => {
                out.push_str(&values[&after[..close]]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn build(stage: Stage, raw: &'static str, fields: &[(&'static str, &str)], max_tokens: u32) -> PromptRequest {
    let t = split(raw);
    let values = fields
        .iter()
        .map(|(k, v)| (*k, single_line(v)))
        .collect::<HashMap<_, _>>();
    PromptRequest::new(stage, t.system, render(t.user, &values)).with_max_tokens(max_tokens)
}

/// Field values are kept on one line so they cannot forge field headers.
fn single_line(value: &str) -> String {
    normalize_whitespace(value)
}

pub fn summarize(title: &str, problem_statement: &str, background: &str, document: &str) -> PromptRequest {
    build(
        Stage::Summarize,
        include_str!("../../data/prompts/summarize.txt"),
        &[
            ("title", title),
            ("problem_statement", problem_statement),
            ("background", background),
            ("document", document),
        ],
        400,
    )
}

pub fn ideate(
    title: &str,
    problem_statement: &str,
    background: &str,
    summary: &str,
    max_pairs: usize,
) -> PromptRequest {
    let max_pairs = max_pairs.to_string();
    build(
        Stage::Ideate,
        include_str!("../../data/prompts/ideate.txt"),
        &[
            ("title", title),
            ("problem_statement", problem_statement),
            ("background", background),
            ("summary", summary),
            ("max_pairs", &max_pairs),
        ],
        800,
    )
}

pub fn paraphrase(question_a: &str, question_b: &str) -> PromptRequest {
    build(
        Stage::Paraphrase,
        include_str!("../../data/prompts/paraphrase.txt"),
        &[("question_a", question_a), ("question_b", question_b)],
        50,
    )
}

pub fn judge_feature(dimension: &str, request_field: &str, question: &str, answer: &str) -> PromptRequest {
    build(
        Stage::JudgeFeature,
        include_str!("../../data/prompts/judge_feature.txt"),
        &[
            ("dimension", dimension),
            ("request_field", request_field),
            ("question", question),
            ("answer", answer),
        ],
        20,
    )
}

pub struct ScanInputs<'a> {
    pub title: &'a str,
    pub background: &'a str,
    pub problem_statement: &'a str,
    pub nugget_text: &'a str,
    pub answer: &'a str,
    pub source_document: &'a str,
}

pub fn scan(inputs: &ScanInputs<'_>) -> PromptRequest {
    build(
        Stage::Scan,
        include_str!("../../data/prompts/scan.txt"),
        &[
            ("title", inputs.title),
            ("background", inputs.background),
            ("problem_statement", inputs.problem_statement),
            ("nugget_text", inputs.nugget_text),
            ("answer", inputs.answer),
            ("source_document", inputs.source_document),
        ],
        800,
    )
}

pub fn verify_support(claim: &str, evidence: &str) -> PromptRequest {
    build(
        Stage::VerifySupport,
        include_str!("../../data/prompts/verify_support.txt"),
        &[("claim", claim), ("evidence", evidence)],
        5,
    )
}

pub fn verify_coverage(question: &str, claim: &str, evidence: &str) -> PromptRequest {
    build(
        Stage::VerifyCoverage,
        include_str!("../../data/prompts/verify_coverage.txt"),
        &[("question", question), ("claim", claim), ("evidence", evidence)],
        5,
    )
}

pub fn judge_coverage(question: &str, answers: &[String], evidence: &str) -> PromptRequest {
    let t = split(include_str!("../../data/prompts/judge_coverage.txt"));
    let list = answers
        .iter()
        .map(|a| format!("- {}", single_line(a)))
        .collect::<Vec<_>>()
        .join("\n");
    let values = HashMap::from([
        ("question", single_line(question)),
        ("answers", list),
        ("evidence", single_line(evidence)),
    ]);
    PromptRequest::new(Stage::JudgeEval, t.system, render(t.user, &values)).with_max_tokens(5)
}

pub fn judge_support(claim: &str, evidence: &str) -> PromptRequest {
    build(
        Stage::JudgeEval,
        include_str!("../../data/prompts/judge_support.txt"),
        &[("claim", claim), ("evidence", evidence)],
        5,
    )
}
