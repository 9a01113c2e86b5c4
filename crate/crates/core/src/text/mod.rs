//! Text normalization shared by chunking, retrieval, deduplication and judging.

mod fingerprint;
mod porter;
mod segment;

use std::collections::HashSet;
use std::sync::OnceLock;

pub use fingerprint::{fingerprint_sentence, fingerprint_tokens, is_token_subsequence, Fingerprint};
pub use porter::stem;
pub use segment::{first_sentence, sentence_spans, split_sentences};

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

fn data_lines(data: &'static str) -> impl Iterator<Item = &'static str> {
    data.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// The bundled stopword list.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| data_lines(STOPWORDS).collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Collapses every whitespace run to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Whitespace-normalized, case-folded form used for substring validation.
pub fn normalize_for_match(text: &str) -> String {
    normalize_whitespace(&text.to_lowercase())
}

/// Lowercased alphanumeric tokens; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
