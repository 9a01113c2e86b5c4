//! Rule-based sentence segmentation.
//!
//! A sentence ends at `.`, `!` or `?` (plus any closing quotes or brackets)
//! when followed by whitespace and an uppercase letter, or by the end of the
//! text. A period that closes a token from the abbreviation list never ends a
//! sentence.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

use super::{data_lines, normalize_whitespace};

const ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

fn abbreviations() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| data_lines(ABBREVIATIONS).map(str::to_lowercase).collect())
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// Byte ranges of the sentences of `text`, which must already be
/// whitespace-normalized. Consecutive sentences are separated by exactly one
/// space, which belongs to neither range.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        // Run of terminal punctuation, then closers.
        let mut j = i + 1;
        while j < chars.len() && is_terminal(chars[j].1) {
            j += 1;
        }
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let boundary = if j == chars.len() {
            true
        } else if chars[j].1.is_whitespace() {
            let mut k = j + 1;
            while k < chars.len() && is_opener(chars[k].1) {
                k += 1;
            }
            k < chars.len() && chars[k].1.is_uppercase()
        } else {
            false
        };
        if boundary && c == '.' && is_abbreviation(&text[start..pos + 1]) {
            i = j;
            continue;
        }
        if boundary {
            spans.push(start..end);
            start = (end + 1).min(text.len());
        }
        i = j;
    }
    if start < text.len() {
        spans.push(start..text.len());
    }
    spans
}

fn is_abbreviation(prefix: &str) -> bool {
    let token = prefix.rsplit(' ').next().unwrap_or(prefix);
    let token = token.trim_start_matches(is_opener);
    abbreviations().contains(&token.to_lowercase())
}

/// Splits arbitrary text into sentences after whitespace normalization.
pub fn split_sentences(text: &str) -> Vec<String> {
    let norm = normalize_whitespace(text);
    sentence_spans(&norm).into_iter().map(|r| norm[r].to_string()).collect()
}

/// The first sentence of `text`, or the empty string.
pub fn first_sentence(text: &str) -> String {
    split_sentences(text).into_iter().next().unwrap_or_default()
}
