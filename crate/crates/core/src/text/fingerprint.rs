use serde::{Deserialize, Serialize};

use super::{is_stopword, stem, tokenize};

/// Stopped and stemmed canonical form of a sentence. Two sentences with the
/// same fingerprint are treated as duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fingerprint {
    pub canonical: String,
}

impl Fingerprint {
    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.canonical.split(' ').filter(|t| !t.is_empty())
    }
}

/// Lowercased, punctuation-free, stopword-free, stemmed tokens in text order.
pub fn fingerprint_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| stem(&t))
        .collect()
}

pub fn fingerprint_sentence(text: &str) -> Fingerprint {
    Fingerprint {
        canonical: fingerprint_tokens(text).join(" "),
    }
}

/// True iff `needle` is a non-empty contiguous run of `haystack`.
pub fn is_token_subsequence<S: AsRef<str>>(needle: &[S], haystack: &[S]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| a.as_ref() == b.as_ref()))
}
