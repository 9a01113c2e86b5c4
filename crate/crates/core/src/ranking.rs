//! Nugget ranking: quality features, a pluggable feature scorer, popularity
//! (paraphrase count) ranking, and reciprocal-rank fusion into the bank.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideation::Nugget;
use crate::ingest::Request;
use crate::llm::{prompts, FieldSchema, Gateway};
use crate::text::{split_sentences, tokenize};

pub const DEFAULT_BANK_SIZE: usize = 20;
pub const DEFAULT_RRF_K: f64 = 60.0;

/// Aspects of the request a judge prompt rates a nugget against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    TaskStatement,
    Background,
    Role,
    CommunicationStyle,
    Scope,
    Vitality,
    Researchy,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::TaskStatement,
        Dimension::Background,
        Dimension::Role,
        Dimension::CommunicationStyle,
        Dimension::Scope,
        Dimension::Vitality,
        Dimension::Researchy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::TaskStatement => "task_statement",
            Dimension::Background => "background",
            Dimension::Role => "role",
            Dimension::CommunicationStyle => "communication_style",
            Dimension::Scope => "scope",
            Dimension::Vitality => "vitality",
            Dimension::Researchy => "researchy",
        }
    }

    /// The request text the dimension is judged against, if the request has it.
    pub fn request_field(self, req: &Request) -> Option<String> {
        let field = match self {
            Dimension::TaskStatement => Some(req.problem_statement.clone()),
            Dimension::Background => Some(req.background.clone()),
            Dimension::Role => req.role.clone(),
            Dimension::CommunicationStyle => req.communication_style.clone(),
            Dimension::Scope => req.scope.clone(),
            Dimension::Vitality => Some(format!("{} {}", req.title, req.problem_statement)),
            Dimension::Researchy => Some(req.title.clone()),
        };
        field.filter(|f| !f.trim().is_empty())
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown dimension `{s}`")))
    }
}

pub const READING_LEVEL: &str = "reading_level";
pub const SENTENCE_COMPLEXITY: &str = "sentence_complexity";

/// Names of the registered features, judge dimensions first.
pub fn feature_names() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = Dimension::ALL.iter().map(|d| d.as_str()).collect();
    names.extend([READING_LEVEL, SENTENCE_COMPLEXITY]);
    names
}

/// Judge dimensions that cost an LLM call for `req`.
pub fn judged_dimensions(req: &Request) -> Vec<Dimension> {
    Dimension::ALL
        .into_iter()
        .filter(|d| d.request_field(req).is_some())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub nugget_id: String,
    pub values: BTreeMap<String, f64>,
}

/// Vowel groups, less one for a silent final `e`; at least one.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    if w.is_empty() {
        return 1;
    }
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = w.len();
    let silent_e = n >= 2 && w[n - 1] == 'e' && !(w[n - 2] == 'l' && n >= 3 && !is_vowel(w[n - 3]));
    if silent_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

/// Flesch-Kincaid grade level: `0.39 * words/sentences + 11.8 *
/// syllables/words - 15.59`. Zero for text without words.
pub fn flesch_kincaid_grade(text: &str) -> f64 {
    let words = tokenize(text);
    if words.is_empty() {
        return 0.0;
    }
    let sentences = split_sentences(text).len().max(1) as f64;
    let syllables: usize = words.iter().map(|w| count_syllables(w)).sum();
    let n = words.len() as f64;
    0.39 * (n / sentences) + 11.8 * (syllables as f64 / n) - 15.59
}

const CLAUSE_WORDS: [&str; 4] = ["and", "but", "which", "that"];

/// Mean tokens per clause, with clauses delimited by `,` `;` and the words
/// and/but/which/that (delimiters are not counted as tokens).
pub fn sentence_complexity(text: &str) -> f64 {
    let mut clauses = 0usize;
    let mut tokens = 0usize;
    for segment in text.split([',', ';']) {
        let mut in_clause = 0usize;
        for tok in tokenize(segment) {
            if CLAUSE_WORDS.contains(&tok.as_str()) {
                if in_clause > 0 {
                    clauses += 1;
                }
                in_clause = 0;
            } else {
                in_clause += 1;
                tokens += 1;
            }
        }
        if in_clause > 0 {
            clauses += 1;
        }
    }
    if clauses == 0 {
        0.0
    } else {
        tokens as f64 / clauses as f64
    }
}

/// Raw (unnormalized) reading level and sentence complexity of a nugget's
/// question and answer.
pub fn compute_readability_features(nugget: &Nugget) -> BTreeMap<String, f64> {
    let (level, complexity) = if nugget.answer.trim().is_empty() {
        (0.0, 0.0)
    } else {
        let text = format!("{} {}", nugget.question, nugget.answer);
        (flesch_kincaid_grade(&text), sentence_complexity(&text))
    };
    BTreeMap::from([
        (READING_LEVEL.to_string(), level),
        (SENTENCE_COMPLEXITY.to_string(), complexity),
    ])
}

/// One judge call rating `nugget` on `dimension`, as a score in [0, 1].
/// Absent request fields and unparseable scores yield the neutral 0.5.
pub fn judge_feature(gw: &Gateway, req: &Request, nugget: &Nugget, dimension: Dimension) -> Result<f64> {
    let Some(field) = dimension.request_field(req) else {
        return Ok(0.5);
    };
    let prompt = prompts::judge_feature(dimension.as_str(), &field, &nugget.question, &nugget.answer);
    let resp = gw
        .cached_complete(&prompt)
        .map_err(|e| e.context(format!("judge {} on {}", dimension, nugget.nugget_id)))?;
    let score = resp
        .fielded(&FieldSchema::optional(&["score"]))
        .ok()
        .and_then(|r| r.get("score").and_then(|s| s.trim().parse::<f64>().ok()))
        .filter(|s| s.is_finite());
    Ok(match score {
        Some(s) => s.clamp(0.0, 1.0),
        None => {
            gw.warn(format!("unparseable {dimension} score for {}", nugget.nugget_id));
            0.5
        }
    })
}

/// Min-max normalizes each feature across the vectors; constant columns
/// become 0.5.
pub fn normalize_features(vectors: &mut [FeatureVector]) {
    let names: Vec<String> = vectors
        .iter()
        .flat_map(|v| v.values.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for name in names {
        let column = vectors.iter().filter_map(|v| v.values.get(&name).copied());
        let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        for v in vectors.iter_mut() {
            if let Some(x) = v.values.get_mut(&name) {
                *x = if hi > lo { (*x - lo) / (hi - lo) } else { 0.5 };
            }
        }
    }
}

/// Raw features for every pooled nugget, normalized across the pool.
pub fn compute_feature_vectors(gw: &Gateway, req: &Request, pool: &[Nugget]) -> Result<Vec<FeatureVector>> {
    let jobs: Vec<(usize, Dimension)> = (0..pool.len())
        .flat_map(|i| Dimension::ALL.into_iter().map(move |d| (i, d)))
        .collect();
    let judged: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, d)| judge_feature(gw, req, &pool[i], d))
        .collect::<Result<_>>()?;
    let mut vectors: Vec<FeatureVector> = pool
        .iter()
        .map(|n| FeatureVector {
            nugget_id: n.nugget_id.clone(),
            values: compute_readability_features(n),
        })
        .collect();
    for (&(i, d), score) in jobs.iter().zip(judged) {
        vectors[i].values.insert(d.as_str().to_string(), score);
    }
    normalize_features(&mut vectors);
    Ok(vectors)
}

/// Turns a feature vector into a quality score.
pub trait NuggetScorer: Send + Sync {
    fn score(&self, vector: &FeatureVector) -> Result<f64>;
}

/// `Σ weight·value / Σ weight` over the registered features.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeanScorer {
    weights: BTreeMap<String, f64>,
}

impl WeightedMeanScorer {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((name, w)) = weights.iter().find(|(_, w)| w.is_nan() || **w < 0.0) {
            return Err(Error::Invalid(format!("negative weight {w} for `{name}`")));
        }
        if weights.values().sum::<f64>() <= 0.0 {
            return Err(Error::Invalid("weights sum to zero".into()));
        }
        Ok(WeightedMeanScorer { weights })
    }

    /// Weight 1 for every registered feature.
    pub fn uniform() -> Self {
        let weights = feature_names().into_iter().map(|n| (n.to_string(), 1.0)).collect();
        WeightedMeanScorer { weights }
    }

    /// Uniform weights overridden by a JSON object of `feature: weight`.
    pub fn load_overrides(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let overrides: BTreeMap<String, f64> = serde_json::from_str(&text)?;
        let mut weights = Self::uniform().weights;
        for (name, w) in overrides {
            if !weights.contains_key(&name) {
                return Err(Error::Invalid(format!(
                    "unknown feature `{name}` in {}",
                    path.display()
                )));
            }
            weights.insert(name, w);
        }
        Self::new(weights)
    }
}

impl NuggetScorer for WeightedMeanScorer {
    fn score(&self, vector: &FeatureVector) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (name, w) in &self.weights {
            let v = vector
                .values
                .get(name)
                .ok_or_else(|| Error::Invalid(format!("feature `{name}` missing for {}", vector.nugget_id)))?;
            num += w * v;
            den += w;
        }
        Ok(num / den)
    }
}

/// A linear model (e.g. exported from a trained classifier):
/// `intercept + Σ coefficient·value`; absent features contribute nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelScorer {
    #[serde(default)]
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
}

impl LinearModelScorer {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl NuggetScorer for LinearModelScorer {
    fn score(&self, vector: &FeatureVector) -> Result<f64> {
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .map(|(name, c)| c * vector.values.get(name).copied().unwrap_or(0.0))
                .sum::<f64>())
    }
}

fn sort_scored(scored: &mut [(String, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Scores every vector and sorts descending, ties by nugget id.
pub fn rank_features(vectors: &[FeatureVector], scorer: &dyn NuggetScorer) -> Result<Vec<(String, f64)>> {
    let mut scored = vectors
        .iter()
        .map(|v| Ok((v.nugget_id.clone(), scorer.score(v)?)))
        .collect::<Result<Vec<_>>>()?;
    sort_scored(&mut scored);
    Ok(scored)
}

/// Weighted-mean scoring; `weights` must cover every registered feature.
pub fn score_features(vectors: &[FeatureVector], weights: &BTreeMap<String, f64>) -> Result<Vec<(String, f64)>> {
    if let Some(name) = feature_names().into_iter().find(|n| !weights.contains_key(*n)) {
        return Err(Error::Invalid(format!("no weight for feature `{name}`")));
    }
    rank_features(vectors, &WeightedMeanScorer::new(weights.clone())?)
}

/// Descending paraphrase count, ties by nugget id.
pub fn popularity_rank(pool: &[Nugget]) -> Vec<String> {
    let mut order: Vec<&Nugget> = pool.iter().collect();
    order.sort_by(|a, b| {
        b.paraphrase_count
            .cmp(&a.paraphrase_count)
            .then_with(|| a.nugget_id.cmp(&b.nugget_id))
    });
    order.into_iter().map(|n| n.nugget_id.clone()).collect()
}

/// Reciprocal rank fusion: `Σ 1/(k + rank)` over the rankings containing an
/// item, ranks starting at 1. Sorted descending, ties by id.
pub fn rrf_fuse(rankings: &[Vec<String>], k: f64) -> Result<Vec<(String, f64)>> {
    if k.is_nan() || k <= 0.0 {
        return Err(Error::Invalid(format!("rrf k must be positive, got {k}")));
    }
    let mut fused: HashMap<&str, f64> = HashMap::new();
    for ranking in rankings {
        let mut seen = HashSet::new();
        for (i, id) in ranking.iter().enumerate() {
            if !seen.insert(id) {
                return Err(Error::Duplicate {
                    kind: "ranking entry",
                    id: id.clone(),
                });
            }
            *fused.entry(id).or_default() += 1.0 / (k + (i + 1) as f64);
        }
    }
    let mut out: Vec<(String, f64)> = fused.into_iter().map(|(id, s)| (id.to_string(), s)).collect();
    sort_scored(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    #[serde(flatten)]
    pub nugget: Nugget,
    pub fused_score: f64,
}

/// The top nuggets for one request, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuggetBank {
    pub request_id: String,
    pub ranked: Vec<BankEntry>,
}

pub fn select_top_bank(
    request_id: &str,
    fused: &[(String, f64)],
    pool: &[Nugget],
    bank_size: usize,
) -> Result<NuggetBank> {
    if fused.is_empty() {
        return Err(Error::EmptyPool);
    }
    if bank_size == 0 {
        return Err(Error::Invalid("bank size must be at least 1".into()));
    }
    let by_id: HashMap<&str, &Nugget> = pool.iter().map(|n| (n.nugget_id.as_str(), n)).collect();
    let ranked = fused
        .iter()
        .take(bank_size)
        .map(|(id, score)| {
            let nugget = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Invalid(format!("fused id `{id}` not in pool")))?;
            Ok(BankEntry {
                nugget: (*nugget).clone(),
                fused_score: *score,
            })
        })
        .collect::<Result<_>>()?;
    Ok(NuggetBank {
        request_id: request_id.to_string(),
        ranked,
    })
}

/// Features, scoring, popularity and fusion for one request's pool.
pub fn rank_pool(
    gw: &Gateway,
    req: &Request,
    pool: &[Nugget],
    scorer: &dyn NuggetScorer,
    bank_size: usize,
) -> Result<NuggetBank> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let vectors = compute_feature_vectors(gw, req, pool)?;
    let by_features: Vec<String> = rank_features(&vectors, scorer)?.into_iter().map(|(id, _)| id).collect();
    let fused = rrf_fuse(&[by_features, popularity_rank(pool)], DEFAULT_RRF_K)?;
    select_top_bank(&req.request_id, &fused, pool, bank_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn nugget(id: &str, count: usize) -> Nugget {
        Nugget {
            nugget_id: id.into(),
            question: "What happened?".into(),
            answer: "Something.".into(),
            member_drafts: (0..count).map(|i| format!("{id}{i}")).collect::<BTreeSet<_>>(),
            provenance: BTreeMap::from([("d".to_string(), 1)]),
            paraphrase_count: count,
        }
    }

    fn vector(id: &str, values: &[(&str, f64)]) -> FeatureVector {
        FeatureVector {
            nugget_id: id.into(),
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn full_vector(id: &str, value: f64) -> FeatureVector {
        FeatureVector {
            nugget_id: id.into(),
            values: feature_names().into_iter().map(|n| (n.to_string(), value)).collect(),
        }
    }

    #[test]
    fn flesch_kincaid_hand_value() {
        assert_eq!(count_syllables("the"), 1);
        assert_eq!(count_syllables("cat"), 1);
        assert!((flesch_kincaid_grade("The cat sat.") - (-2.62)).abs() < 1e-9);
        assert_eq!(flesch_kincaid_grade(""), 0.0);
    }

    #[test]
    fn syllable_heuristic() {
        assert_eq!(count_syllables("table"), 2);
        assert_eq!(count_syllables("cake"), 1);
        assert_eq!(count_syllables("litigation"), 4);
        assert_eq!(count_syllables("rhythm"), 1);
        assert_eq!(count_syllables("2018"), 1);
    }

    #[test]
    fn clause_complexity() {
        assert!((sentence_complexity("A, b and c") - 1.0).abs() < 1e-12);
        assert!((sentence_complexity("Bayer paid, and juries ruled that it erred") - 2.0).abs() < 1e-12);
        assert_eq!(sentence_complexity(""), 0.0);
        assert_eq!(sentence_complexity("and, but"), 0.0);
    }

    #[test]
    fn readability_of_empty_answer() {
        let mut n = nugget("a", 1);
        n.answer = String::new();
        let f = compute_readability_features(&n);
        assert_eq!(f[READING_LEVEL], 0.0);
        assert_eq!(f[SENTENCE_COMPLEXITY], 0.0);
    }

    #[test]
    fn weighted_mean() {
        let uniform: BTreeMap<String, f64> = feature_names().into_iter().map(|n| (n.to_string(), 1.0)).collect();
        let s = score_features(&[full_vector("a", 1.0)], &uniform).unwrap();
        assert!((s[0].1 - 1.0).abs() < 1e-12);

        let scorer = WeightedMeanScorer::new(BTreeMap::from([("x".into(), 1.0), ("y".into(), 3.0)])).unwrap();
        let s = scorer.score(&vector("a", &[("x", 0.2), ("y", 0.8)])).unwrap();
        assert!((s - 0.65).abs() < 1e-12);

        let ties = score_features(&[full_vector("b", 0.3), full_vector("a", 0.3)], &uniform).unwrap();
        assert_eq!(ties[0].0, "a");

        let mut negative = uniform.clone();
        negative.insert(READING_LEVEL.into(), -1.0);
        assert!(score_features(&[full_vector("a", 1.0)], &negative).is_err());
        let mut partial = uniform;
        partial.remove(SENTENCE_COMPLEXITY);
        assert!(score_features(&[full_vector("a", 1.0)], &partial).is_err());
    }

    #[test]
    fn linear_model() {
        let m = LinearModelScorer {
            intercept: 0.5,
            coefficients: BTreeMap::from([("x".into(), -2.0), ("y".into(), 1.0)]),
        };
        assert!((m.score(&vector("a", &[("x", 0.25), ("y", 1.0)])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization() {
        let mut vs = vec![
            vector("a", &[("x", 2.0), ("c", 7.0)]),
            vector("b", &[("x", 4.0), ("c", 7.0)]),
            vector("c", &[("x", 3.0), ("c", 7.0)]),
        ];
        normalize_features(&mut vs);
        assert_eq!(vs[0].values["x"], 0.0);
        assert_eq!(vs[1].values["x"], 1.0);
        assert_eq!(vs[2].values["x"], 0.5);
        assert!(vs.iter().all(|v| v.values["c"] == 0.5));
    }

    #[test]
    fn popularity() {
        let pool = vec![nugget("a", 3), nugget("b", 1), nugget("c", 3)];
        assert_eq!(popularity_rank(&pool), ["a", "c", "b"]);
        let flat = vec![nugget("z", 1), nugget("m", 1)];
        assert_eq!(popularity_rank(&flat), ["m", "z"]);
        assert!(popularity_rank(&[]).is_empty());
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rrf_hand_cases() {
        let fused = rrf_fuse(&[ids(&["x", "a"]), ids(&["y", "z", "x"])], 60.0).unwrap();
        let x = fused.iter().find(|(id, _)| id == "x").unwrap().1;
        assert!((x - 0.032266458495966696).abs() < 1e-9);
        assert!((x - (1.0 / 61.0 + 1.0 / 63.0)).abs() < 1e-15);
        let a = fused.iter().find(|(id, _)| id == "a").unwrap().1;
        assert!((a - 1.0 / 62.0).abs() < 1e-15);

        let single = rrf_fuse(&[ids(&["c", "a", "b"])], 60.0).unwrap();
        assert_eq!(
            single.iter().map(|(i, _)| i.as_str()).collect::<Vec<_>>(),
            ["c", "a", "b"]
        );

        assert!(rrf_fuse(&[ids(&["a", "a"])], 60.0).is_err());
        assert!(rrf_fuse(&[ids(&["a"])], 0.0).is_err());
    }

    #[test]
    fn bank_selection() {
        let pool: Vec<Nugget> = (0..50).map(|i| nugget(&format!("n{i:02}"), 1)).collect();
        let fused = rrf_fuse(&[popularity_rank(&pool)], 60.0).unwrap();
        assert_eq!(select_top_bank("r", &fused, &pool, 20).unwrap().ranked.len(), 20);
        let bank = select_top_bank("r", &fused[..12], &pool, 20).unwrap();
        assert_eq!(bank.ranked.len(), 12);
        let one = select_top_bank("r", &fused, &pool, 1).unwrap();
        assert_eq!(one.ranked[0].nugget.nugget_id, "n00");
        assert_eq!(
            select_top_bank("r", &[], &pool, 20).unwrap_err().to_string(),
            "empty nugget pool"
        );
    }

    #[test]
    fn absent_request_fields_skip_the_judge() {
        use crate::llm::SyntheticBackend;
        use std::sync::Arc;
        let gw = Gateway::new(Arc::new(SyntheticBackend::new()));
        let req = Request {
            request_id: "r".into(),
            title: "Bayer".into(),
            problem_statement: "glyphosate cancer".into(),
            background: "cancer court".into(),
            role: None,
            communication_style: None,
            scope: None,
        };
        let mut n = nugget("a", 1);
        n.question = "glyphosate cancer risk court?".into();
        assert_eq!(judge_feature(&gw, &req, &n, Dimension::Role).unwrap(), 0.5);
        assert_eq!(gw.ledger().len(), 0);
        assert_eq!(judge_feature(&gw, &req, &n, Dimension::Background).unwrap(), 0.5);
        assert_eq!(gw.ledger().len(), 1);
        assert_eq!(judged_dimensions(&req).len(), 4);
    }
}
