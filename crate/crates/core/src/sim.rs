//! Instance and relation similarity functions, all valued in `[0, 1]`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repr::{Relation, TokenSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// Add one to numerator and denominator of every precision with n >= 2.
    AddOneHigherOrders,
}

impl FromStr for Smoothing {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "none" => Ok(Smoothing::None),
            "add1" | "add_one_higher_orders" => Ok(Smoothing::AddOneHigherOrders),
            other => Err(SimError::UnknownSpec(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SimilaritySpec {
    KroneckerDelta,
    SentenceBleu { max_order: usize, smoothing: Smoothing, case_sensitive: bool },
}

impl SimilaritySpec {
    pub fn delta() -> Self {
        SimilaritySpec::KroneckerDelta
    }

    /// Sentence BLEU with order 4 and add-one smoothing on orders >= 2.
    pub fn bleu() -> Self {
        SimilaritySpec::SentenceBleu { max_order: 4, smoothing: Smoothing::AddOneHigherOrders, case_sensitive: true }
    }

    /// Unsmoothed BLEU, for exact cross-checks.
    pub fn strict_bleu(max_order: usize) -> Self {
        SimilaritySpec::SentenceBleu { max_order, smoothing: Smoothing::None, case_sensitive: true }
    }

    pub fn check(&self) -> Result<(), SimError> {
        match self {
            SimilaritySpec::SentenceBleu { max_order: 0, .. } => Err(SimError::ZeroOrder),
            _ => Ok(()),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, SimilaritySpec::KroneckerDelta)
    }
}

impl Default for SimilaritySpec {
    fn default() -> Self {
        Self::bleu()
    }
}

impl fmt::Display for SimilaritySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimilaritySpec::KroneckerDelta => f.write_str("delta"),
            SimilaritySpec::SentenceBleu { max_order, smoothing, case_sensitive } => {
                let smoothing = match smoothing {
                    Smoothing::None => "none",
                    Smoothing::AddOneHigherOrders => "add1",
                };
                write!(f, "bleu(order={max_order},smoothing={smoothing},case_sensitive={case_sensitive})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("BLEU needs nonempty candidate and reference")]
    EmptyInput,
    #[error("BLEU max order must be at least 1")]
    ZeroOrder,
    #[error("unknown similarity `{0}`")]
    UnknownSpec(String),
}

/// Scores a pair of instances. Implemented by [`SimilaritySpec`]; other
/// scorers (e.g. edit-distance aware BLEU variants) can implement it too.
pub trait InstanceSimilarity {
    /// `candidate` comes from the system graph, `reference` from the gold one.
    fn score(&self, candidate: &TokenSpan, reference: &TokenSpan) -> f64;
}

impl InstanceSimilarity for SimilaritySpec {
    fn score(&self, candidate: &TokenSpan, reference: &TokenSpan) -> f64 {
        match self {
            SimilaritySpec::KroneckerDelta => delta(&candidate.tokens, &reference.tokens),
            SimilaritySpec::SentenceBleu { .. } => {
                sentence_bleu(&candidate.tokens, &reference.tokens, self).unwrap_or(0.0)
            }
        }
    }
}

/// 1 iff the token sequences are identical. Head marks live outside the
/// token strings and so never affect the result.
pub fn delta<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let same = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.as_ref() == y.as_ref());
    if same {
        1.0
    } else {
        0.0
    }
}

/// Relation similarity. `None` stands for an absent edge.
pub fn relation_score(spec: &SimilaritySpec, a: Option<Relation>, b: Option<Relation>) -> f64 {
    match (a, b) {
        (Some(x), Some(y)) => match spec {
            SimilaritySpec::KroneckerDelta => delta(&[x.as_str()], &[y.as_str()]),
            SimilaritySpec::SentenceBleu { .. } => sentence_bleu(&[x.as_str()], &[y.as_str()], spec).unwrap_or(0.0),
        },
        _ => 0.0,
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU of `candidate` against one `reference`.
///
/// The geometric mean runs over orders `1..=min(max_order, |candidate|)`;
/// brevity penalty is `min(1, exp(1 - |reference| / |candidate|))`.
pub fn sentence_bleu<S: AsRef<str>>(candidate: &[S], reference: &[S], spec: &SimilaritySpec) -> Result<f64, SimError> {
    let (max_order, smoothing, case_sensitive) = match *spec {
        SimilaritySpec::SentenceBleu { max_order, smoothing, case_sensitive } => (max_order, smoothing, case_sensitive),
        SimilaritySpec::KroneckerDelta => return Ok(delta(candidate, reference)),
    };
    spec.check()?;
    if candidate.is_empty() || reference.is_empty() {
        return Err(SimError::EmptyInput);
    }
    let norm = |s: &S| if case_sensitive { s.as_ref().to_string() } else { s.as_ref().to_lowercase() };
    let cand: Vec<String> = candidate.iter().map(norm).collect();
    let refr: Vec<String> = reference.iter().map(norm).collect();

    let order = max_order.min(cand.len());
    let mut log_sum = 0.0;
    for n in 1..=order {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refr, n);
        let matched: usize =
            cand_counts.iter().map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0))).sum();
        let total = cand.len() + 1 - n;
        let (num, den) = match smoothing {
            Smoothing::AddOneHigherOrders if n >= 2 => (matched as f64 + 1.0, total as f64 + 1.0),
            _ => (matched as f64, total as f64),
        };
        if num == 0.0 {
            return Ok(0.0);
        }
        log_sum += (num / den).ln();
    }
    let precision = (log_sum / order as f64).exp();
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    Ok((precision * brevity).clamp(0.0, 1.0))
}
