use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{chains_from_linearized, CorefError, CorefReport, MentionChainSet};
use crate::derive_seed;
use crate::linear::{LinToken, LinearizedRepr, SpanKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Uniform over preceding arguments whose head word matches the gold
    /// antecedent's head.
    Heuristic,
    /// Uniform over all preceding arguments.
    Random,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heuristic" => Ok(Method::Heuristic),
            "random" => Ok(Method::Random),
            other => Err(format!("unknown resolver `{other}`")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Heuristic => "heuristic",
            Method::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolverSpec {
    pub method: Method,
    pub seed: u64,
}

/// Predicted assignments for one sequence. `flagged` lists bullets left on
/// the dummy antecedent because no candidate existed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Resolution {
    pub assignments: Vec<Option<usize>>,
    pub flagged: Vec<usize>,
}

/// Predicts antecedents for the bullets of a gold sequence whose tokens are
/// fixed. `index` is the sequence's position in its corpus.
pub trait CorefResolver {
    fn resolve(&self, gold: &LinearizedRepr, index: usize) -> Resolution;
}

impl CorefResolver for ResolverSpec {
    fn resolve(&self, gold: &LinearizedRepr, index: usize) -> Resolution {
        let seed = derive_seed(self.seed, index as u64);
        match self.method {
            Method::Random => resolve_random(gold, seed),
            Method::Heuristic => resolve_heuristic(gold, seed),
        }
    }
}

/// Returns the gold assignments unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldResolver;

impl CorefResolver for GoldResolver {
    fn resolve(&self, gold: &LinearizedRepr, _index: usize) -> Resolution {
        Resolution { assignments: gold.assignments().to_vec(), flagged: Vec::new() }
    }
}

/// Head-word positions of argument spans, ascending. Spans headed by a
/// bullet have no head word and are skipped.
fn argument_heads(l: &LinearizedRepr) -> Vec<usize> {
    let s = l.structure();
    let tokens = l.tokens();
    let mut heads: Vec<usize> = (0..s.spans.len())
        .filter(|&i| s.spans[i].kind == SpanKind::Arg)
        .filter_map(|i| s.head_position(tokens, i))
        .filter(|&p| tokens[p].is_word())
        .collect();
    heads.sort_unstable();
    heads.dedup();
    heads
}

fn pick(candidates: &[usize], rng: &mut ChaCha8Rng) -> Option<usize> {
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

fn resolve_with(
    gold: &LinearizedRepr,
    seed: u64,
    mut candidates: impl FnMut(usize, &[usize]) -> Vec<usize>,
) -> Resolution {
    let heads = argument_heads(gold);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Resolution { assignments: vec![None; gold.len()], flagged: Vec::new() };
    for b in gold.bullet_positions() {
        let before: Vec<usize> = heads.iter().copied().filter(|&h| h < b).collect();
        match pick(&candidates(b, &before), &mut rng) {
            Some(a) => out.assignments[b] = Some(a),
            None => out.flagged.push(b),
        }
    }
    out
}

/// Each bullet gets a uniformly random preceding argument, represented by
/// its head word.
pub fn resolve_random(gold: &LinearizedRepr, seed: u64) -> Resolution {
    resolve_with(gold, seed, |_, before| before.to_vec())
}

/// Each bullet gets a uniformly random preceding argument whose head word
/// equals the head of the bullet's gold antecedent.
pub fn resolve_heuristic(gold: &LinearizedRepr, seed: u64) -> Resolution {
    let wanted = antecedent_heads(gold);
    let tokens = gold.tokens();
    resolve_with(gold, seed, |b, before| {
        let Some(word) = wanted[b].as_deref() else { return Vec::new() };
        before.iter().copied().filter(|&h| tokens[h].surface() == Some(word)).collect()
    })
}

/// For each bullet, the head word of the span holding its gold antecedent:
/// the word a bullet is replaced with before the heuristic runs.
pub fn antecedent_heads(gold: &LinearizedRepr) -> Vec<Option<String>> {
    let s = gold.structure();
    let tokens = gold.tokens();
    let mut out = vec![None; gold.len()];
    for b in gold.bullet_positions() {
        let mut pos = gold.assignments()[b];
        // Follow bullet-headed spans back to a word; each step moves left.
        let mut word = None;
        while let Some(a) = pos {
            let head = s.owner[a].and_then(|span| s.head_position(tokens, span));
            match head {
                Some(h) if tokens[h] == LinToken::Bullet => pos = gold.assignments()[h],
                Some(h) => {
                    word = tokens[h].surface().map(str::to_string);
                    break;
                }
                None => {
                    word = tokens[a].surface().map(str::to_string);
                    break;
                }
            }
        }
        out[b] = word;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcedDecoding {
    pub predictions: Vec<LinearizedRepr>,
    /// `(key, response)` chains per sequence.
    pub pairs: Vec<(MentionChainSet, MentionChainSet)>,
    pub flagged: usize,
    pub report: CorefReport,
}

/// Fixes every token sequence to gold, lets `resolver` predict only the
/// assignments, and scores predicted chains against gold chains.
pub fn forced_decode_eval<R: CorefResolver + Sync + ?Sized>(
    gold: &[LinearizedRepr],
    resolver: &R,
) -> Result<ForcedDecoding, CorefError> {
    if gold.is_empty() {
        return Err(CorefError::EmptyCorpus);
    }
    let results: Vec<(LinearizedRepr, usize)> = gold
        .par_iter()
        .enumerate()
        .map(|(index, g)| {
            let r = resolver.resolve(g, index);
            if r.assignments.len() != g.len() {
                return Err(CorefError::Mismatch {
                    index,
                    message: format!("{} assignments for {} tokens", r.assignments.len(), g.len()),
                });
            }
            let predicted = g
                .with_assignments(r.assignments)
                .map_err(|e| CorefError::Mismatch { index, message: e.to_string() })?;
            Ok((predicted, r.flagged.len()))
        })
        .collect::<Result<_, _>>()?;
    let flagged = results.iter().map(|(_, f)| f).sum();
    let predictions: Vec<LinearizedRepr> = results.into_iter().map(|(p, _)| p).collect();
    let pairs: Vec<(MentionChainSet, MentionChainSet)> =
        gold.iter().zip(&predictions).map(|(g, p)| (chains_from_linearized(g), chains_from_linearized(p))).collect();
    let report = CorefReport::evaluate(&pairs)?;
    Ok(ForcedDecoding { predictions, pairs, flagged, report })
}
