//! Graph similarity `S(φ, ψ)`.
//!
//! For graphs `G1 = (V1, I1, R1)` (system) and `G2 = (V2, I2, R2)` (gold),
//! the score of an injective partial mapping `m: V1 -> V2` is
//!
//! ```text
//! Σ_{v ∈ dom m} φ(I1(v), I2(m(v)))  +  Σ_{(u, v) ∈ U(R1), both mapped} ψ(R1(u, v), R2(m(u), m(v)))
//! ```
//!
//! where ψ of an edge missing from `G2` is 0. `S` is the maximum over all
//! mappings; precision divides it by `|U(I1)| + |U(R1)|` and recall by
//! `|U(I2)| + |U(R2)|`. Finding the maximum is NP-hard, so the default
//! search is hill climbing from a greedy start plus random restarts;
//! [`brute_force_match`] gives the exact value for small graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repr::{GraphRepr, Relation, ReprError};
use crate::sim::{relation_score, InstanceSimilarity, SimError, SimilaritySpec};
use crate::{derive_seed, Prf};

const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub phi: SimilaritySpec,
    pub psi: SimilaritySpec,
    pub restarts: usize,
    /// Iteration cap per climb; `None` means `10 · |V1| · |V2|`.
    pub max_moves: Option<usize>,
    pub seed: u64,
    pub oracle_limit: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            phi: SimilaritySpec::bleu(),
            psi: SimilaritySpec::delta(),
            restarts: 4,
            max_moves: None,
            seed: 0,
            oracle_limit: 8,
        }
    }
}

impl MatchConfig {
    pub fn smatch() -> Self {
        MatchConfig { phi: SimilaritySpec::delta(), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(v1, v2)` pairs of the injective mapping, in `G1` variable order.
    pub mapping: Vec<(String, String)>,
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the result was compared against the exact oracle.
    pub climbs_to_optimum: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("mapping is not injective: `{0}` is the image of several variables")]
    NotInjective(String),
    #[error("mapping names unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("oracle limited to {limit} variables, smaller graph has {size}")]
    OracleTooLarge { size: usize, limit: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("system has {system} graphs but gold has {gold}")]
    LengthMismatch { system: usize, gold: usize },
    #[error(transparent)]
    Similarity(#[from] SimError),
    #[error(transparent)]
    Graph(#[from] ReprError),
}

type Mapping = Vec<Option<usize>>;

/// Index-based view of a graph pair with precomputed φ.
struct Problem {
    n1: usize,
    n2: usize,
    phi: Vec<f64>,
    edges1: Vec<(usize, usize, Relation)>,
    edges2: HashMap<(usize, usize), Relation>,
    incident: Vec<Vec<usize>>,
    psi: SimilaritySpec,
}

impl Problem {
    fn new(g1: &GraphRepr, g2: &GraphRepr, config: &MatchConfig) -> Result<Problem, MetricError> {
        g1.ensure_valid()?;
        g2.ensure_valid()?;
        config.phi.check()?;
        config.psi.check()?;
        let (n1, n2) = (g1.vars.len(), g2.vars.len());
        let idx1: HashMap<&str, usize> = g1.vars.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
        let idx2: HashMap<&str, usize> = g2.vars.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
        let mut phi = vec![0.0; n1 * n2];
        for (i, a) in g1.vars.iter().enumerate() {
            for (j, b) in g2.vars.iter().enumerate() {
                phi[i * n2 + j] = config.phi.score(&g1.instances[&a.id], &g2.instances[&b.id]);
            }
        }
        let edges1: Vec<(usize, usize, Relation)> =
            g1.edges.iter().map(|e| (idx1[e.governor.as_str()], idx1[e.dependent.as_str()], e.label)).collect();
        let edges2 =
            g2.edges.iter().map(|e| ((idx2[e.governor.as_str()], idx2[e.dependent.as_str()]), e.label)).collect();
        let mut incident = vec![Vec::new(); n1];
        for (k, &(a, b, _)) in edges1.iter().enumerate() {
            incident[a].push(k);
            incident[b].push(k);
        }
        Ok(Problem { n1, n2, phi, edges1, edges2, incident, psi: config.psi })
    }

    fn edge_score(&self, k: usize, m: &Mapping) -> f64 {
        let (a, b, label) = self.edges1[k];
        match (m[a], m[b]) {
            (Some(x), Some(y)) => relation_score(&self.psi, Some(label), self.edges2.get(&(x, y)).copied()),
            _ => 0.0,
        }
    }

    fn score(&self, m: &Mapping) -> f64 {
        let inst: f64 = m.iter().enumerate().filter_map(|(i, t)| t.map(|t| self.phi[i * self.n2 + t])).sum();
        let rel: f64 = (0..self.edges1.len()).map(|k| self.edge_score(k, m)).sum();
        inst + rel
    }

    /// Terms of the score that involve any of `vars`.
    fn local_score(&self, m: &Mapping, vars: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut edges: Vec<usize> = Vec::new();
        for &v in vars {
            if let Some(t) = m[v] {
                total += self.phi[v * self.n2 + t];
            }
            for &k in &self.incident[v] {
                if !edges.contains(&k) {
                    edges.push(k);
                }
            }
        }
        total + edges.into_iter().map(|k| self.edge_score(k, m)).sum::<f64>()
    }

    fn smart_init(&self) -> Mapping {
        let mut pairs: Vec<(usize, usize)> = (0..self.n1)
            .flat_map(|i| (0..self.n2).map(move |j| (i, j)))
            .filter(|&(i, j)| self.phi[i * self.n2 + j] > 0.0)
            .collect();
        // Descending φ; ties keep canonical (i, j) order.
        pairs.sort_by(|&(i, j), &(k, l)| self.phi[k * self.n2 + l].total_cmp(&self.phi[i * self.n2 + j]));
        let mut m = vec![None; self.n1];
        let mut used = vec![false; self.n2];
        for (i, j) in pairs {
            if m[i].is_none() && !used[j] {
                m[i] = Some(j);
                used[j] = true;
            }
        }
        m
    }

    fn random_init(&self, rng: &mut ChaCha8Rng) -> Mapping {
        let mut sources: Vec<usize> = (0..self.n1).collect();
        let mut targets: Vec<usize> = (0..self.n2).collect();
        sources.shuffle(rng);
        targets.shuffle(rng);
        let mut m = vec![None; self.n1];
        for (&s, &t) in sources.iter().zip(&targets) {
            m[s] = Some(t);
        }
        m
    }

    /// Best-improving local search over reassignments and swaps.
    fn climb(&self, m: &mut Mapping, max_moves: usize) -> f64 {
        let mut owner: Vec<Option<usize>> = vec![None; self.n2];
        for (i, t) in m.iter().enumerate() {
            if let Some(t) = t {
                owner[*t] = Some(i);
            }
        }
        for _ in 0..max_moves {
            let mut best: Option<(f64, Move)> = None;
            let mut consider = |gain: f64, mv: Move| {
                if gain > GAIN_EPS && best.as_ref().is_none_or(|(g, _)| gain > *g + GAIN_EPS) {
                    best = Some((gain, mv));
                }
            };
            for i in 0..self.n1 {
                let before = self.local_score(m, &[i]);
                let current = m[i];
                let free = (0..self.n2).filter(|&t| owner[t].is_none()).map(Some);
                let unmap = current.is_some().then_some(None);
                for target in free.chain(unmap) {
                    m[i] = target;
                    let gain = self.local_score(m, &[i]) - before;
                    m[i] = current;
                    consider(gain, Move::Reassign(i, target));
                }
            }
            for i in 0..self.n1 {
                for j in i + 1..self.n1 {
                    if m[i] == m[j] {
                        continue;
                    }
                    let before = self.local_score(m, &[i, j]);
                    m.swap(i, j);
                    let gain = self.local_score(m, &[i, j]) - before;
                    m.swap(i, j);
                    consider(gain, Move::Swap(i, j));
                }
            }
            match best {
                None => break,
                Some((_, Move::Reassign(i, target))) => {
                    if let Some(old) = m[i] {
                        owner[old] = None;
                    }
                    if let Some(t) = target {
                        owner[t] = Some(i);
                    }
                    m[i] = target;
                }
                Some((_, Move::Swap(i, j))) => {
                    m.swap(i, j);
                    for v in [i, j] {
                        if let Some(t) = m[v] {
                            owner[t] = Some(v);
                        }
                    }
                }
            }
        }
        self.score(m)
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Reassign(usize, Option<usize>),
    Swap(usize, usize),
}

fn build_result(g1: &GraphRepr, g2: &GraphRepr, m: &Mapping, score: f64) -> MatchResult {
    let mapping =
        m.iter().enumerate().filter_map(|(i, t)| t.map(|t| (g1.vars[i].id.clone(), g2.vars[t].id.clone()))).collect();
    let prf = precision_recall(g1, g2, score);
    MatchResult { mapping, score, precision: prf.precision, recall: prf.recall, f1: prf.f1, climbs_to_optimum: None }
}

/// Score of one explicit mapping given as `v1 -> v2` pairs.
pub fn evaluate_mapping(
    g1: &GraphRepr,
    g2: &GraphRepr,
    mapping: &BTreeMap<String, String>,
    config: &MatchConfig,
) -> Result<f64, MetricError> {
    let problem = Problem::new(g1, g2, config)?;
    let idx1: HashMap<&str, usize> = g1.vars.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
    let idx2: HashMap<&str, usize> = g2.vars.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
    let mut m = vec![None; problem.n1];
    let mut images = BTreeSet::new();
    for (a, b) in mapping {
        let i = *idx1.get(a.as_str()).ok_or_else(|| MetricError::UnknownVariable(a.clone()))?;
        let j = *idx2.get(b.as_str()).ok_or_else(|| MetricError::UnknownVariable(b.clone()))?;
        if !images.insert(j) {
            return Err(MetricError::NotInjective(b.clone()));
        }
        m[i] = Some(j);
    }
    Ok(problem.score(&m))
}

/// `(P, R, F1)` for a score; an empty graph gives a zero ratio and sets
/// `degenerate`.
pub fn precision_recall(g1: &GraphRepr, g2: &GraphRepr, score: f64) -> Prf {
    let d1 = (g1.instance_count() + g1.relation_count()) as f64;
    let d2 = (g2.instance_count() + g2.relation_count()) as f64;
    Prf::from_ratios(score, d1, score, d2)
}

/// Exact maximum by enumerating every maximal injective mapping.
pub fn brute_force_match(g1: &GraphRepr, g2: &GraphRepr, config: &MatchConfig) -> Result<MatchResult, MetricError> {
    let size = g1.vars.len().min(g2.vars.len());
    if size > config.oracle_limit {
        return Err(MetricError::OracleTooLarge { size, limit: config.oracle_limit });
    }
    let problem = Problem::new(g1, g2, config)?;

    struct Search<'p> {
        p: &'p Problem,
        m: Mapping,
        used: Vec<bool>,
        best: Option<(f64, Mapping)>,
    }
    impl Search<'_> {
        fn run(&mut self, i: usize, free: usize) {
            if i == self.p.n1 {
                let s = self.p.score(&self.m);
                if self.best.as_ref().is_none_or(|(b, _)| s > *b + GAIN_EPS) {
                    self.best = Some((s, self.m.clone()));
                }
                return;
            }
            for t in 0..self.p.n2 {
                if !self.used[t] {
                    self.used[t] = true;
                    self.m[i] = Some(t);
                    self.run(i + 1, free - 1);
                    self.m[i] = None;
                    self.used[t] = false;
                }
            }
            // Leave unmapped only when the remaining variables outnumber free targets.
            if self.p.n1 - i > free {
                self.run(i + 1, free);
            }
        }
    }
    let mut search = Search { p: &problem, m: vec![None; problem.n1], used: vec![false; problem.n2], best: None };
    search.run(0, problem.n2);
    let (score, m) = search.best.expect("at least one mapping exists");
    Ok(build_result(g1, g2, &m, score))
}

/// Hill climbing from the greedy start, then `restarts` climbs from random
/// injective starts; the best is returned. Deterministic given the seed.
pub fn hill_climb_match(g1: &GraphRepr, g2: &GraphRepr, config: &MatchConfig) -> Result<MatchResult, MetricError> {
    let problem = Problem::new(g1, g2, config)?;
    let max_moves = config.max_moves.unwrap_or(10 * problem.n1 * problem.n2).max(1);
    let mut best_m = problem.smart_init();
    let mut best = problem.climb(&mut best_m, max_moves);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        let mut m = problem.random_init(&mut rng);
        let s = problem.climb(&mut m, max_moves);
        if s > best + GAIN_EPS {
            best = s;
            best_m = m;
        }
    }
    Ok(build_result(g1, g2, &best_m, best))
}

/// Smatch: hill climbing with φ = ψ = δ.
pub fn smatch_mode(g1: &GraphRepr, g2: &GraphRepr, config: &MatchConfig) -> Result<MatchResult, MetricError> {
    let config = MatchConfig { phi: SimilaritySpec::delta(), psi: SimilaritySpec::delta(), ..config.clone() };
    hill_climb_match(g1, g2, &config)
}

/// Hill-climbing result annotated with whether it reached the exact optimum.
pub fn match_with_oracle(g1: &GraphRepr, g2: &GraphRepr, config: &MatchConfig) -> Result<MatchResult, MetricError> {
    let mut result = hill_climb_match(g1, g2, config)?;
    let exact = brute_force_match(g1, g2, config)?;
    result.climbs_to_optimum = Some((exact.score - result.score).abs() <= 1e-9);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub prf: Prf,
    pub total_score: f64,
    pub pairs: Vec<MatchResult>,
}

/// Micro-averaged corpus score: summed `S` over summed denominators.
///
/// Pairs are scored in parallel; pair `i` climbs with a seed derived from
/// `config.seed` and `i`, so results do not depend on thread count.
pub fn corpus_score(pairs: &[(GraphRepr, GraphRepr)], config: &MatchConfig) -> Result<CorpusScore, MetricError> {
    corpus_score_with(pairs, config, false)
}

/// As [`corpus_score`], also running the oracle on pairs within its limit.
pub fn corpus_score_with(
    pairs: &[(GraphRepr, GraphRepr)],
    config: &MatchConfig,
    oracle: bool,
) -> Result<CorpusScore, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let results: Vec<MatchResult> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (sys, gold))| {
            let cfg = MatchConfig { seed: derive_seed(config.seed, i as u64), ..config.clone() };
            let eligible = sys.vars.len().min(gold.vars.len()) <= cfg.oracle_limit;
            if oracle && eligible {
                match_with_oracle(sys, gold, &cfg)
            } else {
                hill_climb_match(sys, gold, &cfg)
            }
        })
        .collect::<Result<_, _>>()?;
    let total_score: f64 = results.iter().map(|r| r.score).sum();
    let d1: f64 = pairs.iter().map(|(s, _)| (s.instance_count() + s.relation_count()) as f64).sum();
    let d2: f64 = pairs.iter().map(|(_, g)| (g.instance_count() + g.relation_count()) as f64).sum();
    Ok(CorpusScore { prf: Prf::from_ratios(total_score, d1, total_score, d2), total_score, pairs: results })
}

pub fn corpus_score_aligned(
    system: &[GraphRepr],
    gold: &[GraphRepr],
    config: &MatchConfig,
    oracle: bool,
) -> Result<CorpusScore, MetricError> {
    if system.len() != gold.len() {
        return Err(MetricError::LengthMismatch { system: system.len(), gold: gold.len() });
    }
    let pairs: Vec<(GraphRepr, GraphRepr)> = system.iter().cloned().zip(gold.iter().cloned()).collect();
    corpus_score_with(&pairs, config, oracle)
}
