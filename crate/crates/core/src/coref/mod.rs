//! Coreference chains read off linearized representations, the MUC, B³ and
//! CEAF_e scorers, and the baseline resolvers.
//!
//! A mention is an argument span, identified by the position of its opening
//! parenthesis. Every argument span in a sequence is a mention, so two
//! sequences with the same tokens share a mention universe.

mod assignment;
mod baselines;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linear::{LinearizedRepr, SpanKind, Structure};
use crate::Prf;

pub use assignment::assignment_max;
pub use baselines::{
    antecedent_heads, forced_decode_eval, resolve_heuristic, resolve_random, CorefResolver, ForcedDecoding,
    GoldResolver, Method, Resolution, ResolverSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorefError {
    #[error("mention {0} belongs to more than one chain")]
    Overlap(usize),
    #[error("empty chain")]
    EmptyChain,
    #[error("chain mention {0} is not in the mention universe")]
    OutsideUniverse(usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("document {index}: {message}")]
    Mismatch { index: usize, message: String },
}

/// A set of mentions partitioned into entities. Mentions not covered by any
/// chain are singleton entities.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MentionChainSet {
    mentions: BTreeSet<usize>,
    chains: Vec<BTreeSet<usize>>,
}

impl MentionChainSet {
    pub fn new(
        mentions: impl IntoIterator<Item = usize>,
        chains: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<Self, CorefError> {
        let mentions: BTreeSet<usize> = mentions.into_iter().collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for chain in chains {
            if chain.is_empty() {
                return Err(CorefError::EmptyChain);
            }
            let mut set = BTreeSet::new();
            for m in chain {
                if !mentions.contains(&m) {
                    return Err(CorefError::OutsideUniverse(m));
                }
                if !seen.insert(m) {
                    return Err(CorefError::Overlap(m));
                }
                set.insert(m);
            }
            out.push(set);
        }
        out.sort();
        Ok(MentionChainSet { mentions, chains: out })
    }

    pub fn mentions(&self) -> &BTreeSet<usize> {
        &self.mentions
    }

    /// Explicit chains, sorted by first mention.
    pub fn chains(&self) -> &[BTreeSet<usize>] {
        &self.chains
    }

    /// All entities, implicit singletons included, sorted by first mention.
    pub fn entities(&self) -> Vec<BTreeSet<usize>> {
        let covered: BTreeSet<usize> = self.chains.iter().flatten().copied().collect();
        let mut all = self.chains.clone();
        all.extend(self.mentions.difference(&covered).map(|&m| BTreeSet::from([m])));
        all.sort();
        all
    }

    fn entity_index(&self) -> BTreeMap<usize, usize> {
        self.entities().iter().enumerate().flat_map(|(i, e)| e.iter().map(move |&m| (m, i))).collect()
    }
}

/// Mention that a word belongs to: its innermost span if that is an
/// argument, or the clausal argument wrapping its predicate span.
fn mention_of_word(s: &Structure, pos: usize) -> Option<usize> {
    let owner = s.owner[pos]?;
    match s.spans[owner].kind {
        SpanKind::Arg => Some(s.spans[owner].open),
        SpanKind::Pred => {
            let parent = s.spans[owner].parent?;
            s.is_wrapper(parent).then(|| s.spans[parent].open)
        }
    }
}

/// Argument-span mentions of a sequence.
pub fn mention_universe(l: &LinearizedRepr) -> BTreeSet<usize> {
    l.structure().spans.iter().filter(|s| s.kind == SpanKind::Arg).map(|s| s.open).collect()
}

/// Connected components of the coreference links over argument mentions.
/// A link whose antecedent lies in no mention is ignored.
pub fn chains_from_linearized(l: &LinearizedRepr) -> MentionChainSet {
    let s = l.structure();
    let mentions = mention_universe(l);
    let ids: Vec<usize> = mentions.iter().copied().collect();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (bullet, antecedent) in l.links() {
        let (Some(a), Some(b)) = (s.enclosing_arg(bullet), mention_of_word(&s, antecedent)) else { continue };
        let (ra, rb) = (find(&mut parent, index[&s.spans[a].open]), find(&mut parent, index[&b]));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &m) in ids.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(m);
    }
    let chains = groups.into_values().filter(|g| g.len() > 1);
    MentionChainSet::new(mentions, chains).expect("union-find yields a partition")
}

/// Numerators and denominators of one metric, summed across documents
/// before dividing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        Prf::from_ratios(self.p_num, self.p_den, self.r_num, self.r_den)
    }

    fn add(&mut self, other: Counts) {
        self.p_num += other.p_num;
        self.p_den += other.p_den;
        self.r_num += other.r_num;
        self.r_den += other.r_den;
    }

    fn swapped(self) -> Counts {
        Counts { p_num: self.r_num, p_den: self.r_den, r_num: self.p_num, r_den: self.p_den }
    }
}

fn muc_recall(key: &MentionChainSet, response: &MentionChainSet) -> (f64, f64) {
    let resp = response.entity_index();
    let (mut num, mut den) = (0.0, 0.0);
    for k in key.entities() {
        let mut parts = BTreeSet::new();
        let mut unaligned = 0;
        for m in &k {
            match resp.get(m) {
                Some(&e) => {
                    parts.insert(e);
                }
                None => unaligned += 1,
            }
        }
        num += (k.len() - (parts.len() + unaligned)) as f64;
        den += (k.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(key: &MentionChainSet, response: &MentionChainSet) -> Counts {
    let (r_num, r_den) = muc_recall(key, response);
    let (p_num, p_den) = muc_recall(response, key);
    Counts { p_num, p_den, r_num, r_den }
}

fn b_cubed_recall(key: &MentionChainSet, response: &MentionChainSet) -> (f64, f64) {
    let k_ents = key.entities();
    let r_ents = response.entities();
    let r_idx = response.entity_index();
    let mut num = 0.0;
    for k in &k_ents {
        for m in k {
            let overlap = r_idx.get(m).map_or(0, |&e| k.intersection(&r_ents[e]).count());
            num += overlap as f64 / k.len() as f64;
        }
    }
    (num, key.mentions.len() as f64)
}

pub fn b_cubed_counts(key: &MentionChainSet, response: &MentionChainSet) -> Counts {
    let (r_num, r_den) = b_cubed_recall(key, response);
    let (p_num, p_den) = b_cubed_recall(response, key);
    Counts { p_num, p_den, r_num, r_den }
}

/// `φ4(K, R) = 2|K ∩ R| / (|K| + |R|)`.
pub fn phi4(k: &BTreeSet<usize>, r: &BTreeSet<usize>) -> f64 {
    2.0 * k.intersection(r).count() as f64 / (k.len() + r.len()) as f64
}

pub fn ceaf_e_counts(key: &MentionChainSet, response: &MentionChainSet) -> Counts {
    let k = key.entities();
    let r = response.entities();
    let weights: Vec<Vec<f64>> = k.iter().map(|a| r.iter().map(|b| phi4(a, b)).collect()).collect();
    let total: f64 = assignment_max(&weights).into_iter().map(|(i, j)| weights[i][j]).sum();
    Counts { p_num: total, p_den: r.len() as f64, r_num: total, r_den: k.len() as f64 }
}

pub fn muc(key: &MentionChainSet, response: &MentionChainSet) -> Prf {
    muc_counts(key, response).prf()
}

pub fn b_cubed(key: &MentionChainSet, response: &MentionChainSet) -> Prf {
    b_cubed_counts(key, response).prf()
}

pub fn ceaf_e(key: &MentionChainSet, response: &MentionChainSet) -> Prf {
    ceaf_e_counts(key, response).prf()
}

/// Mean of the MUC, B³ and CEAF_e F1 scores.
pub fn avg_f1(muc: f64, b_cubed: f64, ceaf_e: f64) -> f64 {
    (muc + b_cubed + ceaf_e) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Muc,
    B3,
    Ceafe,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Muc, Metric::B3, Metric::Ceafe];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Muc => "MUC",
            Metric::B3 => "B3",
            Metric::Ceafe => "CEAFe",
        }
    }

    pub fn counts(self, key: &MentionChainSet, response: &MentionChainSet) -> Counts {
        match self {
            Metric::Muc => muc_counts(key, response),
            Metric::B3 => b_cubed_counts(key, response),
            Metric::Ceafe => ceaf_e_counts(key, response),
        }
    }
}

/// Corpus-level scores, micro-averaged over documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorefReport {
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_e: Prf,
    pub avg_f1: f64,
}

impl CorefReport {
    pub fn evaluate(pairs: &[(MentionChainSet, MentionChainSet)]) -> Result<CorefReport, CorefError> {
        if pairs.is_empty() {
            return Err(CorefError::EmptyCorpus);
        }
        let mut totals = [Counts::default(); 3];
        for (key, response) in pairs {
            for (total, metric) in totals.iter_mut().zip(Metric::ALL) {
                total.add(metric.counts(key, response));
            }
        }
        let [muc, b_cubed, ceaf_e] = totals.map(|c| c.prf());
        Ok(CorefReport { muc, b_cubed, ceaf_e, avg_f1: avg_f1(muc.f1, b_cubed.f1, ceaf_e.f1) })
    }

    pub fn get(&self, metric: Metric) -> Prf {
        match metric {
            Metric::Muc => self.muc,
            Metric::B3 => self.b_cubed,
            Metric::Ceafe => self.ceaf_e,
        }
    }

    /// Plain-text table: one row per metric with P, R, F1, then the average.
    pub fn table(&self, metrics: &[Metric]) -> String {
        let mut out = format!("{:<8}{:>8}{:>8}{:>8}\n", "Metric", "P", "R", "F1");
        for &m in metrics {
            let prf = self.get(m);
            out.push_str(&format!("{:<8}{:>8.3}{:>8.3}{:>8.3}\n", m.name(), prf.precision, prf.recall, prf.f1));
        }
        if metrics.len() == Metric::ALL.len() {
            out.push_str(&format!("{:<8}{:>24.3}\n", "Avg. F1", self.avg_f1));
        }
        out
    }
}

/// Scores with key and response exchanged, for symmetry checks.
pub fn swapped_counts(metric: Metric, key: &MentionChainSet, response: &MentionChainSet) -> Counts {
    metric.counts(response, key).swapped()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::parse_text;

    fn set(mentions: &[usize], chains: &[&[usize]]) -> MentionChainSet {
        MentionChainSet::new(mentions.iter().copied(), chains.iter().map(|c| c.to_vec())).unwrap()
    }

    #[test]
    fn chain_set_rejects_overlap() {
        let err = MentionChainSet::new([1, 2, 3], [vec![1, 2], vec![2, 3]]).unwrap_err();
        assert_eq!(err, CorefError::Overlap(2));
        assert_eq!(MentionChainSet::new([1], [vec![]]).unwrap_err(), CorefError::EmptyChain);
        assert_eq!(MentionChainSet::new([1], [vec![1, 9]]).unwrap_err(), CorefError::OutsideUniverse(9));
    }

    #[test]
    fn chains_without_bullets_are_singletons() {
        let l = parse_text("[ saw_h ( John_h ) ( Mary_h ) ]").unwrap();
        let c = chains_from_linearized(&l);
        assert!(c.chains().is_empty());
        assert_eq!(c.entities().len(), 2);
    }

    #[test]
    fn two_bullets_one_antecedent() {
        let l = parse_text("[ came_h ( the man_h ) ] [ sat_h ( @b ) ] [ left_h ( @b ) ]\n#coref 10 4\n#coref 16 4")
            .unwrap();
        assert_eq!(chains_from_linearized(&l).chains(), &[BTreeSet::from([2, 9, 15])]);
    }

    #[test]
    fn chained_links_close_transitively() {
        // 7 -> 3 joins mentions 5 and 2; 10 -> 6 joins 9 and 5.
        let l = parse_text("[ a_h ( x_h ) ( his @b ) ( @b ) ]\n#coref 7 3\n#coref 10 6").unwrap();
        assert_eq!(chains_from_linearized(&l).chains(), &[BTreeSet::from([2, 5, 9])]);
    }

    #[test]
    fn relative_clause_bullet_joins_its_host() {
        let l = parse_text("( a ( @b ) [ hit_h ] ( a storm surge_h ) house_h )\n#coref 3 1").unwrap();
        assert_eq!(chains_from_linearized(&l).chains(), &[BTreeSet::from([0, 2])]);
    }

    // Key {a,b,c}; response {a,b},{c}.
    fn fixture() -> (MentionChainSet, MentionChainSet) {
        (set(&[1, 2, 3], &[&[1, 2, 3]]), set(&[1, 2, 3], &[&[1, 2]]))
    }

    #[test]
    fn muc_fixture() {
        let (k, r) = fixture();
        let prf = muc(&k, &r);
        assert_eq!((prf.precision, prf.recall), (1.0, 0.5));
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-12);
        let singletons = set(&[1, 2, 3], &[]);
        let prf = muc(&k, &singletons);
        assert_eq!((prf.precision, prf.recall, prf.degenerate), (0.0, 0.0, true));
    }

    #[test]
    fn b_cubed_fixture() {
        let (k, r) = fixture();
        let prf = b_cubed(&k, &r);
        assert_eq!(prf.precision, 1.0);
        assert!((prf.recall - 5.0 / 9.0).abs() < 1e-12);
        let all = set(&[1, 2], &[]);
        assert_eq!(b_cubed(&all, &all).f1, 1.0);
    }

    #[test]
    fn ceaf_e_fixture() {
        let (k, r) = fixture();
        let prf = ceaf_e(&k, &r);
        assert!((prf.precision - 0.4).abs() < 1e-12 && (prf.recall - 0.8).abs() < 1e-12);
        assert!((prf.f1 - 8.0 / 15.0).abs() < 1e-12);
        let empty = MentionChainSet::default();
        assert_eq!(ceaf_e(&k, &empty).f1, 0.0);
    }

    #[test]
    fn perfect_response() {
        let (k, _) = fixture();
        for m in Metric::ALL {
            assert_eq!(m.counts(&k, &k).prf().f1, 1.0, "{}", m.name());
        }
    }

    #[test]
    fn avg_f1_fixtures() {
        assert_eq!(avg_f1(1.0, 1.0, 1.0), 1.0);
        assert!((avg_f1(2.0 / 3.0, 0.75, 8.0 / 15.0) - 0.65).abs() < 1e-12);
        assert_eq!(avg_f1(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn report_table() {
        let (k, r) = fixture();
        let report = CorefReport::evaluate(&[(k, r)]).unwrap();
        let table = report.table(&Metric::ALL);
        assert!(table.contains("MUC") && table.contains("Avg. F1"));
        assert_eq!(CorefReport::evaluate(&[]), Err(CorefError::EmptyCorpus));
    }
}
