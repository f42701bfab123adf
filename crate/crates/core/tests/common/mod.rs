//! Brute-force reference implementations shared by integration tests.

use std::collections::BTreeSet;

use xlsem::coref::MentionChainSet;

/// Key or response entities, singletons included.
pub fn entities(s: &MentionChainSet) -> Vec<BTreeSet<usize>> {
    let mut out: Vec<BTreeSet<usize>> = s.chains().to_vec();
    for m in s.mentions() {
        if !s.chains().iter().any(|c| c.contains(m)) {
            out.push([*m].into());
        }
    }
    out
}

pub fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// MUC recall from its definition: links in each key entity minus the
/// pieces the response splits it into.
pub fn muc_recall_oracle(key: &MentionChainSet, response: &MentionChainSet) -> f64 {
    let resp = entities(response);
    let (mut num, mut den) = (0usize, 0usize);
    for k in entities(key) {
        let pieces = resp.iter().filter(|r| !r.is_disjoint(&k)).count()
            + k.iter().filter(|m| !resp.iter().any(|r| r.contains(m))).count();
        num += k.len() - pieces;
        den += k.len() - 1;
    }
    ratio(num as f64, den as f64)
}

pub fn b3_recall_oracle(key: &MentionChainSet, response: &MentionChainSet) -> f64 {
    let (ke, re) = (entities(key), entities(response));
    let mut total = 0.0;
    for m in key.mentions() {
        let k = ke.iter().find(|e| e.contains(m)).unwrap();
        let shared = re.iter().find(|e| e.contains(m)).map_or(0, |r| k.intersection(r).count());
        total += shared as f64 / k.len() as f64;
    }
    ratio(total, key.mentions().len() as f64)
}

/// Best total φ4 similarity over every one-to-one entity alignment.
pub fn ceaf_similarity_oracle(key: &MentionChainSet, response: &MentionChainSet) -> f64 {
    let (ke, re) = (entities(key), entities(response));
    let phi4 =
        |a: &BTreeSet<usize>, b: &BTreeSet<usize>| 2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64;
    fn best(
        i: usize,
        ke: &[BTreeSet<usize>],
        re: &[BTreeSet<usize>],
        used: &mut Vec<bool>,
        f: &dyn Fn(&BTreeSet<usize>, &BTreeSet<usize>) -> f64,
    ) -> f64 {
        if i == ke.len() {
            return 0.0;
        }
        let mut top = best(i + 1, ke, re, used, f);
        for j in 0..re.len() {
            if !used[j] {
                used[j] = true;
                top = top.max(f(&ke[i], &re[j]) + best(i + 1, ke, re, used, f));
                used[j] = false;
            }
        }
        top
    }
    best(0, &ke, &re, &mut vec![false; re.len()], &phi4)
}

pub fn assignment_oracle(w: &[Vec<f64>]) -> f64 {
    fn go(i: usize, w: &[Vec<f64>], used: &mut Vec<bool>) -> f64 {
        if i == w.len() {
            return 0.0;
        }
        let free = used.iter().filter(|u| !**u).count();
        let mut top = if w.len() - i > free { go(i + 1, w, used) } else { f64::NEG_INFINITY };
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                top = top.max(w[i][j] + go(i + 1, w, used));
                used[j] = false;
            }
        }
        top
    }
    go(0, w, &mut vec![false; w[0].len()])
}
