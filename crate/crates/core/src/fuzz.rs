//! Seeded generators of random graphs and chain sets, for property tests,
//! benchmarks and reproducible fuzz corpora.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::coref::MentionChainSet;
use crate::repr::{Edge, GraphRepr, TokenSpan, VarKind, Variable};

/// Small word inventory, so spans of different variables often overlap.
pub const WORDS: [&str; 8] = ["a", "storm", "surge", "hit", "the", "house", "man", "saw"];

/// A valid graph with `1..=max_vars` variables. Each variable is an event
/// with probability one half, spans have one to three words, and each
/// ordered event-to-other pair carries an edge with probability `edge_p`.
pub fn random_graph<R: Rng>(rng: &mut R, max_vars: usize, edge_p: f64) -> GraphRepr {
    let n = rng.gen_range(1..=max_vars.max(1));
    let mut g = GraphRepr::new();
    for i in 0..n {
        let len = rng.gen_range(1..=3);
        let tokens: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).expect("nonempty")).collect();
        let span = TokenSpan::new(tokens, rng.gen_range(0..len));
        let var = if rng.gen_bool(0.5) { Variable::event(format!("e{i}")) } else { Variable::entity(format!("x{i}")) };
        g.add_var(var, span);
    }
    let ids: Vec<(String, bool)> = g.vars.iter().map(|v| (v.id.clone(), v.kind == VarKind::Event)).collect();
    for (gov, is_event) in &ids {
        for (dep, _) in &ids {
            if *is_event && gov != dep && rng.gen_bool(edge_p) {
                g.edges.push(Edge::arg(gov.clone(), dep.clone()));
            }
        }
    }
    g
}

/// A copy of `g` with spans, variable order and edges perturbed, to act as
/// a system output scored against `g`.
pub fn perturb<R: Rng>(rng: &mut R, g: &GraphRepr) -> GraphRepr {
    let mut out = g.clone();
    for span in out.instances.values_mut() {
        if rng.gen_bool(0.3) {
            let i = rng.gen_range(0..span.tokens.len());
            span.tokens[i] = WORDS.choose(rng).expect("nonempty").to_string();
        }
    }
    out.edges.retain(|_| rng.gen_bool(0.8));
    out.vars.shuffle(rng);
    out
}

/// Mentions `0..n` partitioned at random; each mention is a singleton with
/// probability `singleton_p`.
pub fn random_chains<R: Rng>(rng: &mut R, n: usize, singleton_p: f64) -> MentionChainSet {
    let entities = rng.gen_range(1..=n.max(1));
    let mut chains: Vec<Vec<usize>> = vec![Vec::new(); entities];
    for m in 0..n {
        if !rng.gen_bool(singleton_p) {
            chains[rng.gen_range(0..entities)].push(m);
        }
    }
    chains.retain(|c| !c.is_empty());
    MentionChainSet::new(0..n, chains).expect("generated chains are disjoint")
}

/// As [`random_graph`], then every ungoverned entity gets an edge from a
/// random event, so the default layout can linearize the graph whenever
/// the graph has an event.
pub fn random_governed_graph<R: Rng>(rng: &mut R, max_vars: usize, edge_p: f64) -> GraphRepr {
    let mut g = random_graph(rng, max_vars, edge_p);
    let events: Vec<String> = g.vars.iter().filter(|v| v.kind == VarKind::Event).map(|v| v.id.clone()).collect();
    if events.is_empty() {
        return g;
    }
    let orphans: Vec<String> =
        g.vars.iter().filter(|v| v.kind == VarKind::Entity && g.in_degree(&v.id) == 0).map(|v| v.id.clone()).collect();
    for x in orphans {
        let e = events.choose(rng).expect("nonempty").clone();
        g.edges.push(Edge::arg(e, x));
    }
    g
}
